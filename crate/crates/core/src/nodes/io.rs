//! Plumbing nodes connecting flows to the simulated world.

use std::any::Any;

use serde::{Deserialize, Serialize};

use super::{Operator, Validate};
use crate::clock::TimerId;
use crate::engine::NodeContext;
use crate::payload::{Envelope, Millis, Payload};

/// Emits a fixed payload every `period`, first at `period`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InjectConfig {
    pub period: Millis,
    #[serde(default)]
    pub topic: String,
    #[serde(default = "default_inject_payload")]
    pub payload: Payload,
}

fn default_inject_payload() -> Payload {
    Payload::Bool(true)
}

impl Validate for InjectConfig {
    fn validate(&self) -> Result<(), String> {
        if self.period == 0 {
            return Err("period must be > 0".into());
        }
        Ok(())
    }
}

pub struct Inject {
    cfg: InjectConfig,
    timer: Option<TimerId>,
}

impl Inject {
    pub fn new(cfg: InjectConfig) -> Self {
        Inject { cfg, timer: None }
    }
}

impl Operator for Inject {
    fn start(&mut self, ctx: &mut NodeContext<'_>) {
        ctx.restart_timer(&mut self.timer, self.cfg.period, 0);
    }

    fn on_input(&mut self, _ingress: usize, _env: &Envelope, _ctx: &mut NodeContext<'_>) {}

    fn on_timer(&mut self, _tag: u32, ctx: &mut NodeContext<'_>) {
        self.timer = None;
        ctx.restart_timer(&mut self.timer, self.cfg.period, 0);
        ctx.emit(0, &self.cfg.topic, self.cfg.payload.clone());
    }

    fn as_any(&self) -> &dyn Any {
        self
    }
}

/// Broker subscription. The harness delivers matching publications on
/// ingress 0; the node passes them through.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MqttInConfig {
    pub topic: String,
}

impl Validate for MqttInConfig {
    fn validate(&self) -> Result<(), String> {
        if self.topic.is_empty() {
            return Err("topic must not be empty".into());
        }
        Ok(())
    }
}

pub struct MqttIn {
    cfg: MqttInConfig,
}

impl MqttIn {
    pub fn new(cfg: MqttInConfig) -> Self {
        MqttIn { cfg }
    }

    pub fn topic(&self) -> &str {
        &self.cfg.topic
    }
}

impl Operator for MqttIn {
    fn on_input(&mut self, _ingress: usize, env: &Envelope, ctx: &mut NodeContext<'_>) {
        ctx.forward(0, env);
    }

    fn as_any(&self) -> &dyn Any {
        self
    }
}

/// Topic filter of an `mqtt-in` operator.
pub fn subscription_topic(op: &dyn Operator) -> Option<String> {
    op.as_any().downcast_ref::<MqttIn>().map(|m| m.topic().to_string())
}

/// Publishes to the broker, on `topic` if set, else on the message topic.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MqttOutConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub topic: Option<String>,
}

impl Validate for MqttOutConfig {}

pub struct MqttOut {
    cfg: MqttOutConfig,
}

impl MqttOut {
    pub fn new(cfg: MqttOutConfig) -> Self {
        MqttOut { cfg }
    }
}

impl Operator for MqttOut {
    fn on_input(&mut self, _ingress: usize, env: &Envelope, ctx: &mut NodeContext<'_>) {
        let topic = self.cfg.topic.as_deref().unwrap_or(&env.topic).to_string();
        ctx.publish(&topic, &env.payload);
    }

    fn as_any(&self) -> &dyn Any {
        self
    }
}

/// Sends each message to an external service; echoes it on `response` when
/// accepted, or an `unreachable` error when not.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HttpRequestConfig {
    pub service: String,
}

impl Validate for HttpRequestConfig {
    fn validate(&self) -> Result<(), String> {
        if self.service.is_empty() {
            return Err("service must not be empty".into());
        }
        Ok(())
    }
}

pub struct HttpRequest {
    cfg: HttpRequestConfig,
}

impl HttpRequest {
    pub fn new(cfg: HttpRequestConfig) -> Self {
        HttpRequest { cfg }
    }
}

impl Operator for HttpRequest {
    fn on_input(&mut self, _ingress: usize, env: &Envelope, ctx: &mut NodeContext<'_>) {
        match ctx.send_to_service(&self.cfg.service, env) {
            Ok(()) => ctx.forward(0, env),
            Err(reason) => ctx.emit_error(1, &env.topic, "unreachable", Payload::from(reason)),
        }
    }

    fn as_any(&self) -> &dyn Any {
        self
    }
}

/// Sink. Deliveries to it are already in the timeline.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DebugConfig {}

impl Validate for DebugConfig {}

pub struct DebugSink;

impl DebugSink {
    pub fn new(_cfg: DebugConfig) -> Self {
        DebugSink
    }
}

impl Operator for DebugSink {
    fn on_input(&mut self, _ingress: usize, _env: &Envelope, _ctx: &mut NodeContext<'_>) {}

    fn as_any(&self) -> &dyn Any {
        self
    }
}

/// Picks one field out of a record payload.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExtractConfig {
    pub field: String,
}

impl Validate for ExtractConfig {
    fn validate(&self) -> Result<(), String> {
        if self.field.is_empty() {
            return Err("field must not be empty".into());
        }
        Ok(())
    }
}

pub struct Extract {
    cfg: ExtractConfig,
}

impl Extract {
    pub fn new(cfg: ExtractConfig) -> Self {
        Extract { cfg }
    }
}

impl Operator for Extract {
    fn on_input(&mut self, _ingress: usize, env: &Envelope, ctx: &mut NodeContext<'_>) {
        match env.payload.get(&self.cfg.field) {
            Some(v) => ctx.emit(0, &env.topic, v.clone()),
            None => ctx.emit_error(1, &env.topic, "missing-field", Payload::from(self.cfg.field.as_str())),
        }
    }

    fn as_any(&self) -> &dyn Any {
        self
    }
}
