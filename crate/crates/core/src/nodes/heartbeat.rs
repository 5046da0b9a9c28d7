//! `heartbeat`: emits an error whenever nothing arrives for `timeout`, and
//! keeps emitting one per further `timeout` of silence.

use std::any::Any;

use serde::{Deserialize, Serialize};

use super::{Operator, Validate};
use crate::clock::TimerId;
use crate::engine::NodeContext;
use crate::payload::{Envelope, Millis, Payload};

pub const PING: usize = 0;
pub const OK: usize = 1;
pub const ERROR: usize = 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Passive,
    Active,
}

fn default_ping() -> Payload {
    Payload::from("ping")
}

fn default_ok() -> Payload {
    Payload::from("ok")
}

fn default_error() -> Payload {
    Payload::from("error")
}

fn default_mode() -> Mode {
    Mode::Passive
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HeartbeatConfig {
    #[serde(default = "default_ping")]
    pub ping: Payload,
    #[serde(default = "default_ok")]
    pub ok: Payload,
    #[serde(default = "default_error")]
    pub error: Payload,
    #[serde(default = "default_mode")]
    pub mode: Mode,
    pub timeout: Millis,
}

impl Validate for HeartbeatConfig {
    fn validate(&self) -> Result<(), String> {
        if self.timeout == 0 {
            return Err("timeout must be > 0".into());
        }
        Ok(())
    }
}

pub struct HeartbeatNode {
    cfg: HeartbeatConfig,
    timer: Option<TimerId>,
    topic: String,
}

impl HeartbeatNode {
    pub fn new(cfg: HeartbeatConfig) -> Self {
        HeartbeatNode {
            cfg,
            timer: None,
            topic: String::new(),
        }
    }
}

impl Operator for HeartbeatNode {
    fn start(&mut self, ctx: &mut NodeContext<'_>) {
        ctx.restart_timer(&mut self.timer, self.cfg.timeout, 0);
    }

    fn on_input(&mut self, _ingress: usize, env: &Envelope, ctx: &mut NodeContext<'_>) {
        self.topic = env.topic.clone();
        ctx.restart_timer(&mut self.timer, self.cfg.timeout, 0);
        if self.cfg.mode == Mode::Active {
            ctx.emit(PING, &env.topic, self.cfg.ping.clone());
        }
        ctx.emit(OK, &env.topic, self.cfg.ok.clone());
    }

    fn on_timer(&mut self, _tag: u32, ctx: &mut NodeContext<'_>) {
        self.timer = None;
        ctx.restart_timer(&mut self.timer, self.cfg.timeout, 0);
        let topic = self.topic.clone();
        ctx.emit(ERROR, &topic, self.cfg.error.clone());
    }

    fn as_any(&self) -> &dyn Any {
        self
    }
}
