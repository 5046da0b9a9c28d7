//! Operator catalogue: the self-healing nodes, `rbe`, and the I/O plumbing
//! nodes that connect flows to the simulated world.

use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::{Map, Value};
use thiserror::Error;

use crate::engine::NodeContext;
use crate::payload::Envelope;

pub mod audit;
pub mod balancing;
pub mod checkpoint;
pub mod compensate;
pub mod debounce;
pub mod discovery;
pub mod flow_control;
pub mod heartbeat;
pub mod io;
pub mod kalman;
pub mod rbe;
pub mod redundancy;
pub mod registry;
pub mod resource;
pub mod threshold;
pub mod timing;
pub mod voter;
pub mod watcher;

/// A stateful node. The engine calls it synchronously; it never blocks.
pub trait Operator {
    fn start(&mut self, _ctx: &mut NodeContext<'_>) {}

    fn on_input(&mut self, ingress: usize, env: &Envelope, ctx: &mut NodeContext<'_>);

    fn on_timer(&mut self, _tag: u32, _ctx: &mut NodeContext<'_>) {}

    fn as_any(&self) -> &dyn std::any::Any;
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ConfigError {
    #[error("{0}")]
    Decode(String),
    #[error("{0}")]
    Invariant(String),
}

/// Post-decode invariant checks for a config record.
pub trait Validate {
    fn validate(&self) -> Result<(), String> {
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum NodeKind {
    ActionAudit,
    Balancing,
    Checkpoint,
    Compensate,
    Debounce,
    FlowControl,
    Heartbeat,
    HttpAware,
    KalmanFilter,
    NetworkAware,
    Redundancy,
    ReadingsWatcher,
    ReplicationVoter,
    ResourceMonitor,
    ThresholdCheck,
    TimingCheck,
    DeviceRegistry,
    Rbe,
    Inject,
    MqttIn,
    MqttOut,
    HttpRequest,
    Debug,
    Extract,
}

impl NodeKind {
    pub const ALL: [NodeKind; 24] = [
        NodeKind::ActionAudit,
        NodeKind::Balancing,
        NodeKind::Checkpoint,
        NodeKind::Compensate,
        NodeKind::Debounce,
        NodeKind::FlowControl,
        NodeKind::Heartbeat,
        NodeKind::HttpAware,
        NodeKind::KalmanFilter,
        NodeKind::NetworkAware,
        NodeKind::Redundancy,
        NodeKind::ReadingsWatcher,
        NodeKind::ReplicationVoter,
        NodeKind::ResourceMonitor,
        NodeKind::ThresholdCheck,
        NodeKind::TimingCheck,
        NodeKind::DeviceRegistry,
        NodeKind::Rbe,
        NodeKind::Inject,
        NodeKind::MqttIn,
        NodeKind::MqttOut,
        NodeKind::HttpRequest,
        NodeKind::Debug,
        NodeKind::Extract,
    ];

    pub fn name(self) -> &'static str {
        match self {
            NodeKind::ActionAudit => "action-audit",
            NodeKind::Balancing => "balancing",
            NodeKind::Checkpoint => "checkpoint",
            NodeKind::Compensate => "compensate",
            NodeKind::Debounce => "debounce",
            NodeKind::FlowControl => "flow-control",
            NodeKind::Heartbeat => "heartbeat",
            NodeKind::HttpAware => "http-aware",
            NodeKind::KalmanFilter => "kalman-filter",
            NodeKind::NetworkAware => "network-aware",
            NodeKind::Redundancy => "redundancy",
            NodeKind::ReadingsWatcher => "readings-watcher",
            NodeKind::ReplicationVoter => "replication-voter",
            NodeKind::ResourceMonitor => "resource-monitor",
            NodeKind::ThresholdCheck => "threshold-check",
            NodeKind::TimingCheck => "timing-check",
            NodeKind::DeviceRegistry => "device-registry",
            NodeKind::Rbe => "rbe",
            NodeKind::Inject => "inject",
            NodeKind::MqttIn => "mqtt-in",
            NodeKind::MqttOut => "mqtt-out",
            NodeKind::HttpRequest => "http-request",
            NodeKind::Debug => "debug",
            NodeKind::Extract => "extract",
        }
    }

    pub fn from_name(name: &str) -> Option<NodeKind> {
        NodeKind::ALL.into_iter().find(|k| k.name() == name)
    }

    /// True for the seventeen self-healing operators.
    pub fn is_self_healing(self) -> bool {
        !matches!(
            self,
            NodeKind::Rbe
                | NodeKind::Inject
                | NodeKind::MqttIn
                | NodeKind::MqttOut
                | NodeKind::HttpRequest
                | NodeKind::Debug
                | NodeKind::Extract
        )
    }
}

impl std::fmt::Display for NodeKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

pub(crate) fn decode<C>(raw: &Map<String, Value>) -> Result<C, ConfigError>
where
    C: DeserializeOwned + Validate,
{
    let cfg: C = serde_json::from_value(Value::Object(raw.clone())).map_err(|e| ConfigError::Decode(e.to_string()))?;
    cfg.validate().map_err(ConfigError::Invariant)?;
    Ok(cfg)
}

fn normalize<C>(raw: &Map<String, Value>) -> Result<Map<String, Value>, ConfigError>
where
    C: DeserializeOwned + Serialize + Validate,
{
    let cfg: C = decode(raw)?;
    match serde_json::to_value(cfg) {
        Ok(Value::Object(m)) => Ok(m),
        Ok(_) => Ok(Map::new()),
        Err(e) => Err(ConfigError::Decode(e.to_string())),
    }
}

/// Decodes, checks, and re-encodes a node config with defaults filled in.
pub fn normalize_config(kind: NodeKind, raw: &Map<String, Value>) -> Result<Map<String, Value>, ConfigError> {
    match kind {
        NodeKind::ActionAudit => normalize::<audit::ActionAuditConfig>(raw),
        NodeKind::Balancing => normalize::<balancing::BalancingConfig>(raw),
        NodeKind::Checkpoint => normalize::<checkpoint::CheckpointConfig>(raw),
        NodeKind::Compensate => normalize::<compensate::CompensateConfig>(raw),
        NodeKind::Debounce => normalize::<debounce::DebounceConfig>(raw),
        NodeKind::FlowControl => normalize::<flow_control::FlowControlConfig>(raw),
        NodeKind::Heartbeat => normalize::<heartbeat::HeartbeatConfig>(raw),
        NodeKind::HttpAware => normalize::<discovery::HttpAwareConfig>(raw),
        NodeKind::KalmanFilter => normalize::<kalman::KalmanConfig>(raw),
        NodeKind::NetworkAware => normalize::<discovery::NetworkAwareConfig>(raw),
        NodeKind::Redundancy => normalize::<redundancy::RedundancyConfig>(raw),
        NodeKind::ReadingsWatcher => normalize::<watcher::ReadingsWatcherConfig<f64>>(raw),
        NodeKind::ReplicationVoter => normalize::<voter::VoterConfig>(raw),
        NodeKind::ResourceMonitor => normalize::<resource::ResourceMonitorConfig<f64>>(raw),
        NodeKind::ThresholdCheck => normalize::<threshold::ThresholdConfig<f64>>(raw),
        NodeKind::TimingCheck => normalize::<timing::TimingConfig>(raw),
        NodeKind::DeviceRegistry => normalize::<registry::DeviceRegistryConfig>(raw),
        NodeKind::Rbe => normalize::<rbe::RbeConfig>(raw),
        NodeKind::Inject => normalize::<io::InjectConfig>(raw),
        NodeKind::MqttIn => normalize::<io::MqttInConfig>(raw),
        NodeKind::MqttOut => normalize::<io::MqttOutConfig>(raw),
        NodeKind::HttpRequest => normalize::<io::HttpRequestConfig>(raw),
        NodeKind::Debug => normalize::<io::DebugConfig>(raw),
        NodeKind::Extract => normalize::<io::ExtractConfig>(raw),
    }
}

/// `(ingress, egress)` port counts.
pub fn port_counts(kind: NodeKind, config: &Map<String, Value>) -> (usize, usize) {
    match kind {
        NodeKind::ActionAudit => (2, 2),
        NodeKind::Balancing => {
            let n = config.get("outputs").and_then(Value::as_u64).unwrap_or(2) as usize;
            (1, n)
        }
        NodeKind::Checkpoint => (1, 2),
        NodeKind::Compensate => (1, 3),
        NodeKind::Debounce => (1, 2),
        NodeKind::FlowControl => (1, 2),
        NodeKind::Heartbeat => (1, 3),
        NodeKind::HttpAware => (1, 1),
        NodeKind::KalmanFilter => (1, 2),
        NodeKind::NetworkAware => (1, 1),
        NodeKind::Redundancy => (1, 2),
        NodeKind::ReadingsWatcher => (1, 2),
        NodeKind::ReplicationVoter => (1, 2),
        NodeKind::ResourceMonitor => (1, 3),
        NodeKind::ThresholdCheck => (1, 2),
        NodeKind::TimingCheck => (1, 3),
        NodeKind::DeviceRegistry => (1, 2),
        NodeKind::Rbe => (1, 1),
        NodeKind::Inject => (0, 1),
        NodeKind::MqttIn => (1, 1),
        NodeKind::MqttOut => (1, 0),
        NodeKind::HttpRequest => (1, 2),
        NodeKind::Debug => (1, 0),
        NodeKind::Extract => (1, 2),
    }
}

/// Flow groups a node's config names (for cross-reference warnings).
pub fn referenced_flows(kind: NodeKind, config: &Map<String, Value>) -> Vec<String> {
    match kind {
        NodeKind::Redundancy => config
            .get("controlledFlows")
            .and_then(Value::as_array)
            .map(|a| a.iter().filter_map(Value::as_str).map(str::to_string).collect())
            .unwrap_or_default(),
        _ => Vec::new(),
    }
}

pub fn build(kind: NodeKind, raw: &Map<String, Value>) -> Result<Box<dyn Operator>, ConfigError> {
    Ok(match kind {
        NodeKind::ActionAudit => Box::new(audit::ActionAudit::new(decode(raw)?)),
        NodeKind::Balancing => Box::new(balancing::BalancingNode::new(decode(raw)?)),
        NodeKind::Checkpoint => Box::new(checkpoint::CheckpointNode::new(decode(raw)?)),
        NodeKind::Compensate => Box::new(compensate::CompensateNode::new(decode(raw)?)),
        NodeKind::Debounce => Box::new(debounce::DebounceNode::new(decode(raw)?)),
        NodeKind::FlowControl => Box::new(flow_control::FlowControlNode::new(decode(raw)?)),
        NodeKind::Heartbeat => Box::new(heartbeat::HeartbeatNode::new(decode(raw)?)),
        NodeKind::HttpAware => Box::new(discovery::HttpAware::new(decode(raw)?)),
        NodeKind::KalmanFilter => Box::new(kalman::KalmanNode::new(decode(raw)?)),
        NodeKind::NetworkAware => Box::new(discovery::NetworkAware::new(decode(raw)?)),
        NodeKind::Redundancy => Box::new(redundancy::RedundancyNode::new(decode(raw)?)),
        NodeKind::ReadingsWatcher => Box::new(watcher::ReadingsWatcherNode::new(decode(raw)?)),
        NodeKind::ReplicationVoter => Box::new(voter::VoterNode::new(decode(raw)?)),
        NodeKind::ResourceMonitor => Box::new(resource::ResourceMonitorNode::new(decode(raw)?)),
        NodeKind::ThresholdCheck => Box::new(threshold::ThresholdNode::new(decode(raw)?)),
        NodeKind::TimingCheck => Box::new(timing::TimingCheckNode::new(decode(raw)?)),
        NodeKind::DeviceRegistry => Box::new(registry::DeviceRegistryNode::new(decode(raw)?)),
        NodeKind::Rbe => Box::new(rbe::RbeNode::new(decode(raw)?)),
        NodeKind::Inject => Box::new(io::Inject::new(decode(raw)?)),
        NodeKind::MqttIn => Box::new(io::MqttIn::new(decode(raw)?)),
        NodeKind::MqttOut => Box::new(io::MqttOut::new(decode(raw)?)),
        NodeKind::HttpRequest => Box::new(io::HttpRequest::new(decode(raw)?)),
        NodeKind::Debug => Box::new(io::DebugSink::new(decode(raw)?)),
        NodeKind::Extract => Box::new(io::Extract::new(decode(raw)?)),
    })
}

/// Log label for a node's timer tag.
pub fn timer_label(kind: NodeKind, _tag: u32) -> &'static str {
    match kind {
        NodeKind::Inject | NodeKind::HttpAware | NodeKind::NetworkAware => "tick",
        NodeKind::Debounce | NodeKind::ReplicationVoter => "window",
        _ => "timeout",
    }
}

/// Topic filter match: exact levels, `+` for one level, trailing `#` for
/// any remainder.
pub fn topic_matches(filter: &str, topic: &str) -> bool {
    let mut f = filter.split('/');
    let mut t = topic.split('/');
    loop {
        match (f.next(), t.next()) {
            (Some("#"), _) => return true,
            (Some("+"), Some(_)) => {}
            (Some(a), Some(b)) if a == b => {}
            (None, None) => return true,
            _ => return false,
        }
    }
}
