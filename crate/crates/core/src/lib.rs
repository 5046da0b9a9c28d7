//! Self-healing dataflow runtime with a deterministic fault-injection
//! simulator.

// Config checks are written `!(x >= lo)` so that NaN fails them.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod clock;
pub mod cluster;
pub mod engine;
pub mod flow;
pub mod marble;
pub mod nodes;
pub mod numeric;
pub mod payload;
pub mod persistence;
pub mod report;
pub mod sim;
pub mod timeline;

pub use clock::{TimerId, VirtualClock};
pub use engine::{DetachedHost, Engine, Host, NodeContext};
pub use flow::{load_flow, parse_flow, validate_graph, FlowError, FlowGraph};
pub use nodes::NodeKind;
pub use numeric::Scalar;
pub use payload::{Envelope, Millis, Payload};
pub use persistence::Store;
pub use timeline::{EventKind, LogEntry, TimelineLog};

pub type Kalman = nodes::kalman::ScalarKalman<f64>;
pub type Kalman32 = nodes::kalman::ScalarKalman<f32>;
pub type Threshold = nodes::threshold::ThresholdConfig<f64>;
pub type Threshold32 = nodes::threshold::ThresholdConfig<f32>;
pub type CompensateState = nodes::compensate::CompensateState<f64>;
pub type DeltaWatcher = nodes::watcher::DeltaWatcher<f64>;
pub type ResourceBounds = nodes::resource::ResourceMonitorConfig<f64>;
