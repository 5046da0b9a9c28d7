//! The virtual world: broker, devices, external services, and the scripted
//! fault injector.

pub mod broker;
pub mod harness;
pub mod presets;
pub mod scenario;
pub mod world;

pub use broker::Broker;
pub use harness::{run_scenario, SimError, Simulation};
pub use scenario::{load_scenario, parse_scenario, FaultEvent, FaultKind, ScenarioError, ScenarioScript};
pub use world::{DeviceDef, DeviceKind, InstanceDef, ServiceDef, WorldDef};
