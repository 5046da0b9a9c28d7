//! Ready-made flows and scripts for the three reference scenarios: a sensor
//! outage bridged by compensation (A), an NFC load spike spread over
//! validators (B), and active-standby failover between two instances (C).

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::scenario::{parse_scenario, FaultEvent, FaultKind, ScenarioScript};
use crate::flow::{load_flow, FlowGraph};
use crate::payload::Millis;

pub const SCENARIO_A_FLOW: &str = include_str!("../../fixtures/scenario-a.flow.json");
pub const SCENARIO_A_SCRIPT: &str = include_str!("../../fixtures/scenario-a.json");
pub const SCENARIO_B_FLOW: &str = include_str!("../../fixtures/scenario-b.flow.json");
pub const SCENARIO_B_SCRIPT: &str = include_str!("../../fixtures/scenario-b.json");
pub const SCENARIO_C_FLOW: &str = include_str!("../../fixtures/scenario-c.flow.json");
pub const SCENARIO_C_SCRIPT: &str = include_str!("../../fixtures/scenario-c.json");

pub const SENSOR_PERIOD: Millis = 60_000;
pub const ELECTION_TIMEOUT: Millis = 15_000;

pub const A_SENSOR: &str = "sensor-node-1";
pub const B_READER: &str = "nfc-reader";
pub const C_MASTER: &str = "node-a";
pub const C_STANDBY: &str = "node-b";

fn graph(text: &str) -> FlowGraph {
    load_flow(text).expect("bundled flow is valid")
}

fn script(text: &str) -> ScenarioScript {
    parse_scenario(text).expect("bundled scenario is valid")
}

pub fn scenario_a_graph() -> FlowGraph {
    graph(SCENARIO_A_FLOW)
}

pub fn scenario_a_script() -> ScenarioScript {
    script(SCENARIO_A_SCRIPT)
}

pub fn scenario_b_graph() -> FlowGraph {
    graph(SCENARIO_B_FLOW)
}

pub fn scenario_b_script() -> ScenarioScript {
    script(SCENARIO_B_SCRIPT)
}

/// One copy of the failover flow per instance.
pub fn scenario_c_graphs() -> Vec<FlowGraph> {
    vec![graph(SCENARIO_C_FLOW), graph(SCENARIO_C_FLOW)]
}

/// The 22-minute single-failover run.
pub fn scenario_c_script() -> ScenarioScript {
    script(SCENARIO_C_SCRIPT)
}

/// A trial that kills the master `crashes` times at seeded random instants.
///
/// Each outage lasts 20–60 s and is followed by 30–120 s of normal
/// operation, long enough for the restarted instance to reclaim mastership
/// before the next crash.
pub fn scenario_c_trial(seed: u64, crashes: usize) -> ScenarioScript {
    let base = scenario_c_script();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut s = ScenarioScript::new(seed, 0, base.world);
    let mut t: Millis = 0;
    for _ in 0..crashes {
        t += rng.gen_range(30_000..=120_000);
        let crash = t;
        t += rng.gen_range(20_000..=60_000);
        s = s
            .with_event(FaultEvent::new(crash, FaultKind::InstanceCrash, C_MASTER))
            .with_event(FaultEvent::new(t, FaultKind::InstanceRestart, C_MASTER));
    }
    s.duration = t + 60_000;
    s
}
