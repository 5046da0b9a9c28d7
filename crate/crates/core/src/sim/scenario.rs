//! Scenario scripts: a seed, a duration, and timed faults.
//!
//! ```json
//! {"seed": 7, "duration_ms": 600000,
//!  "events": [{"at_ms": 1000, "kind": "device_offline", "target": "s1", "params": {}}],
//!  "world": {...}}
//! ```
//!
//! `world` is optional; without it the run has no devices or services.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use thiserror::Error;

use super::world::WorldDef;
use crate::payload::Millis;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum FaultKind {
    DeviceOffline,
    DeviceOnline,
    InstanceCrash,
    InstanceRestart,
    NetDelay,
    ValueNoise,
    StuckValue,
    ServiceDown,
    ServiceUp,
}

impl FaultKind {
    pub const ALL: [FaultKind; 9] = [
        FaultKind::DeviceOffline,
        FaultKind::DeviceOnline,
        FaultKind::InstanceCrash,
        FaultKind::InstanceRestart,
        FaultKind::NetDelay,
        FaultKind::ValueNoise,
        FaultKind::StuckValue,
        FaultKind::ServiceDown,
        FaultKind::ServiceUp,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            FaultKind::DeviceOffline => "device_offline",
            FaultKind::DeviceOnline => "device_online",
            FaultKind::InstanceCrash => "instance_crash",
            FaultKind::InstanceRestart => "instance_restart",
            FaultKind::NetDelay => "net_delay",
            FaultKind::ValueNoise => "value_noise",
            FaultKind::StuckValue => "stuck_value",
            FaultKind::ServiceDown => "service_down",
            FaultKind::ServiceUp => "service_up",
        }
    }
}

impl fmt::Display for FaultKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for FaultKind {
    type Err = ScenarioError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        FaultKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| ScenarioError::UnknownFault(s.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FaultEvent {
    pub at: Millis,
    pub kind: FaultKind,
    pub target: String,
    pub params: Map<String, Value>,
}

impl FaultEvent {
    pub fn new(at: Millis, kind: FaultKind, target: &str) -> Self {
        FaultEvent {
            at,
            kind,
            target: target.to_string(),
            params: Map::new(),
        }
    }

    pub fn param(mut self, key: &str, value: impl Into<Value>) -> Self {
        self.params.insert(key.to_string(), value.into());
        self
    }

    pub fn param_f64(&self, key: &str) -> Option<f64> {
        self.params.get(key).and_then(Value::as_f64)
    }

    pub fn param_u64(&self, key: &str) -> Option<u64> {
        self.params.get(key).and_then(Value::as_u64)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioScript {
    pub seed: u64,
    pub duration: Millis,
    pub events: Vec<FaultEvent>,
    pub world: WorldDef,
}

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("scenario syntax error at line {line}, column {column}: {message}")]
    Syntax {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("unknown fault kind `{0}`")]
    UnknownFault(String),
    #[error("invalid scenario: {}", .0.join("; "))]
    Invalid(Vec<String>),
    #[error("cannot read scenario: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
struct EventDoc {
    at_ms: Millis,
    kind: String,
    target: String,
    #[serde(default)]
    params: Map<String, Value>,
}

#[derive(Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
struct ScriptDoc {
    seed: u64,
    duration_ms: Millis,
    #[serde(default)]
    events: Vec<EventDoc>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    world: Option<WorldDef>,
}

/// Parses and sorts a script (stable by `at`), then checks its invariants
/// and, when the world is present, its targets.
pub fn parse_scenario(text: &str) -> Result<ScenarioScript, ScenarioError> {
    let doc: ScriptDoc = serde_json::from_str(text).map_err(|e| ScenarioError::Syntax {
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    })?;
    let mut events = Vec::with_capacity(doc.events.len());
    for e in doc.events {
        events.push(FaultEvent {
            at: e.at_ms,
            kind: e.kind.parse()?,
            target: e.target,
            params: e.params,
        });
    }
    events.sort_by_key(|e| e.at);
    let script = ScenarioScript {
        seed: doc.seed,
        duration: doc.duration_ms,
        events,
        world: doc.world.unwrap_or_default(),
    };
    let errs = script.validate();
    if errs.is_empty() {
        Ok(script)
    } else {
        Err(ScenarioError::Invalid(errs))
    }
}

pub fn load_scenario(path: impl AsRef<Path>) -> Result<ScenarioScript, ScenarioError> {
    parse_scenario(&std::fs::read_to_string(path)?)
}

impl ScenarioScript {
    pub fn new(seed: u64, duration: Millis, world: WorldDef) -> Self {
        ScenarioScript {
            seed,
            duration,
            events: Vec::new(),
            world,
        }
    }

    pub fn with_event(mut self, e: FaultEvent) -> Self {
        let pos = self.events.partition_point(|x| x.at <= e.at);
        self.events.insert(pos, e);
        self
    }

    /// Ordering, duration, world consistency, and fault targets.
    pub fn validate(&self) -> Vec<String> {
        let mut errs = self.world.validate();
        if self.events.windows(2).any(|w| w[0].at > w[1].at) {
            errs.push("events not sorted by at_ms".into());
        }
        if let Some(last) = self.events.last() {
            if last.at > self.duration {
                errs.push(format!("event at {} after duration {}", last.at, self.duration));
            }
        }
        let w = &self.world;
        for e in &self.events {
            let found = match e.kind {
                FaultKind::DeviceOffline | FaultKind::DeviceOnline | FaultKind::ValueNoise | FaultKind::StuckValue => {
                    w.device(&e.target).is_some()
                }
                FaultKind::InstanceCrash | FaultKind::InstanceRestart => w.instance(&e.target).is_some(),
                FaultKind::NetDelay => w.device(&e.target).is_some() || w.instance(&e.target).is_some(),
                FaultKind::ServiceDown | FaultKind::ServiceUp => w.service(&e.target).is_some(),
            };
            if !found {
                errs.push(format!("{} at {}: unknown target `{}`", e.kind, e.at, e.target));
            }
        }
        errs
    }

    pub fn to_json(&self) -> String {
        let doc = ScriptDoc {
            seed: self.seed,
            duration_ms: self.duration,
            events: self
                .events
                .iter()
                .map(|e| EventDoc {
                    at_ms: e.at,
                    kind: e.kind.as_str().to_string(),
                    target: e.target.clone(),
                    params: e.params.clone(),
                })
                .collect(),
            world: Some(self.world.clone()),
        };
        serde_json::to_string_pretty(&doc).expect("script serializes")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const WORLD: &str =
        r#""world": {"devices": [{"id": "s1", "kind": "periodicSensor", "period_ms": 1000, "topic": "t"}]}"#;

    #[test]
    fn single_event() {
        let text = format!(
            r#"{{"seed": 1, "duration_ms": 5000, "events": [{{"at_ms": 10, "kind": "device_offline", "target": "s1"}}], {WORLD}}}"#
        );
        let s = parse_scenario(&text).unwrap();
        assert_eq!(s.events.len(), 1);
        assert_eq!(s.events[0].kind, FaultKind::DeviceOffline);
    }

    #[test]
    fn unknown_kind() {
        let text = r#"{"seed": 1, "duration_ms": 5, "events": [{"at_ms": 1, "kind": "explode", "target": "x"}]}"#;
        assert!(matches!(parse_scenario(text), Err(ScenarioError::UnknownFault(k)) if k == "explode"));
    }

    #[test]
    fn sorts_events() {
        let text = format!(
            r#"{{"seed": 1, "duration_ms": 5000, "events": [
                {{"at_ms": 300, "kind": "device_online", "target": "s1"}},
                {{"at_ms": 100, "kind": "device_offline", "target": "s1"}}], {WORLD}}}"#
        );
        let s = parse_scenario(&text).unwrap();
        assert_eq!(s.events.iter().map(|e| e.at).collect::<Vec<_>>(), vec![100, 300]);
    }

    #[test]
    fn unknown_target_and_late_event() {
        let text = r#"{"seed": 1, "duration_ms": 5, "events": [{"at_ms": 9, "kind": "service_down", "target": "v"}]}"#;
        match parse_scenario(text) {
            Err(ScenarioError::Invalid(errs)) => assert_eq!(errs.len(), 2),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn json_round_trip() {
        let text = format!(
            r#"{{"seed": 3, "duration_ms": 50, "events": [{{"at_ms": 1, "kind": "stuck_value", "target": "s1", "params": {{"value": 7}}}}], {WORLD}}}"#
        );
        let s = parse_scenario(&text).unwrap();
        assert_eq!(parse_scenario(&s.to_json()).unwrap(), s);
    }
}
