//! `readings-watcher`: flags changes that are too small, jumps that are too
//! large, and stuck-at runs of identical readings.

use std::any::Any;

use serde::{Deserialize, Serialize};

use super::{Operator, Validate};
use crate::engine::NodeContext;
use crate::numeric::Scalar;
use crate::payload::{Envelope, Payload};

pub const READING: usize = 0;
pub const ANOMALY: usize = 1;

fn default_stuck() -> u32 {
    2
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "camelCase")]
pub struct ReadingsWatcherConfig<T> {
    #[serde(default = "T::default")]
    pub min_delta: T,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_delta: Option<T>,
    #[serde(default = "default_stuck")]
    pub stuck_count: u32,
}

impl<T: Scalar> Validate for ReadingsWatcherConfig<T> {
    fn validate(&self) -> Result<(), String> {
        if !(self.min_delta >= T::zero()) {
            return Err("minDelta must be ≥ 0".into());
        }
        if let Some(max) = self.max_delta {
            if !(max > T::zero()) {
                return Err("maxDelta must be > 0".into());
            }
            if max < self.min_delta {
                return Err("requires minDelta ≤ maxDelta".into());
            }
        }
        if self.stuck_count < 2 {
            return Err("stuckCount must be ≥ 2".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AnomalyKind {
    StuckAt,
    MaxChange,
    MinChange,
}

impl AnomalyKind {
    pub fn as_str(self) -> &'static str {
        match self {
            AnomalyKind::StuckAt => "stuck-at",
            AnomalyKind::MaxChange => "max-change",
            AnomalyKind::MinChange => "min-change",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Verdict<T> {
    Normal,
    Anomaly { kind: AnomalyKind, delta: T },
}

/// Delta and run-length tracker. Every reading, anomalous or not, becomes
/// the predecessor of the next one.
#[derive(Debug, Clone, Default)]
pub struct DeltaWatcher<T> {
    last: Option<T>,
    run: u32,
}

impl<T: Scalar> DeltaWatcher<T> {
    pub fn new() -> Self {
        DeltaWatcher { last: None, run: 0 }
    }

    pub fn observe(&mut self, reading: T, cfg: &ReadingsWatcherConfig<T>) -> Verdict<T> {
        let Some(prev) = self.last.replace(reading) else {
            self.run = 1;
            return Verdict::Normal;
        };
        if reading == prev {
            self.run += 1;
        } else {
            self.run = 1;
        }
        let delta = (reading - prev).abs();
        if self.run >= cfg.stuck_count {
            return Verdict::Anomaly {
                kind: AnomalyKind::StuckAt,
                delta,
            };
        }
        if cfg.max_delta.is_some_and(|max| delta > max) {
            return Verdict::Anomaly {
                kind: AnomalyKind::MaxChange,
                delta,
            };
        }
        if delta < cfg.min_delta {
            return Verdict::Anomaly {
                kind: AnomalyKind::MinChange,
                delta,
            };
        }
        Verdict::Normal
    }
}

pub struct ReadingsWatcherNode {
    cfg: ReadingsWatcherConfig<f64>,
    watcher: DeltaWatcher<f64>,
}

impl ReadingsWatcherNode {
    pub fn new(cfg: ReadingsWatcherConfig<f64>) -> Self {
        ReadingsWatcherNode {
            cfg,
            watcher: DeltaWatcher::new(),
        }
    }
}

impl Operator for ReadingsWatcherNode {
    fn on_input(&mut self, _ingress: usize, env: &Envelope, ctx: &mut NodeContext<'_>) {
        let Some(v) = env.payload.as_f64() else {
            ctx.emit_error(ANOMALY, &env.topic, "malformed", env.payload.clone());
            return;
        };
        match self.watcher.observe(v, &self.cfg) {
            Verdict::Normal => ctx.forward(READING, env),
            Verdict::Anomaly { kind, delta } => {
                let p = Payload::record([
                    ("anomaly", Payload::from(kind.as_str())),
                    ("value", v.into()),
                    ("delta", delta.into()),
                ]);
                ctx.emit(ANOMALY, &env.topic, p);
            }
        }
    }

    fn as_any(&self) -> &dyn Any {
        self
    }
}
