//! `resource-monitor`: checks one telemetry metric against near-min and
//! near-max bounds.

use std::any::Any;

use serde::{Deserialize, Serialize};

use super::{Operator, Validate};
use crate::engine::NodeContext;
use crate::numeric::Scalar;
use crate::payload::{Envelope, Payload};

pub const OK: usize = 0;
pub const ALERT: usize = 1;
pub const ERROR: usize = 2;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "camelCase")]
pub struct ResourceMonitorConfig<T> {
    pub metric: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub near_min: Option<T>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub near_max: Option<T>,
}

impl<T: Scalar> Validate for ResourceMonitorConfig<T> {
    fn validate(&self) -> Result<(), String> {
        match (self.near_min, self.near_max) {
            (None, None) => Err("at least one of nearMin/nearMax is required".into()),
            (Some(lo), Some(hi)) if lo >= hi => Err("requires nearMin < nearMax".into()),
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Bound {
    NearMin,
    NearMax,
}

impl<T: Scalar> ResourceMonitorConfig<T> {
    /// The bound `value` violates, if any. Bounds are inclusive.
    pub fn violated(&self, value: T) -> Option<Bound> {
        if self.near_min.is_some_and(|lo| value <= lo) {
            Some(Bound::NearMin)
        } else if self.near_max.is_some_and(|hi| value >= hi) {
            Some(Bound::NearMax)
        } else {
            None
        }
    }
}

pub struct ResourceMonitorNode {
    cfg: ResourceMonitorConfig<f64>,
}

impl ResourceMonitorNode {
    pub fn new(cfg: ResourceMonitorConfig<f64>) -> Self {
        ResourceMonitorNode { cfg }
    }
}

impl Operator for ResourceMonitorNode {
    fn on_input(&mut self, _ingress: usize, env: &Envelope, ctx: &mut NodeContext<'_>) {
        let Some(value) = env.payload.get(&self.cfg.metric).and_then(Payload::as_f64) else {
            ctx.emit_error(
                ERROR,
                &env.topic,
                "missing-metric",
                Payload::from(self.cfg.metric.as_str()),
            );
            return;
        };
        match self.cfg.violated(value) {
            None => ctx.forward(OK, env),
            Some(bound) => {
                let (name, limit) = match bound {
                    Bound::NearMin => ("nearMin", self.cfg.near_min),
                    Bound::NearMax => ("nearMax", self.cfg.near_max),
                };
                let p = Payload::record([
                    ("metric", Payload::from(self.cfg.metric.as_str())),
                    ("value", value.into()),
                    ("bound", Payload::from(name)),
                    ("limit", limit.unwrap_or(f64::NAN).into()),
                ]);
                ctx.emit(ALERT, &env.topic, p);
            }
        }
    }

    fn as_any(&self) -> &dyn Any {
        self
    }
}
