//! `threshold-check`: passes readings inside `[low, high]`, inclusive.

use std::any::Any;

use serde::{Deserialize, Serialize};

use super::{Operator, Validate};
use crate::engine::NodeContext;
use crate::numeric::Scalar;
use crate::payload::{Envelope, Payload};

pub const READING: usize = 0;
pub const ERROR: usize = 1;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ThresholdConfig<T> {
    pub low: T,
    pub high: T,
}

impl<T: Scalar> ThresholdConfig<T> {
    pub fn new(low: T, high: T) -> Result<Self, String> {
        let cfg = ThresholdConfig { low, high };
        cfg.check()?;
        Ok(cfg)
    }

    fn check(&self) -> Result<(), String> {
        if self.low.is_nan() || self.high.is_nan() {
            return Err("thresholds must be numbers".into());
        }
        if self.low > self.high {
            return Err(format!(
                "requires low ≤ high (low={:?}, high={:?})",
                self.low, self.high
            ));
        }
        Ok(())
    }

    pub fn admits(&self, reading: T) -> bool {
        self.low <= reading && reading <= self.high
    }
}

impl<T: Scalar> Validate for ThresholdConfig<T> {
    fn validate(&self) -> Result<(), String> {
        self.check()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ThresholdOutcome<T> {
    Reading(T),
    OutOfRange(T),
}

pub fn threshold_check<T: Scalar>(reading: T, cfg: &ThresholdConfig<T>) -> ThresholdOutcome<T> {
    if cfg.admits(reading) {
        ThresholdOutcome::Reading(reading)
    } else {
        ThresholdOutcome::OutOfRange(reading)
    }
}

pub struct ThresholdNode {
    cfg: ThresholdConfig<f64>,
}

impl ThresholdNode {
    pub fn new(cfg: ThresholdConfig<f64>) -> Self {
        ThresholdNode { cfg }
    }
}

impl Operator for ThresholdNode {
    fn on_input(&mut self, _ingress: usize, env: &Envelope, ctx: &mut NodeContext<'_>) {
        match env.payload.as_f64() {
            None => ctx.emit_error(ERROR, &env.topic, "malformed", env.payload.clone()),
            Some(v) => match threshold_check(v, &self.cfg) {
                ThresholdOutcome::Reading(_) => ctx.forward(READING, env),
                ThresholdOutcome::OutOfRange(v) => {
                    let p = Payload::record([
                        ("error", Payload::from("out-of-range")),
                        ("value", v.into()),
                        ("low", self.cfg.low.into()),
                        ("high", self.cfg.high.into()),
                    ]);
                    ctx.emit(ERROR, &env.topic, p);
                }
            },
        }
    }

    fn as_any(&self) -> &dyn Any {
        self
    }
}
