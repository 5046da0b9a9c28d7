//! `timing-check`: classifies each message by its gap to the previous one.

use std::any::Any;

use serde::{Deserialize, Serialize};

use super::{Operator, Validate};
use crate::engine::NodeContext;
use crate::payload::{Envelope, Millis};

pub const TOO_FAST: usize = 0;
pub const NORMAL: usize = 1;
pub const TOO_SLOW: usize = 2;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TimingConfig {
    pub expected: Millis,
    #[serde(default)]
    pub tolerance: f64,
}

impl Validate for TimingConfig {
    fn validate(&self) -> Result<(), String> {
        if self.expected == 0 {
            return Err("expected must be > 0".into());
        }
        if !(self.tolerance >= 0.0) {
            return Err("tolerance must be ≥ 0".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TimingClass {
    TooFast,
    Normal,
    TooSlow,
}

impl TimingClass {
    pub fn egress(self) -> usize {
        match self {
            TimingClass::TooFast => TOO_FAST,
            TimingClass::Normal => NORMAL,
            TimingClass::TooSlow => TOO_SLOW,
        }
    }
}

pub fn classify(gap: Millis, cfg: &TimingConfig) -> TimingClass {
    let g = gap as f64;
    let expected = cfg.expected as f64;
    if g < expected * (1.0 - cfg.tolerance) {
        TimingClass::TooFast
    } else if g > expected * (1.0 + cfg.tolerance) {
        TimingClass::TooSlow
    } else {
        TimingClass::Normal
    }
}

pub struct TimingCheckNode {
    cfg: TimingConfig,
    last: Option<Millis>,
}

impl TimingCheckNode {
    pub fn new(cfg: TimingConfig) -> Self {
        TimingCheckNode { cfg, last: None }
    }
}

impl Operator for TimingCheckNode {
    fn on_input(&mut self, _ingress: usize, env: &Envelope, ctx: &mut NodeContext<'_>) {
        let now = ctx.now();
        let class = match self.last.replace(now) {
            None => TimingClass::Normal,
            Some(prev) => classify(now - prev, &self.cfg),
        };
        ctx.forward(class.egress(), env);
    }

    fn as_any(&self) -> &dyn Any {
        self
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(tol: f64) -> TimingConfig {
        TimingConfig {
            expected: 15_000,
            tolerance: tol,
        }
    }

    #[test]
    fn classes_at_zero_tolerance() {
        assert_eq!(classify(5_000, &cfg(0.0)), TimingClass::TooFast);
        assert_eq!(classify(15_000, &cfg(0.0)), TimingClass::Normal);
        assert_eq!(classify(40_000, &cfg(0.0)), TimingClass::TooSlow);
        assert_eq!(classify(14_999, &cfg(0.0)), TimingClass::TooFast);
        assert_eq!(classify(15_001, &cfg(0.0)), TimingClass::TooSlow);
    }

    #[test]
    fn tolerance_widens_normal_band() {
        assert_eq!(classify(12_000, &cfg(0.2)), TimingClass::Normal);
        assert_eq!(classify(18_000, &cfg(0.2)), TimingClass::Normal);
        assert_eq!(classify(11_999, &cfg(0.2)), TimingClass::TooFast);
    }
}
