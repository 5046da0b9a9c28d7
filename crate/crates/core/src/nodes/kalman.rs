//! `kalman-filter`: one-dimensional constant-state Kalman filter.
//!
//! The first measurement seeds the estimate with variance `r`; every
//! measurement, the first included, then runs one predict/update step.

use std::any::Any;

use serde::{Deserialize, Serialize};

use super::{Operator, Validate};
use crate::engine::NodeContext;
use crate::numeric::Scalar;
use crate::payload::{Envelope, Payload};

pub const FILTERED: usize = 0;
pub const ERROR: usize = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KalmanConfig {
    #[serde(default)]
    pub q: f64,
    pub r: f64,
}

impl Validate for KalmanConfig {
    fn validate(&self) -> Result<(), String> {
        if !(self.q >= 0.0) {
            return Err("q must be ≥ 0".into());
        }
        if !(self.r > 0.0) {
            return Err("r must be > 0".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScalarKalman<T> {
    q: T,
    r: T,
    estimate: Option<T>,
    variance: T,
    gain: T,
}

impl<T: Scalar> ScalarKalman<T> {
    pub fn new(q: T, r: T) -> Self {
        ScalarKalman {
            q,
            r,
            estimate: None,
            variance: r,
            gain: T::zero(),
        }
    }

    pub fn update(&mut self, z: T) -> T {
        let prior = *self.estimate.get_or_insert(z);
        let p = self.variance + self.q;
        let k = p / (p + self.r);
        let x = prior + k * (z - prior);
        self.variance = (T::one() - k) * p;
        self.gain = k;
        self.estimate = Some(x);
        x
    }

    pub fn estimate(&self) -> Option<T> {
        self.estimate
    }

    pub fn variance(&self) -> T {
        self.variance
    }

    /// Gain used by the latest update.
    pub fn gain(&self) -> T {
        self.gain
    }
}

pub struct KalmanNode {
    filter: ScalarKalman<f64>,
}

impl KalmanNode {
    pub fn new(cfg: KalmanConfig) -> Self {
        KalmanNode {
            filter: ScalarKalman::new(cfg.q, cfg.r),
        }
    }
}

impl Operator for KalmanNode {
    fn on_input(&mut self, _ingress: usize, env: &Envelope, ctx: &mut NodeContext<'_>) {
        match env.payload.as_f64() {
            Some(z) => {
                let x = self.filter.update(z);
                ctx.emit(FILTERED, &env.topic, Payload::Number(x));
            }
            None => ctx.emit_error(ERROR, &env.topic, "malformed", env.payload.clone()),
        }
    }

    fn as_any(&self) -> &dyn Any {
        self
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn first_step_gain_is_half_with_p0_equal_r() {
        let mut k = ScalarKalman::new(0.0, 1.0);
        assert_eq!(k.update(2.0), 2.0);
        assert_eq!(k.gain(), 0.5);
        assert_eq!(k.variance(), 0.5);
        assert_eq!(k.update(2.0), 2.0);
        assert_eq!(k.gain(), 1.0 / 3.0);
    }

    #[test]
    fn fixed_point_holds() {
        let mut k = ScalarKalman::new(0.1f32, 2.0);
        for _ in 0..50 {
            assert_eq!(k.update(7.25), 7.25);
        }
    }

    #[test]
    fn converges_to_constant() {
        let mut k = ScalarKalman::new(0.01, 4.0);
        k.update(0.0);
        let mut x = 0.0f64;
        for _ in 0..2000 {
            x = k.update(10.0);
        }
        assert!((x - 10.0).abs() < 1e-6);
    }
}
