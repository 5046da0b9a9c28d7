//! `compensate`: keeps a bounded reading history and, when the stream goes
//! quiet for `interval`, injects a substitute computed from that history.
//!
//! A substitute is fed back through the input path, so it enters the history
//! and restarts the timer exactly like a real reading. During a long outage
//! the output therefore drifts toward the strategy's fixed point.
//!
//! Egress 0 carries the value (real readings are forwarded verbatim), egress
//! 1 carries a `{value, substituted, confidence}` record for each emission,
//! egress 2 carries errors.

use std::any::Any;
use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use super::{Operator, Validate};
use crate::clock::TimerId;
use crate::engine::NodeContext;
use crate::numeric::{mean, Scalar};
use crate::payload::{Envelope, Millis, Payload};

pub const VALUE: usize = 0;
pub const QUALITY: usize = 1;
pub const ERROR: usize = 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Strategy {
    Last,
    Avg,
    Max,
    Min,
}

impl Strategy {
    pub fn apply<T: Scalar>(self, history: &[T]) -> Option<T> {
        match self {
            Strategy::Last => history.last().copied(),
            Strategy::Avg => mean(history),
            Strategy::Max => history.iter().copied().reduce(T::max),
            Strategy::Min => history.iter().copied().reduce(T::min),
        }
    }
}

fn default_history() -> usize {
    10
}

fn default_strategy() -> Strategy {
    Strategy::Last
}

fn default_decay() -> f64 {
    0.9
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "camelCase")]
pub struct CompensateConfig {
    #[serde(default = "default_history")]
    pub history_max_size: usize,
    pub interval: Millis,
    #[serde(default = "default_strategy")]
    pub strategy: Strategy,
    #[serde(default = "default_decay")]
    pub confidence_decay: f64,
}

impl Validate for CompensateConfig {
    fn validate(&self) -> Result<(), String> {
        if self.history_max_size < 2 {
            return Err("historyMaxSize must be > 1".into());
        }
        if self.interval == 0 {
            return Err("interval must be > 0".into());
        }
        if !(self.confidence_decay > 0.0 && self.confidence_decay <= 1.0) {
            return Err("confidenceDecay must lie in (0, 1]".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CompensatedValue<T> {
    pub value: T,
    pub substituted: bool,
    pub confidence: f64,
}

impl<T: Scalar> CompensatedValue<T> {
    pub fn to_payload(&self) -> Payload {
        Payload::record([
            ("value", Payload::Number(self.value.to_f64_lossy())),
            ("substituted", self.substituted.into()),
            ("confidence", self.confidence.into()),
        ])
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EmptyHistory;

/// History and confidence bookkeeping, independent of timers.
#[derive(Debug, Clone)]
pub struct CompensateState<T> {
    history: VecDeque<T>,
    confidence: f64,
}

impl<T: Scalar> Default for CompensateState<T> {
    fn default() -> Self {
        CompensateState {
            history: VecDeque::new(),
            confidence: 1.0,
        }
    }
}

impl<T: Scalar> CompensateState<T> {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn history(&self) -> Vec<T> {
        self.history.iter().copied().collect()
    }

    pub fn confidence(&self) -> f64 {
        self.confidence
    }

    fn push(&mut self, reading: T, cfg: &CompensateConfig) {
        while self.history.len() >= cfg.history_max_size {
            self.history.pop_front();
        }
        self.history.push_back(reading);
    }

    /// A real reading: recorded, confidence back to 1.
    pub fn on_input(&mut self, reading: T, cfg: &CompensateConfig) -> CompensatedValue<T> {
        self.push(reading, cfg);
        self.confidence = 1.0;
        CompensatedValue {
            value: reading,
            substituted: false,
            confidence: 1.0,
        }
    }

    /// Silence past the interval: substitute from history and feed it back.
    pub fn on_timeout(&mut self, cfg: &CompensateConfig) -> Result<CompensatedValue<T>, EmptyHistory> {
        let history: Vec<T> = self.history.iter().copied().collect();
        let value = cfg.strategy.apply(&history).ok_or(EmptyHistory)?;
        self.push(value, cfg);
        self.confidence *= cfg.confidence_decay;
        Ok(CompensatedValue {
            value,
            substituted: true,
            confidence: self.confidence,
        })
    }
}

pub struct CompensateNode {
    cfg: CompensateConfig,
    state: CompensateState<f64>,
    timer: Option<TimerId>,
    topic: String,
}

impl CompensateNode {
    pub fn new(cfg: CompensateConfig) -> Self {
        CompensateNode {
            cfg,
            state: CompensateState::new(),
            timer: None,
            topic: String::new(),
        }
    }
}

impl Operator for CompensateNode {
    fn start(&mut self, ctx: &mut NodeContext<'_>) {
        ctx.restart_timer(&mut self.timer, self.cfg.interval, 0);
    }

    fn on_input(&mut self, _ingress: usize, env: &Envelope, ctx: &mut NodeContext<'_>) {
        let Some(v) = env.payload.as_f64() else {
            ctx.emit_error(ERROR, &env.topic, "malformed", env.payload.clone());
            return;
        };
        self.topic = env.topic.clone();
        let out = self.state.on_input(v, &self.cfg);
        ctx.restart_timer(&mut self.timer, self.cfg.interval, 0);
        ctx.forward(VALUE, env);
        ctx.emit(QUALITY, &env.topic, out.to_payload());
    }

    fn on_timer(&mut self, _tag: u32, ctx: &mut NodeContext<'_>) {
        self.timer = None;
        let topic = self.topic.clone();
        match self.state.on_timeout(&self.cfg) {
            Ok(out) => {
                ctx.restart_timer(&mut self.timer, self.cfg.interval, 0);
                ctx.emit(VALUE, &topic, Payload::Number(out.value));
                ctx.emit(QUALITY, &topic, out.to_payload());
            }
            Err(EmptyHistory) => {
                ctx.restart_timer(&mut self.timer, self.cfg.interval, 0);
                ctx.emit(
                    ERROR,
                    &topic,
                    Payload::record([("error", Payload::from("empty-history"))]),
                );
            }
        }
    }

    fn as_any(&self) -> &dyn Any {
        self
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(strategy: Strategy, size: usize) -> CompensateConfig {
        CompensateConfig {
            history_max_size: size,
            interval: 60_000,
            strategy,
            confidence_decay: 0.9,
        }
    }

    #[test]
    fn oldest_evicted_at_capacity() {
        let c = cfg(Strategy::Last, 10);
        let mut s = CompensateState::new();
        for i in 1..=10 {
            s.on_input(i as f64, &c);
        }
        s.on_input(11.0, &c);
        let expect: Vec<f64> = (2..=11).map(|i| i as f64).collect();
        assert_eq!(s.history(), expect);
    }

    #[test]
    fn first_input_passes_through() {
        let c = cfg(Strategy::Avg, 10);
        let mut s = CompensateState::new();
        let out = s.on_input(4.5, &c);
        assert_eq!(s.history(), vec![4.5]);
        assert_eq!(
            out,
            CompensatedValue {
                value: 4.5,
                substituted: false,
                confidence: 1.0
            }
        );
    }

    #[test]
    fn last_strategy_repeats_last_reading() {
        let c = cfg(Strategy::Last, 10);
        let mut s = CompensateState::new();
        s.on_input(20.0, &c);
        s.on_input(21.5, &c);
        let out = s.on_timeout(&c).unwrap();
        assert_eq!(out.value, 21.5);
        assert!(out.substituted);
    }

    #[test]
    fn avg_strategy_is_the_mean() {
        let c = cfg(Strategy::Avg, 10);
        let mut s = CompensateState::new();
        for v in [40.0, 50.0, 60.0] {
            s.on_input(v, &c);
        }
        assert_eq!(s.on_timeout(&c).unwrap().value, 50.0);
    }

    #[test]
    fn min_and_max_strategies() {
        let h = [3.0, -1.0, 7.0];
        assert_eq!(Strategy::Min.apply(&h), Some(-1.0));
        assert_eq!(Strategy::Max.apply(&h), Some(7.0));
        assert_eq!(Strategy::Max.apply::<f32>(&[]), None);
    }

    #[test]
    fn substitutes_feed_back_into_history() {
        // Hand replay: history h, substitute s1 = mean(h), then h' = h[1..] ++ [s1],
        // s2 = mean(h').
        let c = cfg(Strategy::Avg, 10);
        let mut s = CompensateState::new();
        let readings = [50.0, 52.0, 54.0, 56.0, 58.0, 60.0, 62.0, 64.0, 66.0, 68.0];
        for v in readings {
            s.on_input(v, &c);
        }
        let s1 = s.on_timeout(&c).unwrap().value;
        assert_eq!(s1, 59.0);
        let s2 = s.on_timeout(&c).unwrap().value;
        let mut h2: Vec<f64> = readings[1..].to_vec();
        h2.push(59.0);
        let expect = h2.iter().sum::<f64>() / 10.0;
        assert_eq!(s2, expect);
        assert_eq!(s2, 59.9);
    }

    #[test]
    fn empty_history_timeout_is_an_error() {
        let c = cfg(Strategy::Avg, 10);
        let mut s = CompensateState::<f64>::new();
        assert_eq!(s.on_timeout(&c), Err(EmptyHistory));
    }

    #[test]
    fn confidence_decays_geometrically_and_resets() {
        let c = cfg(Strategy::Last, 4);
        let mut s = CompensateState::new();
        s.on_input(1.0, &c);
        let mut prev = 1.0;
        let mut expect = 1.0;
        for _ in 1..=6 {
            expect *= 0.9;
            let out = s.on_timeout(&c).unwrap();
            assert_eq!(out.confidence, expect);
            assert!(out.confidence < prev);
            prev = out.confidence;
        }
        assert_eq!(s.on_input(2.0, &c).confidence, 1.0);
    }
}
