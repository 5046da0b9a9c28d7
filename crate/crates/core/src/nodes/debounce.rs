//! `debounce`: at most one emission per window.
//!
//! A message arriving while idle passes immediately and opens a window.
//! Messages arriving inside the window are held and, at window close,
//! reduced per strategy into one emission that opens the next window.
//! `drop-extra` discards them instead and lets the window lapse.

use std::any::Any;

use serde::{Deserialize, Serialize};

use super::{Operator, Validate};
use crate::clock::TimerId;
use crate::engine::NodeContext;
use crate::payload::{Envelope, Millis, Payload};

pub const VALUE: usize = 0;
pub const ERROR: usize = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DebounceStrategy {
    Last,
    First,
    Avg,
    DropExtra,
}

fn default_strategy() -> DebounceStrategy {
    DebounceStrategy::Last
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DebounceConfig {
    pub window: Millis,
    #[serde(default = "default_strategy")]
    pub strategy: DebounceStrategy,
}

impl Validate for DebounceConfig {
    fn validate(&self) -> Result<(), String> {
        if self.window == 0 {
            return Err("window must be > 0".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Admit {
    /// Pass now and open a window.
    Pass,
    Held,
    Rejected,
}

/// Window bookkeeping without timers.
#[derive(Debug, Clone, Default)]
pub struct Debouncer {
    open: bool,
    held: Vec<Envelope>,
}

impl Debouncer {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn is_open(&self) -> bool {
        self.open
    }

    pub fn admit(&mut self, env: &Envelope, strategy: DebounceStrategy) -> Admit {
        if !self.open {
            self.open = true;
            return Admit::Pass;
        }
        match strategy {
            DebounceStrategy::DropExtra => Admit::Held,
            DebounceStrategy::Avg if env.payload.as_f64().is_none() => Admit::Rejected,
            _ => {
                self.held.push(env.clone());
                Admit::Held
            }
        }
    }

    /// Closes the window. Returns the reduced envelope, if any; when one is
    /// returned the next window is already open.
    pub fn close(&mut self, strategy: DebounceStrategy) -> Option<Envelope> {
        let held = std::mem::take(&mut self.held);
        let out = match strategy {
            DebounceStrategy::DropExtra => None,
            DebounceStrategy::Last => held.last().cloned(),
            DebounceStrategy::First => held.first().cloned(),
            DebounceStrategy::Avg => {
                let vals: Vec<f64> = held.iter().filter_map(|e| e.payload.as_f64()).collect();
                crate::numeric::mean(&vals).map(|m| {
                    let mut e = held.last().expect("non-empty when mean exists").clone();
                    e.payload = Payload::Number(m);
                    e
                })
            }
        };
        self.open = out.is_some();
        out
    }
}

pub struct DebounceNode {
    cfg: DebounceConfig,
    state: Debouncer,
    timer: Option<TimerId>,
}

impl DebounceNode {
    pub fn new(cfg: DebounceConfig) -> Self {
        DebounceNode {
            cfg,
            state: Debouncer::new(),
            timer: None,
        }
    }
}

impl Operator for DebounceNode {
    fn on_input(&mut self, _ingress: usize, env: &Envelope, ctx: &mut NodeContext<'_>) {
        match self.state.admit(env, self.cfg.strategy) {
            Admit::Pass => {
                ctx.restart_timer(&mut self.timer, self.cfg.window, 0);
                ctx.forward(VALUE, env);
            }
            Admit::Held => {}
            Admit::Rejected => ctx.emit_error(ERROR, &env.topic, "malformed", env.payload.clone()),
        }
    }

    fn on_timer(&mut self, _tag: u32, ctx: &mut NodeContext<'_>) {
        self.timer = None;
        if let Some(env) = self.state.close(self.cfg.strategy) {
            ctx.restart_timer(&mut self.timer, self.cfg.window, 0);
            ctx.emit_envelope(VALUE, env);
        }
    }

    fn as_any(&self) -> &dyn Any {
        self
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn env(v: f64) -> Envelope {
        Envelope::new(0, "src", 0, "t", v.into())
    }

    #[test]
    fn first_passes_then_holds() {
        let mut d = Debouncer::new();
        assert_eq!(d.admit(&env(1.0), DebounceStrategy::Last), Admit::Pass);
        assert_eq!(d.admit(&env(2.0), DebounceStrategy::Last), Admit::Held);
        assert_eq!(d.admit(&env(3.0), DebounceStrategy::Last), Admit::Held);
        assert_eq!(d.close(DebounceStrategy::Last).unwrap().payload, 3.0.into());
        assert!(d.is_open());
        assert!(d.close(DebounceStrategy::Last).is_none());
        assert!(!d.is_open());
    }

    #[test]
    fn first_and_avg_reductions() {
        let mut d = Debouncer::new();
        d.admit(&env(1.0), DebounceStrategy::First);
        d.admit(&env(2.0), DebounceStrategy::First);
        d.admit(&env(4.0), DebounceStrategy::First);
        assert_eq!(d.close(DebounceStrategy::First).unwrap().payload, 2.0.into());

        let mut d = Debouncer::new();
        d.admit(&env(1.0), DebounceStrategy::Avg);
        d.admit(&env(2.0), DebounceStrategy::Avg);
        d.admit(&env(4.0), DebounceStrategy::Avg);
        assert_eq!(d.close(DebounceStrategy::Avg).unwrap().payload, 3.0.into());
    }

    #[test]
    fn avg_rejects_non_numeric() {
        let mut d = Debouncer::new();
        d.admit(&env(1.0), DebounceStrategy::Avg);
        let text = Envelope::new(0, "s", 0, "t", "x".into());
        assert_eq!(d.admit(&text, DebounceStrategy::Avg), Admit::Rejected);
    }

    #[test]
    fn drop_extra_emits_nothing_at_close() {
        let mut d = Debouncer::new();
        d.admit(&env(1.0), DebounceStrategy::DropExtra);
        d.admit(&env(2.0), DebounceStrategy::DropExtra);
        assert!(d.close(DebounceStrategy::DropExtra).is_none());
        assert!(!d.is_open());
    }
}
