//! `replication-voter`: collects up to `expected` values inside a window and
//! emits the one attaining quorum. Ties never pick a winner.

use std::any::Any;
use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{Operator, Validate};
use crate::clock::TimerId;
use crate::engine::NodeContext;
use crate::payload::{Envelope, Millis, Payload};

pub const VALUE: usize = 0;
pub const NO_CONSENSUS: usize = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Quorum {
    Majority,
    Unanimity,
}

fn default_quorum() -> Quorum {
    Quorum::Majority
}

fn default_window() -> Millis {
    1_000
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VoterConfig {
    pub expected: usize,
    #[serde(default = "default_quorum")]
    pub quorum: Quorum,
    #[serde(default = "default_window")]
    pub window: Millis,
}

impl Validate for VoterConfig {
    fn validate(&self) -> Result<(), String> {
        if self.expected < 2 {
            return Err("expected must be ≥ 2".into());
        }
        if self.window == 0 {
            return Err("window must be > 0".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Decision {
    Value(Payload),
    /// Tally keyed by each value's compact JSON.
    NoConsensus(BTreeMap<String, usize>),
}

/// Quorum over the values actually received.
pub fn decide(values: &[Payload], quorum: Quorum) -> Decision {
    let mut tally: BTreeMap<String, usize> = BTreeMap::new();
    let mut repr: BTreeMap<String, &Payload> = BTreeMap::new();
    for v in values {
        let key = v.to_json();
        *tally.entry(key.clone()).or_default() += 1;
        repr.entry(key).or_insert(v);
    }
    let n = values.len();
    let winner = tally.iter().find(|(_, &c)| match quorum {
        Quorum::Majority => 2 * c > n,
        Quorum::Unanimity => c == n,
    });
    match winner {
        Some((key, _)) if n > 0 => Decision::Value(repr[key].clone()),
        _ => Decision::NoConsensus(tally),
    }
}

pub struct VoterNode {
    cfg: VoterConfig,
    values: Vec<Payload>,
    topic: String,
    timer: Option<TimerId>,
}

impl VoterNode {
    pub fn new(cfg: VoterConfig) -> Self {
        VoterNode {
            cfg,
            values: Vec::new(),
            topic: String::new(),
            timer: None,
        }
    }

    fn settle(&mut self, ctx: &mut NodeContext<'_>) {
        if let Some(t) = self.timer.take() {
            ctx.cancel_timer(t);
        }
        let values = std::mem::take(&mut self.values);
        match decide(&values, self.cfg.quorum) {
            Decision::Value(v) => ctx.emit(VALUE, &self.topic, v),
            Decision::NoConsensus(tally) => {
                let tally = tally.into_iter().map(|(k, c)| (k, Payload::Number(c as f64)));
                ctx.emit(NO_CONSENSUS, &self.topic, Payload::record(tally));
            }
        }
    }
}

impl Operator for VoterNode {
    fn on_input(&mut self, _ingress: usize, env: &Envelope, ctx: &mut NodeContext<'_>) {
        if self.values.is_empty() {
            self.topic = env.topic.clone();
            self.timer = Some(ctx.start_timer(self.cfg.window, 0));
        }
        self.values.push(env.payload.clone());
        if self.values.len() >= self.cfg.expected {
            self.settle(ctx);
        }
    }

    fn on_timer(&mut self, _tag: u32, ctx: &mut NodeContext<'_>) {
        self.timer = None;
        self.settle(ctx);
    }

    fn as_any(&self) -> &dyn Any {
        self
    }
}
