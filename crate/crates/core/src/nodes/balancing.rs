//! `balancing`: routes each message to exactly one of `outputs` egresses.

use std::any::Any;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{Operator, Validate};
use crate::engine::NodeContext;
use crate::payload::Envelope;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum BalanceStrategy {
    RoundRobin,
    WeightedRoundRobin,
    Random,
}

fn default_strategy() -> BalanceStrategy {
    BalanceStrategy::RoundRobin
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BalancingConfig {
    pub outputs: usize,
    #[serde(default = "default_strategy")]
    pub strategy: BalanceStrategy,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weights: Option<Vec<u32>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

impl Validate for BalancingConfig {
    fn validate(&self) -> Result<(), String> {
        if self.outputs < 2 {
            return Err("outputs must be ≥ 2".into());
        }
        match (self.strategy, &self.weights) {
            (BalanceStrategy::WeightedRoundRobin, None) => Err("weightedRoundRobin requires weights".into()),
            (BalanceStrategy::WeightedRoundRobin, Some(w)) if w.len() != self.outputs => {
                Err(format!("expected {} weights, got {}", self.outputs, w.len()))
            }
            (BalanceStrategy::WeightedRoundRobin, Some(w)) if w.contains(&0) => {
                Err("weights must be positive integers".into())
            }
            _ => Ok(()),
        }
    }
}

/// Egress selector.
#[derive(Debug, Clone)]
pub enum Balancer {
    RoundRobin {
        n: usize,
        next: usize,
    },
    /// Each index repeated weight-many times per cycle, in index order.
    Weighted {
        schedule: Vec<usize>,
        pos: usize,
    },
    Random {
        n: usize,
        rng: Box<ChaCha8Rng>,
    },
}

impl Balancer {
    pub fn from_config(cfg: &BalancingConfig) -> Balancer {
        match cfg.strategy {
            BalanceStrategy::RoundRobin => Balancer::RoundRobin {
                n: cfg.outputs,
                next: 0,
            },
            BalanceStrategy::WeightedRoundRobin => {
                let weights = cfg.weights.clone().unwrap_or_else(|| vec![1; cfg.outputs]);
                Balancer::weighted(&weights)
            }
            BalanceStrategy::Random => Balancer::Random {
                n: cfg.outputs,
                rng: Box::new(ChaCha8Rng::seed_from_u64(cfg.seed.unwrap_or(0))),
            },
        }
    }

    pub fn weighted(weights: &[u32]) -> Balancer {
        let schedule = weights
            .iter()
            .enumerate()
            .flat_map(|(i, &w)| std::iter::repeat_n(i, w as usize))
            .collect();
        Balancer::Weighted { schedule, pos: 0 }
    }

    pub fn next_egress(&mut self) -> usize {
        match self {
            Balancer::RoundRobin { n, next } => {
                let out = *next;
                *next = (*next + 1) % *n;
                out
            }
            Balancer::Weighted { schedule, pos } => {
                let out = schedule[*pos];
                *pos = (*pos + 1) % schedule.len();
                out
            }
            Balancer::Random { n, rng } => rng.gen_range(0..*n),
        }
    }
}

pub struct BalancingNode {
    balancer: Balancer,
}

impl BalancingNode {
    pub fn new(cfg: BalancingConfig) -> Self {
        BalancingNode {
            balancer: Balancer::from_config(&cfg),
        }
    }
}

impl Operator for BalancingNode {
    fn on_input(&mut self, _ingress: usize, env: &Envelope, ctx: &mut NodeContext<'_>) {
        let port = self.balancer.next_egress();
        ctx.forward(port, env);
    }

    fn as_any(&self) -> &dyn Any {
        self
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn take(b: &mut Balancer, n: usize) -> Vec<usize> {
        (0..n).map(|_| b.next_egress()).collect()
    }

    #[test]
    fn round_robin_cycles() {
        let mut b = Balancer::RoundRobin { n: 3, next: 0 };
        assert_eq!(take(&mut b, 4), vec![0, 1, 2, 0]);
    }

    #[test]
    fn weighted_expands_cycle() {
        let mut b = Balancer::weighted(&[2, 1]);
        assert_eq!(take(&mut b, 6), vec![0, 0, 1, 0, 0, 1]);
    }

    #[test]
    fn random_is_seed_deterministic() {
        let cfg = BalancingConfig {
            outputs: 4,
            strategy: BalanceStrategy::Random,
            weights: None,
            seed: Some(42),
        };
        let a = take(&mut Balancer::from_config(&cfg), 50);
        let b = take(&mut Balancer::from_config(&cfg), 50);
        assert_eq!(a, b);
        assert!(a.iter().all(|&p| p < 4));
    }

    #[test]
    fn weighted_requires_matching_weights() {
        let mut cfg = BalancingConfig {
            outputs: 2,
            strategy: BalanceStrategy::WeightedRoundRobin,
            weights: Some(vec![1]),
            seed: None,
        };
        assert!(cfg.validate().is_err());
        cfg.weights = Some(vec![1, 0]);
        assert!(cfg.validate().is_err());
        cfg.weights = Some(vec![3, 1]);
        assert!(cfg.validate().is_ok());
    }

    proptest! {
        #[test]
        fn round_robin_counts_differ_by_at_most_one(n in 2usize..8, m in 0usize..200) {
            let mut b = Balancer::RoundRobin { n, next: 0 };
            let mut counts = vec![0usize; n];
            for _ in 0..m {
                counts[b.next_egress()] += 1;
            }
            let max = *counts.iter().max().unwrap();
            let min = *counts.iter().min().unwrap();
            prop_assert!(max - min <= 1);
        }

        #[test]
        fn weighted_counts_track_weights(weights in proptest::collection::vec(1u32..5, 2..5), m in 0usize..200) {
            let mut b = Balancer::weighted(&weights);
            let total: u32 = weights.iter().sum();
            let mut counts = vec![0i64; weights.len()];
            for _ in 0..m {
                counts[b.next_egress()] += 1;
            }
            let cycles = (m as u32 / total) as i64;
            for (i, w) in weights.iter().enumerate() {
                let ideal = cycles * *w as i64;
                prop_assert!(counts[i] >= ideal && counts[i] <= ideal + *w as i64);
            }
        }
    }
}
