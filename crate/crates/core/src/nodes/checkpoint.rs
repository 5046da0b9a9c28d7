//! `checkpoint`: persists the last input and replays it once after a restart
//! if it is still within its time-to-live.

use std::any::Any;

use serde::{Deserialize, Serialize};

use super::{Operator, Validate};
use crate::engine::NodeContext;
use crate::payload::{Envelope, Millis, Payload};
use crate::persistence::{PersistError, Store, StoredMessage};

pub const MESSAGE: usize = 0;
pub const ERROR: usize = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "camelCase")]
pub struct CheckpointConfig {
    pub time_to_live: Millis,
}

impl Validate for CheckpointConfig {
    fn validate(&self) -> Result<(), String> {
        if self.time_to_live == 0 {
            return Err("timeToLive must be > 0".into());
        }
        Ok(())
    }
}

/// Records `(now, message)` in the node's slot.
pub fn checkpoint_input(
    store: &mut Store,
    node_id: &str,
    now: Millis,
    message: StoredMessage,
) -> Result<(), PersistError> {
    store.store_checkpoint(node_id, message, now)
}

/// Startup replay: returns the stored message when `now - timestamp <= ttl`
/// and clears the slot so a later restart replays nothing.
pub fn checkpoint_init(store: &mut Store, node_id: &str, now: Millis, ttl: Millis) -> Option<StoredMessage> {
    let record = store.load_checkpoint(node_id)?;
    let alive = now.saturating_sub(record.timestamp);
    if alive <= ttl {
        // A failed clear still replays; the next restart may replay again.
        let _ = store.clear_checkpoint(node_id);
        Some(record.last_message)
    } else {
        None
    }
}

pub struct CheckpointNode {
    cfg: CheckpointConfig,
}

impl CheckpointNode {
    pub fn new(cfg: CheckpointConfig) -> Self {
        CheckpointNode { cfg }
    }
}

impl Operator for CheckpointNode {
    fn start(&mut self, ctx: &mut NodeContext<'_>) {
        let now = ctx.now();
        let id = ctx.node_id().to_string();
        if let Some(msg) = checkpoint_init(ctx.store(), &id, now, self.cfg.time_to_live) {
            ctx.emit(MESSAGE, &msg.topic, msg.payload);
        }
    }

    fn on_input(&mut self, _ingress: usize, env: &Envelope, ctx: &mut NodeContext<'_>) {
        let now = ctx.now();
        let id = ctx.node_id().to_string();
        let msg = StoredMessage {
            payload: env.payload.clone(),
            topic: env.topic.clone(),
        };
        let res = checkpoint_input(ctx.store(), &id, now, msg);
        ctx.forward(MESSAGE, env);
        if let Err(e) = res {
            ctx.emit_error(ERROR, &env.topic, "persistence", Payload::from(e.to_string()));
        }
    }

    fn as_any(&self) -> &dyn Any {
        self
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn m(v: f64) -> StoredMessage {
        StoredMessage {
            payload: v.into(),
            topic: "t".into(),
        }
    }

    #[test]
    fn store_then_replay_within_ttl() {
        let mut s = Store::in_memory();
        checkpoint_input(&mut s, "c", 100_000, m(1.0)).unwrap();
        assert_eq!(checkpoint_init(&mut s, "c", 250_000, 300_000), Some(m(1.0)));
        assert_eq!(checkpoint_init(&mut s, "c", 260_000, 300_000), None);
    }

    #[test]
    fn expired_message_is_not_replayed() {
        let mut s = Store::in_memory();
        checkpoint_input(&mut s, "c", 100_000, m(1.0)).unwrap();
        assert_eq!(checkpoint_init(&mut s, "c", 500_000, 300_000), None);
    }

    #[test]
    fn ttl_edge_is_inclusive() {
        let mut s = Store::in_memory();
        checkpoint_input(&mut s, "c", 1_000, m(1.0)).unwrap();
        assert_eq!(checkpoint_init(&mut s, "c", 1_000 + 5_000 + 1, 5_000), None);
        assert_eq!(checkpoint_init(&mut s, "c", 1_000 + 5_000, 5_000), Some(m(1.0)));
    }

    #[test]
    fn empty_store_replays_nothing() {
        let mut s = Store::in_memory();
        assert_eq!(checkpoint_init(&mut s, "c", 0, 10), None);
    }

    #[test]
    fn only_latest_input_is_kept() {
        let mut s = Store::in_memory();
        checkpoint_input(&mut s, "c", 1, m(1.0)).unwrap();
        checkpoint_input(&mut s, "c", 2, m(2.0)).unwrap();
        assert_eq!(checkpoint_init(&mut s, "c", 3, 10), Some(m(2.0)));
    }
}
