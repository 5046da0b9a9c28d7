//! `device-registry`: keeps the persistent device inventory in step with
//! discovery and heartbeat events.
//!
//! Input records: `{"event", "id", "kind"?, "endpoint"?}` where event is one
//! of joined, appeared (upsert as online) or left, disappeared,
//! heartbeat-error (mark lost).

use std::any::Any;

use serde::{Deserialize, Serialize};

use super::{Operator, Validate};
use crate::engine::NodeContext;
use crate::payload::{Envelope, Payload};
use crate::persistence::{RegistryEntry, Store};

pub const CHANGE: usize = 0;
pub const ERROR: usize = 1;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DeviceRegistryConfig {}

impl Validate for DeviceRegistryConfig {}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum RegistryEvent {
    Seen { id: String, kind: String, endpoint: String },
    Lost { id: String },
}

impl RegistryEvent {
    pub fn from_payload(p: &Payload) -> Option<RegistryEvent> {
        let id = p.get("id")?.as_str()?.to_string();
        let field = |k: &str| p.get(k).and_then(Payload::as_str).unwrap_or("").to_string();
        match p.get("event")?.as_str()? {
            "joined" | "appeared" => {
                let kind = match field("kind") {
                    k if k.is_empty() => "device".to_string(),
                    k => k,
                };
                Some(RegistryEvent::Seen {
                    id,
                    kind,
                    endpoint: field("endpoint"),
                })
            }
            "left" | "disappeared" | "heartbeat-error" => Some(RegistryEvent::Lost { id }),
            _ => None,
        }
    }
}

/// Applies one event to `store`, returning the entry as now stored.
pub fn apply_event(store: &mut Store, ev: &RegistryEvent, now: u64) -> Result<RegistryEntry, String> {
    match ev {
        RegistryEvent::Seen { id, kind, endpoint } => store
            .registry_upsert(RegistryEntry::online(id, kind, endpoint, now))
            .map_err(|e| e.to_string()),
        RegistryEvent::Lost { id } => store.registry_mark_lost(id, now).map_err(|e| e.to_string()),
    }
}

pub fn entry_payload(e: &RegistryEntry) -> Payload {
    Payload::record([
        ("id", Payload::from(e.device_id.as_str())),
        ("kind", Payload::from(e.kind.as_str())),
        ("endpoint", Payload::from(e.endpoint.as_str())),
        ("status", Payload::from(e.status.as_str())),
        ("lastSeen", Payload::Number(e.last_seen as f64)),
    ])
}

pub struct DeviceRegistryNode;

impl DeviceRegistryNode {
    pub fn new(_cfg: DeviceRegistryConfig) -> Self {
        DeviceRegistryNode
    }
}

impl Operator for DeviceRegistryNode {
    fn on_input(&mut self, _ingress: usize, env: &Envelope, ctx: &mut NodeContext<'_>) {
        let Some(ev) = RegistryEvent::from_payload(&env.payload) else {
            ctx.emit_error(ERROR, &env.topic, "malformed", env.payload.clone());
            return;
        };
        let now = ctx.now();
        match apply_event(ctx.store(), &ev, now) {
            Ok(entry) => ctx.emit(CHANGE, &env.topic, entry_payload(&entry)),
            Err(msg) => ctx.emit_error(ERROR, &env.topic, "registry", Payload::from(msg)),
        }
    }

    fn as_any(&self) -> &dyn Any {
        self
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::persistence::DeviceStatus;

    fn ev(event: &str, id: &str) -> Payload {
        Payload::record([("event", Payload::from(event)), ("id", Payload::from(id))])
    }

    #[test]
    fn join_then_leave_keeps_last_seen() {
        let mut s = Store::in_memory();
        let j = RegistryEvent::from_payload(&ev("joined", "sensor-node-1")).unwrap();
        let e = apply_event(&mut s, &j, 100).unwrap();
        assert_eq!(e.status, DeviceStatus::Online);
        let l = RegistryEvent::from_payload(&ev("left", "sensor-node-1")).unwrap();
        let e = apply_event(&mut s, &l, 900).unwrap();
        assert_eq!(e.status, DeviceStatus::Lost);
        assert_eq!(e.last_seen, 100);
    }

    #[test]
    fn duplicate_join_refreshes() {
        let mut s = Store::in_memory();
        let j = RegistryEvent::from_payload(&ev("joined", "d")).unwrap();
        apply_event(&mut s, &j, 1).unwrap();
        apply_event(&mut s, &j, 5).unwrap();
        assert_eq!(s.registry_list().len(), 1);
        assert_eq!(s.registry_get("d").unwrap().last_seen, 5);
    }

    #[test]
    fn malformed_and_unknown() {
        assert!(RegistryEvent::from_payload(&ev("exploded", "d")).is_none());
        assert!(RegistryEvent::from_payload(&Payload::from("joined")).is_none());
        let mut s = Store::in_memory();
        let l = RegistryEvent::Lost { id: "ghost".into() };
        assert!(apply_event(&mut s, &l, 0).is_err());
    }
}
