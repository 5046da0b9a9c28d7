//! `http-aware` and `network-aware`: periodic probes of the simulated
//! network, reporting what appeared or vanished since the previous probe.
//!
//! Events are records `{"event", "id", "kind", "endpoint"}`. The first probe
//! runs at start and diffs against an empty inventory.

use std::any::Any;
use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{Operator, Validate};
use crate::clock::TimerId;
use crate::engine::NodeContext;
use crate::payload::{Envelope, Millis, Payload};

pub const EVENTS: usize = 0;
pub const TOPIC: &str = "discovery";

fn default_period() -> Millis {
    10_000
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HttpAwareConfig {
    pub ports: Vec<u16>,
    #[serde(default = "default_period")]
    pub period: Millis,
}

impl Validate for HttpAwareConfig {
    fn validate(&self) -> Result<(), String> {
        if self.ports.is_empty() {
            return Err("ports must not be empty".into());
        }
        if self.period == 0 {
            return Err("period must be > 0".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkAwareConfig {
    #[serde(default = "default_period")]
    pub period: Millis,
}

impl Validate for NetworkAwareConfig {
    fn validate(&self) -> Result<(), String> {
        if self.period == 0 {
            return Err("period must be > 0".into());
        }
        Ok(())
    }
}

/// `(id, endpoint)` keyed by id.
pub type Inventory = BTreeMap<String, String>;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Change {
    pub event: &'static str,
    pub id: String,
    pub endpoint: String,
}

/// Vanished entries first, then new ones, each in id order. An entry whose
/// endpoint moved counts as both.
pub fn diff(old: &Inventory, new: &Inventory, added: &'static str, removed: &'static str) -> Vec<Change> {
    let mut out = Vec::new();
    for (id, ep) in old {
        if new.get(id) != Some(ep) {
            out.push(Change {
                event: removed,
                id: id.clone(),
                endpoint: ep.clone(),
            });
        }
    }
    for (id, ep) in new {
        if old.get(id) != Some(ep) {
            out.push(Change {
                event: added,
                id: id.clone(),
                endpoint: ep.clone(),
            });
        }
    }
    out
}

fn emit_changes(ctx: &mut NodeContext<'_>, kind: &str, changes: Vec<Change>) {
    for c in changes {
        let p = Payload::record([
            ("event", Payload::from(c.event)),
            ("id", Payload::from(c.id)),
            ("kind", Payload::from(kind)),
            ("endpoint", Payload::from(c.endpoint)),
        ]);
        ctx.emit(EVENTS, TOPIC, p);
    }
}

pub struct HttpAware {
    cfg: HttpAwareConfig,
    known: Inventory,
    timer: Option<TimerId>,
}

impl HttpAware {
    pub fn new(cfg: HttpAwareConfig) -> Self {
        HttpAware {
            cfg,
            known: Inventory::new(),
            timer: None,
        }
    }

    fn probe(&mut self, ctx: &mut NodeContext<'_>) {
        let now: Inventory = ctx
            .probe_services(&self.cfg.ports)
            .into_iter()
            .map(|s| (s.service, format!("{}:{}", s.host, s.port)))
            .collect();
        let changes = diff(&self.known, &now, "appeared", "disappeared");
        self.known = now;
        emit_changes(ctx, "service", changes);
        ctx.restart_timer(&mut self.timer, self.cfg.period, 0);
    }
}

impl Operator for HttpAware {
    fn start(&mut self, ctx: &mut NodeContext<'_>) {
        self.probe(ctx);
    }

    /// Any input triggers an immediate probe.
    fn on_input(&mut self, _ingress: usize, _env: &Envelope, ctx: &mut NodeContext<'_>) {
        self.probe(ctx);
    }

    fn on_timer(&mut self, _tag: u32, ctx: &mut NodeContext<'_>) {
        self.timer = None;
        self.probe(ctx);
    }

    fn as_any(&self) -> &dyn Any {
        self
    }
}

pub struct NetworkAware {
    cfg: NetworkAwareConfig,
    known: Inventory,
    timer: Option<TimerId>,
}

impl NetworkAware {
    pub fn new(cfg: NetworkAwareConfig) -> Self {
        NetworkAware {
            cfg,
            known: Inventory::new(),
            timer: None,
        }
    }

    fn scan(&mut self, ctx: &mut NodeContext<'_>) {
        let now: Inventory = ctx.probe_hosts().into_iter().map(|h| (h.id, h.address)).collect();
        let changes = diff(&self.known, &now, "joined", "left");
        self.known = now;
        emit_changes(ctx, "host", changes);
        ctx.restart_timer(&mut self.timer, self.cfg.period, 0);
    }
}

impl Operator for NetworkAware {
    fn start(&mut self, ctx: &mut NodeContext<'_>) {
        self.scan(ctx);
    }

    fn on_input(&mut self, _ingress: usize, _env: &Envelope, ctx: &mut NodeContext<'_>) {
        self.scan(ctx);
    }

    fn on_timer(&mut self, _tag: u32, ctx: &mut NodeContext<'_>) {
        self.timer = None;
        self.scan(ctx);
    }

    fn as_any(&self) -> &dyn Any {
        self
    }
}
