#![allow(dead_code)]

use selfheal_core::timeline::{EventKind, LogEntry, TimelineLog, WORLD};
use selfheal_core::{parse_flow, DetachedHost, Engine, Envelope, FlowGraph, Millis, Payload, Store};

pub fn graph(text: &str) -> FlowGraph {
    parse_flow(text).expect("test flow parses")
}

/// Emits of `node.port` on `instance`.
pub fn emits<'a>(
    log: &'a TimelineLog,
    instance: &'a str,
    node: &'a str,
    port: usize,
) -> impl Iterator<Item = &'a LogEntry> {
    log.iter()
        .filter(move |e| e.kind == EventKind::Emit && e.instance == instance && e.node == node && e.port == Some(port))
}

pub fn world_emits<'a>(log: &'a TimelineLog, device: &'a str) -> impl Iterator<Item = &'a LogEntry> {
    log.iter()
        .filter(move |e| e.kind == EventKind::Emit && e.instance == WORLD && e.node == device)
}

pub fn num(e: &LogEntry) -> f64 {
    e.value.as_ref().and_then(Payload::as_f64).expect("numeric value")
}

pub fn field(e: &LogEntry, key: &str) -> Payload {
    e.value
        .as_ref()
        .and_then(|v| v.get(key))
        .cloned()
        .unwrap_or_else(|| panic!("no `{key}` in {e:?}"))
}

/// A detached engine driven by hand: messages are injected at chosen times.
pub struct Driver {
    pub engine: Engine,
}

impl Driver {
    pub fn new(text: &str) -> Driver {
        Driver::with_store(text, Store::in_memory(), 0)
    }

    pub fn with_store(text: &str, store: Store, now: Millis) -> Driver {
        let mut engine = Engine::new(&graph(text), "main", store, now).expect("engine builds");
        engine.start(&mut DetachedHost);
        Driver { engine }
    }

    pub fn advance(&mut self, t: Millis) {
        self.engine.run_until(t, &mut DetachedHost);
    }

    /// Runs timers up to `t`, then delivers `payload` to `node` port 0.
    pub fn send(&mut self, t: Millis, node: &str, payload: impl Into<Payload>) {
        self.advance(t);
        let env = Envelope::new(t, "test", 0, "t", payload.into());
        self.engine
            .deliver_external(node, 0, env, &mut DetachedHost)
            .expect("known node");
    }

    pub fn log(&self) -> &TimelineLog {
        self.engine.log()
    }
}
