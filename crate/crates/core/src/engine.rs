//! Single-clock dataflow engine.
//!
//! A delivery runs to completion before the next pending event: node
//! emissions are routed immediately (logged as `deliver` or `drop`) and the
//! resulting deliveries are processed in FIFO order until the cascade drains.
//! Timers come from the engine's [`VirtualClock`]; nothing reads wall time.

use std::collections::{BTreeMap, VecDeque};

use thiserror::Error;

use crate::clock::{TimerId, VirtualClock};
use crate::flow::{FlowError, FlowGraph};
use crate::nodes::{self, NodeKind, Operator};
use crate::payload::{Envelope, Millis, Payload};
use crate::persistence::Store;
use crate::timeline::{EventKind, LogEntry, TimelineLog, SERVICE_PREFIX};

/// A service reachable from a flow, as seen by a network probe.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub struct ServiceEndpoint {
    pub service: String,
    pub host: String,
    pub port: u16,
}

/// A host visible on the simulated LAN.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub struct HostInfo {
    pub id: String,
    pub address: String,
}

/// The world outside an engine: broker, external services, and the network
/// inventory that discovery nodes probe.
pub trait Host {
    fn publish(&mut self, instance: &str, now: Millis, topic: &str, payload: &Payload);
    fn send_to_service(&mut self, instance: &str, now: Millis, service: &str, env: &Envelope) -> Result<(), String>;
    fn probe_services(&mut self, now: Millis, ports: &[u16]) -> Vec<ServiceEndpoint>;
    fn probe_hosts(&mut self, now: Millis) -> Vec<HostInfo>;
}

/// Host with no world attached: publishes vanish, every service accepts,
/// probes find nothing.
#[derive(Debug, Default, Clone, Copy)]
pub struct DetachedHost;

impl Host for DetachedHost {
    fn publish(&mut self, _: &str, _: Millis, _: &str, _: &Payload) {}

    fn send_to_service(&mut self, _: &str, _: Millis, _: &str, _: &Envelope) -> Result<(), String> {
        Ok(())
    }

    fn probe_services(&mut self, _: Millis, _: &[u16]) -> Vec<ServiceEndpoint> {
        Vec::new()
    }

    fn probe_hosts(&mut self, _: Millis) -> Vec<HostInfo> {
        Vec::new()
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum EngineError {
    #[error("unknown node `{0}`")]
    UnknownNode(String),
    #[error("unknown flow group `{0}`")]
    UnknownFlow(String),
}

/// One routed copy of an envelope.
#[derive(Debug, Clone, PartialEq)]
pub struct Delivery {
    pub node: String,
    pub ingress: usize,
    pub envelope: Envelope,
    pub dropped: bool,
}

#[derive(Debug, Clone)]
struct Slot {
    id: String,
    kind: NodeKind,
    flow: String,
    enabled: bool,
    egress: usize,
    /// Per egress, targets as `(node index, ingress)` in declaration order.
    wires: Vec<Vec<(usize, usize)>>,
}

struct Runtime {
    instance: String,
    clock: VirtualClock,
    store: Store,
    groups: BTreeMap<String, bool>,
    /// Groups re-enabled during the current cascade, awaiting restart.
    resumed: Vec<String>,
    log: TimelineLog,
}

impl Runtime {
    fn group_enabled(&self, flow: &str) -> bool {
        self.groups.get(flow).copied().unwrap_or(true)
    }
}

/// What a node sees while it runs.
pub struct NodeContext<'a> {
    node: usize,
    node_id: &'a str,
    rt: &'a mut Runtime,
    host: &'a mut dyn Host,
    outbox: &'a mut Vec<(usize, Envelope)>,
}

impl<'a> NodeContext<'a> {
    pub fn now(&self) -> Millis {
        self.rt.clock.now()
    }

    pub fn node_id(&self) -> &str {
        self.node_id
    }

    pub fn instance(&self) -> &str {
        &self.rt.instance
    }

    pub fn emit(&mut self, port: usize, topic: &str, payload: Payload) {
        let env = Envelope::new(self.now(), self.node_id, port, topic, payload);
        self.outbox.push((port, env));
    }

    /// Emits a copy of `env` re-stamped with this node, time, and port.
    pub fn forward(&mut self, port: usize, env: &Envelope) {
        let mut out = env.clone();
        out.time = self.now();
        out.source = self.node_id.to_string();
        out.port = port;
        self.outbox.push((port, out));
    }

    pub fn emit_envelope(&mut self, port: usize, mut env: Envelope) {
        env.time = self.now();
        env.source = self.node_id.to_string();
        env.port = port;
        self.outbox.push((port, env));
    }

    /// Emits `{"error": kind, "value": value}` on `port`.
    pub fn emit_error(&mut self, port: usize, topic: &str, kind: &str, value: Payload) {
        let p = Payload::record([("error", Payload::from(kind)), ("value", value)]);
        self.emit(port, topic, p);
    }

    pub fn start_timer(&mut self, delay: Millis, tag: u32) -> TimerId {
        self.rt.clock.schedule(delay, self.node, tag)
    }

    pub fn cancel_timer(&mut self, id: TimerId) -> bool {
        self.rt.clock.cancel(id)
    }

    /// Cancels `timer` if set and starts a fresh one.
    pub fn restart_timer(&mut self, timer: &mut Option<TimerId>, delay: Millis, tag: u32) {
        if let Some(id) = timer.take() {
            self.rt.clock.cancel(id);
        }
        *timer = Some(self.start_timer(delay, tag));
    }

    pub fn store(&mut self) -> &mut Store {
        &mut self.rt.store
    }

    pub fn publish(&mut self, topic: &str, payload: &Payload) {
        let now = self.now();
        self.host.publish(&self.rt.instance, now, topic, payload);
    }

    /// Hands `env` to an external service, logging the delivery or its failure.
    pub fn send_to_service(&mut self, service: &str, env: &Envelope) -> Result<(), String> {
        let now = self.now();
        let res = self.host.send_to_service(&self.rt.instance, now, service, env);
        let kind = if res.is_ok() {
            EventKind::Deliver
        } else {
            EventKind::Drop
        };
        let node = format!("{SERVICE_PREFIX}{service}");
        self.rt.log.push(
            LogEntry::new(now, &self.rt.instance, kind, &node)
                .topic(&env.topic)
                .value(env.payload.clone()),
        );
        res
    }

    pub fn probe_services(&mut self, ports: &[u16]) -> Vec<ServiceEndpoint> {
        let now = self.now();
        self.host.probe_services(now, ports)
    }

    pub fn probe_hosts(&mut self) -> Vec<HostInfo> {
        let now = self.now();
        self.host.probe_hosts(now)
    }

    /// Sets a flow group's enabled flag. Returns whether the flag changed.
    pub fn set_flow_enabled(&mut self, flow: &str, enabled: bool) -> Result<bool, EngineError> {
        match self.rt.groups.get_mut(flow) {
            Some(flag) => {
                let changed = *flag != enabled;
                *flag = enabled;
                if changed && enabled {
                    self.rt.resumed.push(flow.to_string());
                }
                Ok(changed)
            }
            None => Err(EngineError::UnknownFlow(flow.to_string())),
        }
    }

    pub fn flow_enabled(&self, flow: &str) -> Option<bool> {
        self.rt.groups.get(flow).copied()
    }

    /// Records something the node chose not to act on.
    pub fn note_drop(&mut self, topic: &str, value: Payload) {
        let now = self.now();
        self.rt.log.push(
            LogEntry::new(now, &self.rt.instance, EventKind::Drop, self.node_id)
                .topic(topic)
                .value(value),
        );
    }
}

pub struct Engine {
    slots: Vec<Slot>,
    ops: Vec<Box<dyn Operator>>,
    index: BTreeMap<String, usize>,
    rt: Runtime,
    started: bool,
}

impl Engine {
    /// Builds an engine over a validated graph, starting its clock at `now`.
    pub fn new(graph: &FlowGraph, instance: &str, store: Store, now: Millis) -> Result<Engine, FlowError> {
        let errors: Vec<_> = crate::flow::validate_graph(graph)
            .into_iter()
            .filter(|d| d.severity == crate::flow::Severity::Error)
            .collect();
        if !errors.is_empty() {
            return Err(FlowError::Invalid(errors));
        }
        let index: BTreeMap<String, usize> = graph.nodes.iter().enumerate().map(|(i, n)| (n.id.clone(), i)).collect();
        let mut slots = Vec::with_capacity(graph.nodes.len());
        let mut ops = Vec::with_capacity(graph.nodes.len());
        for n in &graph.nodes {
            let (_, egress) = nodes::port_counts(n.kind, &n.config);
            let mut wires = vec![Vec::new(); egress];
            for (port, targets) in wires.iter_mut().enumerate() {
                for w in graph.wires_from(&n.id, port) {
                    targets.push((index[&w.to.0], w.to.1));
                }
            }
            let op = nodes::build(n.kind, &n.config).map_err(|e| {
                FlowError::Invalid(vec![crate::flow::Diagnostic {
                    severity: crate::flow::Severity::Error,
                    locus: crate::flow::Locus::Node(n.id.clone()),
                    code: "config",
                    message: e.to_string(),
                }])
            })?;
            slots.push(Slot {
                id: n.id.clone(),
                kind: n.kind,
                flow: n.flow.clone(),
                enabled: n.enabled,
                egress,
                wires,
            });
            ops.push(op);
        }
        let groups = graph.flow_groups().into_iter().map(|g| (g.to_string(), true)).collect();
        Ok(Engine {
            slots,
            ops,
            index,
            rt: Runtime {
                instance: instance.to_string(),
                clock: VirtualClock::starting_at(now),
                store,
                groups,
                resumed: Vec::new(),
                log: TimelineLog::new(),
            },
            started: false,
        })
    }

    pub fn instance(&self) -> &str {
        &self.rt.instance
    }

    pub fn now(&self) -> Millis {
        self.rt.clock.now()
    }

    pub fn advance_to(&mut self, t: Millis) {
        self.rt.clock.advance_to(t);
    }

    pub fn log(&self) -> &TimelineLog {
        &self.rt.log
    }

    pub fn drain_log(&mut self) -> Vec<LogEntry> {
        self.rt.log.take()
    }

    pub fn store(&self) -> &Store {
        &self.rt.store
    }

    pub fn store_mut(&mut self) -> &mut Store {
        &mut self.rt.store
    }

    pub fn into_store(self) -> Store {
        self.rt.store
    }

    pub fn flow_enabled(&self, flow: &str) -> Option<bool> {
        self.rt.groups.get(flow).copied()
    }

    pub fn flow_groups(&self) -> impl Iterator<Item = (&str, bool)> {
        self.rt.groups.iter().map(|(k, v)| (k.as_str(), *v))
    }

    pub fn node_ids(&self) -> impl Iterator<Item = &str> {
        self.slots.iter().map(|s| s.id.as_str())
    }

    pub fn nodes_of_kind(&self, kind: NodeKind) -> impl Iterator<Item = &str> {
        self.slots.iter().filter(move |s| s.kind == kind).map(|s| s.id.as_str())
    }

    /// `(node id, topic filter)` for every `mqtt-in` node.
    pub fn subscriptions(&self) -> Vec<(String, String)> {
        self.slots
            .iter()
            .enumerate()
            .filter(|(_, s)| s.kind == NodeKind::MqttIn)
            .filter_map(|(i, s)| nodes::io::subscription_topic(self.ops[i].as_ref()).map(|t| (s.id.clone(), t)))
            .collect()
    }

    pub fn next_timer(&self) -> Option<Millis> {
        self.rt.clock.next_fire_time()
    }

    fn node_active(&self, node: usize) -> bool {
        let s = &self.slots[node];
        s.enabled && self.rt.group_enabled(&s.flow)
    }

    /// Runs every node's start hook in declaration order. Idempotent.
    pub fn start(&mut self, host: &mut dyn Host) {
        if self.started {
            return;
        }
        self.started = true;
        for node in 0..self.slots.len() {
            self.start_node(node, host);
        }
    }

    fn start_node(&mut self, node: usize, host: &mut dyn Host) {
        let mut outbox = Vec::new();
        {
            let mut ctx = NodeContext {
                node,
                node_id: &self.slots[node].id,
                rt: &mut self.rt,
                host,
                outbox: &mut outbox,
            };
            self.ops[node].start(&mut ctx);
        }
        self.cascade(node, outbox, host);
    }

    /// Timers of a disabled node are consumed as drops, so a re-enabled
    /// group is started again, as a redeploy would.
    fn resume_groups(&mut self, host: &mut dyn Host) {
        while let Some(flow) = self.rt.resumed.pop() {
            if !self.rt.group_enabled(&flow) {
                continue;
            }
            for node in 0..self.slots.len() {
                if self.slots[node].flow == flow && self.node_active(node) {
                    self.start_node(node, host);
                }
            }
        }
    }

    /// Routes an envelope from `(e.source, e.port)` without running anything.
    /// Unknown sources route nowhere.
    pub fn dispatch(&self, e: &Envelope) -> Vec<Delivery> {
        let Some(&src) = self.index.get(&e.source) else {
            return Vec::new();
        };
        let Some(targets) = self.slots[src].wires.get(e.port) else {
            return Vec::new();
        };
        targets
            .iter()
            .map(|&(node, ingress)| Delivery {
                node: self.slots[node].id.clone(),
                ingress,
                envelope: e.clone(),
                dropped: !self.node_active(node),
            })
            .collect()
    }

    /// Delivers an envelope from outside the graph (broker, cluster) to a
    /// node's ingress and runs the resulting cascade.
    pub fn deliver_external(
        &mut self,
        node_id: &str,
        ingress: usize,
        env: Envelope,
        host: &mut dyn Host,
    ) -> Result<(), EngineError> {
        let node = *self
            .index
            .get(node_id)
            .ok_or_else(|| EngineError::UnknownNode(node_id.to_string()))?;
        let now = self.now();
        let mut queue = VecDeque::new();
        self.route_one(now, node, ingress, env, &mut queue);
        self.drain(queue, host);
        Ok(())
    }

    /// Fires the earliest timer due at or before `limit`. Returns false when
    /// none is due.
    pub fn fire_next(&mut self, limit: Millis, host: &mut dyn Host) -> bool {
        let Some(exp) = self.rt.clock.pop_due(limit) else {
            return false;
        };
        let node = exp.owner;
        let now = self.now();
        let label = nodes::timer_label(self.slots[node].kind, exp.tag);
        if !self.node_active(node) {
            self.rt
                .log
                .push(LogEntry::new(now, &self.rt.instance, EventKind::Drop, &self.slots[node].id).topic(label));
            return true;
        }
        self.rt
            .log
            .push(LogEntry::new(now, &self.rt.instance, EventKind::Timer, &self.slots[node].id).topic(label));
        let mut outbox = Vec::new();
        {
            let mut ctx = NodeContext {
                node,
                node_id: &self.slots[node].id,
                rt: &mut self.rt,
                host,
                outbox: &mut outbox,
            };
            self.ops[node].on_timer(exp.tag, &mut ctx);
        }
        self.cascade(node, outbox, host);
        true
    }

    /// Processes every timer due at or before `t_end`, then sets the clock to
    /// `t_end`.
    pub fn run_until(&mut self, t_end: Millis, host: &mut dyn Host) {
        self.start(host);
        while self.fire_next(t_end, host) {}
        self.rt.clock.advance_to(t_end);
    }

    fn cascade(&mut self, node: usize, outbox: Vec<(usize, Envelope)>, host: &mut dyn Host) {
        let mut queue = VecDeque::new();
        self.route_outbox(node, outbox, &mut queue);
        self.drain(queue, host);
    }

    fn drain(&mut self, mut queue: VecDeque<(usize, usize, Envelope)>, host: &mut dyn Host) {
        while let Some((node, ingress, env)) = queue.pop_front() {
            let mut outbox = Vec::new();
            {
                let mut ctx = NodeContext {
                    node,
                    node_id: &self.slots[node].id,
                    rt: &mut self.rt,
                    host,
                    outbox: &mut outbox,
                };
                self.ops[node].on_input(ingress, &env, &mut ctx);
            }
            self.route_outbox(node, outbox, &mut queue);
        }
        self.resume_groups(host);
    }

    fn route_outbox(
        &mut self,
        node: usize,
        outbox: Vec<(usize, Envelope)>,
        queue: &mut VecDeque<(usize, usize, Envelope)>,
    ) {
        let now = self.now();
        for (port, env) in outbox {
            debug_assert!(port < self.slots[node].egress, "emit on undeclared egress");
            self.rt.log.push(
                LogEntry::new(now, &self.rt.instance, EventKind::Emit, &self.slots[node].id)
                    .port(port)
                    .topic(&env.topic)
                    .value(env.payload.clone()),
            );
            let targets = self.slots[node].wires.get(port).cloned().unwrap_or_default();
            for (target, ingress) in targets {
                self.route_one(now, target, ingress, env.clone(), queue);
            }
        }
    }

    fn route_one(
        &mut self,
        now: Millis,
        target: usize,
        ingress: usize,
        env: Envelope,
        queue: &mut VecDeque<(usize, usize, Envelope)>,
    ) {
        let kind = if self.node_active(target) {
            EventKind::Deliver
        } else {
            EventKind::Drop
        };
        self.rt.log.push(
            LogEntry::new(now, &self.rt.instance, kind, &self.slots[target].id)
                .port(ingress)
                .topic(&env.topic)
                .value(env.payload.clone()),
        );
        if kind == EventKind::Deliver {
            queue.push_back((target, ingress, env));
        }
    }
}

/// Runs a single detached engine over `graph` until `t_end`.
pub fn run_until(graph: &FlowGraph, t_end: Millis) -> Result<TimelineLog, FlowError> {
    let mut engine = Engine::new(graph, "main", Store::in_memory(), 0)?;
    engine.run_until(t_end, &mut DetachedHost);
    let mut log = TimelineLog::new();
    log.extend(engine.drain_log());
    Ok(log)
}
