//! Co-simulation of instances, devices, broker, cluster, and faults on one
//! virtual clock.
//!
//! At each timestamp the harness works through world events in a fixed
//! order before any engine timer at that time: faults, device emissions,
//! broker deliveries, cluster datagrams, cluster steps. Engines are visited
//! in instance order.

use std::collections::BTreeMap;
use std::net::Ipv4Addr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde_json::Value;
use thiserror::Error;

use super::broker::Broker;
use super::scenario::{FaultEvent, FaultKind, ScenarioScript};
use super::world::{DeviceDef, DeviceKind, HostDef, InstanceDef, ServiceDef, WorldDef};
use crate::cluster::{InstanceId, LoopbackTransport, Member, Transition};
use crate::engine::{Engine, Host, HostInfo, ServiceEndpoint};
use crate::flow::{FlowError, FlowGraph};
use crate::nodes::redundancy::RedundancyConfig;
use crate::nodes::NodeKind;
use crate::payload::{Envelope, Millis, Payload};
use crate::persistence::Store;
use crate::timeline::{EventKind, LogEntry, TimelineLog, WORLD};

#[derive(Debug, Error)]
pub enum SimError {
    #[error("instance `{instance}`: {source}")]
    Flow { instance: String, source: FlowError },
    #[error("invalid scenario: {}", .0.join("; "))]
    Scenario(Vec<String>),
    #[error("{flows} flow document(s) for {instances} instance(s)")]
    InstanceCount { flows: usize, instances: usize },
}

struct DeviceRt {
    def: DeviceDef,
    online: bool,
    next: Option<Millis>,
    swipe: usize,
    rng: ChaCha8Rng,
    stuck: Option<Payload>,
    extra_noise: f64,
    delay: Millis,
    cards: u64,
}

impl DeviceRt {
    fn new(def: DeviceDef, index: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(index as u64 + 1);
        let next = match def.kind {
            DeviceKind::PeriodicSensor => Some(def.period_ms),
            DeviceKind::NfcReader => def.swipes_ms.first().copied(),
        };
        DeviceRt {
            online: def.online,
            def,
            next,
            swipe: 0,
            rng,
            stuck: None,
            extra_noise: 0.0,
            delay: 0,
            cards: 0,
        }
    }

    fn advance(&mut self, now: Millis) {
        self.next = match self.def.kind {
            DeviceKind::PeriodicSensor => Some(now + self.def.period_ms),
            DeviceKind::NfcReader => {
                self.swipe += 1;
                self.def.swipes_ms.get(self.swipe).copied()
            }
        };
    }

    fn reading(&mut self) -> Payload {
        if let Some(v) = &self.stuck {
            return v.clone();
        }
        match self.def.kind {
            DeviceKind::PeriodicSensor => self.def.value_model.sample(&mut self.rng, self.extra_noise),
            DeviceKind::NfcReader => {
                self.cards += 1;
                Payload::from(format!("card-{}", self.cards))
            }
        }
    }
}

struct Outgoing {
    instance: String,
    topic: String,
    payload: Payload,
}

/// The world as engines see it through [`Host`].
struct WorldEnv {
    devices: Vec<DeviceRt>,
    services: Vec<(ServiceDef, bool)>,
    hosts: Vec<HostDef>,
    outbox: Vec<Outgoing>,
}

impl Host for WorldEnv {
    fn publish(&mut self, instance: &str, _now: Millis, topic: &str, payload: &Payload) {
        self.outbox.push(Outgoing {
            instance: instance.to_string(),
            topic: topic.to_string(),
            payload: payload.clone(),
        });
    }

    /// Services the world does not declare behave as always-up sinks.
    fn send_to_service(&mut self, _instance: &str, _now: Millis, service: &str, _env: &Envelope) -> Result<(), String> {
        match self.services.iter().find(|(s, _)| s.id == service) {
            Some((_, false)) => Err(format!("service `{service}` is down")),
            _ => Ok(()),
        }
    }

    fn probe_services(&mut self, _now: Millis, ports: &[u16]) -> Vec<ServiceEndpoint> {
        self.services
            .iter()
            .filter(|(s, up)| *up && ports.contains(&s.port))
            .map(|(s, _)| ServiceEndpoint {
                service: s.id.clone(),
                host: s.host.clone(),
                port: s.port,
            })
            .collect()
    }

    fn probe_hosts(&mut self, _now: Millis) -> Vec<HostInfo> {
        let hosts = self.hosts.iter().map(|h| HostInfo {
            id: h.id.clone(),
            address: h.address.clone(),
        });
        let devices = self.devices.iter().filter(|d| d.online).map(|d| HostInfo {
            id: d.def.id.clone(),
            address: d.def.address.clone().unwrap_or_else(|| d.def.id.clone()),
        });
        hosts.chain(devices).collect()
    }
}

struct InstanceRt {
    def: InstanceDef,
    address: Ipv4Addr,
    graph: FlowGraph,
    engine: Option<Engine>,
    /// Held while the instance is down.
    store: Option<Store>,
    member: Option<Member>,
    cluster: Option<RedundancyConfig>,
    redundancy_nodes: Vec<String>,
    delay: Millis,
}

struct Pending {
    instance: usize,
    node: String,
    env: Envelope,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
enum Source {
    Fault,
    Device,
    Broker,
    Datagram,
    Member,
    Timer,
}

pub struct Simulation {
    script: ScenarioScript,
    instances: Vec<InstanceRt>,
    env: WorldEnv,
    broker: Broker,
    transport: LoopbackTransport,
    pending: BTreeMap<(Millis, u64), Pending>,
    seq: u64,
    next_fault: usize,
    log: TimelineLog,
    now: Millis,
    started: bool,
}

fn redundancy_config(graph: &FlowGraph) -> Option<RedundancyConfig> {
    let node = graph.nodes_of_kind(NodeKind::Redundancy).next()?;
    serde_json::from_value(Value::Object(node.config.clone())).ok()
}

impl Simulation {
    /// One flow graph per instance, in world order.
    pub fn new(graphs: Vec<FlowGraph>, script: ScenarioScript) -> Result<Simulation, SimError> {
        let errs = script.validate();
        if !errs.is_empty() {
            return Err(SimError::Scenario(errs));
        }
        let world: WorldDef = script.world.clone();
        let defs = if world.instances.is_empty() {
            WorldDef::default_instances(graphs.len())
        } else {
            world.instances.clone()
        };
        if defs.len() != graphs.len() {
            return Err(SimError::InstanceCount {
                flows: graphs.len(),
                instances: defs.len(),
            });
        }
        let mut broker = Broker::new();
        let mut instances = Vec::with_capacity(defs.len());
        for (i, (def, graph)) in defs.into_iter().zip(graphs).enumerate() {
            let engine = Engine::new(&graph, &def.name, Store::in_memory(), 0).map_err(|source| SimError::Flow {
                instance: def.name.clone(),
                source,
            })?;
            for (node, filter) in engine.subscriptions() {
                broker.subscribe(i, &node, &filter);
            }
            let address = def.address.parse().map_err(|_| {
                SimError::Scenario(vec![format!("instance `{}`: bad address `{}`", def.name, def.address)])
            })?;
            let redundancy_nodes = graph
                .nodes_of_kind(NodeKind::Redundancy)
                .map(|n| n.id.clone())
                .collect();
            instances.push(InstanceRt {
                address,
                cluster: redundancy_config(&graph),
                redundancy_nodes,
                graph,
                engine: Some(engine),
                store: None,
                member: None,
                delay: 0,
                def,
            });
        }
        let devices = world
            .devices
            .iter()
            .cloned()
            .enumerate()
            .map(|(i, d)| DeviceRt::new(d, i, script.seed))
            .collect();
        let env = WorldEnv {
            devices,
            services: world.services.iter().map(|s| (s.clone(), s.up)).collect(),
            hosts: world.hosts.clone(),
            outbox: Vec::new(),
        };
        Ok(Simulation {
            script,
            instances,
            env,
            broker,
            transport: LoopbackTransport::new(),
            pending: BTreeMap::new(),
            seq: 0,
            next_fault: 0,
            log: TimelineLog::new(),
            now: 0,
            started: false,
        })
    }

    pub fn now(&self) -> Millis {
        self.now
    }

    pub fn log(&self) -> &TimelineLog {
        &self.log
    }

    pub fn into_log(self) -> TimelineLog {
        self.log
    }

    pub fn instance_names(&self) -> impl Iterator<Item = &str> {
        self.instances.iter().map(|i| i.def.name.as_str())
    }

    fn instance_index(&self, name: &str) -> Option<usize> {
        self.instances.iter().position(|i| i.def.name == name)
    }

    /// Live engine of an instance; `None` while crashed.
    pub fn engine(&self, name: &str) -> Option<&Engine> {
        self.instance_index(name)
            .and_then(|i| self.instances[i].engine.as_ref())
    }

    /// The instance's persistent store, whether it is up or down.
    pub fn store(&self, name: &str) -> Option<&Store> {
        let inst = &self.instances[self.instance_index(name)?];
        inst.engine.as_ref().map(Engine::store).or(inst.store.as_ref())
    }

    fn start(&mut self) {
        if self.started {
            return;
        }
        self.started = true;
        for i in 0..self.instances.len() {
            self.boot(i, 0);
        }
    }

    fn boot(&mut self, i: usize, now: Millis) {
        let inst = &mut self.instances[i];
        if let Some(engine) = inst.engine.as_mut() {
            engine.advance_to(now);
            engine.start(&mut self.env);
        }
        if let Some(cfg) = &inst.cluster {
            let me = InstanceId::new(&inst.def.name, inst.address);
            inst.member = Some(Member::start(
                me,
                cfg.election_timeout,
                cfg.controlled_flows.clone(),
                now,
            ));
            self.transport.attach(inst.address);
        }
        self.collect(i);
    }

    /// Moves an instance's log entries and publications into the world.
    fn collect(&mut self, i: usize) {
        if let Some(engine) = self.instances[i].engine.as_mut() {
            self.log.extend(engine.drain_log());
        }
        let now = self.now;
        for out in std::mem::take(&mut self.env.outbox) {
            self.route(now, &out.instance, 0, &out.topic, &out.payload);
        }
    }

    fn route(&mut self, now: Millis, source: &str, source_delay: Millis, topic: &str, payload: &Payload) {
        let subs: Vec<(usize, String)> = self
            .broker
            .broker_publish(topic)
            .into_iter()
            .map(|s| (s.instance, s.node.clone()))
            .collect();
        for (instance, node) in subs {
            let at = now + source_delay + self.instances[instance].delay;
            self.seq += 1;
            self.pending.insert(
                (at, self.seq),
                Pending {
                    instance,
                    node,
                    env: Envelope::new(at, source, 0, topic, payload.clone()),
                },
            );
        }
    }

    fn next_event(&self) -> Option<(Millis, Source)> {
        let mut best: Option<(Millis, Source)> = None;
        let mut offer = |t: Option<Millis>, s: Source| {
            if let Some(t) = t {
                if best.is_none_or(|b| (t, s) < b) {
                    best = Some((t, s));
                }
            }
        };
        offer(self.script.events.get(self.next_fault).map(|e| e.at), Source::Fault);
        offer(self.env.devices.iter().filter_map(|d| d.next).min(), Source::Device);
        offer(self.pending.keys().next().map(|k| k.0), Source::Broker);
        offer(self.transport.next_arrival(), Source::Datagram);
        offer(
            self.instances
                .iter()
                .filter_map(|i| i.member.as_ref().map(Member::next_due))
                .min(),
            Source::Member,
        );
        offer(
            self.instances
                .iter()
                .filter_map(|i| i.engine.as_ref().and_then(Engine::next_timer))
                .min(),
            Source::Timer,
        );
        best
    }

    /// Processes every event up to and including `t_end`.
    pub fn run_until(&mut self, t_end: Millis) {
        self.start();
        while let Some((t, source)) = self.next_event() {
            if t > t_end {
                break;
            }
            self.now = t;
            match source {
                Source::Fault => {
                    let f = self.script.events[self.next_fault].clone();
                    self.next_fault += 1;
                    self.apply_fault(&f);
                }
                Source::Device => self.device_tick(t),
                Source::Broker => self.deliver_pending(),
                Source::Datagram => self.deliver_datagram(t),
                Source::Member => self.step_member(t),
                Source::Timer => self.fire_timer(t),
            }
        }
        self.now = self.now.max(t_end);
    }

    /// Runs to the script's duration and returns the merged log.
    pub fn run(mut self) -> TimelineLog {
        let end = self.script.duration;
        self.run_until(end);
        self.log
    }

    fn device_tick(&mut self, t: Millis) {
        let Some(d) = self.env.devices.iter().position(|d| d.next == Some(t)) else {
            return;
        };
        let dev = &mut self.env.devices[d];
        dev.advance(t);
        let topic = dev.def.topic.clone();
        let id = dev.def.id.clone();
        if !dev.online {
            self.log
                .push(LogEntry::new(t, WORLD, EventKind::Drop, &id).topic(&topic));
            return;
        }
        let value = dev.reading();
        let delay = dev.delay;
        self.log.push(
            LogEntry::new(t, WORLD, EventKind::Emit, &id)
                .topic(&topic)
                .value(value.clone()),
        );
        self.route(t, &id, delay, &topic, &value);
    }

    fn deliver_pending(&mut self) {
        let Some((_, p)) = self.pending.pop_first() else {
            return;
        };
        let t = p.env.time;
        let inst = &mut self.instances[p.instance];
        match inst.engine.as_mut() {
            Some(engine) => {
                engine.advance_to(t);
                let _ = engine.deliver_external(&p.node, 0, p.env, &mut self.env);
            }
            None => self.log.push(
                LogEntry::new(t, &inst.def.name, EventKind::Drop, &p.node)
                    .port(0)
                    .topic(&p.env.topic)
                    .value(p.env.payload),
            ),
        }
        self.collect(p.instance);
    }

    fn deliver_datagram(&mut self, t: Millis) {
        let Some(d) = self.transport.pop_due(t) else {
            return;
        };
        let Some(i) = self.instances.iter().position(|x| x.address == d.to) else {
            return;
        };
        let Some(member) = self.instances[i].member.as_mut() else {
            return;
        };
        match member.receive(t, &d.bytes) {
            Ok(Some(tr)) => self.on_transition(i, t, tr),
            Ok(None) => {}
            Err(e) => {
                let name = self.instances[i].def.name.clone();
                self.log.push(
                    LogEntry::new(t, &name, EventKind::Drop, "cluster")
                        .topic("datagram")
                        .value(Payload::from(e.to_string())),
                );
            }
        }
    }

    fn step_member(&mut self, t: Millis) {
        let Some(i) = self
            .instances
            .iter()
            .position(|x| x.member.as_ref().is_some_and(|m| m.next_due() == t))
        else {
            return;
        };
        let member = self.instances[i].member.as_mut().expect("member present");
        if let Some(tr) = member.step(t, &mut self.transport) {
            self.on_transition(i, t, tr);
        }
    }

    fn on_transition(&mut self, i: usize, t: Millis, tr: Transition) {
        let payload = tr.to_payload();
        let inst = &mut self.instances[i];
        self.log.push(
            LogEntry::new(t, &inst.def.name, EventKind::RoleChange, "cluster")
                .topic(tr.role.as_str())
                .value(payload.clone()),
        );
        if let Some(engine) = inst.engine.as_mut() {
            engine.advance_to(t);
            for node in &inst.redundancy_nodes {
                let env = Envelope::new(t, "cluster", 0, "role", payload.clone());
                let _ = engine.deliver_external(node, 0, env, &mut self.env);
            }
        }
        self.collect(i);
    }

    fn fire_timer(&mut self, t: Millis) {
        let Some(i) = self
            .instances
            .iter()
            .position(|x| x.engine.as_ref().and_then(Engine::next_timer) == Some(t))
        else {
            return;
        };
        if let Some(engine) = self.instances[i].engine.as_mut() {
            engine.advance_to(t);
            engine.fire_next(t, &mut self.env);
        }
        self.collect(i);
    }

    fn apply_fault(&mut self, f: &FaultEvent) {
        let t = f.at;
        let mut entry = LogEntry::new(t, WORLD, EventKind::Fault, &f.target).topic(f.kind.as_str());
        if !f.params.is_empty() {
            if let Some(p) = Payload::from_value(&Value::Object(f.params.clone())) {
                entry = entry.value(p);
            }
        }
        self.log.push(entry);
        let device = self.env.devices.iter().position(|d| d.def.id == f.target);
        let instance = self.instance_index(&f.target);
        match f.kind {
            FaultKind::DeviceOffline => {
                if let Some(d) = device {
                    self.env.devices[d].online = false;
                }
            }
            FaultKind::DeviceOnline => {
                if let Some(d) = device {
                    let dev = &mut self.env.devices[d];
                    if !dev.online {
                        dev.online = true;
                        if dev.def.kind == DeviceKind::PeriodicSensor {
                            // A power-cycled sensor reports on boot and
                            // re-phases its period from there.
                            dev.next = Some(t);
                        }
                    }
                }
            }
            FaultKind::InstanceCrash => {
                if let Some(i) = instance {
                    let inst = &mut self.instances[i];
                    if let Some(mut engine) = inst.engine.take() {
                        self.log.extend(engine.drain_log());
                        inst.store = Some(engine.into_store());
                        inst.member = None;
                        self.transport.detach(inst.address);
                    }
                }
            }
            FaultKind::InstanceRestart => {
                if let Some(i) = instance {
                    let inst = &mut self.instances[i];
                    if inst.engine.is_none() {
                        let store = inst.store.take().unwrap_or_default();
                        let engine = Engine::new(&inst.graph, &inst.def.name, store, t)
                            .expect("graph validated at construction");
                        inst.engine = Some(engine);
                        self.boot(i, t);
                    }
                }
            }
            FaultKind::NetDelay => {
                let delay = f.param_u64("delay_ms").unwrap_or(0);
                if let Some(d) = device {
                    self.env.devices[d].delay = delay;
                } else if let Some(i) = instance {
                    self.instances[i].delay = delay;
                    self.transport.set_delay(self.instances[i].address, delay);
                }
            }
            FaultKind::ValueNoise => {
                if let Some(d) = device {
                    self.env.devices[d].extra_noise = f.param_f64("amp").unwrap_or(0.0).abs();
                }
            }
            FaultKind::StuckValue => {
                if let Some(d) = device {
                    self.env.devices[d].stuck = f.params.get("value").and_then(Payload::from_value);
                }
            }
            FaultKind::ServiceDown | FaultKind::ServiceUp => {
                let up = f.kind == FaultKind::ServiceUp;
                for (s, flag) in &mut self.env.services {
                    if s.id == f.target {
                        *flag = up;
                    }
                }
            }
        }
    }
}

/// Co-simulates `graphs` (one per instance) under `script`.
pub fn run_scenario(graphs: Vec<FlowGraph>, script: &ScenarioScript) -> Result<TimelineLog, SimError> {
    Ok(Simulation::new(graphs, script.clone())?.run())
}
