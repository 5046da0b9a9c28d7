//! Multi-instance redundancy: ping exchange, failure detection, master
//! election by highest last octet, and role transitions.
//!
//! Election needs no ballots. The winner is a pure function of the alive
//! set, so every instance that sees the same pings agrees.

use std::cmp::Ordering;
use std::collections::BTreeMap;
use std::fmt;
use std::net::Ipv4Addr;

use thiserror::Error;

use crate::nodes::flow_control::FlowCommand;
use crate::nodes::redundancy::{commands_for, Role};
use crate::payload::{Millis, Payload};

pub mod transport;
pub mod wire;

pub use transport::{Datagram, LoopbackTransport};
pub use wire::{decode, encode_ping, Ping, WireError};

pub const DEFAULT_ELECTION_TIMEOUT: Millis = 15_000;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ClusterError {
    #[error("cannot elect from an empty set")]
    EmptyElection,
    #[error("bad instance address `{0}`")]
    BadAddress(String),
}

/// An instance, identified by its address. The name is a label only and
/// takes no part in comparisons.
#[derive(Debug, Clone)]
pub struct InstanceId {
    pub address: Ipv4Addr,
    pub name: String,
}

impl InstanceId {
    pub fn new(name: &str, address: Ipv4Addr) -> Self {
        InstanceId {
            address,
            name: name.to_string(),
        }
    }

    pub fn parse(name: &str, address: &str) -> Result<Self, ClusterError> {
        let addr = address
            .parse()
            .map_err(|_| ClusterError::BadAddress(address.to_string()))?;
        Ok(InstanceId::new(name, addr))
    }

    pub fn last_octet(&self) -> u8 {
        self.address.octets()[3]
    }
}

impl PartialEq for InstanceId {
    fn eq(&self, other: &Self) -> bool {
        self.address == other.address
    }
}

impl Eq for InstanceId {}

impl PartialOrd for InstanceId {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Election order: last octet, then the full address octet by octet.
impl Ord for InstanceId {
    fn cmp(&self, other: &Self) -> Ordering {
        (self.last_octet(), self.address).cmp(&(other.last_octet(), other.address))
    }
}

impl fmt::Display for InstanceId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.address)
    }
}

/// The instance with the highest last octet; ties go to the greatest address.
pub fn elect_master<'a, I>(alive: I) -> Result<InstanceId, ClusterError>
where
    I: IntoIterator<Item = &'a InstanceId>,
{
    alive.into_iter().max().cloned().ok_or(ClusterError::EmptyElection)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PeerState {
    pub id: InstanceId,
    pub last_seen: Millis,
    pub alive: bool,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct PeerTable {
    peers: BTreeMap<Ipv4Addr, PeerState>,
}

impl PeerTable {
    pub fn get(&self, addr: Ipv4Addr) -> Option<&PeerState> {
        self.peers.get(&addr)
    }

    pub fn iter(&self) -> impl Iterator<Item = &PeerState> {
        self.peers.values()
    }

    pub fn len(&self) -> usize {
        self.peers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.peers.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub role: Role,
    pub epoch: u64,
    pub master: InstanceId,
    pub commands: Vec<FlowCommand>,
}

impl Transition {
    /// Envelope payload for the `redundancy` node.
    pub fn to_payload(&self) -> Payload {
        Payload::record([
            ("role", Payload::from(self.role.as_str())),
            ("epoch", Payload::Number(self.epoch as f64)),
            ("master", Payload::from(self.master.to_string())),
        ])
    }
}

#[derive(Debug, Clone)]
pub struct ClusterState {
    pub me: InstanceId,
    pub role: Role,
    pub epoch: u64,
    pub election_timeout: Millis,
    pub peers: PeerTable,
}

impl ClusterState {
    pub fn new(me: InstanceId, election_timeout: Millis) -> Self {
        ClusterState {
            me,
            role: Role::Standby,
            epoch: 0,
            election_timeout,
            peers: PeerTable::default(),
        }
    }

    /// Records a ping. Returns true when the peer is new or was dead, i.e.
    /// the alive set grew. Pings from ourselves are ignored.
    pub fn on_ping(&mut self, peer: InstanceId, now: Millis) -> bool {
        if peer == self.me {
            return false;
        }
        match self.peers.peers.get_mut(&peer.address) {
            Some(p) => {
                let revived = !p.alive;
                p.last_seen = p.last_seen.max(now);
                p.alive = true;
                revived
            }
            None => {
                self.peers.peers.insert(
                    peer.address,
                    PeerState {
                        id: peer,
                        last_seen: now,
                        alive: true,
                    },
                );
                true
            }
        }
    }

    /// Peers silent for more than the timeout, each reported once.
    pub fn detect_failures(&mut self, now: Millis) -> Vec<InstanceId> {
        let timeout = self.election_timeout;
        let mut dead = Vec::new();
        for p in self.peers.peers.values_mut() {
            if p.alive && now.saturating_sub(p.last_seen) > timeout {
                p.alive = false;
                dead.push(p.id.clone());
            }
        }
        dead
    }

    /// Self plus every live peer.
    pub fn alive_set(&self) -> Vec<InstanceId> {
        let mut v = vec![self.me.clone()];
        v.extend(self.peers.iter().filter(|p| p.alive).map(|p| p.id.clone()));
        v
    }

    /// Earliest time at which a live peer would be declared dead.
    pub fn next_deadline(&self) -> Option<Millis> {
        self.peers
            .iter()
            .filter(|p| p.alive)
            .map(|p| p.last_seen + self.election_timeout + 1)
            .min()
    }

    /// Re-runs the election and applies any role change.
    pub fn role_transition(&mut self, controlled_flows: &[String]) -> Option<Transition> {
        let alive = self.alive_set();
        let master = elect_master(&alive).expect("alive set contains self");
        let role = if master == self.me { Role::Master } else { Role::Standby };
        if role == self.role {
            return None;
        }
        self.role = role;
        self.epoch += 1;
        Some(Transition {
            role,
            epoch: self.epoch,
            master,
            commands: commands_for(role, controlled_flows),
        })
    }
}

/// Drives one instance's [`ClusterState`] on the shared virtual clock:
/// periodic pings, deadline checks, and elections.
#[derive(Debug, Clone)]
pub struct Member {
    state: ClusterState,
    ping_period: Millis,
    next_ping: Millis,
    election_at: Option<Millis>,
    controlled_flows: Vec<String>,
}

impl Member {
    /// A freshly started member pings at `now` and holds its first election
    /// one tick later, giving peers' replies a chance to arrive first.
    pub fn start(me: InstanceId, election_timeout: Millis, controlled_flows: Vec<String>, now: Millis) -> Self {
        Member {
            state: ClusterState::new(me, election_timeout),
            ping_period: (election_timeout / 5).max(1),
            next_ping: now,
            election_at: Some(now + 1),
            controlled_flows,
        }
    }

    pub fn state(&self) -> &ClusterState {
        &self.state
    }

    pub fn role(&self) -> Role {
        self.state.role
    }

    pub fn ping_period(&self) -> Millis {
        self.ping_period
    }

    pub fn next_due(&self) -> Millis {
        let mut t = self.next_ping;
        if let Some(e) = self.election_at {
            t = t.min(e);
        }
        if let Some(d) = self.state.next_deadline() {
            t = t.min(d);
        }
        t
    }

    /// Runs everything due at `now`: failure checks, the scheduled election,
    /// and the periodic ping.
    pub fn step(&mut self, now: Millis, transport: &mut LoopbackTransport) -> Option<Transition> {
        let mut transition = None;
        if !self.state.detect_failures(now).is_empty() {
            transition = self.state.role_transition(&self.controlled_flows);
        }
        if self.election_at.is_some_and(|t| t <= now) {
            self.election_at = None;
            transition = self.state.role_transition(&self.controlled_flows).or(transition);
        }
        if self.next_ping <= now {
            let bytes = encode_ping(self.state.me.address, self.state.epoch, now);
            transport.broadcast(self.state.me.address, now, &bytes);
            self.next_ping = now + self.ping_period;
        }
        transition
    }

    /// Handles one datagram. A ping that grows the alive set triggers an
    /// election, unless the first election is still pending.
    pub fn receive(&mut self, now: Millis, bytes: &[u8]) -> Result<Option<Transition>, WireError> {
        let ping = decode(bytes)?;
        let peer = InstanceId::new(&ping.address.to_string(), ping.address);
        if self.state.on_ping(peer, now) && self.election_at.is_none() {
            return Ok(self.state.role_transition(&self.controlled_flows));
        }
        Ok(None)
    }
}
