//! In-memory datagram transport with scriptable per-link delay and drop.

use std::collections::{BTreeMap, BTreeSet};
use std::net::Ipv4Addr;

use crate::payload::Millis;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Datagram {
    pub from: Ipv4Addr,
    pub to: Ipv4Addr,
    pub at: Millis,
    pub bytes: Vec<u8>,
}

/// Broadcast loopback. Datagrams sent at `t` arrive at `t + delay(to)`,
/// ordered by arrival time then send order.
#[derive(Debug, Default)]
pub struct LoopbackTransport {
    endpoints: BTreeSet<Ipv4Addr>,
    delay: BTreeMap<Ipv4Addr, Millis>,
    dropping: BTreeSet<Ipv4Addr>,
    queue: BTreeMap<(Millis, u64), Datagram>,
    seq: u64,
}

impl LoopbackTransport {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn attach(&mut self, addr: Ipv4Addr) {
        self.endpoints.insert(addr);
    }

    /// Detaches `addr`; datagrams in flight to it are discarded.
    pub fn detach(&mut self, addr: Ipv4Addr) {
        self.endpoints.remove(&addr);
        self.queue.retain(|_, d| d.to != addr);
    }

    pub fn is_attached(&self, addr: Ipv4Addr) -> bool {
        self.endpoints.contains(&addr)
    }

    /// Constant delay on every link into `addr`.
    pub fn set_delay(&mut self, addr: Ipv4Addr, delay: Millis) {
        if delay == 0 {
            self.delay.remove(&addr);
        } else {
            self.delay.insert(addr, delay);
        }
    }

    /// Drops every datagram to or from `addr` while set.
    pub fn set_drop(&mut self, addr: Ipv4Addr, drop: bool) {
        if drop {
            self.dropping.insert(addr);
        } else {
            self.dropping.remove(&addr);
        }
    }

    /// Sends to every other attached endpoint. Returns the number queued.
    pub fn broadcast(&mut self, from: Ipv4Addr, now: Millis, bytes: &[u8]) -> usize {
        if self.dropping.contains(&from) {
            return 0;
        }
        let targets: Vec<Ipv4Addr> = self
            .endpoints
            .iter()
            .copied()
            .filter(|a| *a != from && !self.dropping.contains(a))
            .collect();
        for to in &targets {
            let at = now + self.delay.get(to).copied().unwrap_or(0);
            self.seq += 1;
            self.queue.insert(
                (at, self.seq),
                Datagram {
                    from,
                    to: *to,
                    at,
                    bytes: bytes.to_vec(),
                },
            );
        }
        targets.len()
    }

    pub fn next_arrival(&self) -> Option<Millis> {
        self.queue.keys().next().map(|(t, _)| *t)
    }

    pub fn pop_due(&mut self, limit: Millis) -> Option<Datagram> {
        let (&key, _) = self.queue.iter().next()?;
        if key.0 > limit {
            return None;
        }
        self.queue.remove(&key)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const A: Ipv4Addr = Ipv4Addr::new(10, 0, 0, 1);
    const B: Ipv4Addr = Ipv4Addr::new(10, 0, 0, 2);
    const C: Ipv4Addr = Ipv4Addr::new(10, 0, 0, 3);

    #[test]
    fn broadcast_skips_sender_and_honours_delay() {
        let mut t = LoopbackTransport::new();
        for a in [A, B, C] {
            t.attach(a);
        }
        t.set_delay(C, 500);
        assert_eq!(t.broadcast(A, 100, b"x"), 2);
        let d = t.pop_due(100).unwrap();
        assert_eq!((d.to, d.at), (B, 100));
        assert!(t.pop_due(599).is_none());
        assert_eq!(t.pop_due(600).unwrap().to, C);
    }

    #[test]
    fn drop_and_detach() {
        let mut t = LoopbackTransport::new();
        for a in [A, B] {
            t.attach(a);
        }
        t.set_drop(B, true);
        assert_eq!(t.broadcast(A, 0, b"x"), 0);
        t.set_drop(B, false);
        t.broadcast(A, 0, b"x");
        t.detach(B);
        assert!(t.pop_due(10).is_none());
    }
}
