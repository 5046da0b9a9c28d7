//! Virtual clock with deterministic timer ordering.

use std::collections::{BTreeMap, BTreeSet};

use crate::payload::Millis;

/// Handle to a scheduled timer. Ids are allocated from the clock's sequence
/// counter, so they double as the creation-order tie-breaker.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct TimerId(u64);

impl TimerId {
    pub fn seq(self) -> u64 {
        self.0
    }
}

/// A timer that came due.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Expired {
    pub id: TimerId,
    pub fire_at: Millis,
    pub owner: usize,
    pub tag: u32,
}

/// Pending timers fire in `(fire_at, seq)` order; `now` never moves backwards.
#[derive(Debug, Default, Clone)]
pub struct VirtualClock {
    now: Millis,
    next_seq: u64,
    pending: BTreeSet<(Millis, TimerId)>,
    meta: BTreeMap<TimerId, (Millis, usize, u32)>,
}

impl VirtualClock {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn starting_at(now: Millis) -> Self {
        VirtualClock { now, ..Self::default() }
    }

    pub fn now(&self) -> Millis {
        self.now
    }

    /// Moves the clock forward. Earlier readings are ignored.
    pub fn advance_to(&mut self, t: Millis) {
        if t > self.now {
            self.now = t;
        }
    }

    pub fn schedule(&mut self, delay: Millis, owner: usize, tag: u32) -> TimerId {
        self.schedule_at(self.now.saturating_add(delay), owner, tag)
    }

    pub fn schedule_at(&mut self, fire_at: Millis, owner: usize, tag: u32) -> TimerId {
        let id = TimerId(self.next_seq);
        self.next_seq += 1;
        let fire_at = fire_at.max(self.now);
        self.pending.insert((fire_at, id));
        self.meta.insert(id, (fire_at, owner, tag));
        id
    }

    /// Returns true if the timer was still pending.
    pub fn cancel(&mut self, id: TimerId) -> bool {
        match self.meta.remove(&id) {
            Some((fire_at, _, _)) => self.pending.remove(&(fire_at, id)),
            None => false,
        }
    }

    pub fn is_pending(&self, id: TimerId) -> bool {
        self.meta.contains_key(&id)
    }

    pub fn next_fire_time(&self) -> Option<Millis> {
        self.pending.first().map(|(t, _)| *t)
    }

    pub fn pending_len(&self) -> usize {
        self.pending.len()
    }

    /// Pops the earliest timer due at or before `limit`, advancing `now` to
    /// its fire time.
    pub fn pop_due(&mut self, limit: Millis) -> Option<Expired> {
        let &(fire_at, id) = self.pending.first()?;
        if fire_at > limit {
            return None;
        }
        self.pending.remove(&(fire_at, id));
        let (_, owner, tag) = self.meta.remove(&id)?;
        self.advance_to(fire_at);
        Some(Expired {
            id,
            fire_at,
            owner,
            tag,
        })
    }

    /// Drops every timer belonging to `owner`.
    pub fn cancel_owner(&mut self, owner: usize) {
        let ids: Vec<TimerId> = self
            .meta
            .iter()
            .filter(|(_, (_, o, _))| *o == owner)
            .map(|(id, _)| *id)
            .collect();
        for id in ids {
            self.cancel(id);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn equal_fire_times_break_ties_by_creation() {
        let mut c = VirtualClock::new();
        let first = c.schedule(100, 7, 0);
        let second = c.schedule(100, 3, 0);
        assert_eq!(c.pop_due(100).unwrap().id, first);
        assert_eq!(c.pop_due(100).unwrap().id, second);
        assert!(c.pop_due(100).is_none());
    }

    #[test]
    fn cancel_removes_pending_timer() {
        let mut c = VirtualClock::new();
        let a = c.schedule(10, 0, 0);
        let b = c.schedule(20, 0, 1);
        assert!(c.cancel(a));
        assert!(!c.cancel(a));
        assert_eq!(c.pop_due(1000).unwrap().id, b);
        assert_eq!(c.now(), 20);
    }

    #[test]
    fn pop_respects_limit() {
        let mut c = VirtualClock::new();
        c.schedule(50, 0, 0);
        assert!(c.pop_due(49).is_none());
        assert_eq!(c.next_fire_time(), Some(50));
    }

    #[test]
    fn cancel_owner_only_hits_that_owner() {
        let mut c = VirtualClock::new();
        c.schedule(5, 1, 0);
        c.schedule(6, 2, 0);
        c.schedule(7, 1, 1);
        c.cancel_owner(1);
        assert_eq!(c.pending_len(), 1);
        assert_eq!(c.pop_due(10).unwrap().owner, 2);
    }

    proptest! {
        #[test]
        fn fire_order_is_lexicographic(delays in proptest::collection::vec(0u64..50, 1..40)) {
            let mut c = VirtualClock::new();
            let ids: Vec<_> = delays.iter().map(|d| (c.schedule(*d, 0, 0), *d)).collect();
            let mut expected: Vec<_> = ids.iter().map(|(id, d)| (*d, id.seq())).collect();
            expected.sort();
            let mut seen = Vec::new();
            let mut last = 0;
            while let Some(e) = c.pop_due(u64::MAX) {
                prop_assert!(c.now() >= last);
                last = c.now();
                seen.push((e.fire_at, e.id.seq()));
            }
            prop_assert_eq!(seen, expected);
        }
    }
}
