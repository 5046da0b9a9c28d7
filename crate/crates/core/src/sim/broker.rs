//! Topic-based pub/sub routing table.

use crate::nodes::topic_matches;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Subscription {
    pub instance: usize,
    pub node: String,
    pub filter: String,
}

#[derive(Debug, Clone, Default)]
pub struct Broker {
    subs: Vec<Subscription>,
}

impl Broker {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn subscribe(&mut self, instance: usize, node: &str, filter: &str) {
        self.subs.push(Subscription {
            instance,
            node: node.to_string(),
            filter: filter.to_string(),
        });
    }

    /// Subscriptions matching `topic`, in instance then registration order.
    pub fn broker_publish(&self, topic: &str) -> Vec<&Subscription> {
        let mut out: Vec<&Subscription> = self.subs.iter().filter(|s| topic_matches(&s.filter, topic)).collect();
        out.sort_by_key(|s| s.instance);
        out
    }
}
