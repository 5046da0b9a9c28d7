//! `rbe`: report-by-exception. Forwards a message only when its payload
//! differs from the last one forwarded.

use std::any::Any;

use serde::{Deserialize, Serialize};

use super::{Operator, Validate};
use crate::engine::NodeContext;
use crate::payload::{Envelope, Payload};

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RbeConfig {}

impl Validate for RbeConfig {}

/// Returns `e` when its payload differs (deep equality) from `last`, and
/// records it as the new last payload.
pub fn rbe_process(e: &Envelope, last: &mut Option<Payload>) -> Option<Envelope> {
    if last.as_ref() == Some(&e.payload) {
        return None;
    }
    *last = Some(e.payload.clone());
    Some(e.clone())
}

#[derive(Default)]
pub struct RbeNode {
    last: Option<Payload>,
}

impl RbeNode {
    pub fn new(_cfg: RbeConfig) -> Self {
        RbeNode::default()
    }
}

impl Operator for RbeNode {
    fn on_input(&mut self, _ingress: usize, env: &Envelope, ctx: &mut NodeContext<'_>) {
        if let Some(out) = rbe_process(env, &mut self.last) {
            ctx.forward(0, &out);
        }
    }

    fn as_any(&self) -> &dyn Any {
        self
    }
}
