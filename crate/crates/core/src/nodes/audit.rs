//! `action-audit`: after a trigger (ingress 0), waits for a matching
//! acknowledgement (ingress 1) until a timeout. Acks arriving after the
//! failure was reported are ignored.

use std::any::Any;
use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use super::{topic_matches, Operator, Validate};
use crate::clock::TimerId;
use crate::engine::NodeContext;
use crate::payload::{Envelope, Millis, Payload};

pub const TRIGGER: usize = 0;
pub const ACK: usize = 1;

pub const CONFIRMED: usize = 0;
pub const FAILED: usize = 1;

fn any_topic() -> String {
    "#".to_string()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ActionAuditConfig {
    pub timeout: Millis,
    #[serde(rename = "match", default = "any_topic")]
    pub topic_match: String,
}

impl Validate for ActionAuditConfig {
    fn validate(&self) -> Result<(), String> {
        if self.timeout == 0 {
            return Err("timeout must be > 0".into());
        }
        Ok(())
    }
}

struct Pending {
    tag: u32,
    corr: String,
    timer: TimerId,
    trigger: Envelope,
}

pub struct ActionAudit {
    cfg: ActionAuditConfig,
    pending: VecDeque<Pending>,
    next_tag: u32,
}

impl ActionAudit {
    pub fn new(cfg: ActionAuditConfig) -> Self {
        ActionAudit {
            cfg,
            pending: VecDeque::new(),
            next_tag: 0,
        }
    }

    fn report(&self, status: &str, p: &Pending) -> Payload {
        Payload::record([
            ("status", Payload::from(status)),
            ("corr", Payload::from(p.corr.as_str())),
            ("action", p.trigger.payload.clone()),
        ])
    }
}

impl Operator for ActionAudit {
    fn on_input(&mut self, ingress: usize, env: &Envelope, ctx: &mut NodeContext<'_>) {
        if ingress == TRIGGER {
            let tag = self.next_tag;
            self.next_tag = self.next_tag.wrapping_add(1);
            let corr = env.corr.clone().unwrap_or_else(|| format!("{}#{tag}", ctx.node_id()));
            let timer = ctx.start_timer(self.cfg.timeout, tag);
            self.pending.push_back(Pending {
                tag,
                corr,
                timer,
                trigger: env.clone(),
            });
            return;
        }
        if !topic_matches(&self.cfg.topic_match, &env.topic) {
            ctx.note_drop("ack-mismatch", env.payload.clone());
            return;
        }
        let Some(p) = self.pending.pop_front() else {
            ctx.note_drop("ack-unexpected", env.payload.clone());
            return;
        };
        ctx.cancel_timer(p.timer);
        let out = self.report("confirmed", &p);
        let reply = Envelope::new(0, "", 0, p.trigger.topic.clone(), out).with_corr(p.corr.clone());
        ctx.emit_envelope(CONFIRMED, reply);
    }

    fn on_timer(&mut self, tag: u32, ctx: &mut NodeContext<'_>) {
        let Some(pos) = self.pending.iter().position(|p| p.tag == tag) else {
            return;
        };
        let p = self.pending.remove(pos).expect("position is in range");
        let out = self.report("failed", &p);
        let reply = Envelope::new(0, "", 0, p.trigger.topic.clone(), out).with_corr(p.corr.clone());
        ctx.emit_envelope(FAILED, reply);
    }

    fn as_any(&self) -> &dyn Any {
        self
    }
}
