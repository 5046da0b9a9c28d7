//! `flow-control`: enables or disables flow groups at runtime.
//!
//! Input: `{"action": "enable" | "disable", "flow": <group>}`.

use std::any::Any;

use serde::{Deserialize, Serialize};

use super::{Operator, Validate};
use crate::engine::NodeContext;
use crate::payload::{Envelope, Payload};

pub const ACK: usize = 0;
pub const ERROR: usize = 1;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FlowControlConfig {}

impl Validate for FlowControlConfig {}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FlowAction {
    Enable,
    Disable,
}

impl FlowAction {
    pub fn as_str(self) -> &'static str {
        match self {
            FlowAction::Enable => "enable",
            FlowAction::Disable => "disable",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FlowCommand {
    pub action: FlowAction,
    pub flow: String,
}

impl FlowCommand {
    pub fn to_payload(&self) -> Payload {
        Payload::record([
            ("action", Payload::from(self.action.as_str())),
            ("flow", Payload::from(self.flow.as_str())),
        ])
    }

    pub fn from_payload(p: &Payload) -> Option<FlowCommand> {
        let action = match p.get("action")?.as_str()? {
            "enable" => FlowAction::Enable,
            "disable" => FlowAction::Disable,
            _ => return None,
        };
        let flow = p.get("flow")?.as_str()?.to_string();
        Some(FlowCommand { action, flow })
    }
}

pub struct FlowControlNode;

impl FlowControlNode {
    pub fn new(_cfg: FlowControlConfig) -> Self {
        FlowControlNode
    }
}

impl Operator for FlowControlNode {
    fn on_input(&mut self, _ingress: usize, env: &Envelope, ctx: &mut NodeContext<'_>) {
        let Some(cmd) = FlowCommand::from_payload(&env.payload) else {
            ctx.emit_error(ERROR, &env.topic, "malformed", env.payload.clone());
            return;
        };
        match ctx.set_flow_enabled(&cmd.flow, cmd.action == FlowAction::Enable) {
            Ok(changed) => {
                let mut ack = cmd.to_payload();
                if let Payload::Record(r) = &mut ack {
                    r.insert("changed".into(), changed.into());
                }
                ctx.emit(ACK, &env.topic, ack);
            }
            Err(e) => ctx.emit_error(ERROR, &env.topic, "unknown-flow", Payload::from(e.to_string())),
        }
    }

    fn as_any(&self) -> &dyn Any {
        self
    }
}
