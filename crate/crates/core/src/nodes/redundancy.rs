//! `redundancy`: turns cluster role changes into flow-control commands.
//!
//! The cluster layer delivers `{"role": "master" | "standby", "epoch": n,
//! "master": address}` on ingress 0. On start the node assumes standby and
//! disables every controlled flow. Repeated roles are ignored.

use std::any::Any;

use serde::{Deserialize, Serialize};

use super::flow_control::{FlowAction, FlowCommand};
use super::{Operator, Validate};
use crate::engine::NodeContext;
use crate::payload::{Envelope, Millis, Payload};

pub const ROLE: usize = 0;
pub const COMMANDS: usize = 1;

pub const COMMAND_TOPIC: &str = "flow-control";
pub const ROLE_TOPIC: &str = "role";

fn default_timeout() -> Millis {
    15_000
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "camelCase")]
pub struct RedundancyConfig {
    #[serde(default = "default_timeout")]
    pub election_timeout: Millis,
    #[serde(default)]
    pub controlled_flows: Vec<String>,
}

impl Validate for RedundancyConfig {
    fn validate(&self) -> Result<(), String> {
        if self.election_timeout < 5 {
            return Err("electionTimeout must be ≥ 5".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Role {
    Master,
    Standby,
}

impl Role {
    pub fn as_str(self) -> &'static str {
        match self {
            Role::Master => "master",
            Role::Standby => "standby",
        }
    }

    pub fn parse(s: &str) -> Option<Role> {
        match s {
            "master" => Some(Role::Master),
            "standby" => Some(Role::Standby),
            _ => None,
        }
    }
}

impl std::fmt::Display for Role {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Commands that bring every controlled flow in line with `role`.
pub fn commands_for(role: Role, flows: &[String]) -> Vec<FlowCommand> {
    let action = match role {
        Role::Master => FlowAction::Enable,
        Role::Standby => FlowAction::Disable,
    };
    flows
        .iter()
        .map(|f| FlowCommand {
            action,
            flow: f.clone(),
        })
        .collect()
}

pub struct RedundancyNode {
    cfg: RedundancyConfig,
    role: Role,
}

impl RedundancyNode {
    pub fn new(cfg: RedundancyConfig) -> Self {
        RedundancyNode {
            cfg,
            role: Role::Standby,
        }
    }

    pub fn config(&self) -> &RedundancyConfig {
        &self.cfg
    }

    pub fn role(&self) -> Role {
        self.role
    }

    fn send_commands(&self, ctx: &mut NodeContext<'_>) {
        for cmd in commands_for(self.role, &self.cfg.controlled_flows) {
            ctx.emit(COMMANDS, COMMAND_TOPIC, cmd.to_payload());
        }
    }
}

impl Operator for RedundancyNode {
    fn start(&mut self, ctx: &mut NodeContext<'_>) {
        self.send_commands(ctx);
    }

    fn on_input(&mut self, _ingress: usize, env: &Envelope, ctx: &mut NodeContext<'_>) {
        let Some(role) = env.payload.get("role").and_then(Payload::as_str).and_then(Role::parse) else {
            ctx.note_drop(&env.topic, env.payload.clone());
            return;
        };
        if role == self.role {
            return;
        }
        self.role = role;
        self.send_commands(ctx);
        let mut out = env.payload.clone();
        if let Payload::Record(r) = &mut out {
            r.insert("instance".into(), Payload::from(ctx.instance()));
        }
        ctx.emit(ROLE, ROLE_TOPIC, out);
    }

    fn as_any(&self) -> &dyn Any {
        self
    }
}
