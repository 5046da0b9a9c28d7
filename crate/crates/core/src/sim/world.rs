//! Static description of the simulated world: instances, devices, external
//! services, and bare hosts.

use std::collections::BTreeMap;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::payload::{Millis, Payload};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InstanceDef {
    pub name: String,
    pub address: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum DeviceKind {
    PeriodicSensor,
    NfcReader,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChannelModel {
    pub base: f64,
    #[serde(default)]
    pub noise_amp: f64,
}

/// A scalar model, or a record with one field per channel when `channels`
/// is non-empty.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ValueModel {
    #[serde(default)]
    pub base: f64,
    #[serde(default)]
    pub noise_amp: f64,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub channels: BTreeMap<String, ChannelModel>,
}

fn draw(rng: &mut ChaCha8Rng, base: f64, amp: f64) -> f64 {
    if amp > 0.0 {
        base + rng.gen_range(-amp..=amp)
    } else {
        base
    }
}

impl ValueModel {
    /// One reading. `extra_amp` widens the noise (value_noise fault).
    pub fn sample(&self, rng: &mut ChaCha8Rng, extra_amp: f64) -> Payload {
        if self.channels.is_empty() {
            return Payload::Number(draw(rng, self.base, self.noise_amp + extra_amp));
        }
        let fields: Vec<(String, Payload)> = self
            .channels
            .iter()
            .map(|(k, c)| (k.clone(), Payload::Number(draw(rng, c.base, c.noise_amp + extra_amp))))
            .collect();
        Payload::record(fields)
    }
}

fn default_true() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DeviceDef {
    pub id: String,
    pub kind: DeviceKind,
    #[serde(default)]
    pub period_ms: Millis,
    pub topic: String,
    #[serde(default = "default_true")]
    pub online: bool,
    #[serde(default)]
    pub value_model: ValueModel,
    /// Card swipe times for an NFC reader.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub swipes_ms: Vec<Millis>,
    /// Network address reported by host scans; defaults to the id.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub address: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ServiceDef {
    pub id: String,
    pub host: String,
    pub port: u16,
    #[serde(default = "default_true")]
    pub up: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HostDef {
    pub id: String,
    pub address: String,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WorldDef {
    #[serde(default)]
    pub instances: Vec<InstanceDef>,
    #[serde(default)]
    pub devices: Vec<DeviceDef>,
    #[serde(default)]
    pub services: Vec<ServiceDef>,
    #[serde(default)]
    pub hosts: Vec<HostDef>,
}

impl WorldDef {
    /// Checks definitions for internal consistency.
    pub fn validate(&self) -> Vec<String> {
        let mut errs = Vec::new();
        let mut seen = std::collections::BTreeSet::new();
        for name in self
            .instances
            .iter()
            .map(|i| &i.name)
            .chain(self.devices.iter().map(|d| &d.id))
            .chain(self.services.iter().map(|s| &s.id))
            .chain(self.hosts.iter().map(|h| &h.id))
        {
            if !seen.insert(name.as_str()) {
                errs.push(format!("duplicate world id `{name}`"));
            }
        }
        for i in &self.instances {
            if i.address.parse::<std::net::Ipv4Addr>().is_err() {
                errs.push(format!("instance `{}`: bad address `{}`", i.name, i.address));
            }
        }
        for d in &self.devices {
            if d.kind == DeviceKind::PeriodicSensor && d.period_ms == 0 {
                errs.push(format!("device `{}`: period_ms must be > 0", d.id));
            }
            if d.topic.is_empty() {
                errs.push(format!("device `{}`: empty topic", d.id));
            }
        }
        errs
    }

    pub fn instance(&self, name: &str) -> Option<&InstanceDef> {
        self.instances.iter().find(|i| i.name == name)
    }

    pub fn device(&self, id: &str) -> Option<&DeviceDef> {
        self.devices.iter().find(|d| d.id == id)
    }

    pub fn service(&self, id: &str) -> Option<&ServiceDef> {
        self.services.iter().find(|s| s.id == id)
    }

    /// Default instance list for `n` flows when the world names none.
    pub fn default_instances(n: usize) -> Vec<InstanceDef> {
        if n == 1 {
            return vec![InstanceDef {
                name: "main".into(),
                address: "10.0.0.1".into(),
            }];
        }
        (0..n)
            .map(|k| InstanceDef {
                name: format!("instance-{}", k + 1),
                address: format!("10.0.0.{}", k + 1),
            })
            .collect()
    }
}
