//! Durable per-instance store: single-slot node checkpoints and the device
//! registry.
//!
//! The backing file is a log of human-readable lines, last line per key wins:
//!
//! ```text
//! CKPT <nodeId> <timestamp> <message-as-compact-JSON | null>
//! REG <deviceId> <kind> <endpoint> <lastSeen> <online|lost>
//! ```
//!
//! The message JSON is `{"payload":…,"topic":…}`; `null` marks a cleared slot.

use std::collections::BTreeMap;
use std::fmt;
use std::fs::{self, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::payload::{Millis, Payload};

#[derive(Debug, Error)]
pub enum PersistError {
    #[error("store write failed: {0}")]
    Write(String),
    #[error("store io: {0}")]
    Io(#[from] std::io::Error),
    #[error("unknown device `{0}`")]
    UnknownDevice(String),
    #[error("field `{0}` must be non-empty and contain no whitespace")]
    BadField(String),
}

/// A stored message: topic plus payload.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StoredMessage {
    pub payload: Payload,
    pub topic: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CheckpointRecord {
    pub timestamp: Millis,
    pub last_message: StoredMessage,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum DeviceStatus {
    Online,
    Lost,
}

impl DeviceStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            DeviceStatus::Online => "online",
            DeviceStatus::Lost => "lost",
        }
    }
}

impl fmt::Display for DeviceStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for DeviceStatus {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "online" => Ok(DeviceStatus::Online),
            "lost" => Ok(DeviceStatus::Lost),
            other => Err(format!("bad status `{other}`")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RegistryEntry {
    pub device_id: String,
    pub kind: String,
    pub endpoint: String,
    pub last_seen: Millis,
    pub status: DeviceStatus,
}

impl RegistryEntry {
    pub fn online(device_id: &str, kind: &str, endpoint: &str, last_seen: Millis) -> Self {
        RegistryEntry {
            device_id: device_id.to_string(),
            kind: kind.to_string(),
            endpoint: endpoint.to_string(),
            last_seen,
            status: DeviceStatus::Online,
        }
    }
}

#[derive(Debug, Default)]
pub struct Store {
    slots: BTreeMap<String, (Millis, Option<StoredMessage>)>,
    registry: BTreeMap<String, RegistryEntry>,
    path: Option<PathBuf>,
    fail_writes: bool,
    warnings: Vec<String>,
}

fn check_field(name: &str, value: &str) -> Result<(), PersistError> {
    if value.is_empty() || value.chars().any(char::is_whitespace) {
        Err(PersistError::BadField(name.to_string()))
    } else {
        Ok(())
    }
}

impl Store {
    pub fn in_memory() -> Store {
        Store::default()
    }

    /// Opens (or creates) a file-backed store, replaying existing lines.
    pub fn open(path: impl AsRef<Path>) -> Result<Store, PersistError> {
        let path = path.as_ref().to_path_buf();
        let mut store = match fs::read_to_string(&path) {
            Ok(text) => Store::from_lines(&text),
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Store::default(),
            Err(e) => return Err(e.into()),
        };
        store.path = Some(path);
        Ok(store)
    }

    /// Rebuilds a store from its line form. Corrupt lines are skipped and
    /// reported through [`Store::warnings`].
    pub fn from_lines(text: &str) -> Store {
        let mut store = Store::default();
        for (n, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            if let Err(msg) = store.apply_line(line) {
                store.warnings.push(format!("line {}: {msg}", n + 1));
            }
        }
        store
    }

    fn apply_line(&mut self, line: &str) -> Result<(), String> {
        if let Some(rest) = line.strip_prefix("CKPT ") {
            let mut parts = rest.splitn(3, ' ');
            let node = parts.next().filter(|s| !s.is_empty()).ok_or("missing node id")?;
            let ts: Millis = parts
                .next()
                .ok_or("missing timestamp")?
                .parse()
                .map_err(|e| format!("timestamp: {e}"))?;
            let json = parts.next().ok_or("missing message")?;
            let msg: Option<StoredMessage> = serde_json::from_str(json).map_err(|e| format!("message: {e}"))?;
            self.slots.insert(node.to_string(), (ts, msg));
            Ok(())
        } else if let Some(rest) = line.strip_prefix("REG ") {
            let f: Vec<&str> = rest.split(' ').collect();
            if f.len() != 5 {
                return Err(format!("expected 5 registry fields, got {}", f.len()));
            }
            let entry = RegistryEntry {
                device_id: f[0].to_string(),
                kind: f[1].to_string(),
                endpoint: if f[2] == "-" { String::new() } else { f[2].to_string() },
                last_seen: f[3].parse().map_err(|e| format!("lastSeen: {e}"))?,
                status: f[4].parse()?,
            };
            self.registry.insert(entry.device_id.clone(), entry);
            Ok(())
        } else {
            Err("unrecognized record".into())
        }
    }

    pub fn warnings(&self) -> &[String] {
        &self.warnings
    }

    pub fn set_fail_writes(&mut self, fail: bool) {
        self.fail_writes = fail;
    }

    fn ckpt_line(node: &str, ts: Millis, msg: Option<&StoredMessage>) -> String {
        let json = serde_json::to_string(&msg).expect("message serialization is infallible");
        format!("CKPT {node} {ts} {json}")
    }

    fn reg_line(e: &RegistryEntry) -> String {
        let endpoint = if e.endpoint.is_empty() {
            "-"
        } else {
            e.endpoint.as_str()
        };
        format!(
            "REG {} {} {} {} {}",
            e.device_id, e.kind, endpoint, e.last_seen, e.status
        )
    }

    fn append(&mut self, line: String) -> Result<(), PersistError> {
        if self.fail_writes {
            return Err(PersistError::Write("injected write failure".into()));
        }
        if let Some(path) = &self.path {
            let mut f = OpenOptions::new().create(true).append(true).open(path)?;
            writeln!(f, "{line}")?;
        }
        Ok(())
    }

    /// Overwrites the node's slot. The in-memory slot only changes once the
    /// line is durably appended.
    pub fn store_checkpoint(
        &mut self,
        node_id: &str,
        message: StoredMessage,
        timestamp: Millis,
    ) -> Result<(), PersistError> {
        check_field("nodeId", node_id)?;
        self.append(Self::ckpt_line(node_id, timestamp, Some(&message)))?;
        self.slots.insert(node_id.to_string(), (timestamp, Some(message)));
        Ok(())
    }

    pub fn load_checkpoint(&self, node_id: &str) -> Option<CheckpointRecord> {
        match self.slots.get(node_id) {
            Some((ts, Some(msg))) => Some(CheckpointRecord {
                timestamp: *ts,
                last_message: msg.clone(),
            }),
            _ => None,
        }
    }

    pub fn clear_checkpoint(&mut self, node_id: &str) -> Result<(), PersistError> {
        let ts = match self.slots.get(node_id) {
            Some((ts, Some(_))) => *ts,
            _ => return Ok(()),
        };
        self.append(Self::ckpt_line(node_id, ts, None))?;
        self.slots.insert(node_id.to_string(), (ts, None));
        Ok(())
    }

    /// Inserts or refreshes an entry; `lastSeen` never moves backwards.
    pub fn registry_upsert(&mut self, entry: RegistryEntry) -> Result<RegistryEntry, PersistError> {
        check_field("deviceId", &entry.device_id)?;
        check_field("kind", &entry.kind)?;
        if entry.endpoint.chars().any(char::is_whitespace) {
            return Err(PersistError::BadField("endpoint".into()));
        }
        let mut next = entry;
        if let Some(old) = self.registry.get(&next.device_id) {
            next.last_seen = next.last_seen.max(old.last_seen);
            if next.endpoint.is_empty() {
                next.endpoint = old.endpoint.clone();
            }
        }
        self.append(Self::reg_line(&next))?;
        self.registry.insert(next.device_id.clone(), next.clone());
        Ok(next)
    }

    /// Marks an entry lost without deleting it; `lastSeen` is retained.
    pub fn registry_mark_lost(&mut self, device_id: &str, _now: Millis) -> Result<RegistryEntry, PersistError> {
        let mut next = self
            .registry
            .get(device_id)
            .cloned()
            .ok_or_else(|| PersistError::UnknownDevice(device_id.to_string()))?;
        next.status = DeviceStatus::Lost;
        self.append(Self::reg_line(&next))?;
        self.registry.insert(next.device_id.clone(), next.clone());
        Ok(next)
    }

    pub fn registry_get(&self, device_id: &str) -> Option<&RegistryEntry> {
        self.registry.get(device_id)
    }

    /// Entries sorted by device id.
    pub fn registry_list(&self) -> Vec<RegistryEntry> {
        self.registry.values().cloned().collect()
    }

    /// Current state as lines, one per live key.
    pub fn to_lines(&self) -> String {
        let mut out = String::new();
        for (node, (ts, msg)) in &self.slots {
            out.push_str(&Self::ckpt_line(node, *ts, msg.as_ref()));
            out.push('\n');
        }
        for e in self.registry.values() {
            out.push_str(&Self::reg_line(e));
            out.push('\n');
        }
        out
    }

    /// Rewrites the backing file with one line per live key.
    pub fn compact(&mut self) -> Result<(), PersistError> {
        if let Some(path) = &self.path {
            let tmp = path.with_extension("compact");
            fs::write(&tmp, self.to_lines())?;
            fs::rename(&tmp, path)?;
        }
        Ok(())
    }
}
