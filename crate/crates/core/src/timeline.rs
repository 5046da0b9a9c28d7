//! Append-only run log and its CSV form.

use std::fmt;
use std::str::FromStr;

use thiserror::Error;

use crate::payload::{Millis, Payload};

pub const CSV_HEADER: &str = "time_ms,instance,event,node,port,topic,value";

/// Instance column value for entries produced by the simulated world.
pub const WORLD: &str = "world";

/// Prefix of the node column for deliveries to external services.
pub const SERVICE_PREFIX: &str = "svc:";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum EventKind {
    Emit,
    Deliver,
    Drop,
    Fault,
    RoleChange,
    Timer,
}

impl EventKind {
    pub fn as_str(self) -> &'static str {
        match self {
            EventKind::Emit => "emit",
            EventKind::Deliver => "deliver",
            EventKind::Drop => "drop",
            EventKind::Fault => "fault",
            EventKind::RoleChange => "role-change",
            EventKind::Timer => "timer",
        }
    }
}

impl fmt::Display for EventKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for EventKind {
    type Err = TimelineError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Ok(match s {
            "emit" => EventKind::Emit,
            "deliver" => EventKind::Deliver,
            "drop" => EventKind::Drop,
            "fault" => EventKind::Fault,
            "role-change" => EventKind::RoleChange,
            "timer" => EventKind::Timer,
            other => return Err(TimelineError::UnknownEvent(other.to_string())),
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LogEntry {
    pub time: Millis,
    pub instance: String,
    pub kind: EventKind,
    pub node: String,
    pub port: Option<usize>,
    pub topic: String,
    pub value: Option<Payload>,
}

impl LogEntry {
    pub fn new(time: Millis, instance: &str, kind: EventKind, node: &str) -> Self {
        LogEntry {
            time,
            instance: instance.to_string(),
            kind,
            node: node.to_string(),
            port: None,
            topic: String::new(),
            value: None,
        }
    }

    pub fn port(mut self, port: usize) -> Self {
        self.port = Some(port);
        self
    }

    pub fn topic(mut self, topic: &str) -> Self {
        self.topic = topic.to_string();
        self
    }

    pub fn value(mut self, value: Payload) -> Self {
        self.value = Some(value);
        self
    }

    pub fn is_service_delivery(&self) -> bool {
        self.kind == EventKind::Deliver && self.node.starts_with(SERVICE_PREFIX)
    }
}

#[derive(Debug, Error)]
pub enum TimelineError {
    #[error("timeline csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("timeline header mismatch: expected `{CSV_HEADER}`")]
    Header,
    #[error("unknown event kind `{0}`")]
    UnknownEvent(String),
    #[error("line {line}: {msg}")]
    Field { line: u64, msg: String },
}

/// Ordered record of everything a run did.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TimelineLog {
    entries: Vec<LogEntry>,
}

impl TimelineLog {
    pub fn new() -> Self {
        Self::default()
    }

    /// Appends an entry. Entries must arrive in non-decreasing time order.
    pub fn push(&mut self, entry: LogEntry) {
        debug_assert!(
            self.entries.last().is_none_or(|l| l.time <= entry.time),
            "timeline entries must be time-ordered"
        );
        self.entries.push(entry);
    }

    pub fn extend(&mut self, entries: impl IntoIterator<Item = LogEntry>) {
        for e in entries {
            self.push(e);
        }
    }

    pub fn entries(&self) -> &[LogEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn take(&mut self) -> Vec<LogEntry> {
        std::mem::take(&mut self.entries)
    }

    pub fn iter(&self) -> impl Iterator<Item = &LogEntry> {
        self.entries.iter()
    }

    pub fn of_kind(&self, kind: EventKind) -> impl Iterator<Item = &LogEntry> {
        self.entries.iter().filter(move |e| e.kind == kind)
    }

    pub fn to_csv(&self) -> String {
        let mut w = csv::WriterBuilder::new().from_writer(Vec::new());
        w.write_record(CSV_HEADER.split(',')).expect("in-memory write");
        for e in &self.entries {
            let time = e.time.to_string();
            let port = e.port.map(|p| p.to_string()).unwrap_or_default();
            let value = e.value.as_ref().map(Payload::to_json).unwrap_or_default();
            w.write_record([
                time.as_str(),
                e.instance.as_str(),
                e.kind.as_str(),
                e.node.as_str(),
                port.as_str(),
                e.topic.as_str(),
                value.as_str(),
            ])
            .expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("in-memory flush")).expect("csv output is utf-8")
    }

    pub fn from_csv(text: &str) -> Result<TimelineLog, TimelineError> {
        let mut r = csv::ReaderBuilder::new().has_headers(true).from_reader(text.as_bytes());
        let header: Vec<String> = r.headers()?.iter().map(str::to_string).collect();
        if header.join(",") != CSV_HEADER {
            return Err(TimelineError::Header);
        }
        let mut log = TimelineLog::new();
        for rec in r.records() {
            let rec = rec?;
            let line = rec.position().map(|p| p.line()).unwrap_or(0);
            let field = |msg: String| TimelineError::Field { line, msg };
            let time = rec[0].parse::<Millis>().map_err(|e| field(format!("time: {e}")))?;
            let kind: EventKind = rec[2].parse()?;
            let port = if rec[4].is_empty() {
                None
            } else {
                Some(rec[4].parse().map_err(|e| field(format!("port: {e}")))?)
            };
            let value = if rec[6].is_empty() {
                None
            } else {
                Some(Payload::from_json(&rec[6]).map_err(|e| field(format!("value: {e}")))?)
            };
            if log.entries.last().is_some_and(|l: &LogEntry| l.time > time) {
                return Err(field("entries out of time order".into()));
            }
            log.entries.push(LogEntry {
                time,
                instance: rec[1].to_string(),
                kind,
                node: rec[3].to_string(),
                port,
                topic: rec[5].to_string(),
                value,
            });
        }
        Ok(log)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn sample() -> TimelineLog {
        let mut log = TimelineLog::new();
        log.push(
            LogEntry::new(0, "a", EventKind::Emit, "n1")
                .port(0)
                .topic("lab/temp")
                .value(Payload::record([("x", 1.5.into()), ("y", "a,b".into())])),
        );
        log.push(LogEntry::new(5, WORLD, EventKind::Fault, "dev").topic("device_offline"));
        log
    }

    #[test]
    fn header_is_stable() {
        let csv = TimelineLog::new().to_csv();
        assert_eq!(csv, format!("{CSV_HEADER}\n"));
    }

    #[test]
    fn csv_round_trips_with_commas_in_values() {
        let log = sample();
        let back = TimelineLog::from_csv(&log.to_csv()).unwrap();
        assert_eq!(back, log);
    }

    #[test]
    fn rejects_wrong_header() {
        assert!(matches!(
            TimelineLog::from_csv("a,b\n1,2\n"),
            Err(TimelineError::Header)
        ));
    }

    proptest! {
        #[test]
        fn csv_round_trip(times in proptest::collection::vec(0u64..1_000_000, 0..30), v in -1e6f64..1e6) {
            let mut times = times;
            times.sort();
            let mut log = TimelineLog::new();
            for (i, t) in times.iter().enumerate() {
                log.push(LogEntry::new(*t, "i", EventKind::Deliver, &format!("n{i}")).port(i % 3).value(v.into()));
            }
            prop_assert_eq!(TimelineLog::from_csv(&log.to_csv()).unwrap(), log);
        }
    }
}
