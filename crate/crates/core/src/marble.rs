//! Text marble diagrams: one row per emitting port, one column per time
//! bucket.
//!
//! Rows come from emits (world sources by id, node ports as `node.port`)
//! and from deliveries to external services (`svc:<id>`). Cells show `.`
//! for nothing, `o` for one message, the digit for 2–9, `#` for ten or more.

use std::collections::BTreeSet;
use std::fmt::Write as _;

use thiserror::Error;

use crate::payload::Millis;
use crate::timeline::{EventKind, LogEntry, TimelineLog, WORLD};

pub const FALLBACK_BUCKET: Millis = 1_000;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum MarbleError {
    #[error("unknown node `{0}` in filter")]
    UnknownNode(String),
    #[error("bucket width must be > 0")]
    ZeroBucket,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MarbleRow {
    pub label: String,
    /// The node id the row belongs to, for filtering.
    pub node: String,
    pub cells: Vec<usize>,
}

impl MarbleRow {
    pub fn total(&self) -> usize {
        self.cells.iter().sum()
    }

    pub fn glyphs(&self) -> String {
        self.cells.iter().map(|&n| glyph(n)).collect()
    }
}

pub fn glyph(n: usize) -> char {
    match n {
        0 => '.',
        1 => 'o',
        2..=9 => char::from_digit(n as u32, 10).expect("digit"),
        _ => '#',
    }
}

/// A quarter of the smallest positive period.
pub fn bucket_for_periods(periods: impl IntoIterator<Item = Millis>) -> Millis {
    periods
        .into_iter()
        .filter(|&p| p > 0)
        .min()
        .map_or(FALLBACK_BUCKET, |p| (p / 4).max(1))
}

/// Bucket inferred from a timeline alone: a quarter of the smallest gap
/// between consecutive emissions of one world source.
pub fn infer_bucket(log: &TimelineLog) -> Millis {
    let mut last: std::collections::BTreeMap<&str, Millis> = Default::default();
    let mut gaps = Vec::new();
    for e in log.iter().filter(|e| e.instance == WORLD && e.kind == EventKind::Emit) {
        if let Some(prev) = last.insert(&e.node, e.time) {
            gaps.push(e.time - prev);
        }
    }
    bucket_for_periods(gaps)
}

fn row_key(e: &LogEntry, multi: bool) -> Option<(String, String)> {
    let prefix = |label: String| {
        if multi && e.instance != WORLD {
            format!("{}/{}", e.instance, label)
        } else {
            label
        }
    };
    match e.kind {
        EventKind::Emit if e.instance == WORLD => Some((e.node.clone(), e.node.clone())),
        EventKind::Emit => {
            let port = e.port.unwrap_or(0);
            Some((prefix(format!("{}.{}", e.node, port)), e.node.clone()))
        }
        EventKind::Deliver if e.is_service_delivery() => Some((prefix(e.node.clone()), e.node.clone())),
        _ => None,
    }
}

pub fn marble_rows(
    log: &TimelineLog,
    bucket: Millis,
    filter: Option<&[String]>,
) -> Result<Vec<MarbleRow>, MarbleError> {
    if bucket == 0 {
        return Err(MarbleError::ZeroBucket);
    }
    let instances: BTreeSet<&str> = log
        .iter()
        .map(|e| e.instance.as_str())
        .filter(|i| *i != WORLD)
        .collect();
    let multi = instances.len() > 1;
    let width = log.entries().last().map_or(0, |e| (e.time / bucket) as usize + 1);
    let mut rows: Vec<MarbleRow> = Vec::new();
    for e in log.iter() {
        let Some((label, node)) = row_key(e, multi) else {
            continue;
        };
        let idx = match rows.iter().position(|r| r.label == label) {
            Some(i) => i,
            None => {
                rows.push(MarbleRow {
                    label,
                    node,
                    cells: vec![0; width],
                });
                rows.len() - 1
            }
        };
        rows[idx].cells[(e.time / bucket) as usize] += 1;
    }
    if let Some(filter) = filter {
        for want in filter {
            if !rows.iter().any(|r| &r.node == want) {
                return Err(MarbleError::UnknownNode(want.clone()));
            }
        }
        rows.retain(|r| filter.contains(&r.node));
    }
    Ok(rows)
}

pub fn render_marble(log: &TimelineLog, bucket: Millis, filter: Option<&[String]>) -> Result<String, MarbleError> {
    let rows = marble_rows(log, bucket, filter)?;
    if rows.is_empty() {
        return Ok(String::new());
    }
    let pad = rows.iter().map(|r| r.label.chars().count()).max().unwrap_or(0);
    let mut out = String::new();
    let _ = writeln!(out, "{:pad$} | bucket {} ms", "", bucket);
    for r in &rows {
        let _ = writeln!(out, "{:pad$} | {}", r.label, r.glyphs());
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn log_of(entries: Vec<LogEntry>) -> TimelineLog {
        let mut l = TimelineLog::new();
        l.extend(entries);
        l
    }

    #[test]
    fn glyph_scale() {
        let s: String = [0, 1, 2, 9, 10, 42].into_iter().map(glyph).collect();
        assert_eq!(s, ".o29##");
    }

    #[test]
    fn single_emission_one_row() {
        let log = log_of(vec![LogEntry::new(2_500, "main", EventKind::Emit, "inject").port(0)]);
        let out = render_marble(&log, 1_000, None).unwrap();
        let lines: Vec<&str> = out.lines().collect();
        assert_eq!(lines.len(), 2);
        assert!(lines[1].ends_with("| ..o"));
    }

    #[test]
    fn empty_is_empty() {
        assert_eq!(render_marble(&TimelineLog::new(), 10, None).unwrap(), "");
    }

    #[test]
    fn filter_and_unknown_node() {
        let log = log_of(vec![
            LogEntry::new(0, "main", EventKind::Emit, "a").port(0),
            LogEntry::new(0, "main", EventKind::Emit, "b").port(1),
        ]);
        let rows = marble_rows(&log, 10, Some(&["b".to_string()])).unwrap();
        assert_eq!(rows.len(), 1);
        assert_eq!(rows[0].label, "b.1");
        assert_eq!(
            marble_rows(&log, 10, Some(&["zzz".to_string()])),
            Err(MarbleError::UnknownNode("zzz".into()))
        );
    }

    #[test]
    fn buckets() {
        assert_eq!(bucket_for_periods([60_000, 15_000]), 3_750);
        assert_eq!(bucket_for_periods([]), FALLBACK_BUCKET);
        let log = log_of(vec![
            LogEntry::new(60_000, WORLD, EventKind::Emit, "s"),
            LogEntry::new(120_000, WORLD, EventKind::Emit, "s"),
        ]);
        assert_eq!(infer_bucket(&log), 15_000);
    }
}
