//! Run statistics computed purely from a timeline: MTTR per failover, loss
//! per periodic source, per-instance uptime, and the mutual-exclusion
//! checks for redundant instances.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::str::FromStr;

use crate::payload::{Millis, Payload};
use crate::timeline::{EventKind, LogEntry, TimelineLog, SERVICE_PREFIX, WORLD};

const CRASH: &str = "instance_crash";
const RESTART: &str = "instance_restart";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Metric {
    Mttr,
    Loss,
}

impl FromStr for Metric {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "mttr" => Ok(Metric::Mttr),
            "loss" => Ok(Metric::Loss),
            other => Err(format!("unknown metric `{other}`")),
        }
    }
}

/// Mean and sample standard deviation (n − 1; zero for one sample).
pub fn mean_std(samples: &[f64]) -> Option<(f64, f64)> {
    if samples.is_empty() {
        return None;
    }
    let n = samples.len() as f64;
    let mean = samples.iter().sum::<f64>() / n;
    if samples.len() == 1 {
        return Some((mean, 0.0));
    }
    let var = samples.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
    Some((mean, var.sqrt()))
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Failover {
    pub crashed: String,
    pub crash_at: Millis,
    /// First service delivery by another instance at or after the crash.
    pub recovery: Option<(Millis, String)>,
}

impl Failover {
    pub fn mttr(&self) -> Option<Millis> {
        self.recovery.as_ref().map(|(t, _)| t - self.crash_at)
    }
}

fn role_of(e: &LogEntry) -> Option<&str> {
    (e.kind == EventKind::RoleChange).then_some(e.topic.as_str())
}

fn is_fault(e: &LogEntry, kind: &str) -> bool {
    e.kind == EventKind::Fault && e.instance == WORLD && e.topic == kind
}

/// Every crash of an instance that was master at the time.
pub fn failovers(log: &TimelineLog) -> Vec<Failover> {
    let entries = log.entries();
    let mut master: BTreeSet<&str> = BTreeSet::new();
    let mut out = Vec::new();
    for (i, e) in entries.iter().enumerate() {
        if let Some(role) = role_of(e) {
            if role == "master" {
                master.insert(&e.instance);
            } else {
                master.remove(e.instance.as_str());
            }
        } else if is_fault(e, CRASH) && master.remove(e.node.as_str()) {
            let recovery = entries[i + 1..]
                .iter()
                .find(|x| x.is_service_delivery() && x.instance != e.node)
                .map(|x| (x.time, x.instance.clone()));
            out.push(Failover {
                crashed: e.node.clone(),
                crash_at: e.time,
                recovery,
            });
        }
    }
    out
}

pub fn mttr_samples(log: &TimelineLog) -> Vec<Millis> {
    failovers(log).iter().filter_map(Failover::mttr).collect()
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SourceLoss {
    pub source: String,
    pub topic: String,
    /// Scheduled readings, whether emitted or suppressed while offline.
    pub expected: usize,
    /// Service deliveries carrying the source's topic.
    pub delivered: usize,
}

impl SourceLoss {
    pub fn lost(&self) -> usize {
        self.expected.saturating_sub(self.delivered)
    }
}

/// Loss for every world source whose topic reaches some external service.
pub fn loss_by_source(log: &TimelineLog) -> Vec<SourceLoss> {
    let mut sources: BTreeMap<(&str, &str), usize> = BTreeMap::new();
    let mut delivered: BTreeMap<&str, usize> = BTreeMap::new();
    for e in log.iter() {
        if e.instance == WORLD && matches!(e.kind, EventKind::Emit | EventKind::Drop) {
            *sources.entry((&e.node, &e.topic)).or_default() += 1;
        } else if e.is_service_delivery() {
            *delivered.entry(&e.topic).or_default() += 1;
        }
    }
    sources
        .into_iter()
        .filter_map(|((source, topic), expected)| {
            delivered.get(topic).map(|&d| SourceLoss {
                source: source.to_string(),
                topic: topic.to_string(),
                expected,
                delivered: d,
            })
        })
        .collect()
}

/// Time each instance spent running between its first log entry and the
/// end of the log.
pub fn uptime(log: &TimelineLog) -> BTreeMap<String, Millis> {
    let end = log.entries().last().map_or(0, |e| e.time);
    let mut up_since: BTreeMap<String, Option<Millis>> = BTreeMap::new();
    let mut total: BTreeMap<String, Millis> = BTreeMap::new();
    for e in log.iter() {
        if e.instance != WORLD {
            up_since.entry(e.instance.clone()).or_insert(Some(0));
            total.entry(e.instance.clone()).or_insert(0);
        }
        if is_fault(e, CRASH) {
            if let Some(slot) = up_since.get_mut(&e.node) {
                if let Some(s) = slot.take() {
                    *total.entry(e.node.clone()).or_default() += e.time - s;
                }
            }
        } else if is_fault(e, RESTART) {
            let slot = up_since.entry(e.node.clone()).or_insert(None);
            if slot.is_none() {
                *slot = Some(e.time);
            }
            total.entry(e.node.clone()).or_insert(0);
        }
    }
    for (inst, since) in up_since {
        if let Some(s) = since {
            *total.entry(inst).or_default() += end - s;
        }
    }
    total
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunReport {
    pub delivered: BTreeMap<String, usize>,
    pub lost: usize,
    pub mttr_samples: Vec<Millis>,
    pub uptime: BTreeMap<String, Millis>,
}

pub fn run_report(log: &TimelineLog) -> RunReport {
    let mut delivered = BTreeMap::new();
    for e in log.iter().filter(|e| e.is_service_delivery()) {
        let sink = e.node.trim_start_matches(SERVICE_PREFIX).to_string();
        *delivered.entry(sink).or_default() += 1;
    }
    RunReport {
        delivered,
        lost: loss_by_source(log).iter().map(SourceLoss::lost).sum(),
        mttr_samples: mttr_samples(log),
        uptime: uptime(log),
    }
}

fn push_stats(out: &mut String, unit: &str, samples: &[f64]) {
    if let Some((mean, std)) = mean_std(samples) {
        let _ = writeln!(out, "samples: {}", samples.len());
        let _ = writeln!(out, "mean{unit}: {mean:.1}");
        let _ = writeln!(out, "std{unit}: {std:.1}");
    }
}

/// Text report for one metric; `n/a` when the log has nothing to measure.
pub fn render_metric(log: &TimelineLog, metric: Metric) -> String {
    let mut out = String::new();
    match metric {
        Metric::Mttr => {
            let fos = failovers(log);
            let samples: Vec<f64> = fos.iter().filter_map(Failover::mttr).map(|m| m as f64).collect();
            if samples.is_empty() {
                return "mttr: n/a\n".into();
            }
            let _ = writeln!(out, "mttr");
            for f in &fos {
                match (&f.recovery, f.mttr()) {
                    (Some((_, by)), Some(m)) => {
                        let _ = writeln!(out, "  crash {} at {} -> {} after {} ms", f.crashed, f.crash_at, by, m);
                    }
                    _ => {
                        let _ = writeln!(out, "  crash {} at {} -> not recovered", f.crashed, f.crash_at);
                    }
                }
            }
            push_stats(&mut out, "_ms", &samples);
        }
        Metric::Loss => {
            let losses = loss_by_source(log);
            if losses.is_empty() {
                return "loss: n/a\n".into();
            }
            let _ = writeln!(out, "loss");
            for l in &losses {
                let _ = writeln!(
                    out,
                    "  {} ({}): expected {} delivered {} lost {}",
                    l.source,
                    l.topic,
                    l.expected,
                    l.delivered,
                    l.lost()
                );
            }
            let samples: Vec<f64> = losses.iter().map(|l| l.lost() as f64).collect();
            push_stats(&mut out, "", &samples);
        }
    }
    out
}

/// A stretch during which a shared resource was held by several instances.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Overlap {
    pub resource: String,
    pub from: Millis,
    /// End of the overlap, or the log's last timestamp if it never ended.
    pub to: Millis,
    pub instances: Vec<String>,
}

/// Walks the log one timestamp at a time and reports the intervals in which
/// two or more live instances hold the same resource, judged on the state at
/// the end of each timestamp.
fn overlaps<F>(log: &TimelineLog, mut update: F) -> Vec<Overlap>
where
    F: FnMut(&LogEntry, &mut BTreeMap<String, BTreeSet<String>>),
{
    // resource -> holders
    let mut held: BTreeMap<String, BTreeSet<String>> = BTreeMap::new();
    let mut open: BTreeMap<String, (Millis, BTreeSet<String>)> = BTreeMap::new();
    let mut done = Vec::new();
    let entries = log.entries();
    let mut i = 0;
    while i < entries.len() {
        let t = entries[i].time;
        while i < entries.len() && entries[i].time == t {
            let e = &entries[i];
            if is_fault(e, CRASH) || is_fault(e, RESTART) {
                for holders in held.values_mut() {
                    holders.remove(&e.node);
                }
            } else {
                update(e, &mut held);
            }
            i += 1;
        }
        for (res, holders) in &held {
            let shared = holders.len() >= 2;
            match (shared, open.contains_key(res)) {
                (true, false) => {
                    open.insert(res.clone(), (t, holders.clone()));
                }
                (true, true) => {
                    open.get_mut(res).expect("open").1.extend(holders.iter().cloned());
                }
                (false, true) => {
                    let (from, who) = open.remove(res).expect("open");
                    done.push(Overlap {
                        resource: res.clone(),
                        from,
                        to: t,
                        instances: who.into_iter().collect(),
                    });
                }
                (false, false) => {}
            }
        }
    }
    let end = entries.last().map_or(0, |e| e.time);
    for (res, (from, who)) in open {
        done.push(Overlap {
            resource: res,
            from,
            to: end,
            instances: who.into_iter().collect(),
        });
    }
    done.sort_by(|a, b| (a.from, &a.resource).cmp(&(b.from, &b.resource)));
    done
}

/// Intervals with more than one live master.
pub fn dual_masters(log: &TimelineLog) -> Vec<Overlap> {
    overlaps(log, |e, held| {
        if let Some(role) = role_of(e) {
            let holders = held.entry("master".into()).or_default();
            if role == "master" {
                holders.insert(e.instance.clone());
            } else {
                holders.remove(&e.instance);
            }
        }
    })
}

/// Flow-control acknowledgement `{action, flow, changed}` carried by an emit.
fn flow_ack(e: &LogEntry) -> Option<(&str, bool)> {
    if e.kind != EventKind::Emit {
        return None;
    }
    let v = e.value.as_ref()?;
    v.get("changed")?;
    let enabled = match v.get("action")?.as_str()? {
        "enable" => true,
        "disable" => false,
        _ => return None,
    };
    Some((v.get("flow").and_then(Payload::as_str)?, enabled))
}

/// Intervals in which a flow group was enabled on more than one live
/// instance, as evidenced by flow-control acknowledgements.
pub fn shared_flow_groups(log: &TimelineLog) -> Vec<Overlap> {
    overlaps(log, |e, held| {
        if let Some((flow, enabled)) = flow_ack(e) {
            let holders = held.entry(flow.to_string()).or_default();
            if enabled {
                holders.insert(e.instance.clone());
            } else {
                holders.remove(&e.instance);
            }
        }
    })
}

/// Overlaps not contained in `[t − window, t + window]` of some role change.
pub fn safety_violations(log: &TimelineLog, window: Millis) -> Vec<Overlap> {
    let changes: Vec<Millis> = log.of_kind(EventKind::RoleChange).map(|e| e.time).collect();
    let covered = |o: &Overlap| {
        changes
            .iter()
            .any(|&c| o.from >= c.saturating_sub(window) && o.to <= c + window)
    };
    let mut v: Vec<Overlap> = shared_flow_groups(log).into_iter().filter(|o| !covered(o)).collect();
    v.extend(dual_masters(log).into_iter().filter(|o| o.to - o.from > window));
    v
}

#[cfg(test)]
mod tests {
    use super::*;

    fn entry(t: Millis, inst: &str, kind: EventKind, node: &str) -> LogEntry {
        LogEntry::new(t, inst, kind, node)
    }

    fn svc(t: Millis, inst: &str, topic: &str) -> LogEntry {
        entry(t, inst, EventKind::Deliver, "svc:endpoint").topic(topic)
    }

    fn role(t: Millis, inst: &str, r: &str) -> LogEntry {
        entry(t, inst, EventKind::RoleChange, "cluster").topic(r)
    }

    fn crash(t: Millis, inst: &str) -> LogEntry {
        entry(t, WORLD, EventKind::Fault, inst).topic(CRASH)
    }

    fn log_of(entries: Vec<LogEntry>) -> TimelineLog {
        let mut l = TimelineLog::new();
        l.extend(entries);
        l
    }

    #[test]
    fn stats() {
        assert_eq!(mean_std(&[]), None);
        assert_eq!(mean_std(&[4.0]), Some((4.0, 0.0)));
        let (m, s) = mean_std(&[2.0, 4.0, 4.0, 4.0, 5.0, 5.0, 7.0, 9.0]).unwrap();
        assert_eq!(m, 5.0);
        assert!((s - (32.0f64 / 7.0).sqrt()).abs() < 1e-12);
    }

    #[test]
    fn one_failover_sample() {
        let log = log_of(vec![
            role(1, "a", "master"),
            svc(60_000, "a", "t"),
            crash(300_000, "a"),
            role(309_000, "b", "master"),
            svc(309_000, "b", "role"),
        ]);
        assert_eq!(mttr_samples(&log), vec![9_000]);
        assert!(render_metric(&log, Metric::Mttr).contains("mean_ms: 9000.0"));
    }

    #[test]
    fn no_faults_is_na() {
        let log = log_of(vec![role(1, "a", "master"), svc(5, "a", "t")]);
        assert_eq!(render_metric(&log, Metric::Mttr), "mttr: n/a\n");
        assert_eq!(render_metric(&TimelineLog::new(), Metric::Loss), "loss: n/a\n");
    }

    #[test]
    fn standby_crash_is_not_a_failover() {
        let log = log_of(vec![role(1, "a", "master"), crash(10, "b"), svc(20, "a", "t")]);
        assert!(failovers(&log).is_empty());
    }

    #[test]
    fn loss_counts_suppressed_ticks() {
        let mut v = Vec::new();
        for k in 1..=22u64 {
            let t = k * 60_000;
            if k == 10 {
                v.push(entry(t, WORLD, EventKind::Drop, "s").topic("lab/temp"));
            } else {
                v.push(entry(t, WORLD, EventKind::Emit, "s").topic("lab/temp"));
                v.push(svc(t, "a", "lab/temp"));
            }
        }
        let l = loss_by_source(&log_of(v));
        assert_eq!(l.len(), 1);
        assert_eq!((l[0].expected, l[0].delivered, l[0].lost()), (22, 21, 1));
    }

    #[test]
    fn uptime_excludes_outage() {
        let log = log_of(vec![
            entry(0, "a", EventKind::Timer, "n"),
            crash(100, "a"),
            entry(300, WORLD, EventKind::Fault, "a").topic(RESTART),
            entry(1_000, "a", EventKind::Timer, "n"),
        ]);
        assert_eq!(uptime(&log)["a"], 800);
    }

    fn ack(t: Millis, inst: &str, action: &str) -> LogEntry {
        let v = Payload::record([
            ("action", Payload::from(action)),
            ("flow", Payload::from("ingest")),
            ("changed", Payload::Bool(true)),
        ]);
        entry(t, inst, EventKind::Emit, "flow-control").port(0).value(v)
    }

    #[test]
    fn shared_group_detected_and_excused_near_role_change() {
        let log = log_of(vec![
            ack(0, "a", "enable"),
            ack(0, "b", "disable"),
            ack(50_000, "b", "enable"),
            ack(52_000, "a", "disable"),
        ]);
        let o = shared_flow_groups(&log);
        assert_eq!(o.len(), 1);
        assert_eq!((o[0].from, o[0].to), (50_000, 52_000));
        assert_eq!(safety_violations(&log, 15_000).len(), 1);
        let mut with_role = log.entries().to_vec();
        with_role.insert(2, role(50_000, "b", "master"));
        assert!(safety_violations(&log_of(with_role), 15_000).is_empty());
    }

    #[test]
    fn crash_releases_held_groups() {
        let log = log_of(vec![
            ack(0, "a", "enable"),
            crash(10, "a"),
            ack(20, "b", "enable"),
            entry(30, "b", EventKind::Timer, "x"),
        ]);
        assert!(shared_flow_groups(&log).is_empty());
    }
}
