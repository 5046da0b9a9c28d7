mod common;

use common::{emits, field, graph, Driver};
use proptest::prelude::*;
use selfheal_core::engine::run_until;
use selfheal_core::timeline::EventKind;
use selfheal_core::{validate_graph, Payload};

#[test]
fn empty_graph_emits_nothing() {
    let log = run_until(&graph(r#"{"nodes":[]}"#), 1_000).unwrap();
    assert!(log.is_empty());
}

const INJECT: &str = r#"{"nodes":[
  {"id":"tick","type":"inject","config":{"period":60000,"topic":"t"},"wires":[[["sink",0]]]},
  {"id":"sink","type":"debug"}
]}"#;

#[test]
fn periodic_inject_fires_once_per_period() {
    let log = run_until(&graph(INJECT), 300_000).unwrap();
    let times: Vec<u64> = emits(&log, "main", "tick", 0).map(|e| e.time).collect();
    assert_eq!(times, vec![60_000, 120_000, 180_000, 240_000, 300_000]);
    assert_eq!(log.of_kind(EventKind::Deliver).count(), 5);
}

#[test]
fn reruns_are_identical() {
    let g = graph(INJECT);
    assert_eq!(
        run_until(&g, 600_000).unwrap().to_csv(),
        run_until(&g, 600_000).unwrap().to_csv()
    );
}

const FIVE_FOUR: &str = r#"{"nodes":[
  {"id":"in","type":"mqtt-in","config":{"topic":"lab/#"},"wires":[[["th",0],["hb",0]]]},
  {"id":"th","type":"threshold-check","config":{"low":0,"high":10},"wires":[[["out",0]],[["alarm",0]]]},
  {"id":"hb","type":"heartbeat","config":{"timeout":5000}},
  {"id":"out","type":"debug"},
  {"id":"alarm","type":"debug"}
]}"#;

#[test]
fn parses_five_nodes_four_wires() {
    let g = graph(FIVE_FOUR);
    assert_eq!(g.nodes.len(), 5);
    assert_eq!(g.wires.len(), 4);
    assert!(validate_graph(&g)
        .iter()
        .all(|d| d.severity != selfheal_core::flow::Severity::Error));
}

#[test]
fn every_emit_reaches_each_wired_ingress() {
    let mut d = Driver::new(FIVE_FOUR);
    for (i, v) in [3.0, 12.0, 7.0].into_iter().enumerate() {
        d.send(i as u64 * 1_000, "in", v);
    }
    d.advance(20_000);
    let g = graph(FIVE_FOUR);
    let entries = d.log().entries();
    for (i, e) in entries.iter().enumerate() {
        if e.kind != EventKind::Emit {
            continue;
        }
        let port = e.port.unwrap();
        let targets: Vec<_> = g.wires_from(&e.node, port).collect();
        // Deliveries for an emit are logged right after it, in wire order.
        let after: Vec<_> = entries[i + 1..]
            .iter()
            .filter(|x| x.time == e.time && matches!(x.kind, EventKind::Deliver | EventKind::Drop))
            .take(targets.len())
            .collect();
        assert_eq!(after.len(), targets.len(), "emit {e:?}");
        for (w, x) in targets.iter().zip(after) {
            assert_eq!((x.node.as_str(), x.port), (w.to.0.as_str(), Some(w.to.1)));
            assert_eq!(x.value, e.value);
        }
    }
}

const GROUPS: &str = r#"{"nodes":[
  {"id":"ctl","type":"flow-control","flow":"control","wires":[[["acks",0]],[["errs",0]]]},
  {"id":"acks","type":"debug","flow":"control"},
  {"id":"errs","type":"debug","flow":"control"},
  {"id":"tick","type":"inject","flow":"work","config":{"period":1000},"wires":[[["sink",0]]]},
  {"id":"sink","type":"debug","flow":"work"}
]}"#;

fn command(action: &str, flow: &str) -> Payload {
    Payload::record([("action", Payload::from(action)), ("flow", Payload::from(flow))])
}

#[test]
fn disabled_group_drops_timers_until_restarted() {
    let mut d = Driver::new(GROUPS);
    d.advance(2_000);
    d.send(2_500, "ctl", command("disable", "work"));
    d.advance(5_000);
    d.send(5_500, "ctl", command("enable", "work"));
    d.advance(7_000);
    let log = d.log();
    let ticks: Vec<u64> = emits(log, "main", "tick", 0).map(|e| e.time).collect();
    // Re-enabling restarts the group, so the period re-phases from 5_500.
    assert_eq!(ticks, vec![1_000, 2_000, 6_500]);
    let dropped: Vec<u64> = log
        .of_kind(EventKind::Drop)
        .filter(|e| e.node == "tick")
        .map(|e| e.time)
        .collect();
    // The pending tick is consumed as a drop and not re-armed while disabled.
    assert_eq!(dropped, vec![3_000]);
}

#[test]
fn flow_control_acks_report_change_and_reject_unknown_groups() {
    let mut d = Driver::new(GROUPS);
    d.send(0, "ctl", command("disable", "work"));
    d.send(1, "ctl", command("disable", "work"));
    d.send(2, "ctl", command("enable", "nowhere"));
    let changed: Vec<Payload> = emits(d.log(), "main", "ctl", 0).map(|e| field(e, "changed")).collect();
    assert_eq!(changed, vec![Payload::Bool(true), Payload::Bool(false)]);
    assert_eq!(emits(d.log(), "main", "ctl", 1).count(), 1);
    assert_eq!(d.engine.flow_enabled("work"), Some(false));
}

const AUDIT: &str = r#"{"nodes":[
  {"id":"audit","type":"action-audit","config":{"timeout":1000},"wires":[[["ok",0]],[["failed",0]]]},
  {"id":"ok","type":"debug"},
  {"id":"failed","type":"debug"}
]}"#;

#[test]
fn action_audit_confirms_or_times_out() {
    let mut d = Driver::new(AUDIT);
    d.send(0, "audit", "restart pump");
    d.advance(500);
    d.engine
        .deliver_external(
            "audit",
            1,
            selfheal_core::Envelope::new(500, "pump", 0, "t", Payload::from("done")),
            &mut selfheal_core::DetachedHost,
        )
        .unwrap();
    d.send(2_000, "audit", "restart fan");
    d.advance(10_000);
    let log = d.log();
    assert_eq!(
        emits(log, "main", "audit", 0).map(|e| e.time).collect::<Vec<_>>(),
        vec![500]
    );
    assert_eq!(
        emits(log, "main", "audit", 1).map(|e| e.time).collect::<Vec<_>>(),
        vec![3_000]
    );
}

proptest! {
    #[test]
    fn inject_count_matches_elapsed_periods(period in 1u64..5_000, t_end in 0u64..50_000) {
        let doc = format!(
            r#"{{"nodes":[{{"id":"tick","type":"inject","config":{{"period":{period}}}}}]}}"#
        );
        let log = run_until(&graph(&doc), t_end).unwrap();
        prop_assert_eq!(emits(&log, "main", "tick", 0).count() as u64, t_end / period);
    }
}
