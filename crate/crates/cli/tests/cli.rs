use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("../core/fixtures")
        .join(name)
}

fn selfheal(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_selfheal"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn run_c(seed: &str, extra: &[&str]) -> Output {
    let flow = fixture("scenario-c.flow.json");
    let scenario = fixture("scenario-c.json");
    let mut args = vec![
        "run",
        "--flow",
        path(&flow),
        "--flow",
        path(&flow),
        "--scenario",
        path(&scenario),
        "--seed",
        seed,
    ];
    args.extend_from_slice(extra);
    selfheal(&args)
}

#[test]
fn run_is_deterministic_per_seed() {
    let a = run_c("7", &[]);
    let b = run_c("7", &[]);
    let c = run_c("8", &[]);
    assert!(a.status.success());
    assert_eq!(a.stdout, b.stdout);
    assert_ne!(a.stdout, c.stdout);
    let text = String::from_utf8(a.stdout).unwrap();
    assert!(text.starts_with("time_ms,instance,event,node,port,topic,value\n"));
}

#[test]
fn run_writes_timeline_and_report_then_reports_from_it() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("c.csv");
    let r = run_c("1", &["--out", path(&out)]);
    assert!(r.status.success(), "{}", String::from_utf8_lossy(&r.stderr));
    let report = std::fs::read_to_string(dir.path().join("c.report.txt")).unwrap();
    assert!(report.contains("mttr"));
    assert!(report.contains("loss"));

    let mttr = selfheal(&["report", "--timeline", path(&out), "--metric", "mttr"]);
    assert!(mttr.status.success());
    let text = String::from_utf8(mttr.stdout).unwrap();
    assert!(text.contains("13001"), "{text}");

    let marble = selfheal(&["marble", "--timeline", path(&out), "--node", "endpoint"]);
    assert!(marble.status.success());
    let text = String::from_utf8(marble.stdout).unwrap();
    assert!(text.lines().count() >= 2, "{text}");
    assert!(text.lines().skip(1).all(|l| l.contains("endpoint")));
}

#[test]
fn marble_format_for_scenario_b() {
    let r = selfheal(&[
        "run",
        "--flow",
        path(&fixture("scenario-b.flow.json")),
        "--scenario",
        path(&fixture("scenario-b.json")),
        "--seed",
        "1",
        "--format",
        "marble",
    ]);
    assert!(r.status.success());
    let text = String::from_utf8(r.stdout).unwrap();
    assert!(text.lines().next().unwrap().contains("bucket 3750 ms"), "{text}");
    assert!(text.lines().any(|l| l.starts_with("svc:validator-3")));
}

#[test]
fn validate_accepts_bundled_and_rejects_bad_flows() {
    let ok = selfheal(&["validate", "--flow", path(&fixture("scenario-a.flow.json"))]);
    assert!(ok.status.success());
    assert!(String::from_utf8(ok.stdout).unwrap().contains("ok ("));

    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.json");
    std::fs::write(
        &bad,
        r#"{"nodes":[{"id":"t","type":"threshold-check","config":{"low":9,"high":1}}]}"#,
    )
    .unwrap();
    let r = selfheal(&["validate", "--flow", path(&bad)]);
    assert_eq!(r.status.code(), Some(2));

    let r = selfheal(&[
        "run",
        "--flow",
        path(&bad),
        "--scenario",
        path(&fixture("scenario-a.json")),
        "--seed",
        "1",
    ]);
    assert_eq!(r.status.code(), Some(2));
    assert!(r.stdout.is_empty());
}

#[test]
fn missing_inputs_exit_2() {
    let r = selfheal(&["validate", "--flow", "/nonexistent/flow.json"]);
    assert_eq!(r.status.code(), Some(2));
    let r = selfheal(&["report", "--timeline", "/nonexistent/t.csv", "--metric", "loss"]);
    assert_eq!(r.status.code(), Some(2));
}

#[test]
fn unwritable_output_exits_3() {
    let r = run_c("1", &["--out", "/nonexistent/dir/out.csv"]);
    assert_eq!(r.status.code(), Some(3));
}
