use std::path::Path;
use std::process::{Command, Output};

fn dmsim(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dmsim")).args(args).output().expect("binary runs")
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn make_trace(dir: &Path, name: &str, seed: &str) -> std::path::PathBuf {
    let params = dir.join("params.json");
    std::fs::write(&params, r#"{"num_accesses": 2000, "footprint_pages": 128, "spatial_locality": 0.7}"#).unwrap();
    let out = dir.join(name);
    let o = dmsim(&["gen-trace", "--params", s(&params), "--seed", seed, "--out", s(&out)]);
    assert!(o.status.success(), "{}", stderr(&o));
    out
}

#[test]
fn gen_trace_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let a = make_trace(dir.path(), "a.trace", "4");
    let b = make_trace(dir.path(), "b.trace", "4");
    let c = make_trace(dir.path(), "c.trace", "5");
    let text = std::fs::read_to_string(&a).unwrap();
    assert!(text.contains("footprint_pages=128"));
    assert_eq!(text, std::fs::read_to_string(&b).unwrap());
    assert_ne!(text, std::fs::read_to_string(&c).unwrap());
}

#[test]
fn simulate_writes_scheme_and_local_rows_and_grant_log() {
    let dir = tempfile::tempdir().unwrap();
    let trace = make_trace(dir.path(), "t.trace", "1");
    let cfg = dir.path().join("cfg.json");
    std::fs::write(&cfg, r#"{"scheme": "daemon", "footprint_pages": 128, "net_bandwidth_factor": 8}"#).unwrap();
    let out = dir.path().join("r.csv");
    let log = dir.path().join("grants.csv");
    let o = dmsim(&["simulate", "--config", s(&cfg), "--trace", s(&trace), "--out", s(&out), "--grant-log", s(&log)]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = std::fs::read_to_string(&out).unwrap();
    let lines: Vec<_> = text.lines().collect();
    assert_eq!(lines.len(), 3);
    assert!(lines[0].starts_with("workload,scheme,"));
    assert!(lines[1].starts_with("cfg,local,"));
    assert!(lines[1].contains(",1.000000,"));
    assert!(lines[2].starts_with("cfg,daemon,"));
    let grants = std::fs::read_to_string(&log).unwrap();
    assert_eq!(grants.lines().next(), Some("time_ns,channel,kind,bytes"));
    assert!(grants.lines().count() > 1);

    let jl = dir.path().join("r.jsonl");
    let o = dmsim(&["simulate", "--config", s(&cfg), "--trace", s(&trace), "--out", s(&jl), "--format", "jsonl", "--jobs", "2"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = std::fs::read_to_string(&jl).unwrap();
    assert_eq!(text.lines().count(), 2);
    assert!(text.lines().all(|l| l.starts_with("{\"workload\":\"cfg\"")));
}

#[test]
fn simulate_rejects_bad_inputs() {
    let dir = tempfile::tempdir().unwrap();
    let trace = make_trace(dir.path(), "t.trace", "1");
    let out = dir.path().join("r.csv");

    let cfg = dir.path().join("bad.json");
    std::fs::write(&cfg, r#"{"net_bandwith_factor": 8}"#).unwrap();
    let o = dmsim(&["simulate", "--config", s(&cfg), "--trace", s(&trace), "--out", s(&out)]);
    assert!(!o.status.success());
    assert!(stderr(&o).contains("net_bandwith_factor"), "{}", stderr(&o));

    let cfg = dir.path().join("two.json");
    std::fs::write(&cfg, r#"{"num_cores": 2}"#).unwrap();
    let o = dmsim(&["simulate", "--config", s(&cfg), "--trace", s(&trace), "--out", s(&out)]);
    assert!(!o.status.success());
    assert!(stderr(&o).contains("num_cores"), "{}", stderr(&o));
    assert!(!out.exists());
}

#[test]
fn experiment_runs_cross_product_deterministically() {
    let dir = tempfile::tempdir().unwrap();
    make_trace(dir.path(), "t.trace", "2");
    let spec = dir.path().join("spec.json");
    std::fs::write(
        &spec,
        r#"{
            "base": {"llc_capacity_lines": 256},
            "workloads": [
                {"name": "syn", "params": {"num_accesses": 1500, "footprint_pages": 64}},
                {"name": "file", "trace": "t.trace"}
            ],
            "compressibility": {"uniform": [1.0, 4.0]},
            "schemes": ["local", "page", "daemon"],
            "net_bandwidth_factors": [2, 8],
            "output": "out.csv"
        }"#,
    )
    .unwrap();
    let o = dmsim(&["experiment", "--spec", s(&spec)]);
    assert!(o.status.success(), "{}", stderr(&o));
    let first = std::fs::read(dir.path().join("out.csv")).unwrap();
    assert_eq!(String::from_utf8_lossy(&first).lines().count(), 13);

    let again = dir.path().join("again.csv");
    let o = dmsim(&["experiment", "--spec", s(&spec), "--out", s(&again), "--jobs", "3"]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(first, std::fs::read(&again).unwrap());
}

#[test]
fn experiment_failures_name_the_problem_and_leave_no_output() {
    let dir = tempfile::tempdir().unwrap();
    let spec = dir.path().join("spec.json");
    let out = dir.path().join("out.csv");
    std::fs::write(&spec, r#"{"workloads": [{"name": "w", "params": {"num_accesses": 10}}], "schemes": ["page"]}"#).unwrap();
    let o = dmsim(&["experiment", "--spec", s(&spec), "--out", s(&out)]);
    assert!(!o.status.success());
    assert!(stderr(&o).contains("local"), "{}", stderr(&o));
    assert!(!out.exists());

    std::fs::write(&spec, r#"{"workloads": [{"name": "gone", "trace": "missing.trace"}]}"#).unwrap();
    let o = dmsim(&["experiment", "--spec", s(&spec), "--out", s(&out)]);
    assert!(!o.status.success());
    assert!(stderr(&o).contains("workload=gone"), "{}", stderr(&o));
    assert!(!out.exists());
}
