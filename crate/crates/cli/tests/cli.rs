use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

const WORKED: &str = r#"[
  {"id": 1, "wcet": 3, "deadline": 5, "period": 5},
  {"id": 2, "wcet": 4, "deadline": 8, "period": 8},
  {"id": 3, "wcet": 1, "deadline": 10, "period": 10}
]"#;

fn mote(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mote")).args(args).output().unwrap()
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn tasks(dir: &TempDir) -> PathBuf {
    let path = dir.path().join("tasks.json");
    std::fs::write(&path, WORKED).unwrap();
    path
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn analyze_reports_the_privileged_split() {
    let dir = TempDir::new().unwrap();
    let out = mote(&["analyze", s(&tasks(&dir)), "--json", "--continuous"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let v: serde_json::Value = serde_json::from_str(&stdout(&out)).unwrap();
    assert_eq!(v["m"], 2);
    assert_eq!(v["k_opt"], 2);
    assert_eq!(v["s_ol"], "3/5");
    assert_eq!(v["edf_speed"], "9/10");
    assert_eq!(v["privileged_ranks"], serde_json::json!([1]));
}

#[test]
fn simulated_traces_validate_and_tampering_is_rejected() {
    let dir = TempDir::new().unwrap();
    let ts = tasks(&dir);
    let trace = dir.path().join("trace.json");
    let out = mote(&[
        "simulate",
        s(&ts),
        "--method",
        "mote",
        "--model",
        "tm5400",
        "--acet-seed",
        "7",
        "--format",
        "json",
        "-o",
        s(&trace),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));

    let ok = mote(&["validate", s(&trace), "--tasks", s(&ts), "--model", "tm5400"]);
    assert_eq!(ok.status.code(), Some(0), "{}", stdout(&ok));
    let report: serde_json::Value = serde_json::from_str(&stdout(&ok)).unwrap();
    assert_eq!(report["ok"], true);

    // Drop the first completion so a job is left unfinished.
    let mut v: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&trace).unwrap()).unwrap();
    let events = v["events"].as_array_mut().unwrap();
    let first = events.iter().position(|e| e["kind"] == "complete").unwrap();
    events.remove(first);
    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, v.to_string()).unwrap();
    let out = mote(&["validate", s(&bad), "--tasks", s(&ts), "--model", "tm5400"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn csv_traces_validate_with_an_explicit_horizon() {
    let dir = TempDir::new().unwrap();
    let ts = tasks(&dir);
    let trace = dir.path().join("trace.csv");
    let out = mote(&[
        "simulate",
        s(&ts),
        "--method",
        "offline_edfk",
        "--continuous",
        "-o",
        s(&trace),
    ]);
    assert!(out.status.success());
    let csv = std::fs::read_to_string(&trace).unwrap();
    assert!(csv.lines().count() > 1);

    let out = mote(&[
        "validate",
        s(&trace),
        "--tasks",
        s(&ts),
        "--continuous",
        "--k-opt",
        "2",
        "--horizon",
        "40",
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", stdout(&out));
    let out = mote(&["validate", s(&trace), "--tasks", s(&ts), "--continuous"]);
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn experiment_writes_every_requested_output() {
    let dir = TempDir::new().unwrap();
    let p = |name: &str| dir.path().join(name);
    let out = Command::new(env!("CARGO_BIN_EXE_mote"))
        .env("MOTE_WORKERS", "2")
        .args([
            "experiment",
            "--systems",
            "4",
            "--seed",
            "3",
            "--report-json",
            s(&p("r.json")),
            "--report-csv",
            s(&p("r.csv")),
            "--summary-csv",
            s(&p("s.csv")),
            "--emit-plot-data",
            s(&p("plot.csv")),
        ])
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(stdout(&out).contains("MOTE"));

    let plot = std::fs::read_to_string(p("plot.csv")).unwrap();
    assert_eq!(plot.lines().next(), Some("system,method,model,savings"));
    // 4 systems, 2 models, 4 methods.
    assert_eq!(plot.lines().count(), 1 + 4 * 2 * 4);
    let report: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(p("r.json")).unwrap()).unwrap();
    assert_eq!(report["systems"].as_array().unwrap().len(), 4);
    assert!(p("r.csv").exists() && p("s.csv").exists());
}

#[test]
fn experiment_is_reproducible_from_its_seed() {
    let run = || {
        stdout(&mote(&[
            "experiment",
            "--systems",
            "3",
            "--seed",
            "11",
            "--models",
            "sa1100",
        ]))
    };
    assert_eq!(run(), run());
}

#[test]
fn bad_inputs_map_to_distinct_exit_codes() {
    let dir = TempDir::new().unwrap();
    let missing = dir.path().join("missing.json");
    assert_eq!(mote(&["analyze", s(&missing)]).status.code(), Some(3));

    let heavy = dir.path().join("heavy.json");
    std::fs::write(
        &heavy,
        r#"[{"id": 1, "wcet": 2, "deadline": 2, "period": 2}, {"id": 2, "wcet": 2, "deadline": 2, "period": 2}]"#,
    )
    .unwrap();
    assert_eq!(
        mote(&["analyze", s(&heavy), "--processors", "1"]).status.code(),
        Some(2)
    );

    let out = mote(&["experiment", "--systems", "2", "--methods", "mote"]);
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn continuous_experiments_use_an_analytic_model() {
    let out = mote(&["experiment", "--systems", "2", "--continuous"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(stdout(&out).lines().skip(1).all(|l| l.starts_with("cubic")));
    let out = mote(&["experiment", "--systems", "2", "--continuous", "--models", "sa1100"]);
    assert_eq!(out.status.code(), Some(3));
}
