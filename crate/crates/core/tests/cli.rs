use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn bohmlab(config: &str, dir: &Path, extra: &[&str]) -> Output {
    let cfg = dir.join("run.cfg");
    fs::write(&cfg, config).unwrap();
    Command::new(env!("CARGO_BIN_EXE_bohmlab"))
        .arg("--config")
        .arg(&cfg)
        .arg("--out")
        .arg(dir.join("out"))
        .args(extra)
        .output()
        .unwrap()
}

fn summary(dir: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(dir.join("out/summary.json")).unwrap()).unwrap()
}

#[test]
fn nogo_writes_certificate() {
    let dir = tempfile::tempdir().unwrap();
    let out = bohmlab("[run]\ncommand = nogo\n", dir.path(), &[]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let s = summary(dir.path());
    assert_eq!(s["empirical"]["consistent_assignments"], 0);
    assert_eq!(s["empirical"]["examined"], 512);
    assert_eq!(s["checks_passed"]["all"], true);
    let cert: Value = serde_json::from_str(&fs::read_to_string(dir.path().join("out/certificate.json")).unwrap()).unwrap();
    assert_eq!(cert["consistent_assignments"], 0);
    assert!(fs::read_to_string(dir.path().join("out/certificate.txt")).unwrap().contains("column 3"));
}

#[test]
fn born_check_quarter() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = "[run]\ncommand = born-check\nseed = 2024\nn_samples = 10000\n[spin]\np_up = 0.25\n";
    let out = bohmlab(cfg, dir.path(), &[]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let s = summary(dir.path());
    let p = s["theoretical"]["p_up"]["value"].as_f64().unwrap();
    assert!((p - 0.25).abs() < 1e-12);
    assert_eq!(s["theoretical"]["p_up"]["eq"], "eq:prob");
    let f = s["empirical"]["freq_up"].as_f64().unwrap();
    assert!((f - 0.25).abs() <= 3.0 * (0.25f64 * 0.75 / 1e4).sqrt());
    for key in ["command", "params", "seed", "theoretical", "empirical", "stderr_estimates", "checks_passed"] {
        assert!(s.get(key).is_some(), "missing {key}");
    }
    let csv = fs::read_to_string(dir.path().join("out/ensemble.csv")).unwrap();
    let mut lines = csv.lines();
    assert!(lines.next().unwrap().starts_with("# bohmlab ensemble schema v1"));
    assert_eq!(lines.next().unwrap(), "index,q0,q_final,outcome,lambda");
    assert_eq!(lines.count(), 10_000);
}

#[test]
fn invalid_config_reports_every_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = "[run]\ncommand = born-check\nn_samples = 0\nseed = 1\nseed = 2\n[grid]\ncolour = red\n";
    let out = bohmlab(cfg, dir.path(), &[]);
    assert_eq!(out.status.code(), Some(2));
    let err: Value = serde_json::from_str(String::from_utf8_lossy(&out.stderr).trim()).unwrap();
    assert_eq!(err["error"]["kind"], "config");
    let details = err["error"]["details"].as_array().unwrap();
    let fields: Vec<&str> = details.iter().map(|d| d["field"].as_str().unwrap()).collect();
    assert!(fields.contains(&"run.n_samples"));
    assert!(fields.contains(&"run.seed"));
    assert!(fields.contains(&"grid.colour"));
    assert!(!dir.path().join("out").exists());
}

#[test]
fn runtime_failure_leaves_no_outputs() {
    let dir = tempfile::tempdir().unwrap();
    // a fast packet on a small grid runs into the boundary monitor
    let cfg = "[run]\ncommand = propagate\n[grid]\nn = 128\nx_min = -8\nx_max = 8\n[packet]\nk = 6\n[propagate]\nt_total = 2\ndt = 0.01\n";
    let out = bohmlab(cfg, dir.path(), &[]);
    assert_eq!(out.status.code(), Some(1));
    let err: Value = serde_json::from_str(String::from_utf8_lossy(&out.stderr).trim()).unwrap();
    assert_eq!(err["error"]["kind"], "propagation");
    assert!(!dir.path().join("out").exists());
}

#[test]
fn propagate_is_deterministic_and_thread_independent() {
    let cfg = "[run]\ncommand = trajectories\nseed = 77\nn_samples = 300\n[grid]\nn = 256\nx_min = -20\nx_max = 20\n[propagate]\nt_total = 1\ndt = 0.01\nrecord_every = 2\n";
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    assert!(bohmlab(cfg, a.path(), &["--threads", "1"]).status.success());
    assert!(bohmlab(cfg, b.path(), &["--threads", "3"]).status.success());
    for f in ["ensemble.csv", "paths.csv", "summary.json"] {
        let x = fs::read(a.path().join("out").join(f)).unwrap();
        let y = fs::read(b.path().join("out").join(f)).unwrap();
        assert_eq!(x, y, "{f} differs");
    }
    assert!(fs::read_to_string(a.path().join("out/run.log")).unwrap().contains("timestamp"));
}

#[test]
fn seed_flag_overrides_config() {
    let cfg = "[run]\ncommand = trajectories\nseed = 1\nn_samples = 50\n[grid]\nn = 128\nx_min = -16\nx_max = 16\n[propagate]\nt_total = 0.2\n";
    let dir = tempfile::tempdir().unwrap();
    assert!(bohmlab(cfg, dir.path(), &["--seed", "99", "--format", "json"]).status.success());
    assert_eq!(summary(dir.path())["seed"], 99);
    assert!(!dir.path().join("out/ensemble.csv").exists());
}

#[test]
fn pointer_model_explicit_experiment() {
    let cfg = "[run]\ncommand = pointer-model\n[pointer]\ndim = 3\nstate_re = 1, 1, 1\n\
               [outcome.low]\nbasis = 0\ncalibration = -1\n[outcome.high]\nbasis = 1, 2\ncalibration = 2\n";
    let dir = tempfile::tempdir().unwrap();
    let out = bohmlab(cfg, dir.path(), &[]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let s = summary(dir.path());
    let m = s["empirical"]["pointer_marginals"].as_array().unwrap();
    assert!((m[0].as_f64().unwrap() - 1.0 / 3.0).abs() < 1e-12);
    assert!((m[1].as_f64().unwrap() - 2.0 / 3.0).abs() < 1e-12);
    assert!((s["theoretical"]["expectation"]["value"].as_f64().unwrap() - 1.0).abs() < 1e-12);
    assert_eq!(s["checks_passed"]["all"], true);
}

#[test]
fn contextuality_command() {
    let cfg = "[run]\ncommand = contextuality\nn_samples = 1000\nseed = 3\n[contextuality]\nq_points = 9\n";
    let dir = tempfile::tempdir().unwrap();
    let out = bohmlab(cfg, dir.path(), &[]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let s = summary(dir.path());
    assert_eq!(s["checks_passed"]["pointwise_reversed"], true);
    let map = fs::read_to_string(dir.path().join("out/outcome_map.csv")).unwrap();
    assert_eq!(map.lines().count(), 2 + 9);
}

#[test]
fn contextuality_requires_symmetric_spin() {
    let cfg = "[run]\ncommand = contextuality\nn_samples = 100\n[spin]\np_up = 0.3\n";
    let dir = tempfile::tempdir().unwrap();
    let out = bohmlab(cfg, dir.path(), &[]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("not mirror symmetric"));
}
