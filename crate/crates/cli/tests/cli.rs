use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn examples() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("examples")
}

fn clockfcs(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_clockfcs")).args(args).env_remove("CLOCKFCS_THREADS").output().unwrap()
}

fn summary(out: &Output) -> Value {
    serde_json::from_slice(&out.stdout).unwrap_or_else(|e| panic!("{e}: {}", String::from_utf8_lossy(&out.stdout)))
}

fn error_record(out: &Output) -> Value {
    serde_json::from_slice(&out.stderr).unwrap_or_else(|e| panic!("{e}: {}", String::from_utf8_lossy(&out.stderr)))
}

fn run_configs() -> Vec<PathBuf> {
    let mut v: Vec<PathBuf> = fs::read_dir(examples())
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| {
            let text = fs::read_to_string(p).unwrap();
            serde_json::from_str::<Value>(&text).unwrap().get("command").is_some()
        })
        .collect();
    v.sort();
    v
}

#[test]
fn every_bundled_config_succeeds_and_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let configs = run_configs();
    assert!(configs.len() >= 10);
    for cfg in configs {
        let name = cfg.file_stem().unwrap().to_str().unwrap();
        let mut outputs = Vec::new();
        for k in 0..2 {
            let csv = dir.path().join(format!("{name}-{k}.csv"));
            let out = clockfcs(&["run", cfg.to_str().unwrap(), "--output", csv.to_str().unwrap()]);
            assert!(out.status.success(), "{name}: {}", String::from_utf8_lossy(&out.stderr));
            outputs.push((out.stdout, fs::read(&csv).unwrap()));
        }
        assert_eq!(outputs[0], outputs[1], "{name} output differs between runs");
    }
}

#[test]
fn qubit_snr_at_optimum() {
    let out = clockfcs(&["snr", examples().join("qubit_snr.json").to_str().unwrap()]);
    assert!(out.status.success());
    let s = summary(&out)["S"].as_f64().unwrap();
    assert!((s - 1.19).abs() < 0.01, "S = {s}");
}

#[test]
fn feedback_snr_matches_reported_point() {
    let out = clockfcs(&["run", examples().join("feedback_snr.json").to_str().unwrap()]);
    let s = summary(&out)["S"].as_f64().unwrap();
    assert!((s - 2.59).abs() < 0.01, "S = {s}");
}

#[test]
fn verify_theorem1_flags_no_violation() {
    let out = clockfcs(&["verify-theorem1", "--trials", "100", "--seed", "42"]);
    assert_eq!(out.status.code(), Some(0));
    let s = summary(&out);
    assert!(s["max_ratio"].as_f64().unwrap() <= 1.0);
    assert_eq!(s["trials"], 100);
}

#[test]
fn empty_current_is_flagged_not_failed() {
    let out = clockfcs(&["run", examples().join("null_current.json").to_str().unwrap()]);
    assert!(out.status.success());
    assert_eq!(summary(&out)["flag"], "null_current");
}

#[test]
fn sweep_output_does_not_depend_on_threads() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = examples().join("qubit_sweep.json");
    let mut tables = Vec::new();
    for threads in ["1", "4"] {
        let csv = dir.path().join(format!("t{threads}.csv"));
        let out = clockfcs(&["sweep", cfg.to_str().unwrap(), "--threads", threads, "--output", csv.to_str().unwrap()]);
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
        tables.push(fs::read(&csv).unwrap());
    }
    assert_eq!(tables[0], tables[1]);
    let text = String::from_utf8(tables.pop().unwrap()).unwrap();
    assert!(text.starts_with("E,phi,F,D,S,flag\n"));
    assert_eq!(text.lines().count(), 1 + 60 * 64);
}

#[test]
fn simulate_threads_env_fallback() {
    let cfg = examples().join("simulate_two_state.json");
    let a = clockfcs(&["simulate", cfg.to_str().unwrap(), "--trajectories", "200"]);
    let b = Command::new(env!("CARGO_BIN_EXE_clockfcs"))
        .args(["simulate", cfg.to_str().unwrap(), "--trajectories", "200"])
        .env("CLOCKFCS_THREADS", "2")
        .output()
        .unwrap();
    assert!(a.status.success() && b.status.success());
    assert_eq!(a.stdout, b.stdout);
    assert_eq!(summary(&a)["n_traj"], 200);
}

#[test]
fn config_errors_exit_with_status_2() {
    let dir = tempfile::tempdir().unwrap();
    let missing = clockfcs(&["snr", dir.path().join("nope.json").to_str().unwrap()]);
    assert_eq!(missing.status.code(), Some(2));
    assert_eq!(error_record(&missing)["error"]["kind"], "config");

    let bad_label = dir.path().join("bad_label.json");
    fs::write(
        &bad_label,
        r#"{"command": "snr", "model": {"num_states": 2, "rates": [[0, 1], [1, 0]]},
            "current": {"weights": [{"label": {"a": 3, "j": 0}, "w": 1.0}]}}"#,
    )
    .unwrap();
    let out = clockfcs(&["run", bad_label.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));

    let gap = dir.path().join("gap.json");
    fs::write(
        &gap,
        r#"{"command": "snr",
            "families": [{"kind": "classical_ring", "states": 2, "range": {"interval": {"min": 0.1, "max": 5.0}}}],
            "policy": {"memory_states": 2,
                       "update_table": [{"m": 0, "label": {"a": 1, "j": 0}, "next_m": 1},
                                        {"m": 0, "label": {"a": 1, "j": 1}, "next_m": 0},
                                        {"m": 1, "label": {"a": 1, "j": 1}, "next_m": 0}],
                       "params": [{"m": 0, "a": 1, "c": [1, 1]}, {"m": 1, "a": 1, "c": [1, 1]}]}}"#,
    )
    .unwrap();
    let out = clockfcs(&["run", gap.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    let msg = error_record(&out)["error"]["message"].as_str().unwrap().to_string();
    assert!(msg.contains("m = 1") && msg.contains("(1,0)"), "{msg}");

    let mismatch = clockfcs(&["sweep", examples().join("qubit_snr.json").to_str().unwrap()]);
    assert_eq!(mismatch.status.code(), Some(2));
}

#[test]
fn numerical_errors_exit_with_status_3() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("dark.json");
    // |−⟩ is dark: two stationary states
    fs::write(
        &cfg,
        r#"{"command": "snr", "model": {"dim": 2, "hamiltonian": {"re": [[0, 0], [0, 0]]},
            "jumps": [{"label": {"a": 1, "j": 0}, "matrix": {"re": [[0.5, 0.5], [0.5, 0.5]]}}]}}"#,
    )
    .unwrap();
    let out = clockfcs(&["run", cfg.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(3));
    assert_eq!(error_record(&out)["error"]["kind"], "numerical");
}

#[test]
fn bounds_report_kinetic_and_clock_limits() {
    let out = clockfcs(&["run", examples().join("two_state_bounds.json").to_str().unwrap()]);
    let s = summary(&out);
    let snr = s["S"].as_f64().unwrap();
    assert!(snr <= s["kur_bound"].as_f64().unwrap());
    // the configured weights are the hyperaccurate ones
    assert!((snr - s["cur_bound"].as_f64().unwrap()).abs() < 1e-12);
    let out = clockfcs(&["run", examples().join("classical_feedback_bounds.json").to_str().unwrap()]);
    let s = summary(&out);
    assert_eq!(s["theorem1_bound"].as_f64().unwrap(), 8.0);
    assert!(s["cur_bound"].as_f64().unwrap() <= 8.0);
}
