//! End-to-end behaviour of the `hpo` binary.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn hpo(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_hpo")).args(args).output().unwrap()
}

fn write_config(dir: &Path, body: &str) -> String {
    let path = dir.join("config.json");
    fs::write(&path, body).unwrap();
    path.to_str().unwrap().to_string()
}

#[test]
fn missing_config_exits_2() {
    let out = hpo(&["run", "/definitely/not/here.json"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(!out.stderr.is_empty());
}

#[test]
fn malformed_config_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "{ not json");
    assert_eq!(hpo(&["grid", &cfg]).status.code(), Some(2));
}

#[test]
fn zero_epsilon_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        r#"{"problem": {"kind": "desk-ridge"}, "outer": {"epsilon": 0}}"#,
    );
    let out = hpo(&["run", &cfg, "--out", dir.path().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn desk_ridge_run_writes_all_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), r#"{"problem": {"kind": "desk-ridge"}}"#);
    let out_dir = dir.path().join("out");
    let out = hpo(&["run", &cfg, "--out", out_dir.to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    for f in ["trace.csv", "trace.json", "grid.csv", "probes.json", "summary.json"] {
        assert!(out_dir.join(f).exists(), "{f} missing");
    }
    let summary: serde_json::Value = serde_json::from_slice(&fs::read(out_dir.join("summary.json")).unwrap()).unwrap();
    for key in [
        "problem",
        "stop_reason",
        "lambda_final",
        "J_final",
        "lambda_grid",
        "J_grid",
        "certificate",
        "probes",
    ] {
        assert!(summary.get(key).is_some(), "summary lacks {key}");
    }
    assert_eq!(summary["stop_reason"], "step-norm");
    assert_eq!(summary["certificate"]["verdict"], "valid");
    let j_final = summary["J_final"].as_f64().unwrap();
    let j_grid = summary["J_grid"].as_f64().unwrap();
    assert!(j_final <= j_grid + 1e-3 * (1.0 + j_grid.abs()));
    assert_eq!(summary["probes"].as_object().unwrap().len(), 4);

    let trace = fs::read_to_string(out_dir.join("trace.csv")).unwrap();
    assert_eq!(trace.lines().next(), Some("iter,lambda_0,J,h_0,step_norm"));
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("probes "), "{stdout}");
}

#[test]
fn json_format_skips_csv() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        r#"{"problem": {"kind": "desk-mean"}, "probes": {"convexity": false, "coercivity": false, "inner_boundedness": false, "singleton_argmin": false}}"#,
    );
    let out_dir = dir.path().join("out");
    let out = hpo(&["run", &cfg, "--out", out_dir.to_str().unwrap(), "--format", "json"]);
    assert!(out.status.success());
    assert!(out_dir.join("trace.json").exists());
    assert!(!out_dir.join("trace.csv").exists());
    assert!(!out_dir.join("grid.csv").exists());
    assert!(!out_dir.join("probes.json").exists());
}

#[test]
fn probe_command_reports_verdicts() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), r#"{"problem": {"kind": "desk-mean"}}"#);
    let out_dir = dir.path().join("out");
    let out = hpo(&["probe", &cfg, "--out", out_dir.to_str().unwrap()]);
    assert!(out.status.success());
    let reports: serde_json::Value = serde_json::from_slice(&fs::read(out_dir.join("probes.json")).unwrap()).unwrap();
    let coercivity = reports
        .as_array()
        .unwrap()
        .iter()
        .find(|r| r["probe"] == "coercivity")
        .unwrap();
    assert_eq!(coercivity["verdict"], "violated");
    assert_eq!(coercivity["witness"]["kind"], "coercivity");
    assert!(!out_dir.join("trace.csv").exists());
}
