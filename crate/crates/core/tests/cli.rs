//! End-to-end runs of the `qpwalk` binary.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn preset(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("presets").join(name)
}

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_qpwalk"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn json(out: &Output) -> Value {
    serde_json::from_slice(&out.stdout).expect("stdout is JSON")
}

#[test]
fn analyze_reports_branch_points() {
    let out = run(&["analyze", preset("fig2c.json").to_str().unwrap()]);
    assert!(out.status.success());
    let v = json(&out);
    assert_eq!(v["singular_class"]["class"], "non_singular");
    assert_eq!(v["eligible"], false);
    let x_l = v["branch_points"]["corners"]["left"]["x"].as_f64().unwrap();
    assert!((x_l - ((27.0 - 645f64.sqrt()) / 42.0).sqrt()).abs() < 1e-10);
}

#[test]
fn trace_writes_csv() {
    let out = run(&["trace", preset("fig2a.json").to_str().unwrap(), "--points", "4096"]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("x,y,arc"));
    assert!(lines.count() >= 4096);
}

#[test]
fn construct_then_verify_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let built = dir.path().join("gamma.json");
    let walk = preset("switch_fig7.json");
    let walk = walk.to_str().unwrap();
    let out = run(&["construct", walk, "--seed-all", "--out", built.to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let constructed: Value = serde_json::from_str(&std::fs::read_to_string(&built).unwrap()).unwrap();
    assert_eq!(constructed["series"].as_array().unwrap().len(), 2);

    let dump = dir.path().join("oracle.csv");
    let out = run(&["verify", walk, built.to_str().unwrap(), "--dump-oracle", dump.to_str().unwrap()]);
    assert!(out.status.success());
    let verified = json(&out);
    for key in ["max_residual_interior", "max_residual_h", "max_residual_v", "max_residual_origin"] {
        let a = constructed["residuals"][key].as_f64().unwrap();
        let b = verified["report"][key].as_f64().unwrap();
        assert!((a - b).abs() <= 1e-14, "{key}: {a} vs {b}");
    }
    assert!(verified["report"]["sup_rel_error"].as_f64().unwrap() <= 1e-4);
    let csv = std::fs::read_to_string(dump).unwrap();
    assert!(csv.starts_with("i,j,pi\n"));
}

#[test]
fn output_is_deterministic() {
    let walk = preset("switch_fig7.json");
    for args in [
        vec!["construct", walk.to_str().unwrap(), "--seed-all"],
        vec!["trace", walk.to_str().unwrap()],
        vec!["analyze", walk.to_str().unwrap()],
    ] {
        let a = run(&args);
        let b = run(&args);
        assert!(a.status.success());
        assert_eq!(a.stdout, b.stdout);
    }
}

#[test]
fn invalid_walk_exits_with_violations() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.json");
    std::fs::write(
        &bad,
        r#"{"interior": [[0.5,0,0],[0,0,0],[0,0,0.6]], "horizontal": [0.5,0.5,0], "vertical": [0.5,0.5,0]}"#,
    )
    .unwrap();
    let out = run(&["analyze", bad.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    let err: Value = serde_json::from_slice(&out.stderr).unwrap();
    assert!(!err["violations"].as_array().unwrap().is_empty());
}

#[test]
fn verify_fails_above_threshold() {
    let dir = tempfile::tempdir().unwrap();
    let g = dir.path().join("g.json");
    std::fs::write(&g, r#"[{"rho": 0.5, "sigma": 0.5, "alpha": 0.25}]"#).unwrap();
    let out = run(&["verify", preset("switch_fig7.json").to_str().unwrap(), g.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    assert_eq!(json(&out)["pass"], false);
}

#[test]
fn partition_counts_groups() {
    let dir = tempfile::tempdir().unwrap();
    let g = dir.path().join("g.json");
    std::fs::write(
        &g,
        r#"[{"rho":0.5,"sigma":0.2,"alpha":1},{"rho":0.5,"sigma":0.3,"alpha":-1},{"rho":0.1,"sigma":0.3,"alpha":2},{"rho":0.7,"sigma":0.6,"alpha":1}]"#,
    )
    .unwrap();
    let out = run(&["partition", g.to_str().unwrap()]);
    assert!(out.status.success());
    let v = json(&out);
    assert_eq!(v["counts"]["horizontal"], 3);
    assert_eq!(v["counts"]["vertical"], 3);
    assert_eq!(v["counts"]["uncoupled"], 2);
}

#[test]
fn switch_prints_a_loadable_walk() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("w.json");
    let out = run(&["switch", "--out", path.to_str().unwrap()]);
    assert!(out.status.success());
    let walk = qpwalk::io::load_walk(&path).unwrap();
    assert!((walk.p(1, -1) - 0.8 * 0.9 * 0.3 * 0.6).abs() < 1e-15);
}
