use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn realsim(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_realsim"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn write_config(dir: &Path, name: &str, body: &str) -> String {
    let p = dir.join(name);
    fs::write(&p, body).unwrap();
    p.to_str().unwrap().to_string()
}

const COULOMB: &str = r#"{"eta":2,"dims":1,"bins":8,"length":6.0,"order_a":2,"kmax":2.0,
"potential":{"type":"modified_coulomb","delta":0.5,"charges":[1.0,-1.0]}}"#;

#[test]
fn coeffs_order_two_csv() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let o = realsim(&["--out", out, "coeffs", "--order", "2"]);
    assert!(o.status.success());
    let text = String::from_utf8(o.stdout).unwrap();
    let rationals: Vec<&str> = text
        .lines()
        .skip(1)
        .take(5)
        .map(|l| l.split(',').nth(1).unwrap())
        .collect();
    assert_eq!(rationals, ["-1/12", "4/3", "-5/2", "4/3", "-1/12"]);
    assert!(text.contains("norm_sum,17/6,"));
    assert!(text.contains("d_0,-5/2,"));
    assert_eq!(fs::read_to_string(dir.path().join("coeffs.csv")).unwrap(), text);
}

#[test]
fn coeffs_json_format() {
    let dir = tempfile::tempdir().unwrap();
    let o = realsim(&["--out", dir.path().to_str().unwrap(), "coeffs", "--order", "1", "--format", "json"]);
    assert!(o.status.success());
    let v: Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v["norm_sum"]["rational"], "2");
    assert_eq!(v["coefficients"][1]["rational"], "-2");
}

#[test]
fn verify_all_passes() {
    let dir = tempfile::tempdir().unwrap();
    let o = realsim(&["--out", dir.path().to_str().unwrap(), "verify", "--suite", "all"]);
    let text = String::from_utf8_lossy(&o.stdout);
    assert!(o.status.success(), "{text}");
    assert!(text.contains("circuit"));
    assert!(!text.contains("FAIL"));
    let v: Value = serde_json::from_str(&fs::read_to_string(dir.path().join("verify.json")).unwrap()).unwrap();
    assert_eq!(v["failed"], 0);
}

#[test]
fn estimate_small_box_names_assumption() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "small.json",
        r#"{"eta":1,"dims":1,"bins":8,"length":1.0,"order_a":2,"kmax":1.0,"potential":{"type":"zero"}}"#,
    );
    let out = dir.path().join("out");
    let o = realsim(&[
        "--out",
        out.to_str().unwrap(),
        "estimate",
        "--config",
        &cfg,
        "--time",
        "1",
        "--eps",
        "1e-3",
    ]);
    assert_eq!(o.status.code(), Some(3));
    let err: Value = serde_json::from_slice(&o.stderr).unwrap();
    assert_eq!(err["error"]["kind"], "hypothesis");
    assert_eq!(err["error"]["assumption"], "k_max L > π(2e^{−1/3})^{2/ηD}");
}

#[test]
fn estimate_writes_report_and_sweep() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "cfg.json", COULOMB);
    let out = dir.path().join("out");
    let o = realsim(&[
        "--out",
        out.to_str().unwrap(),
        "estimate",
        "--config",
        &cfg,
        "--time",
        "1",
        "--eps",
        "1e-3",
        "--sweep",
        "eps=1e-4:1e-2:3",
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let v: Value = serde_json::from_str(&fs::read_to_string(out.join("estimate.json")).unwrap()).unwrap();
    assert_eq!(v["config"]["masses"], serde_json::json!([1.0, 1.0]));
    assert!(v["report"]["total_error_bound"].as_f64().unwrap() <= 1e-3);
    let sweep = fs::read_to_string(out.join("sweep.csv")).unwrap();
    assert_eq!(sweep.lines().count(), 4);
    assert!(sweep.lines().skip(1).all(|l| l.contains(",ok,")));
}

#[test]
fn simulate_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "cfg.json", COULOMB);
    let run = |name: &str, seed: &str| {
        let out = dir.path().join(name);
        let o = realsim(&[
            "--out",
            out.to_str().unwrap(),
            "--seed",
            seed,
            "simulate",
            "--config",
            &cfg,
            "--time",
            "0.5",
            "--eps",
            "1e-4",
            "--oracle-check",
        ]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        (
            fs::read(out.join("simulate.json")).unwrap(),
            fs::read(out.join("final_state.bin")).unwrap(),
        )
    };
    let a = run("a", "7");
    let b = run("b", "7");
    let c = run("c", "8");
    assert_eq!(a, b);
    assert_ne!(a.0, c.0);
    let v: Value = serde_json::from_slice(&a.0).unwrap();
    assert_eq!(v["oracle_check"]["passed"], true);
    assert_eq!(v["config"]["order_a"], 2);
    let segments = v["report"]["plan"]["segments"].as_u64().unwrap();
    let k = v["report"]["plan"]["truncation"].as_u64().unwrap();
    assert_eq!(v["ledger"]["potential_queries"].as_u64().unwrap(), 3 * k * segments);
}

#[test]
fn simulate_state_file_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "pw.json",
        r#"{"eta":1,"dims":1,"bins":8,"length":6.283185307179586,"order_a":1,"kmax":1.0,
"potential":{"type":"zero"},"initial_state":{"type":"plane_wave","k":[1.0]}}"#,
    );
    let out = dir.path().join("out");
    let o = realsim(&[
        "--out",
        out.to_str().unwrap(),
        "simulate",
        "--config",
        &cfg,
        "--time",
        "0.7",
        "--eps",
        "1e-4",
        "--mode",
        "blockencoding",
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let state = realspace_sim::grid::read_state(out.join("final_state.bin")).unwrap();
    assert_eq!(state.grid().bins(), 8);
    assert!((state.norm() - 1.0).abs() < 1e-3);
}

#[test]
fn usage_errors_exit_two() {
    assert_eq!(realsim(&["bogus"]).status.code(), Some(2));
    assert_eq!(realsim(&["coeffs"]).status.code(), Some(2));
    assert_eq!(realsim(&["verify", "--suite", "nope"]).status.code(), Some(2));
}

#[test]
fn module_error_is_json() {
    let dir = tempfile::tempdir().unwrap();
    let o = realsim(&["--out", dir.path().to_str().unwrap(), "coeffs", "--order", "0"]);
    assert_eq!(o.status.code(), Some(1));
    let err: Value = serde_json::from_slice(&o.stderr).unwrap();
    assert_eq!(err["error"]["kind"], "invalid_order");
}
