//! End-to-end checks of the command-line binary: JSON report shape,
//! generator determinism, error reporting, and the time-limited path.

use std::path::PathBuf;
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_subsetreg"))
}

fn tmp(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join("subsetreg-cli-tests");
    std::fs::create_dir_all(&dir).unwrap();
    dir.join(name)
}

fn json_stdout(out: &Output) -> serde_json::Value {
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    serde_json::from_slice(&out.stdout).expect("stdout is JSON")
}

#[test]
fn solve_reports_the_known_optimum() {
    let csv = tmp("p1.csv");
    std::fs::write(&csv, "x1,b\n1,1\n2,2\n3,4\n").unwrap();
    let out = bin()
        .args(["solve", csv.to_str().unwrap(), "--objective", "mae", "--method", "exhaustive"])
        .output()
        .unwrap();
    let v = json_stdout(&out);
    assert_eq!(v["subset"], serde_json::json!(["x1"]));
    assert!((v["objective"].as_f64().unwrap() - 0.5).abs() < 1e-9);
    assert_eq!(v["objective_kind"], "mae");
}

#[test]
fn generate_is_deterministic_and_loadable() {
    let a = tmp("gen-a.csv");
    let b = tmp("gen-b.csv");
    for out in [&a, &b] {
        let r = bin()
            .args(["generate", "--m", "5", "--n", "12", "--seed", "9", "--out", out.to_str().unwrap()])
            .output()
            .unwrap();
        assert!(r.status.success());
    }
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
    let meta: serde_json::Value =
        serde_json::from_slice(&std::fs::read(a.with_extension("json")).unwrap()).unwrap();
    assert_eq!(meta["m"], 5);
    assert_eq!(meta["seed"], 9);
    // the generated file round-trips through the solver
    let out = bin()
        .args(["solve", a.to_str().unwrap(), "--objective", "mse", "--method", "stepwise"])
        .output()
        .unwrap();
    let v = json_stdout(&out);
    assert!(v["objective"].as_f64().unwrap() >= 0.0);
}

#[test]
fn mip_solve_emits_full_report() {
    let csv = tmp("mip.csv");
    let r = bin()
        .args(["generate", "--m", "5", "--n", "15", "--seed", "4", "--out", csv.to_str().unwrap()])
        .output()
        .unwrap();
    assert!(r.status.success());
    let out = bin()
        .args(["solve", csv.to_str().unwrap(), "--objective", "mae", "--method", "mip"])
        .output()
        .unwrap();
    let v = json_stdout(&out);
    assert_eq!(v["method"], "mip");
    assert!(v["gap_ip"].as_f64().unwrap() <= 1e-6);
    assert!(v["nodes"].as_u64().unwrap() >= 1);
    assert_eq!(v["big_m"]["method"], "lp-based");
    assert_eq!(v["big_m"]["validity"], "proven");
    assert!(v["bound"].as_f64().is_some());
    assert_eq!(v["time_limit_hit"], false);
}

#[test]
fn timeout_still_produces_a_valid_report() {
    let csv = tmp("timeout.csv");
    let r = bin()
        .args(["generate", "--m", "15", "--n", "30", "--seed", "2", "--out", csv.to_str().unwrap()])
        .output()
        .unwrap();
    assert!(r.status.success());
    let out = bin()
        .args([
            "solve",
            csv.to_str().unwrap(),
            "--objective",
            "mae",
            "--method",
            "mip",
            "--time-limit",
            "0.05",
        ])
        .output()
        .unwrap();
    let v = json_stdout(&out);
    assert!(v["objective"].as_f64().unwrap().is_finite());
    assert!(v["gap_ip"].as_f64().unwrap() >= 0.0);
    assert!(v["subset"].is_array());
}

#[test]
fn solver_errors_exit_one_with_json_on_stderr() {
    let csv = tmp("err.csv");
    std::fs::write(&csv, "x1,b\n1,1\n2,2\n3,4\n").unwrap();
    let out = bin()
        .args(["evaluate", csv.to_str().unwrap(), "--subset", "nope"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
    let v: serde_json::Value = serde_json::from_slice(&out.stderr).expect("stderr is JSON");
    assert!(v["error"].as_str().unwrap().contains("nope"));
    assert_eq!(v["kind"], "invalid-argument");
}

#[test]
fn usage_errors_exit_two() {
    let out = bin().args(["solve"]).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn evaluate_matches_solve_on_the_full_subset() {
    let csv = tmp("eval.csv");
    std::fs::write(&csv, "x1,b\n1,1\n2,2\n3,4\n").unwrap();
    let out = bin()
        .args(["evaluate", csv.to_str().unwrap(), "--objective", "mae", "--subset", "x1"])
        .output()
        .unwrap();
    let v = json_stdout(&out);
    assert!((v["objective"].as_f64().unwrap() - 0.5).abs() < 1e-9);
}

#[test]
fn model_dump_writes_lp_text() {
    let csv = tmp("dump.csv");
    std::fs::write(&csv, "x1,b\n1,1\n2,2\n3,4\n").unwrap();
    let lp = tmp("model.lp");
    let out = bin()
        .args([
            "solve",
            csv.to_str().unwrap(),
            "--objective",
            "mae",
            "--dump-model",
            lp.to_str().unwrap(),
        ])
        .output()
        .unwrap();
    assert!(out.status.success());
    let text = std::fs::read_to_string(&lp).unwrap();
    assert!(text.contains("Minimize"), "dump: {text}");
}
