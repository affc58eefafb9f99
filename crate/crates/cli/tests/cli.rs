use std::path::PathBuf;
use std::process::{Command, Output};

use serde_json::Value;

fn ccg(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ccg")).args(args).output().unwrap()
}

fn json(out: &Output) -> Value {
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    serde_json::from_slice(&out.stdout).unwrap()
}

fn scratch(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("ccg-cli-{name}-{}", std::process::id()));
    let _ = std::fs::remove_dir_all(&dir);
    dir
}

#[test]
fn gen_then_solve_exactly() {
    let dir = scratch("exact");
    let d = dir.to_str().unwrap();
    let meta = json(&ccg(&["gen", "--n", "9", "--p", "3", "--seed", "2", "--mode", "rational", "--out", d]));
    assert_eq!(meta["spec"]["mode"], "rational");
    for f in ["A.mtx", "b.mtx", "X0.mtx", "xstar.mtx", "meta.json"] {
        assert!(dir.join(f).exists(), "{f}");
    }
    let trace = dir.join("trace.jsonl");
    let out = json(&ccg(&["solve", "--input", d, "--verify", "--trace-out", trace.to_str().unwrap()]));
    assert_eq!(out["mode"], "rational");
    assert_eq!(out["iterations"], 3);
    assert_eq!(out["final_minres"], 0.0);
    assert_eq!(out["verify"]["exactly_orthogonal"], true);
    assert_eq!(out["verify"]["subspace_dimension"], 9);

    let lines: Vec<Value> = std::fs::read_to_string(&trace)
        .unwrap()
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect();
    assert_eq!(lines.len(), 4);
    assert_eq!(lines[3]["minres"], 0.0);
    std::fs::remove_dir_all(&dir).unwrap();
}

#[test]
fn float_files_reproduce_generated_solve() {
    let dir = scratch("float");
    let d = dir.to_str().unwrap();
    let meta = json(&ccg(&["gen", "--n", "40", "--p", "2", "--cond", "100", "--seed", "5", "--out", d]));
    let kappa = meta["realized_cond"].as_f64().unwrap();
    assert!((kappa - 100.0).abs() < 1e-9 * 100.0);
    let from_files = json(&ccg(&["solve", "--input", d, "--algo", "ccg", "--tol", "1e-8"]));
    let generated = json(&ccg(&["solve", "--n", "40", "--p", "2", "--cond", "100", "--seed", "5", "--tol", "1e-8"]));
    assert_eq!(from_files["iterations"], generated["iterations"]);
    assert_eq!(from_files["final_minres"], generated["final_minres"]);
    std::fs::remove_dir_all(&dir).unwrap();
}

#[test]
fn parallel_solve_matches_sequential_and_reports_workers() {
    let base = ["--n", "60", "--p", "3", "--seed", "1", "--tol", "1e-6"];
    let seq = json(&ccg(&[&["solve", "--algo", "ccg"][..], &base].concat()));
    let par = json(&ccg(&[&["solve", "--algo", "ccg-par", "--workers", "3"][..], &base].concat()));
    assert_eq!(seq["iterations"], par["iterations"]);
    assert_eq!(seq["final_minres"], par["final_minres"]);
    assert_eq!(par["workers"], 3);

    let dir = scratch("par");
    std::fs::create_dir_all(&dir).unwrap();
    let trace = dir.join("t.jsonl");
    json(&ccg(&[&["solve", "--algo", "ccg-par", "--trace-out", trace.to_str().unwrap()][..], &base].concat()));
    let text = std::fs::read_to_string(&trace).unwrap();
    let second: Value = serde_json::from_str(text.lines().nth(1).unwrap()).unwrap();
    assert_eq!(second["barrier_wait_ns"].as_array().unwrap().len(), 3);
    assert_eq!(second["mults_per_worker"].as_array().unwrap().len(), 3);
    std::fs::remove_dir_all(&dir).unwrap();
}

#[test]
fn model_reports_optimum_and_gain() {
    let v = json(&ccg(&["model", "--n", "5"]));
    assert_eq!(v["p_star"], 2);
    assert_eq!(v["N_star"]["exact"], "475/2");
    assert_eq!(v["gain"]["holds"], true);
    assert!(v["N"].is_null());
    let v = json(&ccg(&["model", "--n", "100", "--p", "2"]));
    assert_eq!(v["N"]["per_iteration"], 11_210);
    assert!(!ccg(&["model", "--n", "4", "--p", "9"]).status.success());
}

#[test]
fn bench_sweep_and_fit() {
    let dir = scratch("bench");
    std::fs::create_dir_all(&dir).unwrap();
    let cfg = dir.join("sweep.toml");
    std::fs::write(&cfg, "dims = [30, 60, 90]\ncond = 100.0\ntols = [1e-6]\ntrials = 2\nalgos = [\"cg\", \"ccg\"]\n").unwrap();
    let out = dir.join("out");
    let run = ccg(&["bench", "sweep", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert!(run.status.success(), "{}", String::from_utf8_lossy(&run.stderr));
    let records = std::fs::read_to_string(out.join("records.csv")).unwrap();
    assert!(records.starts_with("n,cond,tol,algo,p,trial,seed,problem_id,iterations,time_s,converged,final_minres,critical_mults,status\n"));
    assert_eq!(records.lines().count(), 1 + 3 * 2 * 2);
    let summary: Value = serde_json::from_str(&std::fs::read_to_string(out.join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["schema_version"], 1);

    let fit = json(&ccg(&["bench", "fit", "--metric", "iters", "--in", out.join("records.csv").to_str().unwrap()]));
    assert_eq!(fit["samples"], 3);
    assert!(fit["slope"].as_f64().unwrap() > 0.5);
    std::fs::remove_dir_all(&dir).unwrap();
}

#[test]
fn bench_tolerances_reports_monotone_counts() {
    let dir = scratch("tols");
    std::fs::create_dir_all(&dir).unwrap();
    let cfg = dir.join("tols.toml");
    std::fs::write(&cfg, "dims = [60]\ncond = 100.0\ntols = [1e-3, 1e-6, 1e-9]\ntrials = 2\n").unwrap();
    let v = json(&ccg(&["bench", "tolerances", "--config", cfg.to_str().unwrap(), "--out", dir.join("o").to_str().unwrap()]));
    assert_eq!(v["rows"].as_array().unwrap().len(), 3);
    assert_eq!(v["cg_nondecreasing"], true);
    assert_eq!(v["coop_nondecreasing"], true);
    std::fs::remove_dir_all(&dir).unwrap();
}

#[test]
fn invalid_arguments_fail() {
    assert!(!ccg(&["solve", "--algo", "cg", "--workers", "2"]).status.success());
    assert!(!ccg(&["solve", "--n", "3", "--p", "3"]).status.success());
    assert!(!ccg(&["solve", "--algo", "nope"]).status.success());
}
