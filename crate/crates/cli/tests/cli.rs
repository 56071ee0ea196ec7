use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::{json, Value};
use tempfile::TempDir;

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_aenlm"));
    c.env_remove("NLM_SEED");
    c
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("terminated by signal")
}

fn benchmark_config(out_dir: &Path, max_iters: usize) -> Value {
    json!({
        "plant": {"kind": "benchmark_ode", "dt": 0.2, "steps": 30},
        "basis": {
            "signals": {"kind": "sines", "n": 30, "dt": 0.2,
                        "frequencies": [std::f64::consts::FRAC_PI_3, std::f64::consts::PI]},
            "box_lo": [0.0, 0.0], "box_hi": [4.0, 4.0],
            "exclusion_hi": [0.1, 0.1], "epsilon": 0.1
        },
        "engine": {"rng_seed": 1, "max_iters": max_iters, "lipschitz": 1.04},
        "output_dir": out_dir
    })
}

fn write_config(dir: &TempDir, name: &str, cfg: &Value) -> PathBuf {
    let p = dir.path().join(name);
    std::fs::write(&p, serde_json::to_string_pretty(cfg).unwrap()).unwrap();
    p
}

fn run(cfg: &Path) -> Output {
    bin().arg("run").arg(cfg).output().unwrap()
}

fn read(dir: &Path, name: &str) -> String {
    std::fs::read_to_string(dir.join(name)).unwrap()
}

#[test]
fn zero_iterations_write_only_the_initial_row() {
    let tmp = TempDir::new().unwrap();
    let out = tmp.path().join("o");
    let cfg = write_config(&tmp, "c.json", &benchmark_config(&out, 0));
    let r = run(&cfg);
    assert_eq!(code(&r), 0, "{}", String::from_utf8_lossy(&r.stderr));
    let hist = read(&out, "history.csv");
    let lines: Vec<&str> = hist.lines().collect();
    assert_eq!(lines.len(), 2);
    assert_eq!(lines[0], "k,phi,lower,split_kind,cell_id,amp_0,amp_1");
    assert!(lines[1].starts_with("0,"));
    assert!(lines[1].contains(",init,"));
    for f in ["cells.json", "dataset.json", "surrogate.json", "checkpoint.json", "summary.json"] {
        assert!(out.join(f).exists(), "{f} missing");
    }
}

#[test]
fn reruns_are_byte_identical_and_summary_matches_history() {
    let tmp = TempDir::new().unwrap();
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    let ca = write_config(&tmp, "a.json", &benchmark_config(&a, 60));
    let cb = write_config(&tmp, "b.json", &benchmark_config(&b, 60));
    assert_eq!(code(&run(&ca)), 0);
    assert_eq!(code(&run(&cb)), 0);
    let ha = read(&a, "history.csv");
    assert_eq!(ha, read(&b, "history.csv"));
    assert_eq!(read(&a, "cells.json"), read(&b, "cells.json"));

    let summary: Value = serde_json::from_str(&read(&a, "summary.json")).unwrap();
    let last: Vec<&str> = ha.lines().last().unwrap().split(',').collect();
    assert_eq!(last[0], "60");
    assert_eq!(summary["iterations"], 60);
    assert_eq!(summary["plant_queries"], 80);
    assert_eq!(summary["final_phi"].as_f64().unwrap(), last[1].parse::<f64>().unwrap());
    assert_eq!(summary["final_lower"].as_f64().unwrap(), last[2].parse::<f64>().unwrap());
    assert_eq!(summary["lipschitz"].as_f64().unwrap(), 1.04);

    let cells: Value = serde_json::from_str(&read(&a, "cells.json")).unwrap();
    let cells = cells.as_array().unwrap();
    assert_eq!(cells.len(), 62);
    assert!(cells.iter().all(|c| c.get("bound_over_L").is_some()));
}

#[test]
fn unknown_config_key_is_a_config_error() {
    let tmp = TempDir::new().unwrap();
    let mut cfg = benchmark_config(&tmp.path().join("o"), 0);
    cfg["engine"]["alpah"] = json!(0.2);
    let p = write_config(&tmp, "c.json", &cfg);
    let r = run(&p);
    assert_eq!(code(&r), 3);
    assert!(String::from_utf8_lossy(&r.stderr).contains("alpah"));

    let mut cfg = benchmark_config(&tmp.path().join("o"), 0);
    cfg["engine"]["alpha"] = json!(1.5);
    let p = write_config(&tmp, "d.json", &cfg);
    assert_eq!(code(&run(&p)), 3);
}

#[test]
fn seed_override_changes_the_design() {
    let tmp = TempDir::new().unwrap();
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    let ca = write_config(&tmp, "a.json", &benchmark_config(&a, 5));
    let cb = write_config(&tmp, "b.json", &benchmark_config(&b, 5));
    assert_eq!(code(&run(&ca)), 0);
    let r = bin().env("NLM_SEED", "7").arg("run").arg(&cb).output().unwrap();
    assert_eq!(code(&r), 0);
    assert_ne!(read(&a, "history.csv"), read(&b, "history.csv"));
    let r = bin().env("NLM_SEED", "seven").arg("run").arg(&cb).output().unwrap();
    assert_eq!(code(&r), 3);
}

#[test]
fn resume_extends_a_run_identically() {
    let tmp = TempDir::new().unwrap();
    let (full, part) = (tmp.path().join("full"), tmp.path().join("part"));
    let cf = write_config(&tmp, "f.json", &benchmark_config(&full, 40));
    assert_eq!(code(&run(&cf)), 0);
    let cp = write_config(&tmp, "p.json", &benchmark_config(&part, 15));
    assert_eq!(code(&run(&cp)), 0);
    let cp = write_config(&tmp, "p.json", &benchmark_config(&part, 40));
    let r = bin()
        .arg("run")
        .arg(&cp)
        .arg("--resume")
        .arg(part.join("checkpoint.json"))
        .output()
        .unwrap();
    assert_eq!(code(&r), 0, "{}", String::from_utf8_lossy(&r.stderr));
    assert_eq!(read(&full, "history.csv"), read(&part, "history.csv"));

    // A checkpoint of a different input set is rejected.
    let mut other = benchmark_config(&part, 40);
    other["basis"]["box_hi"] = json!([3.0, 4.0]);
    let co = write_config(&tmp, "o.json", &other);
    let r = bin()
        .arg("run")
        .arg(&co)
        .arg("--resume")
        .arg(full.join("checkpoint.json"))
        .output()
        .unwrap();
    assert_eq!(code(&r), 3);
}

fn lti_dataset(g: &[f64], inputs: &[Vec<f64>]) -> Value {
    let samples: Vec<Value> = inputs
        .iter()
        .map(|u| {
            let y: Vec<f64> = (0..u.len()).map(|k| (0..=k).map(|j| g[k - j] * u[j]).sum()).collect();
            json!({"amp": u, "input": u, "output": y})
        })
        .collect();
    json!({"n": g.len(), "mu": g.len(), "L": 2.0, "noise": {"kind": "none", "delta": 0.0}, "samples": samples})
}

fn fit(ds: &Value, tmp: &TempDir, extra: &[&str]) -> (i32, Option<Vec<f64>>) {
    let dp = tmp.path().join("ds.json");
    std::fs::write(&dp, ds.to_string()).unwrap();
    let sp = tmp.path().join("g.json");
    let _ = std::fs::remove_file(&sp);
    let r = bin().arg("fit").arg(&dp).arg("--output").arg(&sp).args(extra).output().unwrap();
    let g = std::fs::read_to_string(&sp).ok().map(|t| {
        let v: Value = serde_json::from_str(&t).unwrap();
        v["g"].as_array().unwrap().iter().map(|x| x.as_f64().unwrap()).collect()
    });
    (code(&r), g)
}

#[test]
fn fit_recovers_lti_kernels() {
    let tmp = TempDir::new().unwrap();
    let g = [0.5, -0.2, 0.1];
    let inputs = vec![vec![1.0, 0.5, -0.3], vec![0.2, -1.0, 0.4], vec![0.7, 0.7, 0.1], vec![-0.4, 0.3, 1.0]];
    let (c, got) = fit(&lti_dataset(&g, &inputs), &tmp, &[]);
    assert_eq!(c, 0);
    let got = got.unwrap();
    for (a, b) in got.iter().zip(g) {
        assert!((a - b).abs() <= 1e-5, "{got:?}");
    }

    // A single unit impulse pins the whole kernel to the response.
    let y1 = [0.3, 0.6, -0.1];
    let (c, got) = fit(&lti_dataset(&y1, &[vec![1.0, 0.0, 0.0]]), &tmp, &[]);
    assert_eq!(c, 0);
    for (a, b) in got.unwrap().iter().zip(y1) {
        assert!((a - b).abs() <= 1e-5);
    }

    let (c, _) = fit(&lti_dataset(&g, &inputs), &tmp, &["--tol=-1"]);
    assert_eq!(c, 3);
    let (c, _) = fit(&lti_dataset(&g, &inputs), &tmp, &["--tol", "abc"]);
    assert_eq!(c, 3);
}

#[test]
fn estimate_l_prints_safety_scaled_slope() {
    let tmp = TempDir::new().unwrap();
    let ds = json!({
        "n": 1, "mu": 1, "L": 1.0, "noise": {"kind": "none", "delta": 0.0},
        "samples": [
            {"amp": [1.0], "output": [1.0]},
            {"amp": [2.0], "output": [3.0]},
            {"amp": [4.0], "output": [4.0]}
        ]
    });
    let dp = tmp.path().join("ds.json");
    std::fs::write(&dp, ds.to_string()).unwrap();
    let r = bin().arg("estimate-l").arg(&dp).arg("--safety").arg("1.5").output().unwrap();
    assert_eq!(code(&r), 0);
    let l: f64 = String::from_utf8_lossy(&r.stdout).trim().parse().unwrap();
    assert!((l - 3.0).abs() <= 1e-12, "{l}");
    let r = bin().arg("estimate-l").arg(tmp.path().join("missing.json")).output().unwrap();
    assert_ne!(code(&r), 0);
}

#[test]
fn check_suites_report_pass_and_fail() {
    let r = bin()
        .args(["check", "all", "--instances", "200", "--iterations", "30"])
        .output()
        .unwrap();
    let text = String::from_utf8_lossy(&r.stdout);
    assert_eq!(code(&r), 0, "{text}");
    assert_eq!(text.lines().filter(|l| l.ends_with(": PASS")).count(), 2, "{text}");

    let r = bin()
        .args(["check", "engine1d", "--iterations", "30", "--lipschitz-scale", "0.3"])
        .output()
        .unwrap();
    assert_eq!(code(&r), 1);
    assert!(String::from_utf8_lossy(&r.stdout).contains("FAIL"));
}

#[test]
fn unattainable_fit_tolerance_exits_4() {
    let tmp = TempDir::new().unwrap();
    let ds = json!({
        "n": 3, "mu": 3, "L": 2.0,
        "samples": [
            {"amp": [1.0, 0.5, -0.3], "input": [1.0, 0.5, -0.3], "output": [0.3, 1.0, -0.2]},
            {"amp": [0.2, -1.0, 0.4], "input": [0.2, -1.0, 0.4], "output": [0.9, 0.1, 0.5]},
            {"amp": [0.7, 0.7, 0.1], "input": [0.7, 0.7, 0.1], "output": [-0.5, 0.2, 0.8]}
        ]
    });
    let (c, g) = fit(&ds, &tmp, &["--tol", "1e-300"]);
    assert_eq!(c, 4);
    // The best surrogate found is still written.
    assert_eq!(g.unwrap().len(), 3);
    assert_eq!(fit(&ds, &tmp, &[]).0, 0);
}
