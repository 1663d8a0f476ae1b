use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

const GAP: &str = "m = 2.0\nd = 3\ndelta = 0.0\nrho = 1.0\na = 0.0\neta = 2.0\nR = 1.0\n";

fn ergolab(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ergolab")).args(args).output().expect("binary runs")
}

fn setup() -> (TempDir, PathBuf) {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("case.toml");
    std::fs::write(&cfg, GAP).unwrap();
    (dir, cfg)
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn json(p: &Path) -> serde_json::Value {
    serde_json::from_str(&std::fs::read_to_string(p).unwrap()).unwrap()
}

/// Report JSON with wall times and timestamp removed.
fn masked(p: &Path) -> serde_json::Value {
    let mut v = json(p);
    v["timestamp"] = serde_json::Value::Null;
    for row in v["rows"].as_array_mut().unwrap() {
        row["seconds"] = serde_json::Value::Null;
    }
    v
}

#[test]
fn solve_at_zero_beta() {
    let (dir, cfg) = setup();
    let out = dir.path().join("sol.json");
    let o = ergolab(&["solve", "--config", s(&cfg), "--beta", "0", "--out", s(&out)]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let v = json(&out);
    assert!(v["lambda"].as_f64().unwrap().abs() < 1e-6);

    let csv = dir.path().join("sol.csv");
    let o = ergolab(&["solve", "--config", s(&cfg), "--beta", "1", "--grid-n", "128", "--out", s(&csv)]);
    assert_eq!(o.status.code(), Some(0));
    assert!(std::fs::read_to_string(&csv).unwrap().lines().count() > 128);
}

#[test]
fn certify_exit_codes() {
    let (dir, cfg) = setup();
    let out = dir.path().join("cert.json");
    let o = ergolab(&["certify", "--config", s(&cfg), "--beta", "100", "--out", s(&out)]);
    assert_eq!(o.status.code(), Some(0));
    let lb = json(&out)["lambda_lower"].as_f64().unwrap();
    assert!(lb > 0.45 && lb < 0.5);

    let o = ergolab(&["certify", "--config", s(&cfg), "--beta", "100", "--lambda", "0.6"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("rejected"));
}

#[test]
fn usage_errors_exit_2() {
    let (dir, cfg) = setup();
    assert_eq!(ergolab(&["frobnicate"]).status.code(), Some(2));
    let missing = dir.path().join("nope.toml");
    assert_eq!(ergolab(&["solve", "--config", s(&missing), "--beta", "1"]).status.code(), Some(2));
    assert_eq!(ergolab(&["solve", "--beta", "1"]).status.code(), Some(2));
    assert_eq!(ergolab(&["solve", "--config", s(&cfg), "--set", "zeta=1", "--beta", "1"]).status.code(), Some(2));
    assert_eq!(ergolab(&["solve", "--config", s(&cfg), "--set", "rho=-1", "--beta", "1"]).status.code(), Some(2));
    assert_eq!(ergolab(&["sweep", "--config", s(&cfg), "--betas", "10:1:x10"]).status.code(), Some(2));
    assert_eq!(ergolab(&["xcheck", "--config", s(&cfg), "--set", "m=3", "--beta", "1"]).status.code(), Some(2));
    assert_eq!(ergolab(&["--help"]).status.code(), Some(0));
}

#[test]
fn sweep_report_round_trip_and_determinism() {
    let (dir, cfg) = setup();
    let a = dir.path().join("a.json");
    let b = dir.path().join("b.json");
    for out in [&a, &b] {
        let o = ergolab(&["sweep", "--config", s(&cfg), "--betas", "1e1:1e4:x10", "--jobs", "2", "--out", s(out)]);
        assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    }
    assert_eq!(masked(&a), masked(&b));
    let v = json(&a);
    assert_eq!(v["rows"].as_array().unwrap().len(), 4);
    assert!(v["fits"]["moderate_gap"]["rate"].as_f64().is_some());

    let r1 = dir.path().join("r1.json");
    let r2 = dir.path().join("r2.json");
    assert_eq!(ergolab(&["report", "--input", s(&a), "--out", s(&r1)]).status.code(), Some(0));
    assert_eq!(ergolab(&["report", "--input", s(&r1), "--out", s(&r2)]).status.code(), Some(0));
    assert_eq!(std::fs::read(&r1).unwrap(), std::fs::read(&r2).unwrap());
    assert_eq!(json(&r1)["rows"], v["rows"]);

    let csv = dir.path().join("rows.csv");
    let csv2 = dir.path().join("rows2.csv");
    assert_eq!(ergolab(&["report", "--input", s(&a), "--out", s(&csv)]).status.code(), Some(0));
    let o = ergolab(&["report", "--config", s(&cfg), "--input", s(&csv), "--out", s(&csv2)]);
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(std::fs::read(&csv).unwrap(), std::fs::read(&csv2).unwrap());
}

#[test]
fn xcheck_and_simulate() {
    let (dir, cfg) = setup();
    let x = dir.path().join("x.json");
    let o = ergolab(&["xcheck", "--config", s(&cfg), "--beta", "20", "--grid-n", "1024", "--out", s(&x)]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(json(&x)["pass"], serde_json::Value::Bool(true));

    let outs = [dir.path().join("s1.json"), dir.path().join("s2.json")];
    let mut codes = Vec::new();
    for out in &outs {
        let o = ergolab(&[
            "simulate",
            "--config",
            s(&cfg),
            "--beta",
            "5",
            "--grid-n",
            "512",
            "--paths",
            "16",
            "--horizon",
            "20",
            "--dt",
            "1e-2",
            "--seed",
            "7",
            "--out",
            s(out),
        ]);
        codes.push(o.status.code());
    }
    assert!(codes[0] == Some(0) || codes[0] == Some(1));
    assert_eq!(codes[0], codes[1]);
    assert_eq!(std::fs::read(&outs[0]).unwrap(), std::fs::read(&outs[1]).unwrap());
}
