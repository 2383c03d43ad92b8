use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_perturbmc"));
    c.env_remove("PERTURBMC_TOL_EQ").env_remove("PERTURBMC_TOL_REC");
    c
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn report(dir: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(dir.join("report.json")).unwrap()).unwrap()
}

fn pole_order(r: &Value, src: &str, dst: &str) -> i64 {
    r["mfpt"]
        .as_array()
        .unwrap()
        .iter()
        .find(|e| e["source"] == src && e["target"] == dst)
        .unwrap_or_else(|| panic!("no entry {src}->{dst}"))["pole_order"]
        .as_i64()
        .unwrap()
}

#[test]
fn analyze_one_d_pole_orders() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let o = run(&["analyze", "--model", "1d", "--dtot", "5", "--mu", "1.5", "--mfpt", "a:r,r:a", "--out", out]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let r = report(dir.path());
    assert_eq!(pole_order(&r, "0", "5"), 1);
    assert_eq!(pole_order(&r, "5", "0"), 1);
    for f in ["expansion.csv", "stationary.csv", "mfpt.csv"] {
        assert!(dir.path().join(f).exists(), "{f} missing");
    }
}

#[test]
fn analyze_three_d_pole_orders() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let o = run(&["analyze", "--model", "3d", "--dtot", "2", "--mfpt", "a:r,r:a", "--out", out]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let r = report(dir.path());
    assert_eq!(pole_order(&r, "0.2.0", "2.0.0"), 1);
    assert_eq!(pole_order(&r, "2.0.0", "0.2.0"), 2);
}

#[test]
fn analyze_csv_is_reproducible_without_meta() {
    let d1 = tempfile::tempdir().unwrap();
    let d2 = tempfile::tempdir().unwrap();
    for d in [&d1, &d2] {
        let o = run(&[
            "analyze",
            "--model",
            "2d",
            "--dtot",
            "3",
            "--mfpt",
            "a:r",
            "--no-meta",
            "--out",
            d.path().to_str().unwrap(),
        ]);
        assert_eq!(code(&o), 0);
    }
    for f in ["expansion.csv", "stationary.csv", "mfpt.csv"] {
        let a = fs::read(d1.path().join(f)).unwrap();
        let b = fs::read(d2.path().join(f)).unwrap();
        assert_eq!(a, b, "{f} differs between runs");
        assert!(!String::from_utf8(a).unwrap().starts_with('#'));
    }
}

#[test]
fn meta_line_present_by_default() {
    let d = tempfile::tempdir().unwrap();
    let o = run(&["analyze", "--model", "1d", "--out", d.path().to_str().unwrap()]);
    assert_eq!(code(&o), 0);
    let text = fs::read_to_string(d.path().join("stationary.csv")).unwrap();
    assert!(text.starts_with("# perturbmc"));
}

#[test]
fn missing_model_file_is_usage_error() {
    let o = run(&["analyze", "--spec", "/nonexistent/model.txt"]);
    assert_eq!(code(&o), 2);
}

#[test]
fn bad_eps_is_usage_error() {
    assert_eq!(code(&run(&["analyze", "--model", "1d", "--eps", "-0.1"])), 2);
}

#[test]
fn empty_sweep_grid_is_usage_error() {
    let o = run(&["sweep", "--model", "1d", "--sweep-param", "mu", "--sweep-values", ""]);
    assert_eq!(code(&o), 2, "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn unknown_parameter_is_usage_error() {
    assert_eq!(code(&run(&["analyze", "--model", "1d", "--param", "nope=1"])), 2);
}

#[test]
fn sweep_writes_ordered_rows() {
    let d = tempfile::tempdir().unwrap();
    let o = run(&[
        "sweep",
        "--model",
        "1d",
        "--dtot",
        "6",
        "--sweep-param",
        "mu",
        "--sweep-values",
        "0.8,1.2",
        "--eps",
        "0.1,0.01",
        "--no-meta",
        "--out",
        d.path().to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let mut rdr = csv::Reader::from_path(d.path().join("sweep.csv")).unwrap();
    let rows: Vec<csv::StringRecord> = rdr.records().map(|r| r.unwrap()).collect();
    assert_eq!(rows.len(), 4);
    let mus: Vec<f64> = rows.iter().map(|r| r[0].parse().unwrap()).collect();
    assert!(mus.windows(2).all(|w| w[0] <= w[1]));
    assert!(d.path().join("histogram.csv").exists());
    assert!(d.path().join("sweep.json").exists());
}

#[test]
fn export_round_trips_through_model_file() {
    let d = tempfile::tempdir().unwrap();
    let file = d.path().join("two_d.txt");
    let o = run(&["export", "--model", "2d", "--dtot", "3", "--mu", "1.7", "--out", file.to_str().unwrap()]);
    assert_eq!(code(&o), 0);
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let o1 = run(&["analyze", "--model", "2d", "--dtot", "3", "--mu", "1.7", "--no-meta", "--out", a.path().to_str().unwrap()]);
    let o2 = run(&["analyze", "--spec", file.to_str().unwrap(), "--no-meta", "--out", b.path().to_str().unwrap()]);
    assert_eq!(code(&o1), 0);
    assert_eq!(code(&o2), 0, "{}", String::from_utf8_lossy(&o2.stderr));
    let pa: Vec<Value> = serde_json::from_value(report(a.path())["stationary"].clone()).unwrap();
    let pb: Vec<Value> = serde_json::from_value(report(b.path())["stationary"].clone()).unwrap();
    assert_eq!(pa.len(), pb.len());
    for (x, y) in pa.iter().zip(&pb) {
        let vx: Vec<f64> = serde_json::from_value(x["pi"].clone()).unwrap();
        let vy: Vec<f64> = serde_json::from_value(y["pi"].clone()).unwrap();
        assert_eq!(vx.len(), vy.len());
        for (p, q) in vx.iter().zip(&vy) {
            assert!((p - q).abs() <= 1e-12, "{p} vs {q}");
        }
    }
}

#[test]
fn validate_passes_on_defaults() {
    let o = run(&["validate", "--model", "1d", "--dtot", "3", "--ssa", "20000"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stdout));
}

#[test]
fn corrupted_tolerance_fails_validation() {
    let o = bin()
        .args(["validate", "--model", "1d", "--dtot", "3", "--ssa", "20000"])
        .env("PERTURBMC_TOL_EQ", "1e-30")
        .output()
        .unwrap();
    assert_eq!(code(&o), 1, "{}", String::from_utf8_lossy(&o.stdout));
    assert!(String::from_utf8_lossy(&o.stdout).contains("FAIL"));
}

#[test]
fn malformed_tolerance_is_usage_error() {
    let o = bin().args(["validate", "--model", "1d"]).env("PERTURBMC_TOL_EQ", "abc").output().unwrap();
    assert_eq!(code(&o), 2);
}
