use std::process::{Command, Output};

use probeanon_cli::levelset;
use serde_json::Value;

fn probeanon(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_probeanon")).args(args).output().expect("binary runs")
}

fn json(args: &[&str]) -> Value {
    let out = probeanon(args);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    serde_json::from_slice(&out.stdout).expect("valid JSON")
}

#[test]
fn rate_at_operating_point() {
    let v = json(&["rate", "--n", "1e7", "--m", "2^64", "--method", "series", "--json"]);
    let log10 = v["log10_value"].as_f64().unwrap();
    assert!((log10 + 12.567).abs() < 1e-3, "{log10}");
    assert_eq!(v["m"], "18446744073709551616");
    let text = probeanon(&["rate", "--n", "1000", "--m", "1024", "--method", "exact"]);
    assert!(String::from_utf8_lossy(&text.stdout).contains("3.614579692100"));
}

#[test]
fn invalid_input_is_an_error() {
    let out = probeanon(&["rate", "--n", "0", "--m", "8"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("error"));
}

#[test]
fn size_for_ten_million() {
    let v = json(&["size", "--n", "1e7", "--target", "1e-9", "--json"]);
    assert_eq!(v["log2_buckets"], 53);
}

#[test]
fn levelset_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("grid.csv");
    let v = json(&["levelset", "--out", path.to_str().unwrap(), "--json"]);
    assert_eq!(v["cells"], 50 * 55);
    let cells = levelset::read_csv(std::fs::File::open(&path).unwrap()).unwrap();
    assert_eq!(cells, levelset::compute(&levelset::GridSpec::default()).unwrap());
    assert!(cells.iter().any(|c| c.log10_rate.is_none()));
}

#[test]
fn verify_passes_and_is_deterministic() {
    let a = probeanon(&["verify", "--json"]);
    assert!(a.status.success());
    let b = probeanon(&["verify", "--json"]);
    assert_eq!(a.stdout, b.stdout);
    let v: Value = serde_json::from_slice(&a.stdout).unwrap();
    assert_eq!(v["suites"].as_array().unwrap().len(), 5);
}

#[test]
fn verify_detects_injected_faults() {
    for fault in ["series-sign", "closed-form-buckets"] {
        let out = probeanon(&["verify", "--inject-fault", fault]);
        assert_eq!(out.status.code(), Some(1), "{fault}");
        assert!(String::from_utf8_lossy(&out.stdout).contains("FAIL"));
    }
}

#[test]
fn simulate_reports_counts() {
    let v = json(&["simulate", "--sensors", "2", "--devices", "200", "--frames", "3", "--overlap", "0.5", "--json"]);
    for f in v["frames"].as_array().unwrap() {
        assert_eq!(f["unique_ids"], 200);
        assert_eq!(f["ground_truth"], 200);
    }
    assert_eq!(v["privacy"]["violations"].as_array().unwrap().len(), 0);
    assert_eq!(v["agreement"]["fraction"], 1.0);
}
