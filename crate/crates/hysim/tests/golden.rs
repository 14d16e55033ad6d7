//! `report.json` regression files. Regenerate with `HYSIM_BLESS=1`.

use std::fs;
use std::path::Path;

use hysim::{ExperimentConfig, RunPlan, REPORT_SCHEMA_VERSION};

fn check(name: &str, cfg: &str) {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg: ExperimentConfig = serde_json::from_str(cfg).unwrap();
    cfg.out = Some(dir.path().to_path_buf());
    let plan = RunPlan::resolve(cfg).unwrap();
    hysim::run(&plan).unwrap();
    let got = fs::read_to_string(dir.path().join("report.json")).unwrap();
    let golden = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/golden").join(format!("{name}.json"));
    if std::env::var_os("HYSIM_BLESS").is_some() {
        fs::write(&golden, &got).unwrap();
    }
    let want = fs::read_to_string(&golden).unwrap();
    assert_eq!(got, want, "{name} report drifted from {}", golden.display());
    let v: serde_json::Value = serde_json::from_str(&got).unwrap();
    assert_eq!(v["schema_version"], REPORT_SCHEMA_VERSION);
}

#[test]
fn neural_bvp_report() {
    check("neural_bvp", r#"{ "experiment": "neural", "n": 100, "plots": false }"#);
}

#[test]
fn gated_report() {
    check(
        "gated_small",
        r#"{ "experiment": "gated", "n": 30, "seed": 3, "paths": 200, "configurations": [[0.5], [0.3, 0.7]], "plots": false }"#,
    );
}

#[test]
fn report_keys_are_stable() {
    let text = fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/tests/golden/neural_bvp.json")).unwrap();
    let v: serde_json::Value = serde_json::from_str(&text).unwrap();
    let keys: Vec<&str> = v.as_object().unwrap().keys().map(String::as_str).collect();
    assert_eq!(
        keys,
        ["artifacts", "checks", "experiment", "scalars", "schema_version", "seed", "settings", "verdict", "xval"]
    );
}
