//! End-to-end runs of the `adiaframe` binary.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use adiaframe::cli::{read_csv_table, read_report};

fn run(dir: &Path, name: &str, config: &str, extra: &[&str]) -> (Output, PathBuf) {
    let cfg = dir.join(format!("{name}.json"));
    std::fs::write(&cfg, config).unwrap();
    let out = dir.join(name);
    let output = Command::new(env!("CARGO_BIN_EXE_adiaframe"))
        .arg("--config")
        .arg(&cfg)
        .arg("--out")
        .arg(&out)
        .args(extra)
        .output()
        .unwrap();
    (output, out)
}

#[test]
fn stern_gerlach_demo() {
    let dir = tempfile::tempdir().unwrap();
    let (output, out) = run(dir.path(), "sg", r#"{"kind": "stern_gerlach", "dt": 0.01, "duration": 1.0}"#, &[]);
    assert_eq!(output.status.code(), Some(0), "{}", String::from_utf8_lossy(&output.stderr));
    assert!(String::from_utf8_lossy(&output.stdout).contains("pass "));

    let report = read_report(&out.join("report.json")).unwrap();
    assert!(report.passed);
    let half = std::f64::consts::FRAC_1_SQRT_2.powi(2);
    assert_eq!(report.results["weights"]["plus"], half);
    assert_eq!(report.results["weights"]["minus"], half);
    assert_eq!(report.config_hash.len(), 40);

    let plus = read_csv_table(&out.join("trajectory_plus.csv")).unwrap();
    let minus = read_csv_table(&out.join("trajectory_minus.csv")).unwrap();
    let (zp, zm) = (plus.column("x2").unwrap(), minus.column("x2").unwrap());
    assert_eq!(zp.len(), 101);
    assert!(zp.last().unwrap() > zm.last().unwrap());
    let t = plus.column("t").unwrap();
    assert!((t.last().unwrap() - 1.0).abs() < 1e-12);
}

#[test]
fn entropy_audit_passes_every_draw() {
    let dir = tempfile::tempdir().unwrap();
    let (output, out) = run(dir.path(), "audit", r#"{"kind": "entropy_audit", "seed": 5}"#, &["--quiet"]);
    assert_eq!(output.status.code(), Some(0));
    assert!(output.stdout.is_empty());
    let report = read_report(&out.join("report.json")).unwrap();
    assert_eq!(report.results["monotonicity"]["passes"], 1000);
    assert_eq!(report.results["monotonicity"]["draws"], 1000);
}

#[test]
fn custom_family_with_projection() {
    let dir = tempfile::tempdir().unwrap();
    let config = r#"{"kind": "custom_family", "dt": 0.002, "duration": 1.0,
        "custom": {
            "family": {"coords": 1, "terms": [
                {"matrix": {"re": [[0, 0.5], [0.5, 0]]}, "powers": [0]},
                {"matrix": {"re": [[1, 0], [0, -1]]}, "powers": [1]}]},
            "x0": [-1.0], "v0": [1.0], "mass": 20.0,
            "initial": {"amplitudes": [[0.6, 0], [0, 0.8]]},
            "projections": [{"step": 250}]}}"#;
    let (output, out) = run(dir.path(), "custom", config, &["--quiet", "--seed", "9"]);
    assert_eq!(output.status.code(), Some(0), "{}", String::from_utf8_lossy(&output.stderr));
    let report = read_report(&out.join("report.json")).unwrap();
    assert_eq!(report.config.seed, Some(9));
    for summary in &report.trajectories {
        assert_eq!(summary.projections, 1);
        let table = read_csv_table(&out.join(summary.csv.as_ref().unwrap())).unwrap();
        let (re, im) = (table.column("rho01_re").unwrap(), table.column("rho01_im").unwrap());
        assert_eq!((re[250], im[250]), (0.0, 0.0));
    }
}

#[test]
fn errors_are_reported_as_json() {
    let dir = tempfile::tempdir().unwrap();
    let (output, _) = run(dir.path(), "bad", r#"{"kind": "stern_gerlach", "dt": -1}"#, &[]);
    assert_eq!(output.status.code(), Some(2));
    let record: serde_json::Value = serde_json::from_slice(&output.stderr).unwrap();
    assert_eq!(record["error"]["kind"], "validation");
    assert!(record["error"]["message"].as_str().unwrap().contains("dt"));

    let (output, _) = run(dir.path(), "strict", r#"{"kind": "stern_gerlach", "colour": 1}"#, &["--strict"]);
    assert_eq!(output.status.code(), Some(2));
    let (output, _) = run(dir.path(), "lenient", r#"{"kind": "stern_gerlach", "colour": 1}"#, &["--quiet"]);
    assert_eq!(output.status.code(), Some(0));
}

#[test]
fn tolerance_profile_from_environment() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("sg.json");
    std::fs::write(&cfg, r#"{"kind": "stern_gerlach", "duration": 0.1}"#).unwrap();
    let status = |profile: &str| {
        Command::new(env!("CARGO_BIN_EXE_adiaframe"))
            .arg("--config")
            .arg(&cfg)
            .arg("--out")
            .arg(dir.path().join(profile))
            .arg("--quiet")
            .env("ADIAFRAME_TOLERANCE_PROFILE", profile)
            .status()
            .unwrap()
            .code()
    };
    assert_eq!(status("strict"), Some(0));
    assert_eq!(status("bogus"), Some(2));
    let report = read_report(&dir.path().join("strict/report.json")).unwrap();
    assert_eq!(report.tolerances.ledger, 1e-8);
}
