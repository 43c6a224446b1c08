use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn scenario(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../scenarios").join(name)
}

fn gaugeframe(config: &Path, out: &Path, args: &[&str], log: &str) -> Output {
    Command::new(env!("CARGO_BIN_EXE_gaugeframe"))
        .arg(config)
        .arg("--output")
        .arg(out)
        .args(args)
        .env("GAUGEFRAME_LOG", log)
        .output()
        .unwrap()
}

fn rows(csv: &str) -> (Vec<String>, Vec<Vec<String>>) {
    let mut lines = csv.lines();
    let header = lines.next().unwrap().split(',').map(String::from).collect();
    let body = lines.map(|l| l.split(',').map(String::from).collect()).collect();
    (header, body)
}

#[test]
fn rrft_writes_one_record_per_point() {
    let dir = tempfile::tempdir().unwrap();
    let o = gaugeframe(&scenario("particle_rrft.toml"), dir.path(), &[], "quiet");
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let records: Vec<Value> = serde_json::from_slice(&std::fs::read(dir.path().join("rrft.json")).unwrap()).unwrap();
    assert_eq!(records.len(), 3);
    for r in &records {
        let keys: Vec<&str> = r.as_object().unwrap().keys().map(String::as_str).collect();
        for k in ["point", "image", "h_a", "h_b_pullback", "abs_diff"] {
            assert!(keys.contains(&k), "missing {k} in {r}");
        }
        assert_eq!(r["image"].as_array().unwrap().len(), 2);
        let (h_a, h_b) = (r["h_a"].as_f64().unwrap(), r["h_b_pullback"].as_f64().unwrap());
        assert!((r["abs_diff"].as_f64().unwrap() - (h_b - h_a).abs()).abs() <= 1e-14);
        // Unit mass: h_a = √(p² + 1) sits above the pulled-back |p|.
        let p = r["point"][1].as_f64().unwrap();
        assert!((h_a - (p * p + 1.0).sqrt()).abs() <= 1e-9 && h_a >= h_b - 1e-9, "{r}");
    }
}

#[test]
fn orbit_flags_cut_rows() {
    let dir = tempfile::tempdir().unwrap();
    let o = gaugeframe(&scenario("kepler_orbit.toml"), dir.path(), &[], "quiet");
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let (header, body) = rows(&std::fs::read_to_string(dir.path().join("orbit.csv")).unwrap());
    assert_eq!(header, ["s", "r", "p", "phi", "l", "residual", "cut", "t"]);
    assert_eq!(body.len(), 21 + 2);
    let cuts: Vec<&Vec<String>> = body.iter().filter(|r| r[6] == "1").collect();
    assert_eq!(cuts.len(), 2);
    for r in &cuts {
        let t: f64 = r[7].parse().unwrap();
        let phi: f64 = r[3].parse().unwrap();
        assert!((phi - t).abs() <= 1e-9, "{r:?}");
    }
    assert!(body.iter().filter(|r| r[6] == "0").all(|r| r[7].is_empty()));
    let s: Vec<f64> = body.iter().map(|r| r[0].parse().unwrap()).collect();
    assert!(s.windows(2).all(|w| w[0] <= w[1]));
}

#[test]
fn csv_values_round_trip_exactly() {
    let dir = tempfile::tempdir().unwrap();
    let o = gaugeframe(&scenario("toy_evolve.toml"), dir.path(), &[], "quiet");
    assert_eq!(o.status.code(), Some(0));
    let (_, body) = rows(&std::fs::read_to_string(dir.path().join("trajectory.csv")).unwrap());
    assert!(!body.is_empty());
    for cell in body.iter().flatten() {
        let v: f64 = cell.parse().unwrap();
        assert_eq!(format!("{v:.16e}").parse::<f64>().unwrap(), v);
        assert_eq!(&format!("{v:.16e}"), cell);
    }
}

#[test]
fn quiet_log_leaves_stderr_empty() {
    let dir = tempfile::tempdir().unwrap();
    let quiet = gaugeframe(&scenario("particle_verify.toml"), dir.path(), &[], "quiet");
    assert_eq!(quiet.status.code(), Some(0));
    assert!(quiet.stderr.is_empty(), "{}", String::from_utf8_lossy(&quiet.stderr));
    let stdout = String::from_utf8(quiet.stdout).unwrap();
    assert!(stdout.lines().any(|l| l.starts_with("PASS ")));
    assert!(!stdout.lines().any(|l| l.starts_with("FAIL ")));

    let debug = gaugeframe(&scenario("particle_verify.toml"), dir.path(), &[], "debug");
    assert!(!debug.stderr.is_empty());
}

#[test]
fn command_override_switches_artifact() {
    let dir = tempfile::tempdir().unwrap();
    let o = gaugeframe(&scenario("toy_evolve.toml"), dir.path(), &["--command", "verify"], "quiet");
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(dir.path().join("report.json").exists());
    assert!(!dir.path().join("trajectory.csv").exists());
}

#[test]
fn configuration_errors_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let missing = gaugeframe(&dir.path().join("absent.toml"), dir.path(), &[], "quiet");
    assert_eq!(missing.status.code(), Some(2));
    assert!(!missing.stderr.is_empty());

    let bad = gaugeframe(&scenario("toy_evolve.toml"), dir.path(), &["--command", "dance"], "quiet");
    assert_eq!(bad.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&bad.stderr).contains("--command"));

    let garbled = dir.path().join("garbled.toml");
    std::fs::write(&garbled, "[model\nkind = ").unwrap();
    assert_eq!(gaugeframe(&garbled, dir.path(), &[], "quiet").status.code(), Some(2));
}

#[test]
fn tight_tolerance_fails_verification() {
    let dir = tempfile::tempdir().unwrap();
    let o = gaugeframe(&scenario("kepler_verify.toml"), dir.path(), &["--tol", "1e-30"], "quiet");
    assert_eq!(o.status.code(), Some(1));
    let report: Value = serde_json::from_slice(&std::fs::read(dir.path().join("report.json")).unwrap()).unwrap();
    assert!(report.to_string().contains("false"));
}
