//! Command-line behaviour: exit codes and table outputs.

use std::process::Command;

fn dgbp(args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_dgbp"))
        .args(args)
        .env("RUST_LOG", "error")
        .output()
        .unwrap()
}

fn config(name: &str) -> String {
    format!("{}/../../configs/{name}", env!("CARGO_MANIFEST_DIR"))
}

#[test]
fn usage_errors_exit_with_two() {
    assert_eq!(dgbp(&[]).status.code(), Some(2));
    assert_eq!(dgbp(&["run"]).status.code(), Some(2));
    assert_eq!(dgbp(&["run", &config("diode400.json"), "--band", "bogus"]).status.code(), Some(2));
}

#[test]
fn missing_and_invalid_configs_exit_with_two() {
    let out = dgbp(&["run", "/nonexistent/config.json"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("/nonexistent/config.json"));

    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, r#"{"time": {"cfl": -1.0}}"#).unwrap();
    assert_eq!(dgbp(&["run", bad.to_str().unwrap()]).status.code(), Some(2));
}

#[test]
fn print_flags_exit_cleanly() {
    let out = dgbp(&["run", &config("diode400.json"), "--print-scaling"]);
    assert!(out.status.success());
    assert!(String::from_utf8_lossy(&out.stdout).contains("c_p"));
    let out = dgbp(&["run", &config("diode400.json"), "--print-mesh"]);
    assert!(out.status.success());
    assert!(String::from_utf8_lossy(&out.stdout).lines().count() > 120);
}

#[test]
fn band_table_has_kane_below_parabolic() {
    let out = dgbp(&["bands", "--points", "73"]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next().unwrap(), "r,eps_parabolic,deps_parabolic,eps_kane,deps_kane");
    let rows: Vec<Vec<f64>> = lines
        .map(|l| l.split(',').map(|v| v.parse().unwrap()).collect())
        .collect();
    assert_eq!(rows.len(), 73);
    for row in &rows {
        assert_eq!(row[1], row[0]);
        assert!(row[3] <= row[0]);
        assert!(row[4] > 0.0 && row[4] <= 1.0);
    }
}

#[test]
fn synthetic_band_round_trips_through_average() {
    let dir = tempfile::tempdir().unwrap();
    let band = dir.path().join("syn.band");
    let radial = dir.path().join("syn_radial.band");
    assert!(dgbp(&["synth", band.to_str().unwrap(), "--points", "33"]).status.success());
    let out = dgbp(&["average", band.to_str().unwrap(), "--out", radial.to_str().unwrap()]);
    assert!(out.status.success());
    let table = format!("table:{}", radial.display());
    let out = dgbp(&["bands", "--band", &table, "--rmax", "64", "--points", "5"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn check_subcommand_passes() {
    let out = dgbp(&["check", "--seed", "3"]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    assert_eq!(text.lines().filter(|l| l.starts_with("[PASS]")).count(), 7);
}
