//! The `mmgate` binary: outputs, exit codes and the manifest reference.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::Output;

use serde_json::{json, Value};

fn fig(name: &str) -> Value {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("configs").join(name);
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

fn write_config(dir: &Path, config: &Value) -> PathBuf {
    let path = dir.join("config.json");
    fs::write(&path, serde_json::to_string_pretty(config).unwrap()).unwrap();
    path
}

fn mmgate(args: &[&str], config: &Path, out: &Path) -> Output {
    std::process::Command::new(env!("CARGO_BIN_EXE_mmgate"))
        .args(args)
        .arg("--config")
        .arg(config)
        .arg("--out")
        .arg(out)
        .output()
        .unwrap()
}

fn code(output: &Output) -> i32 {
    output.status.code().unwrap()
}

#[test]
fn trap_prints_the_derived_parameters() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), &fig("fig1.json"));
    let out = mmgate(&["trap"], &config, dir.path());
    assert_eq!(code(&out), 0);
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.contains("omega_cm/2pi (MHz)   0.9650"), "{text}");
    let manifest: Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("trap.manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["command"], "trap");
    assert_eq!(manifest["config"]["trap"]["dc_voltage_v"], 21.0);
}

#[test]
fn modes_start_at_one_and_show_large_micromotion() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), &fig("fig1.json"));
    assert_eq!(code(&mmgate(&["modes"], &config, dir.path())), 0);
    let text = fs::read_to_string(dir.path().join("modes.csv")).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("# manifest=modes.manifest.json"));
    assert_eq!(lines.next(), Some("t_over_Tz,re_v_cm,im_v_cm,re_v_r,im_v_r,eta_mm"));
    let rows: Vec<Vec<f64>> = lines
        .map(|l| l.split(',').map(|x| x.parse().unwrap()).collect())
        .collect();
    assert_eq!(rows.len(), 2001);
    assert_eq!(&rows[0][..5], &[0.0, 1.0, 0.0, 1.0, 0.0]);
    assert!((rows[2000][0] - 2.0).abs() < 1e-12);
    let eta: Vec<f64> = rows.iter().map(|r| r[5]).collect();
    let spread = eta.iter().cloned().fold(f64::NEG_INFINITY, f64::max) - eta.iter().cloned().fold(f64::INFINITY, f64::min);
    assert!(spread > 2.0, "eta_mm peak-to-peak {spread}");
}

#[test]
fn static_modes_have_no_micromotion() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), &fig("fig1.json"));
    assert_eq!(code(&mmgate(&["modes", "--static"], &config, dir.path())), 0);
    let text = fs::read_to_string(dir.path().join("modes.csv")).unwrap();
    for line in text.lines().skip(2) {
        assert!(line.ends_with(",0.0000000000000000e0"), "{line}");
    }
}

#[test]
fn design_writes_report_and_waveform() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), &fig("fig3.json"));
    let out = mmgate(&["design"], &config, dir.path());
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let report: Value = serde_json::from_str(&fs::read_to_string(dir.path().join("design.json")).unwrap()).unwrap();
    assert_eq!(report["feasible"], true);
    assert!(report["fidelity"].as_f64().unwrap() > 0.9999);
    let waveform = fs::read_to_string(dir.path().join("waveform.csv")).unwrap();
    assert_eq!(waveform.lines().count(), 2 + 9);
    let depth = report["two_stage"]["micromotion_depth"][0].as_f64().unwrap();
    assert!(depth > 1.0, "a1 = {depth}");
}

#[test]
fn malformed_json_exits_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("config.json");
    fs::write(&config, "{ \"trap\": ").unwrap();
    let out = mmgate(&["trap"], &config, dir.path());
    assert_eq!(code(&out), 2);
}

#[test]
fn unknown_key_is_named() {
    let dir = tempfile::tempdir().unwrap();
    let mut value = fig("fig1.json");
    value["laser"]["wavevector"] = json!(8.0);
    let config = write_config(dir.path(), &value);
    let out = mmgate(&["trap"], &config, dir.path());
    assert_eq!(code(&out), 2);
    assert!(String::from_utf8_lossy(&out.stderr).contains("wavevector"));
}

#[test]
fn reserved_and_invalid_flags_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), &fig("fig1.json"));
    assert_eq!(code(&mmgate(&["trap", "--seedless"], &config, dir.path())), 2);
    assert_eq!(code(&mmgate(&["trap", "--workers", "0"], &config, dir.path())), 2);
}

#[test]
fn unstable_trap_exits_with_three() {
    let dir = tempfile::tempdir().unwrap();
    let mut value = fig("fig1.json");
    value["trap"]["ac_voltage_v"] = json!(3000.0);
    let config = write_config(dir.path(), &value);
    let out = mmgate(&["trap"], &config, dir.path());
    assert_eq!(code(&out), 3, "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn too_few_segments_exit_with_four() {
    let dir = tempfile::tempdir().unwrap();
    let mut value = fig("fig3.json");
    value["design"]["segments"] = json!(8);
    let config = write_config(dir.path(), &value);
    let out = mmgate(&["design"], &config, dir.path());
    assert_eq!(code(&out), 4, "{}", String::from_utf8_lossy(&out.stderr));
    let report: Value = serde_json::from_str(&fs::read_to_string(dir.path().join("design.json")).unwrap()).unwrap();
    assert_eq!(report["feasible"], false);
}

#[test]
fn static_scan_keeps_only_static_variants() {
    let dir = tempfile::tempdir().unwrap();
    let mut value = fig("fig2.json");
    value["design"]["scan"]["points"] = json!(5);
    let config = write_config(dir.path(), &value);
    let out = mmgate(&["scan", "--static", "--workers", "1"], &config, dir.path());
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    assert!(dir.path().join("scan_static.csv").exists());
    assert!(dir.path().join("scan_static-fixed.csv").exists());
    assert!(!dir.path().join("scan_micromotion.csv").exists());
}
