//! End-to-end checks of the binary: exit codes, emitted files, stdout
//! mirroring, and byte determinism across reruns.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn qtel(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_qtel")).args(args).output().expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("no signal")
}

fn summary(dir: &Path) -> serde_json::Value {
    let text = fs::read_to_string(dir.join("summary.json")).expect("summary.json exists");
    serde_json::from_str(&text).expect("summary.json parses")
}

fn write_config(dir: &Path, body: &str) -> String {
    let path = dir.join("config.json");
    fs::write(&path, body).unwrap();
    path.to_str().unwrap().to_owned()
}

#[test]
fn validate_defaults_report_the_pulse_calibration() {
    let tmp = tempfile::tempdir().unwrap();
    let out = qtel(&["validate", "--out", tmp.path().to_str().unwrap()]);
    assert_eq!(code(&out), 0, "stderr: {}", String::from_utf8_lossy(&out.stderr));

    let stdout = String::from_utf8(out.stdout).unwrap();
    let echoed = fs::read_to_string(tmp.path().join("summary.json")).unwrap();
    assert_eq!(stdout, echoed, "stdout must mirror summary.json byte for byte");

    let s = summary(tmp.path());
    assert_eq!(s["command"], "validate");
    let alpha = s["results"]["alpha"].as_f64().unwrap();
    assert!((alpha - 0.9921518783635879).abs() < 1e-12);

    let csv = fs::read_to_string(tmp.path().join("validate.csv")).unwrap();
    assert_eq!(csv.lines().next(), Some("quantity,value"));
}

#[test]
fn overdamped_parameters_exit_with_the_regime_code() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(
        tmp.path(),
        r#"{"g_mhz": 10.0, "omega_mhz": 10.0, "kappa_mhz": 3.0, "gamma_mhz": 1.0, "delta_mhz": 100.0}"#,
    );
    let out = qtel(&["teleport", "--config", &cfg, "--out", tmp.path().to_str().unwrap()]);
    assert_eq!(code(&out), 2);
}

#[test]
fn missing_required_field_exits_with_the_config_code() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(
        tmp.path(),
        r#"{"g_mhz": 10.0, "omega_mhz": 10.0, "gamma_mhz": 1.0, "delta_mhz": 100.0}"#,
    );
    let out = qtel(&["validate", "--config", &cfg, "--out", tmp.path().to_str().unwrap()]);
    assert_eq!(code(&out), 1);
    let stderr = String::from_utf8(out.stderr).unwrap();
    assert!(stderr.contains("kappa_mhz"), "stderr names the missing field: {stderr}");
}

#[test]
fn unknown_config_field_exits_with_the_config_code() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(
        tmp.path(),
        r#"{"g_mhz": 10.0, "omega_mhz": 10.0, "kappa_mhz": 0.01, "gamma_mhz": 1.0, "delta_mhz": 100.0, "kapa_mhz": 5.0}"#,
    );
    let out = qtel(&["validate", "--config", &cfg, "--out", tmp.path().to_str().unwrap()]);
    assert_eq!(code(&out), 1);
}

#[test]
fn invalid_run_settings_exit_with_the_config_code() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path().to_str().unwrap();
    assert_eq!(code(&qtel(&["teleport", "--trajectories", "0", "--out", dir])), 1);
    assert_eq!(code(&qtel(&["entangle", "--td-us", "0", "--out", dir])), 1);
}

#[test]
fn usage_errors_and_help_use_standard_codes() {
    assert_eq!(code(&qtel(&["no-such-command"])), 1);
    assert_eq!(code(&qtel(&["--help"])), 0);
    assert_eq!(code(&qtel(&["--version"])), 0);
}

#[test]
fn teleport_emits_one_record_per_trajectory() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path().to_str().unwrap();
    let out = qtel(&[
        "teleport", "--trajectories", "50", "--td-us", "10", "--seed", "3", "--out", dir,
    ]);
    assert_eq!(code(&out), 0, "stderr: {}", String::from_utf8_lossy(&out.stderr));

    let csv = fs::read_to_string(tmp.path().join("teleport.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("trajectory,outcome,detector,t_click_us,fidelity"));
    assert_eq!(lines.count(), 50);
    assert!(tmp.path().join("teleport.svg").exists());

    let s = summary(tmp.path());
    assert_eq!(s["results"]["mc"]["trajectories"], 50);
}

#[test]
fn fig3_grid_layout_and_monotone_analytic_column() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(
        tmp.path(),
        r#"{"g_mhz": 10.0, "omega_mhz": 10.0, "kappa_mhz": 0.01, "gamma_mhz": 1.0, "delta_mhz": 100.0,
            "t_d_grid_us": [0.0, 5.0, 10.0], "trajectories": 40}"#,
    );
    let out = qtel(&["fig3", "--config", &cfg, "--seed", "5", "--out", tmp.path().to_str().unwrap()]);
    assert_eq!(code(&out), 0, "stderr: {}", String::from_utf8_lossy(&out.stderr));

    let csv = fs::read_to_string(tmp.path().join("fig3.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "t_d_us,f_avg_analytic,f_avg_mc,f_mc_stderr");
    assert_eq!(lines.len(), 4);
    assert!(lines[1].ends_with(",,"), "no Monte Carlo columns at zero window: {}", lines[1]);

    let analytic: Vec<f64> = lines[1..]
        .iter()
        .map(|l| l.split(',').nth(1).unwrap().parse().unwrap())
        .collect();
    assert!(analytic.windows(2).all(|w| w[1] >= w[0]));
    assert!(tmp.path().join("fig3.svg").exists());
}

#[test]
fn efficiency_reports_the_reference_points() {
    let tmp = tempfile::tempdir().unwrap();
    let out = qtel(&["efficiency", "--td-us", "50", "--out", tmp.path().to_str().unwrap()]);
    assert_eq!(code(&out), 0);

    let s = summary(tmp.path());
    let f06 = s["results"]["f_at_eta_0_6"].as_f64().unwrap();
    let f10 = s["results"]["f_at_eta_1"].as_f64().unwrap();
    assert!((f06 - 0.8096023731551124).abs() < 1e-12);
    assert!((f10 - 0.9987519224031454).abs() < 1e-12);

    let csv = fs::read_to_string(tmp.path().join("efficiency.csv")).unwrap();
    assert_eq!(csv.lines().next(), Some("eta,f_avg_analytic,p_success_analytic"));
    assert_eq!(csv.lines().count(), 21);
}

#[test]
fn entangle_reports_both_mixture_conventions() {
    let tmp = tempfile::tempdir().unwrap();
    let out = qtel(&[
        "entangle", "--eta", "0.6", "--td-us", "50", "--trajectories", "300", "--seed", "2",
        "--out", tmp.path().to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 0, "stderr: {}", String::from_utf8_lossy(&out.stderr));

    let s = summary(tmp.path());
    let lam_n = s["results"]["analytic"]["lambda_normalized_ket"].as_f64().unwrap();
    let lam_u = s["results"]["analytic"]["lambda_unnormalized_ket"].as_f64().unwrap();
    assert!((lam_n - 0.5564775581874605).abs() < 1e-12);
    assert!((lam_u - 0.7150473262659646).abs() < 1e-12);
    assert!(s["results"]["relative_entropy_of_entanglement"]["value"].is_f64());

    let csv = fs::read_to_string(tmp.path().join("entangle.csv")).unwrap();
    assert_eq!(csv.lines().next(), Some("row,col,analytic_re,analytic_im,mc_re,mc_im"));
}

/// Needs an asymmetric qubit: with equal amplitudes the two encoded branches
/// coincide and recovery is exact at any efficiency.
#[test]
fn insurance_flags_degraded_recovery_below_unit_efficiency() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(
        tmp.path(),
        r#"{"g_mhz": 10.0, "omega_mhz": 10.0, "kappa_mhz": 0.01, "gamma_mhz": 1.0, "delta_mhz": 100.0,
            "input_qubit": [0.6, 0.0, 0.8, 0.0]}"#,
    );
    let out = qtel(&["insurance", "--config", &cfg, "--eta", "0.6", "--out", tmp.path().to_str().unwrap()]);
    assert_eq!(code(&out), 0);
    let s = summary(tmp.path());
    assert_eq!(s["results"]["all_recoverable"], false);
    assert!(!s["warnings"].as_array().unwrap().is_empty());

    let clean = tempfile::tempdir().unwrap();
    let out = qtel(&["insurance", "--config", &cfg, "--eta", "1", "--out", clean.path().to_str().unwrap()]);
    assert_eq!(code(&out), 0);
    let s = summary(clean.path());
    assert_eq!(s["results"]["all_recoverable"], true);
}

#[test]
fn renormalized_input_qubit_warns_and_proceeds() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(
        tmp.path(),
        r#"{"g_mhz": 10.0, "omega_mhz": 10.0, "kappa_mhz": 0.01, "gamma_mhz": 1.0, "delta_mhz": 100.0,
            "input_qubit": [3.0, 0.0, 4.0, 0.0], "trajectories": 30}"#,
    );
    let out = qtel(&["teleport", "--config", &cfg, "--td-us", "10", "--out", tmp.path().to_str().unwrap()]);
    assert_eq!(code(&out), 0);
    let s = summary(tmp.path());
    let warned = s["warnings"].as_array().unwrap().iter().any(|w| {
        w.as_str().unwrap().contains("renormalized")
    });
    assert!(warned, "warnings: {}", s["warnings"]);
}

#[test]
fn rerunning_the_same_seed_reproduces_every_output_byte() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path().to_str().unwrap();
    let args = ["teleport", "--trajectories", "60", "--td-us", "15", "--seed", "7", "--out", dir];

    let first = qtel(&args);
    assert_eq!(code(&first), 0);
    let snapshot: Vec<(String, Vec<u8>)> = ["summary.json", "teleport.csv", "teleport.svg"]
        .iter()
        .map(|name| (name.to_string(), fs::read(tmp.path().join(name)).unwrap()))
        .collect();

    let second = qtel(&args);
    assert_eq!(code(&second), 0);
    assert_eq!(first.stdout, second.stdout);
    for (name, bytes) in snapshot {
        assert_eq!(fs::read(tmp.path().join(&name)).unwrap(), bytes, "{name} changed on rerun");
    }
}
