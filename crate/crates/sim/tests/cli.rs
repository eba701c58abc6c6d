use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use beamsync_sim::burst_io::{read_burst, sidecar_path, write_burst};
use beamsync_sim::harness::read_csv;

fn beamsync(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_beamsync"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn write_config(dir: &Path, text: &str) -> String {
    let path = dir.join("cfg.toml");
    fs::write(&path, text).unwrap();
    path.to_str().unwrap().to_string()
}

const SMALL: &str = r#"
[scenario]
num_bs = 2
num_frames = 3
[sweep]
sinr_points_db = [-10.0, 0.0]
trials = 3
methods = ["joint_algorithm", "cp_blind"]
"#;

#[test]
fn simulate_then_estimate() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SMALL);
    let iq = dir.path().join("b.iq");
    let out = beamsync(&["simulate", "-c", &cfg, "-o", iq.to_str().unwrap(), "--sinr", "-3"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(fs::metadata(&iq).unwrap().len(), 3 * 1024 * 16);
    assert!(sidecar_path(&iq).exists());

    let burst = read_burst(&iq).unwrap();
    assert_eq!(burst.config.target_sinr_db, -3.0);
    let truth = burst.truth.clone().unwrap();

    let out = beamsync(&["estimate", iq.to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = String::from_utf8(out.stdout).unwrap();
    let parsed: toml::Table = toml::from_str(&text).unwrap();
    let omegas = parsed["omegas_hat"].as_array().unwrap();
    assert_eq!(omegas.len(), 2);
    let w0 = omegas[0].as_float().unwrap();
    assert!((w0 - truth.omegas[0]).abs() < 1e-3);
    assert!(parsed.contains_key("iteration_trace"));
}

#[test]
fn burst_files_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SMALL);
    let iq = dir.path().join("a.iq");
    assert!(beamsync(&["simulate", "-c", &cfg, "-o", iq.to_str().unwrap()])
        .status
        .success());
    let burst = read_burst(&iq).unwrap();
    let copy = dir.path().join("copy.iq");
    write_burst(&burst, &copy).unwrap();
    assert_eq!(fs::read(&iq).unwrap(), fs::read(&copy).unwrap());
    assert_eq!(read_burst(&copy).unwrap(), burst);

    // Truncated sample data no longer matches the sidecar.
    let bytes = fs::read(&iq).unwrap();
    fs::write(&iq, &bytes[..bytes.len() - 16]).unwrap();
    assert_eq!(read_burst(&iq).unwrap_err().exit_code(), 2);
}

#[test]
fn estimate_external_capture_without_truth() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SMALL);
    let iq = dir.path().join("c.iq");
    assert!(beamsync(&["simulate", "-c", &cfg, "-o", iq.to_str().unwrap()])
        .status
        .success());
    let side = sidecar_path(&iq);
    let text = fs::read_to_string(&side).unwrap();
    let cut = text.find("[truth]").unwrap();
    fs::write(&side, &text[..cut]).unwrap();
    // Random delays cannot be recovered without truth.
    let out = beamsync(&["estimate", iq.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    let fixed = text[..cut].replace("max_delay = 8", "delays = [0, 0]");
    fs::write(&side, fixed).unwrap();
    let out = beamsync(&["estimate", iq.to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn sweep_writes_csv() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SMALL);
    let csv = dir.path().join("out.csv");
    let out = beamsync(&["sweep", "-c", &cfg, "-o", csv.to_str().unwrap(), "--workers", "2"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let rows = read_csv(&fs::read_to_string(&csv).unwrap()).unwrap();
    assert_eq!(rows.len(), 4);
    let stdout = beamsync(&["sweep", "-c", &cfg, "--workers", "1"]);
    assert_eq!(stdout.stdout, fs::read(&csv).unwrap());
    let timed = beamsync(&["sweep", "-c", &cfg, "--timing"]);
    assert!(String::from_utf8(timed.stdout).unwrap().contains("wall_time_s"));
}

#[test]
fn crlb_table_csv() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SMALL);
    let out = beamsync(&["crlb", "-c", &cfg]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("bs,gamma0,gamma1,r_mag,bound"));
    let rows: Vec<Vec<f64>> = lines
        .map(|l| l.split(',').map(|v| v.parse().unwrap()).collect())
        .collect();
    assert_eq!(rows.len(), 2);
    for r in rows {
        let expect = (1.0 / r[1] + 1.0 / r[2]) / (2.0 * 254.0f64.powi(2) * r[3] * r[3]);
        assert!((r[4] - expect).abs() <= 1e-12 * expect);
    }
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let bad = write_config(dir.path(), "[scenario]\nnot_a_key = 1\n");
    assert_eq!(beamsync(&["sweep", "-c", &bad]).status.code(), Some(2));
    assert_eq!(
        beamsync(&["sweep", "-c", "/definitely/missing.toml"]).status.code(),
        Some(4)
    );
    assert_eq!(beamsync(&["estimate", "/definitely/missing.iq"]).status.code(), Some(4));
    assert_eq!(beamsync(&["frobnicate"]).status.code(), Some(2));
}

#[test]
fn selftest_passes() {
    let out = beamsync(&["selftest"]);
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(out.status.success(), "{text}");
    assert!(text.lines().all(|l| l.starts_with("PASS")));
}
