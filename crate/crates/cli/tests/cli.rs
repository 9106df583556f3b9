use std::f64::consts::PI;
use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn mtsfm(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mtsfm"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn run_ok(args: &[&str]) {
    let out = mtsfm(args);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let path = dir.join(name);
    fs::write(&path, text).unwrap();
    path.to_str().unwrap().to_owned()
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

/// Data rows of a CSV export as numbers (stamp and header skipped).
fn csv_rows(path: &Path) -> (String, Vec<String>, Vec<Vec<f64>>) {
    let text = fs::read_to_string(path).unwrap();
    let mut lines = text.lines();
    let stamp = lines.next().unwrap().to_owned();
    let header = lines.next().unwrap().split(',').map(str::to_owned).collect();
    let rows = lines
        .map(|l| l.split(',').map(|v| v.parse().unwrap()).collect())
        .collect();
    (stamp, header, rows)
}

const CW: &str = r#"{"waveforms": [{"explicit": {"duration": 1, "symmetry": "even", "indices": [0]}}],
  "oversample": 8, "export": {"doppler_max": 2}}"#;

#[test]
fn fig1_synth_writes_stamped_files_and_is_repeatable() {
    let tmp = tempfile::tempdir().unwrap();
    let a = tmp.path().join("a");
    let b = tmp.path().join("b");
    run_ok(&["synth", "--recipe", "fig1", "--out", a.to_str().unwrap()]);
    run_ok(&["synth", "--recipe", "fig1", "--out", b.to_str().unwrap()]);
    let report = json(&a.join("metrics.json"));
    let hash = report["config_hash"].as_str().unwrap().to_owned();
    assert_eq!(hash.len(), 64);
    assert_eq!(report["seed"], 2024);
    for name in [
        "w0_samples.csv",
        "w0_spectrogram.txt",
        "w0_eds.csv",
        "w0_acf.csv",
        "w0_af.txt",
        "metrics.json",
        "config.json",
    ] {
        let x = fs::read(a.join(name)).unwrap();
        assert_eq!(x, fs::read(b.join(name)).unwrap(), "{name}");
        let text = String::from_utf8(x).unwrap();
        assert!(text.contains(&hash) && text.contains("2024"), "{name} lacks stamp");
    }
    let (_, header, rows) = csv_rows(&a.join("w0_samples.csv"));
    assert_eq!(header, ["time_s", "re", "im", "inst_freq_hz"]);
    assert!(rows.iter().all(|r| r[1].is_finite() && r[2].is_finite()));
    let af = fs::read_to_string(a.join("w0_af.txt")).unwrap();
    let head = af.lines().next().unwrap();
    assert!(head.contains("rows=doppler_hz:-20:0.25:161"), "{head}");
}

#[test]
fn seed_flag_changes_hash_and_waveform() {
    let tmp = tempfile::tempdir().unwrap();
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    run_ok(&["synth", "--recipe", "fig1", "--out", a.to_str().unwrap()]);
    run_ok(&["synth", "--recipe", "fig1", "--seed", "7", "--out", b.to_str().unwrap()]);
    let (ra, rb) = (json(&a.join("metrics.json")), json(&b.join("metrics.json")));
    assert_ne!(ra["config_hash"], rb["config_hash"]);
    assert_eq!(rb["seed"], 7);
    assert_ne!(ra["members"][0]["params"], rb["members"][0]["params"]);
}

#[test]
fn unmodulated_pulse_has_sinc_eds_and_triangle_acf() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write(tmp.path(), "cw.json", CW);
    let out = tmp.path().join("out");
    run_ok(&["synth", "--config", &cfg, "--out", out.to_str().unwrap()]);
    let (_, _, eds) = csv_rows(&out.join("w0_eds.csv"));
    for row in eds.iter().filter(|r| r[0].abs() <= 10.0) {
        let x = PI * row[0];
        let sinc2 = if x == 0.0 { 1.0 } else { (x.sin() / x).powi(2) };
        assert!((row[1] - sinc2).abs() < 1e-3, "f = {}: {} vs {}", row[0], row[1], sinc2);
    }

    let out = tmp.path().join("an");
    run_ok(&["analyze", "--config", &cfg, "--out", out.to_str().unwrap()]);
    let (_, header, acf) = csv_rows(&out.join("w0_acf.csv"));
    assert_eq!(header, ["delay_s", "delay_over_t", "numeric_db", "closed_form_db"]);
    for row in acf.iter().filter(|r| r[0].abs() < 0.99) {
        let want = 20.0 * (1.0 - row[0].abs()).log10();
        assert!((row[2] - want).abs() < 1e-6 && (row[3] - want).abs() < 1e-6);
    }
    let report = json(&out.join("metrics.json"));
    assert_eq!(report["members"][0]["metrics"]["isr"], 0.0);
}

#[test]
fn seeded_pair_report_has_every_metric() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write(
        tmp.path(),
        "pair.json",
        r#"{"seed": 5, "family": {"harmonics": 16, "tbp": 60}, "export": {"ambiguity": false}}"#,
    );
    let out = tmp.path().join("out");
    run_ok(&["analyze", "--config", &cfg, "--out", out.to_str().unwrap()]);
    let report = json(&out.join("metrics.json"));
    let pair = &report["pairs"][0];
    assert!(pair["ccf_area"].as_f64().unwrap() > 0.0);
    assert!(pair["closed_form_max_diff"].as_f64().unwrap() <= 1e-3);
    for m in report["members"].as_array().unwrap() {
        assert!(m["metrics"]["isr"].as_f64().unwrap() > 0.0);
        assert!(m["metrics"]["rms_bandwidth_sq"].as_f64().unwrap() > 0.0);
        assert!(m["closed_form_max_diff"].as_f64().unwrap() <= 1e-3);
    }
    let (_, header, _) = csv_rows(&out.join("ccf_0_1.csv"));
    assert_eq!(header[1], "delay_over_t");
    assert!(!out.join("caf_0_1.txt").exists());
}

#[test]
fn short_family_run_writes_artifacts() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write(
        tmp.path(),
        "fam.json",
        r#"{"seed": 3, "family": {"harmonics": 8, "tbp": 40, "settings": {"max_iterations": 4}}}"#,
    );
    let out = tmp.path().join("out");
    let res = mtsfm(&[
        "optimize-family",
        "--config",
        &cfg,
        "--weights",
        "ccf-heavy",
        "--out",
        out.to_str().unwrap(),
    ]);
    let code = res.status.code().unwrap();
    assert!(code == 0 || code == 3, "{}", String::from_utf8_lossy(&res.stderr));
    let summary = json(&out.join("summary.json"));
    assert_eq!(summary["weight_case"], "ccf-heavy");
    assert_eq!(summary["converged"], code == 0);
    assert!(summary["f_final"].as_f64().unwrap() <= summary["f_initial"].as_f64().unwrap());
    for name in ["coefficients.json", "trace.json", "trace.csv", "w0_acf.csv", "w1_acf.csv", "ccf_0_1.csv"] {
        assert!(out.join(name).exists(), "{name}");
    }
    let (_, header, rows) = csv_rows(&out.join("trace.csv"));
    assert_eq!(header[..3], ["iteration", "restart", "f"]);
    assert_eq!(rows[0][0], 0.0);
    let (_, header, _) = csv_rows(&out.join("ccf_0_1.csv"));
    assert_eq!(header, ["delay_s", "delay_over_t", "initial_db", "final_db"]);
}

#[test]
fn config_errors_exit_with_code_two_and_key_path() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("out");
    let cases = [
        (r#"{"family": {"harmonics": 4, "detla": 0.3}}"#, "family.detla"),
        (r#"{"waveforms": [{"random": {"harmonics": -1, "tbp": 5}}]}"#, "waveforms[0].random.harmonics"),
        (r#"{"family": {"harmonics": 4, "delta": 2}}"#, "family.delta"),
        (r#"{"mode": "synth", "family": {"harmonics": 4}}"#, "mode"),
        ("not json", ""),
    ];
    for (i, (text, path)) in cases.iter().enumerate() {
        let cfg = write(tmp.path(), &format!("c{i}.json"), text);
        let res = mtsfm(&["optimize-family", "--config", &cfg, "--out", out.to_str().unwrap()]);
        assert_eq!(res.status.code(), Some(2), "case {i}");
        let err = String::from_utf8_lossy(&res.stderr);
        assert!(err.contains(path), "case {i}: {err}");
    }
    assert!(!out.exists(), "nothing is written for an invalid config");

    let res = mtsfm(&["optimize-family", "--recipe", "fig2", "--weights", "custom"]);
    assert_eq!(res.status.code(), Some(2));
    let res = mtsfm(&["synth", "--recipe", "fig9"]);
    assert_eq!(res.status.code(), Some(2));
    let res = mtsfm(&["synth"]);
    assert_eq!(res.status.code(), Some(2));
}

#[test]
fn unwritable_output_exits_with_code_four() {
    let tmp = tempfile::tempdir().unwrap();
    let blocker = write(tmp.path(), "file", "x");
    let res = mtsfm(&["synth", "--recipe", "fig1", "--out", &format!("{blocker}/sub")]);
    assert_eq!(res.status.code(), Some(4));
}
