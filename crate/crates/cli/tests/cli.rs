//! End-to-end checks of the `quditc` binary: flag handling, file outputs,
//! exit codes and rerun determinism on the cheap commands.

use std::path::Path;
use std::process::Command;

fn quditc() -> Command {
    Command::new(env!("CARGO_BIN_EXE_quditc"))
}

fn read(path: &Path) -> String {
    std::fs::read_to_string(path).unwrap_or_else(|e| panic!("reading {}: {e}", path.display()))
}

#[test]
fn compile_writes_pulse_and_spectrum_documents() {
    let dir = tempfile::tempdir().unwrap();
    let out = quditc()
        .args(["compile", "--gate", "ssw02", "--seed", "3"])
        .args(["--out", dir.path().to_str().unwrap()])
        .output()
        .unwrap();
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));

    let doc: serde_json::Value =
        serde_json::from_str(&read(&dir.path().join("pulse_ssw02.json"))).unwrap();
    assert_eq!(doc["gate"], "ssw02");
    assert_eq!(doc["run"]["seed"], 3);
    assert_eq!(doc["result"]["converged"], true);
    assert!(doc["result"]["achieved_fidelity"].as_f64().unwrap() >= 0.9998);
    // The exported pulse is at the output rate, one sample per nanosecond.
    assert_eq!(doc["result"]["pulse"]["sample_rate"], 1);
    assert_eq!(doc["result"]["pulse"]["p_mhz"].as_array().unwrap().len(), 220);

    let spectrum = read(&dir.path().join("spectrum_ssw02.csv"));
    assert!(spectrum.starts_with("# command: compile\n"));
    assert!(spectrum.contains("\nfreq_mhz,re_mhz,im_mhz,power\n"));
}

#[test]
fn matrix_file_targets_compile_under_their_file_name() {
    let dir = tempfile::tempdir().unwrap();
    // Permutation of levels 0 and 1: a valid qutrit unitary.
    let x01 = "[[[0.0,0.0],[1.0,0.0],[0.0,0.0]],\
               [[1.0,0.0],[0.0,0.0],[0.0,0.0]],\
               [[0.0,0.0],[0.0,0.0],[1.0,0.0]]]";
    let mpath = dir.path().join("x01.json");
    std::fs::write(&mpath, x01).unwrap();

    let out = quditc()
        .args(["compile", "--matrix", mpath.to_str().unwrap(), "--seed", "4"])
        .args(["--out", dir.path().to_str().unwrap()])
        .output()
        .unwrap();
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    assert!(dir.path().join("pulse_x01.json").exists());
    assert!(dir.path().join("spectrum_x01.csv").exists());
}

#[test]
fn config_file_fills_defaults_and_flags_override_it() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("exp.json");
    std::fs::write(&cfg, r#"{"gate": "ssw02", "seed": 5, "duration_ns": 100.0}"#).unwrap();

    let out = quditc()
        .args(["compile", "--config", cfg.to_str().unwrap(), "--duration", "80"])
        .args(["--out", dir.path().to_str().unwrap()])
        .output()
        .unwrap();
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));

    let doc: serde_json::Value =
        serde_json::from_str(&read(&dir.path().join("pulse_ssw02.json"))).unwrap();
    assert_eq!(doc["run"]["seed"], 5, "seed comes from the config file");
    assert_eq!(doc["settings"]["duration_ns"], 80.0, "flag overrides config duration");
}

#[test]
fn config_and_flag_errors_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().to_str().unwrap();

    // Unknown named gate.
    let out = quditc().args(["compile", "--gate", "nope", "--out", out_dir]).output().unwrap();
    assert_eq!(out.status.code(), Some(2));

    // Config file with a typo'd key.
    let cfg = dir.path().join("bad.json");
    std::fs::write(&cfg, r#"{"gaet": "ssw02"}"#).unwrap();
    let out = quditc()
        .args(["compile", "--config", cfg.to_str().unwrap(), "--out", out_dir])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));

    // Half of the distortion pair.
    let out = quditc()
        .args(["tomography", "--gate", "ssw02", "--distort-gamma", "0.9", "--out", out_dir])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));

    // Unparsable flag (clap's own exit code).
    let out = quditc().args(["compile", "--no-such-flag"]).output().unwrap();
    assert_eq!(out.status.code(), Some(2));

    // Missing device file.
    let out = quditc()
        .args(["compile", "--gate", "ssw02", "--device", "/no/such/file", "--out", out_dir])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn device_presets_and_files_change_the_run_header() {
    let dir = tempfile::tempdir().unwrap();
    let out = quditc()
        .args(["compile", "--gate", "ssw02", "--device", "aspen", "--seed", "1"])
        .args(["--out", dir.path().to_str().unwrap()])
        .output()
        .unwrap();
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    let doc: serde_json::Value =
        serde_json::from_str(&read(&dir.path().join("pulse_ssw02.json"))).unwrap();
    assert_eq!(doc["run"]["device"], "aspen");
    assert_eq!(doc["run"]["omega01_ghz"], 3.883);

    // The same parameters via an explicit key-value file.
    let dev = dir.path().join("dev.cfg");
    std::fs::write(
        &dev,
        "omega01_ghz = 3.883\nomega12_ghz = 3.674\nt1_01_us = 22\nt2s_01_us = 42\nlevels = 3\n",
    )
    .unwrap();
    let out = quditc()
        .args(["compile", "--gate", "ssw02", "--device", dev.to_str().unwrap(), "--seed", "1"])
        .args(["--out", dir.path().to_str().unwrap()])
        .output()
        .unwrap();
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    let doc: serde_json::Value =
        serde_json::from_str(&read(&dir.path().join("pulse_ssw02.json"))).unwrap();
    assert_eq!(doc["run"]["omega01_ghz"], 3.883);
    assert_eq!(doc["run"]["t1_12_us"], 22.0, "unset 1-2 lifetime falls back to the 0-1 value");
}

#[test]
fn trajectory_writes_one_file_per_initial_level() {
    let dir = tempfile::tempdir().unwrap();
    let out = quditc()
        .args(["trajectory", "--gate", "ssw02", "--seed", "2"])
        .args(["--out", dir.path().to_str().unwrap()])
        .output()
        .unwrap();
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));

    for level in 0..3 {
        let text = read(&dir.path().join(format!("trajectory_init{level}_x1.csv")));
        assert!(text.contains("\nt_ns,p0,p1,p2\n"));
        // Preamble, column row, then one record per nanosecond inclusive.
        let records = text.lines().filter(|l| !l.starts_with('#')).count() - 1;
        assert_eq!(records, 221);
        // Populations at every instant form a distribution.
        for line in text.lines().filter(|l| !l.starts_with('#')).skip(1) {
            let p: Vec<f64> = line.split(',').skip(1).map(|c| c.parse().unwrap()).collect();
            let total: f64 = p.iter().sum();
            assert!((total - 1.0).abs() < 1e-6, "populations sum to {total}");
        }
    }
}

#[test]
fn seeded_compiles_are_byte_identical_across_reruns() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    for dir in [&a, &b] {
        let out = quditc()
            .args(["compile", "--random", "2", "--seed", "11"])
            .args(["--out", dir.path().to_str().unwrap()])
            .output()
            .unwrap();
        assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    }
    for name in ["pulse_random_00.json", "pulse_random_01.json", "spectrum_random_00.csv"] {
        let left = std::fs::read(a.path().join(name)).unwrap();
        let right = std::fs::read(b.path().join(name)).unwrap();
        assert_eq!(left, right, "{name} differs between identical runs");
    }
}
