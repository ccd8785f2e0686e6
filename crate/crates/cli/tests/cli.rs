//! End-to-end checks of the installed binary: artifact layout, report
//! regeneration, argument validation, and the tuning fragment.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use softsmith_core::harness::logio::{read_run_log, read_summaries};
use softsmith_core::harness::Config;

fn bin() -> &'static str {
    env!("CARGO_BIN_EXE_softsmith")
}

fn run_cli(args: &[&str]) -> Output {
    Command::new(bin())
        .args(args)
        .output()
        .expect("binary should launch")
}

fn short_config(dir: &Path, duration: f64) -> PathBuf {
    let mut cfg = Config::default();
    cfg.protocol.duration = duration;
    if cfg.protocol.transient_end >= duration {
        cfg.protocol.buildup = duration / 3.0;
        cfg.protocol.transient_end = duration / 2.0;
    }
    let path = dir.join("config.toml");
    cfg.save(&path).unwrap();
    path
}

#[test]
fn run_writes_a_parseable_log() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = short_config(dir.path(), 30.0);
    let out = run_cli(&[
        "run",
        "--variant",
        "nopred",
        "--gain",
        "med",
        "--seed",
        "1",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let stdout = String::from_utf8(out.stdout).unwrap();
    assert!(stdout.contains("tracking stable"), "{stdout}");
    let log = read_run_log(&dir.path().join("run_nopred_med_0001.csv")).unwrap();
    assert_eq!(log.seed, 1);
    assert!(!log.rows.is_empty());
}

#[test]
fn unknown_variant_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let out = run_cli(&[
        "run",
        "--variant",
        "oracle9000",
        "--gain",
        "med",
        "--seed",
        "1",
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert!(!out.status.success());
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("oracle9000"), "{stderr}");
}

#[test]
fn batch_writes_artifacts_and_report_regenerates_them_byte_identically() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = short_config(dir.path(), 30.0);
    let study = dir.path().join("study");
    let out = run_cli(&[
        "batch",
        "--seeds",
        "1",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        study.to_str().unwrap(),
        "--workers",
        "1",
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    for artifact in ["summaries.csv", "exclusions.csv", "report.txt", "plot_data.csv"] {
        assert!(study.join(artifact).exists(), "missing {artifact}");
    }
    let (hash, rows) = read_summaries(&study.join("summaries.csv")).unwrap();
    assert_eq!(hash.len(), 64);
    assert_eq!(rows.len(), 12, "four variants by three gains, one seed");

    let first = std::fs::read_to_string(study.join("report.txt")).unwrap();
    let regen = run_cli(&["report", "--in", study.to_str().unwrap()]);
    assert!(regen.status.success());
    let second = std::fs::read_to_string(study.join("report.txt")).unwrap();
    assert_eq!(first, second, "report regeneration must be byte-identical");
    assert_eq!(String::from_utf8(regen.stdout).unwrap(), second);
    assert!(second.contains("(single)"), "single-seed cells are flagged");
}

#[test]
fn tune_emits_a_parseable_kernel_fragment() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = short_config(dir.path(), 16.0);
    let fragment_path = dir.path().join("krlst.toml");
    let out = run_cli(&[
        "tune",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        fragment_path.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let stdout = String::from_utf8(out.stdout).unwrap();
    assert!(stdout.contains("stage 1 leaderboard"), "{stdout}");
    let fragment = std::fs::read_to_string(&fragment_path).unwrap();
    let parsed: toml::Value = toml::from_str(&fragment).unwrap();
    let krlst = parsed.get("krlst").expect("[krlst] section");
    for key in ["sigma2", "noise_var", "lambda", "budget", "jitter"] {
        assert!(krlst.get(key).is_some(), "missing key {key}");
    }
}
