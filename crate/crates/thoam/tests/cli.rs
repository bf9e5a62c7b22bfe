//! Exercises the installed binary: flag handling, exit codes, and the
//! report files commands leave behind.

use std::path::Path;
use std::process::Command;

fn thoam() -> Command {
    Command::new(env!("CARGO_BIN_EXE_thoam"))
}

fn write_micro_config(dir: &Path) -> std::path::PathBuf {
    let config = serde_json::json!({
        "dataset": dir.join("data"),
        "out": dir.join("run"),
        "seed": 33,
        "split": {"ratio": 0.6, "seed": 33},
        "model": {"channels": 8, "tokens": 2, "token_dim": 4, "vocab": 64},
        "epochs": 2,
        "synth": {"n_per_class": 3, "image_size": 8, "max_slices": 1}
    });
    let path = dir.join("config.json");
    std::fs::write(&path, serde_json::to_string_pretty(&config).unwrap()).unwrap();
    path
}

#[test]
fn gradcheck_exits_zero_and_reports_error() {
    let out = thoam().arg("gradcheck").output().unwrap();
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("PASS"), "stdout: {stdout}");
    assert!(stdout.contains("max relative error"));
}

#[test]
fn invalid_config_exits_one() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.json");
    std::fs::write(&path, r#"{"split": {"ratio": 1.5}}"#).unwrap();
    let out = thoam()
        .args(["train", "--config"])
        .arg(&path)
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    assert!(String::from_utf8_lossy(&out.stderr).contains("validation"));
}

#[test]
fn missing_dataset_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    let out = thoam()
        .args(["train", "--dataset"])
        .arg(dir.path().join("nowhere"))
        .arg("--out")
        .arg(dir.path().join("run"))
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2), "stderr: {}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn unknown_split_side_exits_one() {
    let out = thoam()
        .args(["eval", "--side", "sideways"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn generate_train_eval_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_micro_config(dir.path());

    let out = thoam().args(["generate", "--config"]).arg(&config).output().unwrap();
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    assert!(dir.path().join("data/manifest.jsonl").is_file());

    let out = thoam().args(["train", "--config"]).arg(&config).output().unwrap();
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    for artifact in [
        "checkpoint_final.json",
        "checkpoint_best.json",
        "train_log.csv",
        "split.json",
        "stats.json",
        "config.json",
    ] {
        assert!(dir.path().join("run").join(artifact).is_file(), "missing {artifact}");
    }

    let out = thoam().args(["eval", "--config"]).arg(&config).output().unwrap();
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    for artifact in [
        "report.json",
        "roc.csv",
        "confusion.csv",
        "confusion_row_normalized.csv",
        "predictions.csv",
    ] {
        assert!(dir.path().join("run").join(artifact).is_file(), "missing {artifact}");
    }
    // The report embeds the resolved config and the tool version.
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("run/report.json")).unwrap())
            .unwrap();
    assert_eq!(report["tool_version"], env!("CARGO_PKG_VERSION"));
    assert_eq!(report["config"]["seed"], 33);
    assert_eq!(report["split_side"], "test");
}

#[test]
fn seed_flag_changes_generated_data() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_micro_config(dir.path());
    for (seed, tag) in [("41", "a"), ("42", "b")] {
        let out = thoam()
            .args(["generate", "--config"])
            .arg(&config)
            .args(["--seed", seed, "--dataset"])
            .arg(dir.path().join(tag))
            .output()
            .unwrap();
        assert!(out.status.success());
    }
    let a = std::fs::read(dir.path().join("a/manifest.jsonl")).unwrap();
    let b = std::fs::read(dir.path().join("b/manifest.jsonl")).unwrap();
    assert_ne!(a, b);
}

#[test]
fn eval_rejects_mismatched_checkpoint() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_micro_config(dir.path());
    assert!(thoam().args(["generate", "--config"]).arg(&config).status().unwrap().success());
    assert!(thoam().args(["train", "--config"]).arg(&config).status().unwrap().success());
    // Request evaluation under a different model width.
    let mut cfg: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&config).unwrap()).unwrap();
    cfg["model"]["channels"] = serde_json::json!(16);
    cfg["model"]["token_dim"] = serde_json::json!(8);
    let other = dir.path().join("other.json");
    std::fs::write(&other, cfg.to_string()).unwrap();
    let out = thoam()
        .args(["eval", "--config"])
        .arg(&other)
        .arg("--checkpoint")
        .arg(dir.path().join("run/checkpoint_final.json"))
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("mismatch"));
}
