use std::path::Path;
use std::process::{Command, Output};

use romcast::cli::{ExperimentConfig, ExperimentManifest};
use romcast::forecast::{EnsembleReport, HorizonStats};

fn romcast(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_romcast")).args(args).output().unwrap()
}

fn ok(args: &[&str]) -> String {
    let o = romcast(args);
    assert!(o.status.success(), "{args:?}: {}", String::from_utf8_lossy(&o.stderr));
    String::from_utf8(o.stdout).unwrap()
}

fn small_config(dir: &Path) -> String {
    let mut cfg = ExperimentConfig::default();
    cfg.data.grid_nx = 12;
    cfg.data.grid_ny = 12;
    cfg.data.n_steps = 150;
    cfg.data.source_center = (4, 6);
    cfg.pca.tau = Some(4);
    cfg.train.epochs = 3;
    cfg.train.hidden_nodes = 6;
    cfg.grid.epochs = 1;
    cfg.grid.hidden_nodes = vec![4, 6];
    cfg.evaluate.horizon = 10;
    cfg.evaluate.starts_per_region = 3;
    cfg.evaluate.field_step = 5;
    let path = dir.join("cfg.json");
    std::fs::write(&path, cfg.to_json().unwrap()).unwrap();
    path.to_str().unwrap().to_string()
}

fn manifest(dir: &Path) -> ExperimentManifest {
    serde_json::from_str(&std::fs::read_to_string(dir.join("manifest.json")).unwrap()).unwrap()
}

#[test]
fn full_pipeline_records_hashed_artifacts() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = small_config(tmp.path());
    let exp = tmp.path().join("exp");
    let out = exp.to_str().unwrap();
    ok(&["generate", "--config", &cfg, "--out", out, "--csv"]);
    ok(&["pca", "--out", out]);
    ok(&["train", "--out", out]);
    ok(&["train", "--out", out, "--adversarial"]);
    let gs = ok(&["gridsearch", "--out", out, "--threads", "2"]);
    assert!(gs.contains("8 points"), "{gs}");
    ok(&["evaluate", "--out", out]);
    let ev = ok(&["evaluate", "--out", out, "--starts", "20..24", "--horizon", "8"]);
    assert!(ev.contains("custom: 4 starts, horizon 8"), "{ev}");
    let table = ok(&["report", "--out", out]);
    assert!(table.contains("ensemble_validation") && table.contains("ensemble_custom"), "{table}");

    let m = manifest(&exp);
    assert_eq!(m.tool_version, env!("CARGO_PKG_VERSION"));
    assert_eq!(m.seeds["generator"], 42);
    for name in ["config", "snapshots", "pca", "scores", "model_classic", "model_adv", "disc_adv", "gridsearch", "ensemble_validation", "ensemble_custom"] {
        let rec = &m.artifacts[name];
        let bytes = std::fs::read(exp.join(&rec.path)).unwrap();
        assert_eq!(rec.sha256, romcast::cli::sha256_hex(&bytes), "{name}");
    }
    let report = EnsembleReport::from_csv(&std::fs::read_to_string(exp.join("ensemble_custom.csv")).unwrap()).unwrap();
    assert_eq!(report.horizon, 8);
    let csv = std::fs::read_to_string(exp.join("snapshots.csv")).unwrap();
    assert_eq!(csv.lines().count(), 151);
    assert!(exp.join("fields_validation_step5.csv").exists());
}

#[test]
fn stale_artifact_is_rejected() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = small_config(tmp.path());
    let exp = tmp.path().join("exp");
    let out = exp.to_str().unwrap();
    ok(&["generate", "--config", &cfg, "--out", out]);
    ok(&["pca", "--out", out]);
    let mut bytes = std::fs::read(exp.join("scores.romf")).unwrap();
    let last = bytes.len() - 1;
    bytes[last] ^= 1;
    std::fs::write(exp.join("scores.romf"), bytes).unwrap();
    let o = romcast(&["train", "--out", out]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("hash mismatch"));
}

#[test]
fn regeneration_is_byte_identical() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = small_config(tmp.path());
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    ok(&["generate", "--config", &cfg, "--out", a.to_str().unwrap()]);
    ok(&["generate", "--config", &cfg, "--out", b.to_str().unwrap()]);
    assert_eq!(std::fs::read(a.join("snapshots.romf")).unwrap(), std::fs::read(b.join("snapshots.romf")).unwrap());
    ok(&["generate", "--config", &cfg, "--out", b.to_str().unwrap(), "--seed", "7"]);
    assert_ne!(std::fs::read(a.join("snapshots.romf")).unwrap(), std::fs::read(b.join("snapshots.romf")).unwrap());
    assert_eq!(manifest(&b).seeds["generator"], 7);
}

#[test]
fn default_config_gives_the_desk_scale_matrix() {
    let tmp = tempfile::tempdir().unwrap();
    let out = ok(&["generate", "--out", tmp.path().join("e").to_str().unwrap()]);
    assert!(out.contains("n=600 m=3072"), "{out}");
    let stored: ExperimentConfig =
        serde_json::from_str(&std::fs::read_to_string(tmp.path().join("e/config.json")).unwrap()).unwrap();
    assert_eq!(stored, ExperimentConfig::default());
}

#[test]
fn exit_codes() {
    let tmp = tempfile::tempdir().unwrap();
    let missing = tmp.path().join("nope.json");
    let o = romcast(&["generate", "--config", missing.to_str().unwrap(), "--out", tmp.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("not found"));

    let bad = tmp.path().join("bad.json");
    std::fs::write(&bad, r#"{"data": {"dt": 50.0}}"#).unwrap();
    let o = romcast(&["generate", "--config", bad.to_str().unwrap(), "--out", tmp.path().join("x").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2), "{}", String::from_utf8_lossy(&o.stderr));

    assert_eq!(romcast(&["frobnicate"]).status.code(), Some(2));
    assert_eq!(romcast(&["pca", "--out", tmp.path().join("empty").to_str().unwrap()]).status.code(), Some(1));
    assert_eq!(romcast(&["pca", "--tau", "3", "--variance", "0.9"]).status.code(), Some(2));
}

#[test]
fn report_of_identical_models_is_all_zero() {
    let tmp = tempfile::tempdir().unwrap();
    let stats = vec![HorizonStats { mean: 0.5, std: 0.1, count: 3 }; 30];
    let report = EnsembleReport {
        start_steps: vec![1, 2, 3],
        horizon: 30,
        classic: stats.clone(),
        adversarial: stats,
        classic_diverged: 0,
        adversarial_diverged: 0,
    };
    let path = tmp.path().join("same.csv");
    report.write_csv(&path).unwrap();
    let table = ok(&["report", "--report", path.to_str().unwrap()]);
    let row = table.lines().nth(1).unwrap();
    assert_eq!(row.matches("0.00%").count(), 5, "{table}");
}

#[test]
fn bench_without_experiment_uses_default_model() {
    let tmp = tempfile::tempdir().unwrap();
    let out = ok(&["bench", "--out", tmp.path().join("none").to_str().unwrap(), "--steps", "50", "--repeats", "1"]);
    assert!(out.contains("ratio"), "{out}");
}
