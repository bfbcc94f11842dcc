//! Subcommands of the `romcast` binary.
//!
//! Every command works inside one experiment directory that holds the
//! resolved config, the artifacts and `manifest.json`. Inputs are checked
//! against the content hashes recorded in the manifest before use.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use clap::{Args, Parser, Subcommand, ValueEnum};
use log::{info, warn};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::container::{Container, NamedArray};
use crate::error::{Error, Result};
use crate::forecast::{
    evaluate_ensemble, reconstruct_forecast, region_starts, rmse, rollout_from, timing_benchmark,
    write_field_comparison, EnsembleReport, Region, TimingReport,
};
use crate::linalg::Matrix;
use crate::neural::LstmForecaster;
use crate::pca::{self, PcaBasis, Truncation};
use crate::snapshots::{generate, GeneratorConfig, MinMaxScaler, SnapshotMatrix};
use crate::training::{
    grid_search, load_forecaster, make_windows, new_forecaster, save_discriminator,
    save_forecaster, train_adversarial, train_classic, GridSpec, RunRngs, TrainConfig,
};

pub const MANIFEST: &str = "manifest.json";
pub const CONFIG: &str = "config.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PcaSettings {
    pub field: String,
    pub tau: Option<usize>,
    pub variance: Option<f64>,
    /// Target range of the min-max scaling applied to the scores.
    pub scale_range: (f64, f64),
}

impl Default for PcaSettings {
    fn default() -> Self {
        Self {
            field: crate::snapshots::TRACER.into(),
            tau: Some(16),
            variance: None,
            scale_range: (0.0, 1.0),
        }
    }
}

impl PcaSettings {
    pub fn truncation(&self) -> Result<Truncation> {
        match (self.tau, self.variance) {
            (Some(t), None) => Ok(Truncation::Rank(t)),
            (None, Some(v)) => Ok(Truncation::Variance(v)),
            (None, None) => Ok(Truncation::Variance(0.9)),
            (Some(_), Some(_)) => Err(Error::InvalidConfig(
                "pca: give either tau or variance, not both".into(),
            )),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalSettings {
    pub horizon: usize,
    /// Start steps per region when `--starts` is not given.
    pub starts_per_region: usize,
    /// Forecast step exported for the field comparison.
    pub field_step: usize,
}

impl Default for EvalSettings {
    fn default() -> Self {
        Self {
            horizon: 50,
            starts_per_region: 10,
            field_step: 25,
        }
    }
}

/// The JSON experiment document.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub data: GeneratorConfig,
    pub pca: PcaSettings,
    pub train: TrainConfig,
    pub grid: GridSpec,
    pub evaluate: EvalSettings,
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| {
            if e.kind() == std::io::ErrorKind::NotFound {
                Error::InvalidConfig(format!("config file {} not found", path.display()))
            } else {
                Error::Io(e)
            }
        })?;
        serde_json::from_str(&text)
            .map_err(|e| Error::InvalidConfig(format!("{}: {e}", path.display())))
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn file_hash(path: &Path) -> Result<String> {
    Ok(sha256_hex(&std::fs::read(path)?))
}

fn now_secs() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map_or(0, |d| d.as_secs())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArtifactRecord {
    /// Relative to the experiment directory.
    pub path: String,
    pub sha256: String,
    pub written_at: u64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ExperimentManifest {
    pub tool_version: String,
    pub config_hash: String,
    pub seeds: BTreeMap<String, u64>,
    pub artifacts: BTreeMap<String, ArtifactRecord>,
    pub created_at: u64,
    pub updated_at: u64,
}

/// An experiment directory and its manifest.
pub struct Workspace {
    pub dir: PathBuf,
    pub manifest: ExperimentManifest,
}

impl Workspace {
    pub fn create(dir: &Path) -> Result<Self> {
        std::fs::create_dir_all(dir)?;
        let now = now_secs();
        Ok(Self {
            dir: dir.to_path_buf(),
            manifest: ExperimentManifest {
                tool_version: env!("CARGO_PKG_VERSION").into(),
                created_at: now,
                updated_at: now,
                ..Default::default()
            },
        })
    }

    pub fn open(dir: &Path) -> Result<Self> {
        let path = dir.join(MANIFEST);
        if !path.exists() {
            return Err(Error::MissingArtifact(format!(
                "{} (run `romcast generate` first)",
                path.display()
            )));
        }
        let manifest = serde_json::from_str(&std::fs::read_to_string(path)?)?;
        Ok(Self {
            dir: dir.to_path_buf(),
            manifest,
        })
    }

    pub fn path(&self, rel: &str) -> PathBuf {
        self.dir.join(rel)
    }

    /// Records `rel` (and nothing else) under `name` with its current hash.
    pub fn register(&mut self, name: &str, rel: &str) -> Result<()> {
        let sha256 = file_hash(&self.path(rel))?;
        self.manifest.artifacts.insert(
            name.to_string(),
            ArtifactRecord {
                path: rel.to_string(),
                sha256,
                written_at: now_secs(),
            },
        );
        Ok(())
    }

    /// Registers a container artifact together with its JSON sidecar.
    pub fn register_with_sidecar(&mut self, name: &str, rel: &str) -> Result<()> {
        self.register(name, rel)?;
        let sidecar = Path::new(rel).with_extension("json");
        self.register(&format!("{name}.manifest"), &sidecar.to_string_lossy())
    }

    /// Path of a registered artifact after verifying its hash.
    pub fn verified(&self, name: &str) -> Result<PathBuf> {
        let rec = self.manifest.artifacts.get(name).ok_or_else(|| {
            Error::MissingArtifact(format!("{name} is not recorded in the manifest"))
        })?;
        let path = self.path(&rec.path);
        if !path.exists() {
            return Err(Error::MissingArtifact(path.display().to_string()));
        }
        let actual = file_hash(&path)?;
        if actual != rec.sha256 {
            return Err(Error::HashMismatch {
                path: rec.path.clone(),
                expected: rec.sha256.clone(),
                actual,
            });
        }
        if let Some(side) = self.manifest.artifacts.get(&format!("{name}.manifest")) {
            let sp = self.path(&side.path);
            let actual = file_hash(&sp)?;
            if actual != side.sha256 {
                return Err(Error::HashMismatch {
                    path: side.path.clone(),
                    expected: side.sha256.clone(),
                    actual,
                });
            }
        }
        Ok(path)
    }

    pub fn save(&mut self) -> Result<()> {
        self.manifest.updated_at = now_secs();
        std::fs::write(
            self.path(MANIFEST),
            serde_json::to_string_pretty(&self.manifest)?,
        )?;
        Ok(())
    }

    /// The experiment config: an explicit file if given, otherwise the
    /// verified copy stored by `generate`.
    pub fn config(&self, explicit: Option<&Path>) -> Result<ExperimentConfig> {
        match explicit {
            Some(p) => ExperimentConfig::load(p),
            None => ExperimentConfig::load(&self.verified("config")?),
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "romcast", version, about = "Reduced-order LSTM forecasting of advection-diffusion tracer fields")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct Common {
    /// Experiment directory holding artifacts and manifest.json.
    #[arg(long, default_value = "experiment")]
    pub out: PathBuf,
    /// Experiment config (JSON). Defaults to <out>/config.json written by `generate`.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Overrides every seed in the config.
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum RegionArg {
    Training,
    Validation,
}

impl From<RegionArg> for Region {
    fn from(r: RegionArg) -> Self {
        match r {
            RegionArg::Training => Region::Training,
            RegionArg::Validation => Region::Validation,
        }
    }
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run the advection-diffusion generator and store the snapshot matrix.
    Generate {
        #[command(flatten)]
        common: Common,
        /// Also export the snapshots as CSV.
        #[arg(long)]
        csv: bool,
    },
    /// Fit a truncated PCA of one field and store basis, scores and scaler.
    Pca {
        #[command(flatten)]
        common: Common,
        #[arg(long, conflicts_with = "variance")]
        tau: Option<usize>,
        #[arg(long)]
        variance: Option<f64>,
        #[arg(long)]
        field: Option<String>,
    },
    /// Train the classic (or, with --adversarial, the adversarial) forecaster.
    Train {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        adversarial: bool,
        #[arg(long)]
        epochs: Option<usize>,
    },
    /// Grid search over forecaster hyperparameters.
    Gridsearch {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(long, default_value_t = 1)]
        threads: usize,
    },
    /// Roll out both models from many start steps and compare their errors.
    Evaluate {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        horizon: Option<usize>,
        /// Start steps as A..B (exclusive end). Overrides --region.
        #[arg(long)]
        starts: Option<String>,
        #[arg(long, value_enum, default_value = "validation")]
        region: RegionArg,
        #[arg(long, default_value_t = 1)]
        threads: usize,
    },
    /// Print the error-reduction summary of one or more ensemble reports.
    Report {
        #[arg(long, default_value = "experiment")]
        out: PathBuf,
        /// Report CSV files; defaults to every ensemble_*.csv in the manifest.
        #[arg(long = "report")]
        reports: Vec<PathBuf>,
    },
    /// Compare per-step latency of the forecaster and the simulator.
    Bench {
        #[arg(long, default_value = "experiment")]
        out: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        /// Forecast steps per timing run.
        #[arg(long, default_value_t = 500)]
        steps: usize,
        #[arg(long, default_value_t = 3)]
        repeats: usize,
    },
}

pub fn parse_starts(spec: &str) -> Result<Vec<usize>> {
    let (a, b) = spec
        .split_once("..")
        .ok_or_else(|| Error::InvalidConfig(format!("--starts expects A..B, got {spec:?}")))?;
    let parse = |s: &str| {
        s.trim()
            .parse::<usize>()
            .map_err(|e| Error::InvalidConfig(format!("--starts {spec:?}: {e}")))
    };
    let (a, b) = (parse(a)?, parse(b)?);
    if b <= a {
        return Err(Error::InvalidConfig(format!("--starts {spec:?} is empty")));
    }
    Ok((a..b).collect())
}

fn apply_seed(cfg: &mut ExperimentConfig, seed: Option<u64>) {
    if let Some(s) = seed {
        cfg.data.seed = s;
        cfg.train.seed = s;
    }
}

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Generate { common, csv } => cmd_generate(&common, csv),
        Command::Pca {
            common,
            tau,
            variance,
            field,
        } => cmd_pca(&common, tau, variance, field),
        Command::Train {
            common,
            adversarial,
            epochs,
        } => cmd_train(&common, adversarial, epochs),
        Command::Gridsearch {
            common,
            epochs,
            threads,
        } => cmd_gridsearch(&common, epochs, threads),
        Command::Evaluate {
            common,
            horizon,
            starts,
            region,
            threads,
        } => cmd_evaluate(&common, horizon, starts.as_deref(), region.into(), threads),
        Command::Report { out, reports } => {
            let text = cmd_report(&out, &reports)?;
            print!("{text}");
            Ok(())
        }
        Command::Bench {
            out,
            config,
            steps,
            repeats,
        } => {
            let r = cmd_bench(&out, config.as_deref(), steps, repeats)?;
            println!(
                "forecast step {:.3e} s | simulator step {:.3e} s | ratio {:.2}",
                r.forecast_step_seconds, r.simulator_step_seconds, r.ratio
            );
            Ok(())
        }
    }
}

pub fn cmd_generate(common: &Common, csv: bool) -> Result<()> {
    let mut cfg = match &common.config {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::default(),
    };
    apply_seed(&mut cfg, common.seed);
    let snaps = generate(&cfg.data)?;
    let mut ws = Workspace::create(&common.out)?;
    let cfg_json = cfg.to_json()?;
    std::fs::write(ws.path(CONFIG), &cfg_json)?;
    ws.manifest.config_hash = sha256_hex(cfg_json.as_bytes());
    ws.register("config", CONFIG)?;

    snaps.to_container().write(&ws.path("snapshots.romf"))?;
    std::fs::write(
        ws.path("snapshots.json"),
        serde_json::to_string_pretty(&SnapshotSidecar {
            field_names: snaps.field_names().to_vec(),
            n: snaps.n(),
            m: snaps.m(),
            generator: cfg.data.clone(),
        })?,
    )?;
    ws.register_with_sidecar("snapshots", "snapshots.romf")?;
    if csv {
        snaps.write_csv_file(&ws.path("snapshots.csv"))?;
        ws.register("snapshots.csv", "snapshots.csv")?;
    }
    ws.manifest.seeds.insert("generator".into(), cfg.data.seed);
    ws.save()?;
    info!("wrote {} x {} snapshot matrix", snaps.n(), snaps.m());
    println!(
        "generated n={} m={} into {}",
        snaps.n(),
        snaps.m(),
        ws.dir.display()
    );
    Ok(())
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct SnapshotSidecar {
    field_names: Vec<String>,
    n: usize,
    m: usize,
    generator: GeneratorConfig,
}

fn load_snapshots(ws: &Workspace) -> Result<SnapshotMatrix> {
    let path = ws.verified("snapshots")?;
    let side: SnapshotSidecar =
        serde_json::from_str(&std::fs::read_to_string(path.with_extension("json"))?)?;
    SnapshotMatrix::from_container(&Container::read(&path)?, side.field_names)
}

/// Scores, scaler and time split persisted by `pca`.
pub struct ReducedData {
    pub basis: PcaBasis,
    pub scores: Matrix,
    pub scaler: MinMaxScaler,
    pub field: String,
}

impl ReducedData {
    pub fn scaled(&self) -> Result<Matrix> {
        self.scaler.scale(&self.scores)
    }
}

/// Fits the scaler on the rows that feed training windows only.
pub fn fit_scaler_for_training(scores: &Matrix, train: &TrainConfig, range: (f64, f64)) -> Result<MinMaxScaler> {
    let n = scores.rows();
    if n <= train.time_lag {
        return Err(Error::TooFewSteps(format!(
            "{n} steps cannot feed windows of lag {}",
            train.time_lag
        )));
    }
    let k = n - train.time_lag;
    let split = (k as f64 * train.train_fraction).floor() as usize;
    MinMaxScaler::fit(&scores.take_rows((split + train.time_lag).min(n)), range.0, range.1)
}

pub fn cmd_pca(common: &Common, tau: Option<usize>, variance: Option<f64>, field: Option<String>) -> Result<()> {
    let mut ws = Workspace::open(&common.out)?;
    let mut cfg = ws.config(common.config.as_deref())?;
    apply_seed(&mut cfg, common.seed);
    if tau.is_some() || variance.is_some() {
        cfg.pca.tau = tau;
        cfg.pca.variance = variance;
    }
    if let Some(f) = field {
        cfg.pca.field = f;
    }
    let snaps = load_snapshots(&ws)?;
    let data = snaps.field(&cfg.pca.field)?;
    let basis = pca::fit(data.data(), cfg.pca.truncation()?)?;
    let scores = basis.project(data.data())?;
    let scaler = fit_scaler_for_training(&scores, &cfg.train, cfg.pca.scale_range)?;

    basis.save(&ws.path("pca.romf"), &cfg.pca.field)?;
    ws.register_with_sidecar("pca", "pca.romf")?;
    let mut c = scaler.to_container();
    c.push(NamedArray::matrix("scores", &scores));
    c.write(&ws.path("scores.romf"))?;
    ws.register("scores", "scores.romf")?;
    ws.save()?;
    let ev = basis.explained_variance()?;
    println!(
        "pca on {}: tau={} explains {:.4} of variance (rank capacity {})",
        cfg.pca.field,
        basis.tau,
        ev[basis.tau - 1],
        basis.rank_capacity()
    );
    Ok(())
}

pub fn load_reduced(ws: &Workspace) -> Result<ReducedData> {
    let (basis, manifest) = PcaBasis::load(&ws.verified("pca")?)?;
    let c = Container::read(&ws.verified("scores")?)?;
    let scores = c.get("scores")?.to_matrix()?;
    let scaler = MinMaxScaler::from_container(&c)?;
    if scores.cols() != basis.tau || scaler.dim() != basis.tau {
        return Err(Error::Format("scores/scaler disagree with the PCA rank".into()));
    }
    Ok(ReducedData {
        basis,
        scores,
        scaler,
        field: manifest.field,
    })
}

pub fn cmd_train(common: &Common, adversarial: bool, epochs: Option<usize>) -> Result<()> {
    let mut ws = Workspace::open(&common.out)?;
    let mut cfg = ws.config(common.config.as_deref())?;
    apply_seed(&mut cfg, common.seed);
    let mut train = cfg.train.clone();
    train.adversarial = adversarial;
    if let Some(e) = epochs {
        train.epochs = e;
    }
    let reduced = load_reduced(&ws)?;
    let dataset = make_windows(&reduced.scaled()?, train.time_lag, train.train_fraction)?;
    let tag = if adversarial { "adv" } else { "classic" };
    let model_rel = format!("model_{tag}.romf");
    let report_rel = format!("train_{tag}.csv");
    let report = if adversarial {
        let (model, disc, report) = train_adversarial(&dataset, &train)?;
        save_forecaster(&ws.path(&model_rel), &model, train.seed)?;
        save_discriminator(&ws.path("disc_adv.romf"), &disc, train.seed)?;
        ws.register_with_sidecar("disc_adv", "disc_adv.romf")?;
        report
    } else {
        let (model, report) = train_classic(&dataset, &train)?;
        save_forecaster(&ws.path(&model_rel), &model, train.seed)?;
        report
    };
    ws.register_with_sidecar(&format!("model_{tag}"), &model_rel)?;
    std::fs::write(ws.path(&report_rel), report.to_csv())?;
    ws.register(&format!("train_{tag}"), &report_rel)?;
    ws.manifest.seeds.insert(format!("train_{tag}"), train.seed);
    ws.save()?;
    println!(
        "trained {tag} forecaster: {} epochs, {} optimizer steps, final val mse {}",
        train.epochs,
        report.optimizer_steps,
        crate::training::sig6(report.final_val_mse())
    );
    Ok(())
}

pub fn cmd_gridsearch(common: &Common, epochs: Option<usize>, threads: usize) -> Result<()> {
    let mut ws = Workspace::open(&common.out)?;
    let mut cfg = ws.config(common.config.as_deref())?;
    apply_seed(&mut cfg, common.seed);
    let mut grid = cfg.grid.clone();
    if let Some(e) = epochs {
        grid.epochs = e;
    }
    let reduced = load_reduced(&ws)?;
    let result = grid_search(&reduced.scaled()?, &cfg.train, &grid, threads)?;
    std::fs::write(ws.path("gridsearch.csv"), result.to_csv())?;
    ws.register("gridsearch", "gridsearch.csv")?;
    let best = TrainConfig {
        epochs: cfg.train.epochs,
        ..result.best_config().clone()
    };
    std::fs::write(ws.path("best_config.json"), serde_json::to_string_pretty(&best)?)?;
    ws.register("best_config", "best_config.json")?;
    ws.save()?;
    let failed = result.points.iter().filter(|p| p.error.is_some()).count();
    if failed > 0 {
        warn!("{failed} grid points failed");
    }
    println!(
        "grid search: {} points, best #{} (dropout {}, hidden {}, batch {}, {}, lag {}) val mse {}",
        result.points.len(),
        result.best,
        best.dropout,
        best.hidden_nodes,
        best.batch_size,
        best.output_activation.name(),
        best.time_lag,
        result.points[result.best]
            .val_mse
            .map_or("n/a".into(), crate::training::sig6)
    );
    Ok(())
}

pub fn cmd_evaluate(
    common: &Common,
    horizon: Option<usize>,
    starts: Option<&str>,
    region: Region,
    threads: usize,
) -> Result<()> {
    let mut ws = Workspace::open(&common.out)?;
    let cfg = ws.config(common.config.as_deref())?;
    let horizon = horizon.unwrap_or(cfg.evaluate.horizon);
    let reduced = load_reduced(&ws)?;
    let classic = load_forecaster(&ws.verified("model_classic")?)?;
    let adv = load_forecaster(&ws.verified("model_adv")?)?;
    let lag = classic.time_lag.max(adv.time_lag);
    let n = reduced.scores.rows();
    let (start_steps, label) = match starts {
        Some(spec) => (parse_starts(spec)?, "custom"),
        None => {
            let k = n.saturating_sub(lag);
            let split = (k as f64 * cfg.train.train_fraction).floor() as usize;
            let label = match region {
                Region::Training => "training",
                Region::Validation => "validation",
            };
            (
                region_starts(n, lag, split, horizon, region, cfg.evaluate.starts_per_region)?,
                label,
            )
        }
    };
    let report = evaluate_ensemble(
        &classic,
        &adv,
        &reduced.scores,
        &reduced.scaler,
        &start_steps,
        horizon,
        threads,
    )?;
    let rel = format!("ensemble_{label}.csv");
    report.write_csv(&ws.path(&rel))?;
    ws.register(&format!("ensemble_{label}"), &rel)?;

    // Field-space comparison from the first start step.
    let field_step = cfg.evaluate.field_step.clamp(1, horizon.max(1));
    if horizon > 0 {
        let s0 = start_steps[0];
        let rc = rollout_from(&classic, &reduced.scaler, &reduced.scores, s0, horizon)?;
        let ra = rollout_from(&adv, &reduced.scaler, &reduced.scores, s0, horizon)?;
        if rc.predicted.rows() >= field_step && ra.predicted.rows() >= field_step {
            let fc = reconstruct_forecast(&reduced.basis, &rc)?;
            let fa = reconstruct_forecast(&reduced.basis, &ra)?;
            let snaps = load_snapshots(&ws)?;
            let truth = snaps.field(&reduced.field)?;
            let t = s0 + lag + field_step - 1;
            let rel = format!("fields_{label}_step{field_step}.csv");
            write_field_comparison(
                &ws.path(&rel),
                truth.data().row(t),
                fc.row(field_step - 1),
                fa.row(field_step - 1),
            )?;
            ws.register(&format!("fields_{label}"), &rel)?;
            println!(
                "field RMSE at step {field_step} from t={s0}: classic {} adversarial {}",
                crate::training::sig6(rmse(fc.row(field_step - 1), truth.data().row(t))),
                crate::training::sig6(rmse(fa.row(field_step - 1), truth.data().row(t)))
            );
        }
    }
    ws.save()?;
    println!(
        "{label}: {} starts, horizon {horizon}, aggregate error reduction {:.2}% (diverged: classic {}, adversarial {})",
        start_steps.len(),
        report.aggregate_reduction(),
        report.classic_diverged,
        report.adversarial_diverged
    );
    Ok(())
}

/// Summary table with one row per report: aggregate reduction and the
/// reduction at a few horizon checkpoints.
pub fn format_report_table(named: &[(String, EnsembleReport)]) -> String {
    let mut s = String::new();
    let _ = writeln!(
        s,
        "{:<28} {:>10} {:>10} {:>10} {:>10} {:>10}",
        "report", "h=1", "h=10", "h=25", "h=last", "aggregate"
    );
    for (name, r) in named {
        let red = r.error_reduction();
        let at = |h: usize| {
            red.get(h.saturating_sub(1))
                .map_or("-".to_string(), |v| format!("{v:.2}%"))
        };
        let _ = writeln!(
            s,
            "{:<28} {:>10} {:>10} {:>10} {:>10} {:>10}",
            name,
            at(1),
            at(10),
            at(25),
            at(red.len()),
            format!("{:.2}%", r.aggregate_reduction())
        );
    }
    s
}

pub fn cmd_report(out: &Path, reports: &[PathBuf]) -> Result<String> {
    let paths: Vec<PathBuf> = if reports.is_empty() {
        let ws = Workspace::open(out)?;
        let names: Vec<String> = ws
            .manifest
            .artifacts
            .keys()
            .filter(|k| k.starts_with("ensemble_"))
            .cloned()
            .collect();
        if names.is_empty() {
            return Err(Error::MissingArtifact(
                "no ensemble reports recorded (run `romcast evaluate`)".into(),
            ));
        }
        names
            .iter()
            .map(|n| ws.verified(n))
            .collect::<Result<_>>()?
    } else {
        reports.to_vec()
    };
    let named = paths
        .iter()
        .map(|p| {
            let r = EnsembleReport::from_csv(&std::fs::read_to_string(p)?)?;
            let name = p
                .file_stem()
                .map_or_else(|| p.display().to_string(), |s| s.to_string_lossy().into_owned());
            Ok((name, r))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(format_report_table(&named))
}

/// Default desk benchmark model: tau = 16, hidden 64.
pub fn bench_model(cfg: &ExperimentConfig) -> Result<LstmForecaster> {
    let train = TrainConfig {
        hidden_nodes: 64,
        ..cfg.train.clone()
    };
    let mut rngs = RunRngs::new(train.seed);
    new_forecaster(16, &train, &mut rngs.init)
}

pub fn cmd_bench(out: &Path, config: Option<&Path>, steps: usize, repeats: usize) -> Result<TimingReport> {
    let ws = Workspace::open(out).ok();
    let cfg = match (config, &ws) {
        (Some(p), _) => ExperimentConfig::load(p)?,
        (None, Some(w)) => w.config(None)?,
        (None, None) => ExperimentConfig::default(),
    };
    let model = match &ws {
        Some(w) if w.manifest.artifacts.contains_key("model_classic") => {
            load_forecaster(&w.verified("model_classic")?)?
        }
        _ => bench_model(&cfg)?,
    };
    let report = timing_benchmark(&model, &cfg.data, steps, repeats)?;
    if let Some(w) = &ws {
        std::fs::write(w.path("bench.json"), serde_json::to_string_pretty(&report)?)?;
    }
    Ok(report)
}
