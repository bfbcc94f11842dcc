//! Autoregressive rollout and ensemble comparison of two forecasters.

use std::path::Path;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::neural::LstmForecaster;
use crate::pca::PcaBasis;
use crate::snapshots::{generate, GeneratorConfig, MinMaxScaler};
use crate::training::sig6;

/// Anything that maps a `N x tau` window to the next `tau` vector.
pub trait OneStepModel: Sync {
    fn time_lag(&self) -> usize;
    fn predict_next(&self, window: &Matrix) -> Result<Vec<f64>>;
}

impl OneStepModel for LstmForecaster {
    fn time_lag(&self) -> usize {
        self.time_lag
    }

    fn predict_next(&self, window: &Matrix) -> Result<Vec<f64>> {
        self.predict(window)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RolloutResult {
    pub start_step: usize,
    pub horizon: usize,
    /// Scaled predictions, one row per completed step (fewer than `horizon`
    /// rows if the rollout diverged).
    pub predicted_scaled: Matrix,
    /// Same predictions mapped back to PC units.
    pub predicted: Matrix,
    /// `||P_hat - P||_2` per step in PC units; empty until compared with truth.
    pub errors: Vec<f64>,
    /// First step whose prediction was non-finite.
    pub diverged_at: Option<usize>,
}

/// Feeds each prediction back into the window `horizon` times (inference mode).
pub fn rollout<M: OneStepModel + ?Sized>(
    model: &M,
    scaler: &MinMaxScaler,
    seed_window: &Matrix,
    horizon: usize,
    start_step: usize,
) -> Result<RolloutResult> {
    let lag = model.time_lag();
    if seed_window.rows() != lag {
        return Err(Error::ShapeMismatch(format!(
            "seed window has {} rows, model lag is {lag}",
            seed_window.rows()
        )));
    }
    let tau = seed_window.cols();
    if scaler.dim() != tau {
        return Err(Error::ShapeMismatch(format!(
            "scaler has {} columns, window {tau}",
            scaler.dim()
        )));
    }
    let mut window = seed_window.clone();
    let mut preds: Vec<f64> = Vec::with_capacity(horizon * tau);
    let mut diverged_at = None;
    for h in 0..horizon {
        let next = model.predict_next(&window)?;
        if next.len() != tau {
            return Err(Error::ShapeMismatch(format!(
                "model predicted {} values, expected {tau}",
                next.len()
            )));
        }
        if next.iter().any(|v| !v.is_finite()) {
            diverged_at = Some(h);
            break;
        }
        preds.extend_from_slice(&next);
        let mut shifted = window.as_slice()[tau..].to_vec();
        shifted.extend_from_slice(&next);
        window = Matrix::from_vec(lag, tau, shifted)?;
    }
    let steps = preds.len() / tau;
    let predicted_scaled = Matrix::from_vec(steps, tau, preds)?;
    let predicted = scaler.invert(&predicted_scaled)?;
    Ok(RolloutResult {
        start_step,
        horizon,
        predicted_scaled,
        predicted,
        errors: Vec::new(),
        diverged_at,
    })
}

impl RolloutResult {
    /// Fills `errors` against ground-truth PC rows (`truth` row `h` is the
    /// target of step `h`).
    pub fn score(&mut self, truth: &Matrix) -> Result<()> {
        if truth.cols() != self.predicted.cols() || truth.rows() < self.predicted.rows() {
            return Err(Error::ShapeMismatch("ground truth does not cover the rollout".into()));
        }
        self.errors = (0..self.predicted.rows())
            .map(|h| {
                self.predicted
                    .row(h)
                    .iter()
                    .zip(truth.row(h))
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum::<f64>()
                    .sqrt()
            })
            .collect();
        Ok(())
    }
}

/// Rolls out from `start` (first row of the seed window) and scores against
/// the unscaled `scores`.
pub fn rollout_from<M: OneStepModel + ?Sized>(
    model: &M,
    scaler: &MinMaxScaler,
    scores: &Matrix,
    start: usize,
    horizon: usize,
) -> Result<RolloutResult> {
    let lag = model.time_lag();
    if start + lag + horizon > scores.rows() {
        return Err(Error::StartOutOfRange(format!(
            "start {start} + lag {lag} + horizon {horizon} exceeds {} steps",
            scores.rows()
        )));
    }
    let seed = scaler.scale(&scores.slice_rows(start, start + lag))?;
    let mut r = rollout(model, scaler, &seed, horizon, start)?;
    r.score(&scores.slice_rows(start + lag, start + lag + horizon))?;
    Ok(r)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HorizonStats {
    pub mean: f64,
    pub std: f64,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleReport {
    pub start_steps: Vec<usize>,
    pub horizon: usize,
    pub classic: Vec<HorizonStats>,
    pub adversarial: Vec<HorizonStats>,
    pub classic_diverged: usize,
    pub adversarial_diverged: usize,
}

fn reduction_pct(classic: f64, adv: f64) -> f64 {
    if classic == 0.0 {
        0.0
    } else {
        100.0 * (classic - adv) / classic
    }
}

impl EnsembleReport {
    /// `100 (e_classic(h) - e_adv(h)) / e_classic(h)` per horizon step.
    pub fn error_reduction(&self) -> Vec<f64> {
        self.classic
            .iter()
            .zip(&self.adversarial)
            .map(|(c, a)| reduction_pct(c.mean, a.mean))
            .collect()
    }

    /// Reduction of the horizon-averaged mean error.
    pub fn aggregate_reduction(&self) -> f64 {
        let c: f64 = self.classic.iter().map(|s| s.mean).sum();
        let a: f64 = self.adversarial.iter().map(|s| s.mean).sum();
        reduction_pct(c, a)
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("horizon,mean_classic,std_classic,mean_adv,std_adv,error_reduction_pct\n");
        for (h, ((c, a), r)) in self
            .classic
            .iter()
            .zip(&self.adversarial)
            .zip(self.error_reduction())
            .enumerate()
        {
            s.push_str(&format!(
                "{},{},{},{},{},{}\n",
                h + 1,
                sig6(c.mean),
                sig6(c.std),
                sig6(a.mean),
                sig6(a.std),
                sig6(r)
            ));
        }
        s
    }

    /// Parses the CSV written by [`EnsembleReport::to_csv`]. Start steps and
    /// divergence counts are not part of the file.
    pub fn from_csv(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        let header = lines.next().ok_or_else(|| Error::Format("empty report".into()))?;
        if header.trim() != "horizon,mean_classic,std_classic,mean_adv,std_adv,error_reduction_pct" {
            return Err(Error::Format(format!("unexpected report header {header:?}")));
        }
        let mut classic = Vec::new();
        let mut adversarial = Vec::new();
        for (k, line) in lines.filter(|l| !l.trim().is_empty()).enumerate() {
            let f: Vec<f64> = line
                .split(',')
                .map(|v| v.trim().parse::<f64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| Error::Format(format!("report line {}: {e}", k + 2)))?;
            if f.len() != 6 {
                return Err(Error::Format(format!("report line {} has {} fields", k + 2, f.len())));
            }
            classic.push(HorizonStats { mean: f[1], std: f[2], count: 0 });
            adversarial.push(HorizonStats { mean: f[3], std: f[4], count: 0 });
        }
        Ok(Self {
            start_steps: Vec::new(),
            horizon: classic.len(),
            classic,
            adversarial,
            classic_diverged: 0,
            adversarial_diverged: 0,
        })
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_csv())?;
        Ok(())
    }
}

fn horizon_stats(runs: &[RolloutResult], horizon: usize) -> Vec<HorizonStats> {
    (0..horizon)
        .map(|h| {
            let vals: Vec<f64> = runs.iter().filter_map(|r| r.errors.get(h).copied()).collect();
            let count = vals.len();
            if count == 0 {
                return HorizonStats { mean: f64::NAN, std: f64::NAN, count };
            }
            let mean = vals.iter().sum::<f64>() / count as f64;
            let var = vals.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / count as f64;
            HorizonStats { mean, std: var.sqrt(), count }
        })
        .collect()
}

fn run_all<M: OneStepModel + ?Sized>(
    model: &M,
    scaler: &MinMaxScaler,
    scores: &Matrix,
    starts: &[usize],
    horizon: usize,
    threads: usize,
) -> Result<Vec<RolloutResult>> {
    let threads = threads.max(1).min(starts.len().max(1));
    if threads == 1 {
        return starts
            .iter()
            .map(|&s| rollout_from(model, scaler, scores, s, horizon))
            .collect();
    }
    let mut out: Vec<Option<Result<RolloutResult>>> = (0..starts.len()).map(|_| None).collect();
    std::thread::scope(|scope| {
        let handles: Vec<_> = (0..threads)
            .map(|w| {
                scope.spawn(move || {
                    (w..starts.len())
                        .step_by(threads)
                        .map(|i| (i, rollout_from(model, scaler, scores, starts[i], horizon)))
                        .collect::<Vec<_>>()
                })
            })
            .collect();
        for h in handles {
            for (i, r) in h.join().expect("rollout worker panicked") {
                out[i] = Some(r);
            }
        }
    });
    out.into_iter().map(|r| r.expect("every start run")).collect()
}

/// Rolls out both models from every start and summarises error per horizon.
/// `scores` are unscaled PC scores of the full series.
pub fn evaluate_ensemble<A: OneStepModel + ?Sized, B: OneStepModel + ?Sized>(
    classic: &A,
    adversarial: &B,
    scores: &Matrix,
    scaler: &MinMaxScaler,
    start_steps: &[usize],
    horizon: usize,
    threads: usize,
) -> Result<EnsembleReport> {
    if start_steps.is_empty() {
        return Err(Error::StartOutOfRange("no start steps given".into()));
    }
    let lag = classic.time_lag().max(adversarial.time_lag());
    if let Some(&s) = start_steps.iter().find(|&&s| s + lag + horizon > scores.rows()) {
        return Err(Error::StartOutOfRange(format!(
            "start {s} + lag {lag} + horizon {horizon} exceeds {} steps",
            scores.rows()
        )));
    }
    let runs_c = run_all(classic, scaler, scores, start_steps, horizon, threads)?;
    let runs_a = run_all(adversarial, scaler, scores, start_steps, horizon, threads)?;
    Ok(EnsembleReport {
        start_steps: start_steps.to_vec(),
        horizon,
        classic: horizon_stats(&runs_c, horizon),
        adversarial: horizon_stats(&runs_a, horizon),
        classic_diverged: runs_c.iter().filter(|r| r.diverged_at.is_some()).count(),
        adversarial_diverged: runs_a.iter().filter(|r| r.diverged_at.is_some()).count(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Region {
    Training,
    Validation,
}

/// Up to `count` evenly spaced start steps whose windows begin in `region`.
/// Validation starts lie in `[split, n - lag - horizon]`; training starts
/// keep the whole forecast inside the training samples.
pub fn region_starts(
    n: usize,
    lag: usize,
    split: usize,
    horizon: usize,
    region: Region,
    count: usize,
) -> Result<Vec<usize>> {
    let (lo, hi) = match region {
        Region::Validation => (split, n.checked_sub(lag + horizon)),
        Region::Training => (split / 4, split.checked_sub(horizon + 1)),
    };
    let hi = hi.filter(|&h| h >= lo).ok_or_else(|| {
        Error::StartOutOfRange(format!(
            "no {region:?} start fits lag {lag} and horizon {horizon} in {n} steps (split {split})"
        ))
    })?;
    let span = hi - lo;
    if count == 0 {
        return Ok(Vec::new());
    }
    if span < count {
        return Ok((lo..=hi).collect());
    }
    let mut starts: Vec<usize> = (0..count)
        .map(|k| lo + (k * span + (count - 1) / 2) / (count - 1).max(1))
        .collect();
    starts.dedup();
    Ok(starts)
}

/// Unscaled scores of a rollout mapped back to the full state.
pub fn reconstruct_forecast(basis: &PcaBasis, result: &RolloutResult) -> Result<Matrix> {
    if result.predicted.cols() != basis.tau {
        return Err(Error::ShapeMismatch(format!(
            "rollout has {} PCs, basis keeps {}",
            result.predicted.cols(),
            basis.tau
        )));
    }
    basis.reconstruct(&result.predicted)
}

pub fn rmse(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len().max(1) as f64;
    (a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>() / n).sqrt()
}

/// Writes one row per node with the truth and both forecasts at one step.
pub fn write_field_comparison(path: &Path, truth: &[f64], classic: &[f64], adv: &[f64]) -> Result<()> {
    let mut s = String::from("node,truth,classic,adversarial\n");
    for (i, ((t, c), a)) in truth.iter().zip(classic).zip(adv).enumerate() {
        s.push_str(&format!("{i},{},{},{}\n", sig6(*t), sig6(*c), sig6(*a)));
    }
    std::fs::write(path, s)?;
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimingReport {
    pub forecast_step_seconds: f64,
    pub simulator_step_seconds: f64,
    /// simulator / forecast
    pub ratio: f64,
}

/// Mean wall-clock per autoregressive forecast step versus per simulated
/// step of the snapshot generator. Each side is timed `repeats` times and
/// the fastest run is kept.
pub fn timing_benchmark(
    model: &LstmForecaster,
    generator: &GeneratorConfig,
    forecast_steps: usize,
    repeats: usize,
) -> Result<TimingReport> {
    let tau = model.tau();
    let scaler = MinMaxScaler {
        min: vec![0.0; tau],
        max: vec![1.0; tau],
        lo: 0.0,
        hi: 1.0,
    };
    let seed = Matrix::from_vec(
        model.time_lag,
        tau,
        (0..model.time_lag * tau).map(|i| (i % 7) as f64 / 7.0).collect(),
    )?;
    let repeats = repeats.max(1);
    let mut best_forecast = f64::INFINITY;
    let mut best_sim = f64::INFINITY;
    for _ in 0..repeats {
        let t0 = Instant::now();
        let r = rollout(model, &scaler, &seed, forecast_steps, 0)?;
        std::hint::black_box(&r);
        best_forecast = best_forecast.min(t0.elapsed().as_secs_f64() / forecast_steps.max(1) as f64);

        let t0 = Instant::now();
        let s = generate(generator)?;
        std::hint::black_box(&s);
        best_sim = best_sim.min(t0.elapsed().as_secs_f64() / generator.n_steps as f64);
    }
    Ok(TimingReport {
        forecast_step_seconds: best_forecast,
        simulator_step_seconds: best_sim,
        ratio: best_sim / best_forecast,
    })
}
