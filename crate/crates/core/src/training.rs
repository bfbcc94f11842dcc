//! Classic and adversarial training of LSTM forecasters, plus grid search.

use std::path::Path;
use std::time::Instant;

use log::{debug, info};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::container::{Container, NamedArray};
use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::neural::{
    Activation, Dense, Discriminator, ForecasterTape, LstmForecaster, LstmParams, Parameters,
};
use crate::optim::{bce, mse, NadamConfig, NadamState};

/// What the discriminator sees.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DiscriminatorInput {
    /// The candidate next step alone, as a length-1 sequence.
    Step,
    /// The conditioning window followed by the candidate (length `N + 1`).
    Conditional,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub hidden_nodes: usize,
    pub dropout: f64,
    pub output_activation: Activation,
    pub time_lag: usize,
    pub epochs: usize,
    pub train_fraction: f64,
    pub seed: u64,
    pub adversarial: bool,
    /// Weight of the adversarial term in the generator loss.
    pub adv_weight: f64,
    /// Discriminator updates per generator update.
    pub d_steps: usize,
    pub discriminator_input: DiscriminatorInput,
    pub optimizer: NadamConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            batch_size: 32,
            hidden_nodes: 32,
            dropout: 0.3,
            output_activation: Activation::Sigmoid,
            time_lag: 2,
            epochs: 500,
            train_fraction: 0.9,
            seed: 42,
            adversarial: false,
            adv_weight: 1.0,
            d_steps: 1,
            discriminator_input: DiscriminatorInput::Step,
            optimizer: NadamConfig::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        if !(self.train_fraction > 0.0 && self.train_fraction < 1.0) {
            return bad(format!("train_fraction must lie in (0, 1), got {}", self.train_fraction));
        }
        if self.batch_size == 0 || self.epochs == 0 || self.hidden_nodes == 0 || self.time_lag == 0 {
            return bad("batch_size, epochs, hidden_nodes and time_lag must be >= 1".into());
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return bad(format!("dropout must lie in [0, 1), got {}", self.dropout));
        }
        if !(self.adv_weight >= 0.0 && self.adv_weight.is_finite()) {
            return bad(format!("adv_weight must be >= 0, got {}", self.adv_weight));
        }
        if self.d_steps == 0 {
            return bad("d_steps must be >= 1".into());
        }
        self.optimizer.validate()
    }
}

/// Overlapping stride-1 windows of scaled PC scores with a chronological split.
#[derive(Debug, Clone, PartialEq)]
pub struct WindowedDataset {
    /// `k` windows, each `N x tau`.
    pub inputs: Vec<Matrix>,
    /// `k x tau` next-step targets.
    pub targets: Matrix,
    /// Samples `[0, split)` are training, `[split, k)` validation.
    pub split: usize,
    pub time_lag: usize,
}

impl WindowedDataset {
    pub fn len(&self) -> usize {
        self.inputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.is_empty()
    }

    pub fn tau(&self) -> usize {
        self.targets.cols()
    }

    pub fn train_indices(&self) -> std::ops::Range<usize> {
        0..self.split
    }

    pub fn validation_indices(&self) -> std::ops::Range<usize> {
        self.split..self.len()
    }
}

pub fn make_windows(scores: &Matrix, time_lag: usize, train_fraction: f64) -> Result<WindowedDataset> {
    let n = scores.rows();
    if time_lag == 0 || n <= time_lag {
        return Err(Error::TooFewSteps(format!(
            "need more than time_lag = {time_lag} steps, got {n}"
        )));
    }
    if !(train_fraction > 0.0 && train_fraction <= 1.0) {
        return Err(Error::InvalidConfig(format!(
            "train_fraction must lie in (0, 1], got {train_fraction}"
        )));
    }
    let k = n - time_lag;
    let inputs = (0..k).map(|i| scores.slice_rows(i, i + time_lag)).collect();
    let targets = scores.slice_rows(time_lag, n);
    let split = (k as f64 * train_fraction).floor() as usize;
    Ok(WindowedDataset {
        inputs,
        targets,
        split,
        time_lag,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_mse: f64,
    pub val_mse: f64,
    pub d_loss: Option<f64>,
    pub g_adv_loss: Option<f64>,
    pub seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct TrainReport {
    pub epochs: Vec<EpochRecord>,
    pub optimizer_steps: u64,
}

impl TrainReport {
    pub fn final_val_mse(&self) -> f64 {
        self.epochs.last().map_or(f64::NAN, |e| e.val_mse)
    }

    /// CSV with columns `epoch,train_mse,val_mse,d_loss,g_adv_loss` (6 significant digits).
    pub fn to_csv(&self) -> String {
        let mut s = String::from("epoch,train_mse,val_mse,d_loss,g_adv_loss\n");
        let opt = |v: Option<f64>| v.map_or(String::new(), sig6);
        for e in &self.epochs {
            s.push_str(&format!(
                "{},{},{},{},{}\n",
                e.epoch,
                sig6(e.train_mse),
                sig6(e.val_mse),
                opt(e.d_loss),
                opt(e.g_adv_loss)
            ));
        }
        s
    }
}

/// Formats with 6 significant digits.
pub fn sig6(v: f64) -> String {
    if v == 0.0 || !v.is_finite() {
        return format!("{v}");
    }
    let mag = v.abs().log10().floor() as i32;
    if (-4..6).contains(&mag) {
        let decimals = (5 - mag).max(0) as usize;
        format!("{v:.decimals$}")
    } else {
        format!("{v:.5e}")
    }
}

/// RNG streams derived from the single run seed.
pub(crate) struct RunRngs {
    pub init: ChaCha8Rng,
    pub shuffle: ChaCha8Rng,
    pub dropout: ChaCha8Rng,
}

impl RunRngs {
    pub fn new(seed: u64) -> Self {
        let stream = |k| {
            let mut r = ChaCha8Rng::seed_from_u64(seed);
            r.set_stream(k);
            r
        };
        Self {
            init: stream(1),
            shuffle: stream(2),
            dropout: stream(3),
        }
    }
}

/// One generator update's bookkeeping.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepLosses {
    pub mse: f64,
    pub adversarial: Option<f64>,
}

/// Forward passes in training mode for a batch, drawing dropout masks in order.
pub fn forward_batch(
    model: &LstmForecaster,
    dataset: &WindowedDataset,
    batch: &[usize],
    dropout_rng: &mut ChaCha8Rng,
) -> Result<Vec<ForecasterTape>> {
    batch
        .iter()
        .map(|&i| model.forward(&dataset.inputs[i], Some(dropout_rng)))
        .collect()
}

fn disc_sequence(mode: DiscriminatorInput, window: &Matrix, candidate: &[f64]) -> Matrix {
    match mode {
        DiscriminatorInput::Step => {
            Matrix::from_vec(1, candidate.len(), candidate.to_vec()).expect("row shape")
        }
        DiscriminatorInput::Conditional => {
            let mut data = window.as_slice().to_vec();
            data.extend_from_slice(candidate);
            Matrix::from_vec(window.rows() + 1, candidate.len(), data).expect("window shape")
        }
    }
}

/// The adversarial context for a generator update.
pub struct AdversarialTerm<'a> {
    pub discriminator: &'a Discriminator,
    pub weight: f64,
    pub input: DiscriminatorInput,
}

/// Generator update from recorded forward tapes:
/// `mse(pred, target) + weight * bce(D(pred), 1)` when `adversarial` is given,
/// plain MSE otherwise. The discriminator is not modified.
pub fn generator_step(
    model: &mut LstmForecaster,
    optimizer: &mut NadamState,
    dataset: &WindowedDataset,
    batch: &[usize],
    tapes: &[ForecasterTape],
    adversarial: Option<&AdversarialTerm<'_>>,
) -> Result<StepLosses> {
    let bsz = batch.len() as f64;
    let mut grads = model.zeros_like();
    let mut mse_sum = 0.0;
    let mut adv_loss = None;

    // dL_adv/dprob for each sample, then through D back to the prediction.
    let adv_grads: Option<Vec<Vec<f64>>> = match adversarial {
        Some(term) => {
            let d = term.discriminator;
            let d_tapes = batch
                .iter()
                .zip(tapes)
                .map(|(&i, tape)| d.forward(&disc_sequence(term.input, &dataset.inputs[i], &tape.output)))
                .collect::<Result<Vec<_>>>()?;
            let probs: Vec<f64> = d_tapes.iter().map(|t| t.prob).collect();
            let (loss, dprob) = bce(&probs, 1.0)?;
            adv_loss = Some(loss);
            if term.weight != 0.0 {
                let mut scratch = d.zeros_like();
                let grads = d_tapes
                    .iter()
                    .zip(&dprob)
                    .map(|(t, &g)| {
                        let dseq = d.backward(t, term.weight * g, &mut scratch)?;
                        Ok(dseq.row(dseq.rows() - 1).to_vec())
                    })
                    .collect::<Result<Vec<_>>>()?;
                Some(grads)
            } else {
                None
            }
        }
        None => None,
    };

    for (b, (&i, tape)) in batch.iter().zip(tapes).enumerate() {
        let (loss, mut d_out) = mse(&tape.output, dataset.targets.row(i))?;
        mse_sum += loss;
        d_out.iter_mut().for_each(|g| *g /= bsz);
        if let Some(adv) = &adv_grads {
            for (g, a) in d_out.iter_mut().zip(&adv[b]) {
                *g += a;
            }
        }
        model.backward(tape, &d_out, &mut grads)?;
    }
    let mse_mean = mse_sum / bsz;
    if !mse_mean.is_finite() || !grads.all_finite() {
        return Err(Error::NonFiniteLoss(format!("generator loss {mse_mean}")));
    }
    optimizer.step(model, &grads)?;
    Ok(StepLosses {
        mse: mse_mean,
        adversarial: adv_loss,
    })
}

/// Discriminator update: `bce(D(real), 1) + bce(D(fake), 0)`, generator
/// outputs taken as constants. Returns the loss.
pub fn discriminator_step(
    disc: &mut Discriminator,
    optimizer: &mut NadamState,
    dataset: &WindowedDataset,
    batch: &[usize],
    fakes: &[Vec<f64>],
    input: DiscriminatorInput,
) -> Result<f64> {
    let real_tapes = batch
        .iter()
        .map(|&i| disc.forward(&disc_sequence(input, &dataset.inputs[i], dataset.targets.row(i))))
        .collect::<Result<Vec<_>>>()?;
    let fake_tapes = batch
        .iter()
        .zip(fakes)
        .map(|(&i, f)| disc.forward(&disc_sequence(input, &dataset.inputs[i], f)))
        .collect::<Result<Vec<_>>>()?;
    let (real_loss, real_g) = bce(&real_tapes.iter().map(|t| t.prob).collect::<Vec<_>>(), 1.0)?;
    let (fake_loss, fake_g) = bce(&fake_tapes.iter().map(|t| t.prob).collect::<Vec<_>>(), 0.0)?;
    let mut grads = disc.zeros_like();
    for (t, g) in real_tapes.iter().zip(&real_g).chain(fake_tapes.iter().zip(&fake_g)) {
        disc.backward(t, *g, &mut grads)?;
    }
    let loss = real_loss + fake_loss;
    if !loss.is_finite() || !grads.all_finite() {
        return Err(Error::NonFiniteLoss(format!("discriminator loss {loss}")));
    }
    optimizer.step(disc, &grads)?;
    Ok(loss)
}

/// Inference-mode MSE over a set of samples.
pub fn evaluate_mse(model: &LstmForecaster, dataset: &WindowedDataset, indices: std::ops::Range<usize>) -> Result<f64> {
    if indices.is_empty() {
        return Ok(f64::NAN);
    }
    let count = indices.len() as f64;
    let mut total = 0.0;
    for i in indices {
        let pred = model.predict(&dataset.inputs[i])?;
        total += mse(&pred, dataset.targets.row(i))?.0;
    }
    Ok(total / count)
}

/// Fraction of real/predicted pairs the discriminator classifies correctly
/// (real > 0.5, predicted < 0.5) over the given samples.
pub fn discriminator_accuracy(
    model: &LstmForecaster,
    disc: &Discriminator,
    dataset: &WindowedDataset,
    indices: std::ops::Range<usize>,
    input: DiscriminatorInput,
) -> Result<f64> {
    let mut correct = 0usize;
    let mut total = 0usize;
    for i in indices {
        let w = &dataset.inputs[i];
        let pred = model.predict(w)?;
        if disc.probability(&disc_sequence(input, w, dataset.targets.row(i)))? > 0.5 {
            correct += 1;
        }
        if disc.probability(&disc_sequence(input, w, &pred))? < 0.5 {
            correct += 1;
        }
        total += 2;
    }
    Ok(correct as f64 / total.max(1) as f64)
}

fn check_dataset(dataset: &WindowedDataset, config: &TrainConfig) -> Result<()> {
    config.validate()?;
    if dataset.time_lag != config.time_lag {
        return Err(Error::InvalidConfig(format!(
            "dataset windows have lag {}, config asks for {}",
            dataset.time_lag, config.time_lag
        )));
    }
    if dataset.split == 0 {
        return Err(Error::TooFewSteps("no training samples after the split".into()));
    }
    Ok(())
}

pub fn new_forecaster(tau: usize, config: &TrainConfig, rng: &mut ChaCha8Rng) -> Result<LstmForecaster> {
    LstmForecaster::new(
        tau,
        config.hidden_nodes,
        config.output_activation,
        config.dropout,
        config.time_lag,
        rng,
    )
}

pub fn new_discriminator(tau: usize, config: &TrainConfig, rng: &mut ChaCha8Rng) -> Result<Discriminator> {
    Discriminator::new(tau, config.hidden_nodes, rng)
}

struct Trainer<'a> {
    config: &'a TrainConfig,
    rngs: RunRngs,
    order: Vec<usize>,
}

impl<'a> Trainer<'a> {
    fn new(dataset: &'a WindowedDataset, config: &'a TrainConfig) -> Self {
        Self {
            config,
            rngs: RunRngs::new(config.seed),
            order: dataset.train_indices().collect(),
        }
    }

    fn shuffled_batches(&mut self) -> Vec<Vec<usize>> {
        self.order.shuffle(&mut self.rngs.shuffle);
        self.order
            .chunks(self.config.batch_size)
            .map(<[usize]>::to_vec)
            .collect()
    }
}

/// Plain MSE training with mini-batch Nadam.
pub fn train_classic(dataset: &WindowedDataset, config: &TrainConfig) -> Result<(LstmForecaster, TrainReport)> {
    check_dataset(dataset, config)?;
    let mut tr = Trainer::new(dataset, config);
    let mut model = new_forecaster(dataset.tau(), config, &mut tr.rngs.init)?;
    let mut opt = NadamState::new(&model, config.optimizer);
    let mut report = TrainReport::default();

    for epoch in 0..config.epochs {
        let start = Instant::now();
        let mut weighted = 0.0;
        for batch in tr.shuffled_batches() {
            let tapes = forward_batch(&model, dataset, &batch, &mut tr.rngs.dropout)?;
            let losses = generator_step(&mut model, &mut opt, dataset, &batch, &tapes, None)?;
            weighted += losses.mse * batch.len() as f64;
        }
        let val_mse = evaluate_mse(&model, dataset, dataset.validation_indices())?;
        let rec = EpochRecord {
            epoch,
            train_mse: weighted / dataset.split as f64,
            val_mse,
            d_loss: None,
            g_adv_loss: None,
            seconds: start.elapsed().as_secs_f64(),
        };
        debug!("classic epoch {epoch}: train {:.3e} val {:.3e}", rec.train_mse, rec.val_mse);
        report.epochs.push(rec);
    }
    report.optimizer_steps = opt.t;
    info!(
        "classic training done: {} epochs, final val mse {:.4e}",
        config.epochs,
        report.final_val_mse()
    );
    Ok((model, report))
}

/// Alternating discriminator / generator updates per mini-batch.
pub fn train_adversarial(
    dataset: &WindowedDataset,
    config: &TrainConfig,
) -> Result<(LstmForecaster, Discriminator, TrainReport)> {
    check_dataset(dataset, config)?;
    let mut tr = Trainer::new(dataset, config);
    let mut model = new_forecaster(dataset.tau(), config, &mut tr.rngs.init)?;
    let mut disc = new_discriminator(dataset.tau(), config, &mut tr.rngs.init)?;
    let mut g_opt = NadamState::new(&model, config.optimizer);
    let mut d_opt = NadamState::new(&disc, config.optimizer);
    let mut report = TrainReport::default();

    for epoch in 0..config.epochs {
        let start = Instant::now();
        let (mut weighted, mut d_sum, mut adv_sum) = (0.0, 0.0, 0.0);
        let batches = tr.shuffled_batches();
        let n_batches = batches.len() as f64;
        for batch in batches {
            let tapes = forward_batch(&model, dataset, &batch, &mut tr.rngs.dropout)?;
            let fakes: Vec<Vec<f64>> = tapes.iter().map(|t| t.output.clone()).collect();
            let mut d_loss = 0.0;
            for _ in 0..config.d_steps {
                d_loss = discriminator_step(
                    &mut disc,
                    &mut d_opt,
                    dataset,
                    &batch,
                    &fakes,
                    config.discriminator_input,
                )?;
            }
            let term = AdversarialTerm {
                discriminator: &disc,
                weight: config.adv_weight,
                input: config.discriminator_input,
            };
            let losses = generator_step(&mut model, &mut g_opt, dataset, &batch, &tapes, Some(&term))?;
            weighted += losses.mse * batch.len() as f64;
            d_sum += d_loss;
            adv_sum += losses.adversarial.unwrap_or(0.0);
        }
        let val_mse = evaluate_mse(&model, dataset, dataset.validation_indices())?;
        let rec = EpochRecord {
            epoch,
            train_mse: weighted / dataset.split as f64,
            val_mse,
            d_loss: Some(d_sum / n_batches),
            g_adv_loss: Some(adv_sum / n_batches),
            seconds: start.elapsed().as_secs_f64(),
        };
        debug!(
            "adversarial epoch {epoch}: train {:.3e} val {:.3e} d {:.3} g_adv {:.3}",
            rec.train_mse,
            rec.val_mse,
            rec.d_loss.unwrap_or(f64::NAN),
            rec.g_adv_loss.unwrap_or(f64::NAN)
        );
        report.epochs.push(rec);
    }
    report.optimizer_steps = g_opt.t;
    info!(
        "adversarial training done: {} epochs, final val mse {:.4e}",
        config.epochs,
        report.final_val_mse()
    );
    Ok((model, disc, report))
}

/// Candidate values per hyperparameter; the search trains one classic model
/// per point of the cartesian product.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridSpec {
    pub dropout: Vec<f64>,
    pub hidden_nodes: Vec<usize>,
    pub batch_size: Vec<usize>,
    pub output_activation: Vec<Activation>,
    pub time_lag: Vec<usize>,
    /// Epoch budget per point.
    pub epochs: usize,
}

impl Default for GridSpec {
    fn default() -> Self {
        Self {
            dropout: vec![0.3, 0.5],
            hidden_nodes: vec![16, 32],
            batch_size: vec![32],
            output_activation: vec![Activation::Relu, Activation::Sigmoid],
            time_lag: vec![2],
            epochs: 50,
        }
    }
}

impl GridSpec {
    /// Cartesian product in declaration order
    /// (dropout, hidden_nodes, batch_size, output_activation, time_lag).
    pub fn points(&self, base: &TrainConfig) -> Vec<TrainConfig> {
        let mut out = Vec::new();
        for &dropout in &self.dropout {
            for &hidden_nodes in &self.hidden_nodes {
                for &batch_size in &self.batch_size {
                    for &output_activation in &self.output_activation {
                        for &time_lag in &self.time_lag {
                            out.push(TrainConfig {
                                dropout,
                                hidden_nodes,
                                batch_size,
                                output_activation,
                                time_lag,
                                epochs: self.epochs,
                                adversarial: false,
                                ..base.clone()
                            });
                        }
                    }
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridPoint {
    pub config: TrainConfig,
    pub val_mse: Option<f64>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridSearchResult {
    pub points: Vec<GridPoint>,
    pub best: usize,
}

impl GridSearchResult {
    pub fn best_config(&self) -> &TrainConfig {
        &self.points[self.best].config
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from(
            "index,dropout,hidden_nodes,batch_size,output_activation,time_lag,val_mse,status\n",
        );
        for (i, p) in self.points.iter().enumerate() {
            let c = &p.config;
            s.push_str(&format!(
                "{i},{},{},{},{},{},{},{}\n",
                c.dropout,
                c.hidden_nodes,
                c.batch_size,
                c.output_activation.name(),
                c.time_lag,
                p.val_mse.map_or(String::new(), sig6),
                p.error.as_deref().map_or("ok".to_string(), |e| format!("failed: {}", e.replace(',', ";"))),
            ));
        }
        s
    }
}

fn run_point(scores: &Matrix, config: &TrainConfig) -> GridPoint {
    let result = make_windows(scores, config.time_lag, config.train_fraction)
        .and_then(|ds| train_classic(&ds, config))
        .and_then(|(_, report)| {
            let v = report.final_val_mse();
            if v.is_finite() {
                Ok(v)
            } else {
                Err(Error::NonFiniteLoss(format!("validation mse {v}")))
            }
        });
    match result {
        Ok(v) => GridPoint {
            config: config.clone(),
            val_mse: Some(v),
            error: None,
        },
        Err(e) => GridPoint {
            config: config.clone(),
            val_mse: None,
            error: Some(e.to_string()),
        },
    }
}

/// Trains every grid point on `scores` (already scaled) and picks the lowest
/// final validation MSE; ties go to fewer hidden nodes, then lower dropout,
/// then declaration order.
pub fn grid_search(scores: &Matrix, base: &TrainConfig, grid: &GridSpec, threads: usize) -> Result<GridSearchResult> {
    let configs = grid.points(base);
    if configs.is_empty() {
        return Err(Error::InvalidConfig("grid search needs at least one point".into()));
    }
    let threads = threads.max(1).min(configs.len());
    let mut points: Vec<Option<GridPoint>> = vec![None; configs.len()];
    if threads == 1 {
        for (slot, c) in points.iter_mut().zip(&configs) {
            *slot = Some(run_point(scores, c));
        }
    } else {
        std::thread::scope(|scope| {
            let handles: Vec<_> = (0..threads)
                .map(|w| {
                    let configs = &configs;
                    scope.spawn(move || {
                        (w..configs.len())
                            .step_by(threads)
                            .map(|i| (i, run_point(scores, &configs[i])))
                            .collect::<Vec<_>>()
                    })
                })
                .collect();
            for h in handles {
                for (i, p) in h.join().expect("grid worker panicked") {
                    points[i] = Some(p);
                }
            }
        });
    }
    let points: Vec<GridPoint> = points.into_iter().map(|p| p.expect("every point run")).collect();
    let best = points
        .iter()
        .enumerate()
        .filter_map(|(i, p)| p.val_mse.map(|v| (i, v)))
        .min_by(|(i, a), (j, b)| {
            let (ca, cb) = (&points[*i].config, &points[*j].config);
            a.total_cmp(b)
                .then(ca.hidden_nodes.cmp(&cb.hidden_nodes))
                .then(ca.dropout.total_cmp(&cb.dropout))
                .then(i.cmp(j))
        })
        .map(|(i, _)| i)
        .ok_or_else(|| Error::NonFiniteLoss("every grid point failed".into()))?;
    Ok(GridSearchResult { points, best })
}

/// Weights + JSON manifest for a forecaster.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelManifest {
    pub kind: String,
    pub input_dim: usize,
    pub hidden_dim: usize,
    pub output_dim: usize,
    pub output_activation: Option<Activation>,
    pub dropout_rate: Option<f64>,
    pub time_lag: Option<usize>,
    pub seed: u64,
}

fn lstm_arrays(c: &mut Container, p: &LstmParams) {
    c.push(NamedArray::new("lstm_w", vec![4 * p.hidden_dim, p.input_dim], p.w.clone()).expect("lstm_w shape"));
    c.push(NamedArray::new("lstm_u", vec![4 * p.hidden_dim, p.hidden_dim], p.u.clone()).expect("lstm_u shape"));
    c.push(NamedArray::vector("lstm_b", p.b.clone()));
}

fn dense_arrays(c: &mut Container, d: &Dense) {
    c.push(NamedArray::new("head_w", vec![d.out_dim, d.in_dim], d.w.clone()).expect("head_w shape"));
    c.push(NamedArray::vector("head_b", d.b.clone()));
}

fn read_lstm(c: &Container, input_dim: usize, hidden_dim: usize) -> Result<LstmParams> {
    let p = LstmParams {
        input_dim,
        hidden_dim,
        w: c.get("lstm_w")?.data.clone(),
        u: c.get("lstm_u")?.data.clone(),
        b: c.get("lstm_b")?.data.clone(),
    };
    let z = LstmParams::zeros(input_dim, hidden_dim);
    if p.w.len() != z.w.len() || p.u.len() != z.u.len() || p.b.len() != z.b.len() {
        return Err(Error::Format("LSTM arrays disagree with manifest dims".into()));
    }
    Ok(p)
}

fn read_dense(c: &Container, in_dim: usize, out_dim: usize) -> Result<Dense> {
    let d = Dense {
        in_dim,
        out_dim,
        w: c.get("head_w")?.data.clone(),
        b: c.get("head_b")?.data.clone(),
    };
    if d.w.len() != in_dim * out_dim || d.b.len() != out_dim {
        return Err(Error::Format("dense arrays disagree with manifest dims".into()));
    }
    Ok(d)
}

fn write_manifest(path: &Path, m: &ModelManifest) -> Result<()> {
    std::fs::write(path.with_extension("json"), serde_json::to_string_pretty(m)?)?;
    Ok(())
}

fn read_manifest(path: &Path, kind: &str) -> Result<ModelManifest> {
    let m: ModelManifest = serde_json::from_str(&std::fs::read_to_string(path.with_extension("json"))?)?;
    if m.kind != kind {
        return Err(Error::Format(format!("expected a {kind} manifest, found {}", m.kind)));
    }
    Ok(m)
}

pub fn save_forecaster(path: &Path, model: &LstmForecaster, seed: u64) -> Result<()> {
    let mut c = Container::new();
    lstm_arrays(&mut c, &model.lstm);
    dense_arrays(&mut c, &model.head);
    c.write(path)?;
    write_manifest(
        path,
        &ModelManifest {
            kind: "forecaster".into(),
            input_dim: model.lstm.input_dim,
            hidden_dim: model.hidden(),
            output_dim: model.tau(),
            output_activation: Some(model.output_activation),
            dropout_rate: Some(model.dropout_rate),
            time_lag: Some(model.time_lag),
            seed,
        },
    )
}

pub fn load_forecaster(path: &Path) -> Result<LstmForecaster> {
    let m = read_manifest(path, "forecaster")?;
    let c = Container::read(path)?;
    let missing = |k: &str| Error::Format(format!("forecaster manifest lacks {k}"));
    Ok(LstmForecaster {
        lstm: read_lstm(&c, m.input_dim, m.hidden_dim)?,
        head: read_dense(&c, m.hidden_dim, m.output_dim)?,
        output_activation: m.output_activation.ok_or_else(|| missing("output_activation"))?,
        dropout_rate: m.dropout_rate.ok_or_else(|| missing("dropout_rate"))?,
        time_lag: m.time_lag.ok_or_else(|| missing("time_lag"))?,
    })
}

pub fn save_discriminator(path: &Path, disc: &Discriminator, seed: u64) -> Result<()> {
    let mut c = Container::new();
    lstm_arrays(&mut c, &disc.lstm);
    dense_arrays(&mut c, &disc.head);
    c.write(path)?;
    write_manifest(
        path,
        &ModelManifest {
            kind: "discriminator".into(),
            input_dim: disc.lstm.input_dim,
            hidden_dim: disc.lstm.hidden_dim,
            output_dim: 1,
            output_activation: Some(Activation::Sigmoid),
            dropout_rate: None,
            time_lag: None,
            seed,
        },
    )
}

pub fn load_discriminator(path: &Path) -> Result<Discriminator> {
    let m = read_manifest(path, "discriminator")?;
    let c = Container::read(path)?;
    Ok(Discriminator {
        lstm: read_lstm(&c, m.input_dim, m.hidden_dim)?,
        head: read_dense(&c, m.hidden_dim, 1)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ramp(n: usize, tau: usize) -> Matrix {
        let rows: Vec<Vec<f64>> = (0..n)
            .map(|t| (0..tau).map(|k| (t * 10 + k) as f64).collect())
            .collect();
        Matrix::from_rows(&rows).unwrap()
    }

    #[test]
    fn window_arithmetic() {
        let ds = make_windows(&ramp(4, 1), 2, 0.9).unwrap();
        assert_eq!(ds.len(), 2);
        assert_eq!(ds.inputs[0].as_slice(), &[0.0, 10.0]);
        assert_eq!(ds.targets.row(0), &[20.0]);
        assert_eq!(ds.inputs[1].as_slice(), &[10.0, 20.0]);
        assert_eq!(ds.targets.row(1), &[30.0]);
        assert_eq!(make_windows(&ramp(3, 1), 2, 0.5).unwrap().len(), 1);
        assert!(matches!(make_windows(&ramp(2, 1), 2, 0.5), Err(Error::TooFewSteps(_))));
    }

    #[test]
    fn long_run_split() {
        let ds = make_windows(&ramp(1500, 1), 2, 0.9).unwrap();
        assert_eq!(ds.len(), 1498);
        assert_eq!(ds.split, 1348);
        assert_eq!(ds.validation_indices().len(), 150);
    }

    #[test]
    fn targets_chain_into_next_window() {
        let ds = make_windows(&ramp(20, 3), 3, 0.8).unwrap();
        for i in 0..ds.len() - 1 {
            assert_eq!(ds.targets.row(i), ds.inputs[i + 1].row(2));
        }
        assert!(ds.train_indices().end <= ds.validation_indices().start);
    }

    #[test]
    fn sig6_formatting() {
        assert_eq!(sig6(12.345678), "12.3457");
        assert_eq!(sig6(0.0), "0");
        assert_eq!(sig6(-0.000123456789), "-0.000123457");
        assert_eq!(sig6(1.5e-9), "1.50000e-9");
        assert_eq!(sig6(100.0), "100.000");
    }

    #[test]
    fn grid_point_ordering() {
        let grid = GridSpec {
            dropout: vec![0.3, 0.5],
            hidden_nodes: vec![8, 16],
            batch_size: vec![32],
            output_activation: vec![Activation::Relu],
            time_lag: vec![2],
            epochs: 1,
        };
        let pts = grid.points(&TrainConfig::default());
        assert_eq!(pts.len(), 4);
        assert_eq!((pts[1].dropout, pts[1].hidden_nodes), (0.3, 16));
        assert!(pts.iter().all(|p| !p.adversarial && p.epochs == 1));
    }

    #[test]
    fn config_validation() {
        assert!(TrainConfig::default().validate().is_ok());
        for bad in [
            TrainConfig { train_fraction: 1.0, ..Default::default() },
            TrainConfig { batch_size: 0, ..Default::default() },
            TrainConfig { epochs: 0, ..Default::default() },
            TrainConfig { adv_weight: -1.0, ..Default::default() },
            TrainConfig { dropout: 1.0, ..Default::default() },
        ] {
            assert!(matches!(bad.validate(), Err(Error::InvalidConfig(_))));
        }
    }
}
