//! Losses and the Nadam optimizer.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::neural::Parameters;

/// Probability clamp applied before taking logs in [`bce`].
pub const BCE_EPS: f64 = 1e-7;

/// Mean squared error over all elements and its gradient `2 (pred - target) / count`.
pub fn mse(pred: &[f64], target: &[f64]) -> Result<(f64, Vec<f64>)> {
    if pred.len() != target.len() {
        return Err(Error::ShapeMismatch(format!(
            "mse: prediction has {} elements, target {}",
            pred.len(),
            target.len()
        )));
    }
    if pred.is_empty() {
        return Err(Error::EmptyInput("mse of nothing".into()));
    }
    let n = pred.len() as f64;
    let loss = pred
        .iter()
        .zip(target)
        .map(|(p, t)| (p - t) * (p - t))
        .sum::<f64>()
        / n;
    let grad = pred
        .iter()
        .zip(target)
        .map(|(p, t)| 2.0 * (p - t) / n)
        .collect();
    Ok((loss, grad))
}

/// Binary cross-entropy averaged over the batch, with `p` clamped to
/// `[BCE_EPS, 1 - BCE_EPS]`. Returns the loss and `dL/dp` (zero where the clamp
/// is active).
pub fn bce(pred: &[f64], label: f64) -> Result<(f64, Vec<f64>)> {
    if label != 0.0 && label != 1.0 {
        return Err(Error::LabelOutOfRange(label));
    }
    if pred.is_empty() {
        return Err(Error::EmptyInput("bce of nothing".into()));
    }
    let n = pred.len() as f64;
    let mut loss = 0.0;
    let grad = pred
        .iter()
        .map(|&p| {
            let pc = p.clamp(BCE_EPS, 1.0 - BCE_EPS);
            let clamped = pc != p;
            if label == 1.0 {
                loss -= pc.ln();
                if clamped { 0.0 } else { -1.0 / (pc * n) }
            } else {
                loss -= (1.0 - pc).ln();
                if clamped { 0.0 } else { 1.0 / ((1.0 - pc) * n) }
            }
        })
        .collect();
    Ok((loss / n, grad))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NadamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// Global gradient-norm cap; `None` disables clipping.
    pub clip_norm: Option<f64>,
}

impl Default for NadamConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            clip_norm: None,
        }
    }
}

impl NadamConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = self.lr >= 0.0
            && (0.0..1.0).contains(&self.beta1)
            && (0.0..1.0).contains(&self.beta2)
            && self.eps > 0.0
            && self.clip_norm.is_none_or(|c| c > 0.0);
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidConfig(format!("bad optimizer hyperparameters {self:?}")))
        }
    }
}

/// Nesterov-accelerated Adam (Dozat 2016):
///
/// ```text
/// t += 1
/// m = b1 m + (1 - b1) g          v = b2 v + (1 - b2) g^2
/// m_hat = m / (1 - b1^(t+1))     g_hat = g / (1 - b1^t)
/// theta -= lr (b1 m_hat + (1 - b1) g_hat) / (sqrt(v / (1 - b2^t)) + eps)
/// ```
#[derive(Debug, Clone, PartialEq)]
pub struct NadamState {
    pub config: NadamConfig,
    pub t: u64,
    pub m: Vec<Vec<f64>>,
    pub v: Vec<Vec<f64>>,
}

impl NadamState {
    pub fn new<P: Parameters>(params: &P, config: NadamConfig) -> Self {
        let shapes: Vec<usize> = params.param_slices().iter().map(|s| s.len()).collect();
        Self {
            config,
            t: 0,
            m: shapes.iter().map(|&n| vec![0.0; n]).collect(),
            v: shapes.iter().map(|&n| vec![0.0; n]).collect(),
        }
    }

    pub fn step<P: Parameters>(&mut self, params: &mut P, grads: &P) -> Result<()> {
        let mut slices = params.param_slices_mut();
        let gslices = grads.param_slices();
        self.step_slices(&mut slices, &gslices)
    }

    pub fn step_slices(&mut self, params: &mut [&mut [f64]], grads: &[&[f64]]) -> Result<()> {
        if params.len() != self.m.len() || grads.len() != self.m.len() {
            return Err(Error::ShapeMismatch("optimizer state tracks a different model".into()));
        }
        for ((p, g), m) in params.iter().zip(grads).zip(&self.m) {
            if p.len() != m.len() || g.len() != m.len() {
                return Err(Error::ShapeMismatch("parameter slice length changed".into()));
            }
        }
        let clip = match self.config.clip_norm {
            Some(cap) => {
                let norm = grads
                    .iter()
                    .flat_map(|s| s.iter())
                    .map(|g| g * g)
                    .sum::<f64>()
                    .sqrt();
                if norm > cap { cap / norm } else { 1.0 }
            }
            None => 1.0,
        };

        self.t += 1;
        let NadamConfig { lr, beta1: b1, beta2: b2, eps, .. } = self.config;
        let t = self.t as f64;
        let bc1_next = 1.0 - b1.powf(t + 1.0);
        let bc1 = 1.0 - b1.powf(t);
        let bc2 = 1.0 - b2.powf(t);
        for (k, (p, g)) in params.iter_mut().zip(grads).enumerate() {
            let (ms, vs) = (&mut self.m[k], &mut self.v[k]);
            for i in 0..p.len() {
                let gi = if clip == 1.0 { g[i] } else { g[i] * clip };
                ms[i] = b1 * ms[i] + (1.0 - b1) * gi;
                vs[i] = b2 * vs[i] + (1.0 - b2) * gi * gi;
                let m_hat = ms[i] / bc1_next;
                let g_hat = gi / bc1;
                let v_hat = vs[i] / bc2;
                p[i] -= lr * (b1 * m_hat + (1.0 - b1) * g_hat) / (v_hat.sqrt() + eps);
            }
        }
        Ok(())
    }
}
