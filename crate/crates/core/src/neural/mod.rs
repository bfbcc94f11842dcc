//! From-scratch differentiable building blocks: LSTM cell with exact
//! backpropagation through time, dense layers, activations and dropout.

mod activation;
mod dense;
mod discriminator;
mod forecaster;
mod gradcheck;
mod lstm;

pub use activation::Activation;
pub use dense::Dense;
pub use discriminator::{Discriminator, DiscriminatorTape};
pub use forecaster::{ForecasterTape, LstmForecaster};
pub use gradcheck::{grad_check, GradCheckReport};
pub use lstm::{lstm_backward, lstm_forward, LstmParams, LstmTape};

use rand::Rng;

/// Uniform access to a model's trainable parameters, in a fixed order.
pub trait Parameters: Clone {
    fn param_slices(&self) -> Vec<&[f64]>;
    fn param_slices_mut(&mut self) -> Vec<&mut [f64]>;

    /// Same shapes, every parameter zero. Used as a gradient accumulator.
    fn zeros_like(&self) -> Self {
        let mut z = self.clone();
        z.fill_zero();
        z
    }

    fn fill_zero(&mut self) {
        for s in self.param_slices_mut() {
            s.iter_mut().for_each(|v| *v = 0.0);
        }
    }

    fn param_count(&self) -> usize {
        self.param_slices().iter().map(|s| s.len()).sum()
    }

    fn scale_params(&mut self, k: f64) {
        for s in self.param_slices_mut() {
            s.iter_mut().for_each(|v| *v *= k);
        }
    }

    /// `self += k * other`.
    fn add_scaled(&mut self, other: &Self, k: f64) {
        for (dst, src) in self.param_slices_mut().into_iter().zip(other.param_slices()) {
            for (d, s) in dst.iter_mut().zip(src) {
                *d += k * s;
            }
        }
    }

    fn global_norm(&self) -> f64 {
        self.param_slices()
            .iter()
            .flat_map(|s| s.iter())
            .map(|v| v * v)
            .sum::<f64>()
            .sqrt()
    }

    fn all_finite(&self) -> bool {
        self.param_slices()
            .iter()
            .all(|s| s.iter().all(|v| v.is_finite()))
    }
}

pub(crate) fn uniform_fill(buf: &mut [f64], scale: f64, rng: &mut impl Rng) {
    for v in buf {
        *v = rng.gen_range(-scale..scale);
    }
}

/// Inverted-dropout mask: each entry is `0` with probability `rate`, else `1/(1-rate)`.
pub fn dropout_mask<R: Rng + ?Sized>(len: usize, rate: f64, rng: &mut R) -> Vec<f64> {
    let keep = 1.0 / (1.0 - rate);
    (0..len)
        .map(|_| if rng.gen::<f64>() < rate { 0.0 } else { keep })
        .collect()
}

#[inline]
pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}
