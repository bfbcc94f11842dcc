use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{uniform_fill, Parameters};
use crate::linalg::dot;

/// Fully connected layer `y = W x + b`, `W` stored row-major `out x in`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dense {
    pub in_dim: usize,
    pub out_dim: usize,
    pub w: Vec<f64>,
    pub b: Vec<f64>,
}

impl Dense {
    pub fn zeros(in_dim: usize, out_dim: usize) -> Self {
        Self {
            in_dim,
            out_dim,
            w: vec![0.0; in_dim * out_dim],
            b: vec![0.0; out_dim],
        }
    }

    pub fn init(in_dim: usize, out_dim: usize, scale: f64, rng: &mut impl Rng) -> Self {
        let mut d = Self::zeros(in_dim, out_dim);
        uniform_fill(&mut d.w, scale, rng);
        d
    }

    pub fn forward(&self, x: &[f64]) -> Vec<f64> {
        debug_assert_eq!(x.len(), self.in_dim);
        self.w
            .chunks_exact(self.in_dim)
            .zip(&self.b)
            .map(|(row, b)| dot(row, x) + b)
            .collect()
    }

    /// Accumulates parameter gradients into `grads` and returns `dL/dx`.
    pub fn backward(&self, x: &[f64], dy: &[f64], grads: &mut Dense) -> Vec<f64> {
        let mut dx = vec![0.0; self.in_dim];
        for (o, &g) in dy.iter().enumerate() {
            grads.b[o] += g;
            if g == 0.0 {
                continue;
            }
            let row = &self.w[o * self.in_dim..(o + 1) * self.in_dim];
            let grow = &mut grads.w[o * self.in_dim..(o + 1) * self.in_dim];
            for ((gw, xi), (d, wi)) in grow.iter_mut().zip(x).zip(dx.iter_mut().zip(row)) {
                *gw += g * xi;
                *d += g * wi;
            }
        }
        dx
    }
}

impl Parameters for Dense {
    fn param_slices(&self) -> Vec<&[f64]> {
        vec![&self.w, &self.b]
    }

    fn param_slices_mut(&mut self) -> Vec<&mut [f64]> {
        vec![&mut self.w, &mut self.b]
    }
}
