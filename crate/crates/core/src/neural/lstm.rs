//! Single-layer LSTM.
//!
//! ```text
//! i = sig(W_i x + U_i h + b_i)    f = sig(W_f x + U_f h + b_f)
//! o = sig(W_o x + U_o h + b_o)    g = tanh(W_g x + U_g h + b_g)
//! c' = f * c + i * g              h' = o * tanh(c')
//! ```
//!
//! Gate blocks are stacked in the order `i, f, o, g` along the rows of `w`,
//! `u` and `b`.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{sigmoid, uniform_fill, Parameters};
use crate::error::{Error, Result};
use crate::linalg::{dot, Matrix};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Gate {
    Input = 0,
    Forget = 1,
    Output = 2,
    Cell = 3,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LstmParams {
    pub input_dim: usize,
    pub hidden_dim: usize,
    /// `4H x I`
    pub w: Vec<f64>,
    /// `4H x H`
    pub u: Vec<f64>,
    /// `4H`
    pub b: Vec<f64>,
}

impl LstmParams {
    pub fn zeros(input_dim: usize, hidden_dim: usize) -> Self {
        Self {
            input_dim,
            hidden_dim,
            w: vec![0.0; 4 * hidden_dim * input_dim],
            u: vec![0.0; 4 * hidden_dim * hidden_dim],
            b: vec![0.0; 4 * hidden_dim],
        }
    }

    /// Uniform(-1/sqrt(H), 1/sqrt(H)) weights, zero biases except the forget gate (+1).
    pub fn init(input_dim: usize, hidden_dim: usize, rng: &mut impl Rng) -> Self {
        let mut p = Self::zeros(input_dim, hidden_dim);
        let s = 1.0 / (hidden_dim as f64).sqrt();
        uniform_fill(&mut p.w, s, rng);
        uniform_fill(&mut p.u, s, rng);
        p.gate_bias_mut(Gate::Forget).iter_mut().for_each(|b| *b = 1.0);
        p
    }

    pub fn gate_w(&self, gate: Gate) -> &[f64] {
        let n = self.hidden_dim * self.input_dim;
        &self.w[gate as usize * n..(gate as usize + 1) * n]
    }

    pub fn gate_u(&self, gate: Gate) -> &[f64] {
        let n = self.hidden_dim * self.hidden_dim;
        &self.u[gate as usize * n..(gate as usize + 1) * n]
    }

    pub fn gate_bias(&self, gate: Gate) -> &[f64] {
        let h = self.hidden_dim;
        &self.b[gate as usize * h..(gate as usize + 1) * h]
    }

    pub fn gate_w_mut(&mut self, gate: Gate) -> &mut [f64] {
        let n = self.hidden_dim * self.input_dim;
        &mut self.w[gate as usize * n..(gate as usize + 1) * n]
    }

    pub fn gate_u_mut(&mut self, gate: Gate) -> &mut [f64] {
        let n = self.hidden_dim * self.hidden_dim;
        &mut self.u[gate as usize * n..(gate as usize + 1) * n]
    }

    pub fn gate_bias_mut(&mut self, gate: Gate) -> &mut [f64] {
        let h = self.hidden_dim;
        &mut self.b[gate as usize * h..(gate as usize + 1) * h]
    }
}

impl Parameters for LstmParams {
    fn param_slices(&self) -> Vec<&[f64]> {
        vec![&self.w, &self.u, &self.b]
    }

    fn param_slices_mut(&mut self) -> Vec<&mut [f64]> {
        vec![&mut self.w, &mut self.u, &mut self.b]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LstmStep {
    pub x: Vec<f64>,
    pub h_prev: Vec<f64>,
    pub c_prev: Vec<f64>,
    /// Activated gates, `[i | f | o | g]`.
    pub gates: Vec<f64>,
    pub c: Vec<f64>,
    pub tanh_c: Vec<f64>,
    pub h: Vec<f64>,
}

/// Forward intermediates needed for exact BPTT.
#[derive(Debug, Clone, PartialEq)]
pub struct LstmTape {
    pub input_dim: usize,
    pub hidden_dim: usize,
    pub steps: Vec<LstmStep>,
}

impl LstmTape {
    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    pub fn final_hidden(&self) -> &[f64] {
        &self.steps.last().expect("nonempty tape").h
    }

    pub fn final_cell(&self) -> &[f64] {
        &self.steps.last().expect("nonempty tape").c
    }

    /// `N x H` matrix of hidden states.
    pub fn hidden_states(&self) -> Matrix {
        let mut m = Matrix::zeros(self.steps.len(), self.hidden_dim);
        for (t, s) in self.steps.iter().enumerate() {
            m.row_mut(t).copy_from_slice(&s.h);
        }
        m
    }
}

/// Runs the recurrence over `sequence` (`N x input_dim`) from `initial`
/// `(h0, c0)`, or zeros.
pub fn lstm_forward(
    params: &LstmParams,
    sequence: &Matrix,
    initial: Option<(&[f64], &[f64])>,
) -> Result<LstmTape> {
    let (hd, id) = (params.hidden_dim, params.input_dim);
    if sequence.rows() == 0 {
        return Err(Error::ShapeMismatch("LSTM input sequence is empty".into()));
    }
    if sequence.cols() != id {
        return Err(Error::ShapeMismatch(format!(
            "LSTM expects {id} input features, got {}",
            sequence.cols()
        )));
    }
    if !sequence.is_finite() {
        return Err(Error::NonFiniteInput("LSTM input has NaN/Inf".into()));
    }
    let (mut h, mut c) = match initial {
        Some((h0, c0)) => {
            if h0.len() != hd || c0.len() != hd {
                return Err(Error::ShapeMismatch(format!(
                    "initial state must have length {hd}"
                )));
            }
            (h0.to_vec(), c0.to_vec())
        }
        None => (vec![0.0; hd], vec![0.0; hd]),
    };

    let mut steps = Vec::with_capacity(sequence.rows());
    for t in 0..sequence.rows() {
        let x = sequence.row(t);
        let mut gates = vec![0.0; 4 * hd];
        for (r, z) in gates.iter_mut().enumerate() {
            let pre = dot(&params.w[r * id..(r + 1) * id], x)
                + dot(&params.u[r * hd..(r + 1) * hd], &h)
                + params.b[r];
            *z = if r < 3 * hd { sigmoid(pre) } else { pre.tanh() };
        }
        let mut c_new = vec![0.0; hd];
        let mut tanh_c = vec![0.0; hd];
        let mut h_new = vec![0.0; hd];
        for k in 0..hd {
            let (ig, fg, og, gg) = (gates[k], gates[hd + k], gates[2 * hd + k], gates[3 * hd + k]);
            c_new[k] = fg * c[k] + ig * gg;
            tanh_c[k] = c_new[k].tanh();
            h_new[k] = og * tanh_c[k];
        }
        steps.push(LstmStep {
            x: x.to_vec(),
            h_prev: std::mem::replace(&mut h, h_new.clone()),
            c_prev: std::mem::replace(&mut c, c_new.clone()),
            gates,
            c: c_new,
            tanh_c,
            h: h_new,
        });
    }
    Ok(LstmTape {
        input_dim: id,
        hidden_dim: hd,
        steps,
    })
}

/// Exact BPTT. `d_hidden` holds `dL/dh_t` for every step (`N x H`);
/// `d_final_cell` optionally adds `dL/dc_N`. Parameter gradients are
/// accumulated into `grads`; returns `dL/dx_t` as an `N x input_dim` matrix.
pub fn lstm_backward(
    params: &LstmParams,
    tape: &LstmTape,
    d_hidden: &Matrix,
    grads: &mut LstmParams,
) -> Result<Matrix> {
    let (hd, id) = (params.hidden_dim, params.input_dim);
    if tape.hidden_dim != hd || tape.input_dim != id {
        return Err(Error::TapeMismatch(format!(
            "tape recorded ({}, {}) but params are ({id}, {hd})",
            tape.input_dim, tape.hidden_dim
        )));
    }
    if grads.hidden_dim != hd || grads.input_dim != id {
        return Err(Error::ShapeMismatch("gradient buffer shape differs".into()));
    }
    if d_hidden.shape() != (tape.len(), hd) {
        return Err(Error::ShapeMismatch(format!(
            "upstream gradient is {:?}, expected ({}, {hd})",
            d_hidden.shape(),
            tape.len()
        )));
    }

    let mut dx = Matrix::zeros(tape.len(), id);
    let mut dh_next = vec![0.0; hd];
    let mut dc_next = vec![0.0; hd];
    let mut dz = vec![0.0; 4 * hd];
    for (t, s) in tape.steps.iter().enumerate().rev() {
        for k in 0..hd {
            let (ig, fg, og, gg) = (
                s.gates[k],
                s.gates[hd + k],
                s.gates[2 * hd + k],
                s.gates[3 * hd + k],
            );
            let dh = d_hidden.get(t, k) + dh_next[k];
            let dc = dc_next[k] + dh * og * (1.0 - s.tanh_c[k] * s.tanh_c[k]);
            dz[k] = dc * gg * ig * (1.0 - ig);
            dz[hd + k] = dc * s.c_prev[k] * fg * (1.0 - fg);
            dz[2 * hd + k] = dh * s.tanh_c[k] * og * (1.0 - og);
            dz[3 * hd + k] = dc * ig * (1.0 - gg * gg);
            dc_next[k] = dc * fg;
        }
        dh_next.iter_mut().for_each(|v| *v = 0.0);
        let dx_row = dx.row_mut(t);
        for (r, &g) in dz.iter().enumerate() {
            grads.b[r] += g;
            if g == 0.0 {
                continue;
            }
            let w_row = &params.w[r * id..(r + 1) * id];
            for ((gw, xi), (d, wi)) in grads.w[r * id..(r + 1) * id]
                .iter_mut()
                .zip(&s.x)
                .zip(dx_row.iter_mut().zip(w_row))
            {
                *gw += g * xi;
                *d += g * wi;
            }
            let u_row = &params.u[r * hd..(r + 1) * hd];
            for ((gu, hp), (d, ui)) in grads.u[r * hd..(r + 1) * hd]
                .iter_mut()
                .zip(&s.h_prev)
                .zip(dh_next.iter_mut().zip(u_row))
            {
                *gu += g * hp;
                *d += g * ui;
            }
        }
    }
    Ok(dx)
}
