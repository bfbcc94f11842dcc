use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{dropout_mask, lstm_backward, lstm_forward, Activation, Dense, LstmParams, LstmTape, Parameters};
use crate::error::{Error, Result};
use crate::linalg::Matrix;

/// LSTM over a window of `time_lag` PC vectors, followed by a dense head that
/// predicts the next PC vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LstmForecaster {
    pub lstm: LstmParams,
    pub head: Dense,
    pub output_activation: Activation,
    pub dropout_rate: f64,
    pub time_lag: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ForecasterTape {
    pub lstm: LstmTape,
    /// Inverted-dropout mask applied to the final hidden state, if any.
    pub mask: Option<Vec<f64>>,
    pub dropped: Vec<f64>,
    pub pre_activation: Vec<f64>,
    pub output: Vec<f64>,
}

impl LstmForecaster {
    pub fn new(
        tau: usize,
        hidden: usize,
        output_activation: Activation,
        dropout_rate: f64,
        time_lag: usize,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        if tau == 0 || hidden == 0 || time_lag == 0 {
            return Err(Error::InvalidConfig(format!(
                "tau, hidden and time_lag must be positive (got {tau}, {hidden}, {time_lag})"
            )));
        }
        if !(0.0..1.0).contains(&dropout_rate) {
            return Err(Error::InvalidConfig(format!(
                "dropout rate must lie in [0, 1), got {dropout_rate}"
            )));
        }
        let lstm = LstmParams::init(tau, hidden, rng);
        let head = Dense::init(hidden, tau, 1.0 / (hidden as f64).sqrt(), rng);
        Ok(Self {
            lstm,
            head,
            output_activation,
            dropout_rate,
            time_lag,
        })
    }

    pub fn tau(&self) -> usize {
        self.head.out_dim
    }

    pub fn hidden(&self) -> usize {
        self.lstm.hidden_dim
    }

    /// Inference-mode prediction.
    pub fn predict(&self, window: &Matrix) -> Result<Vec<f64>> {
        Ok(self.forward_with_mask(window, None)?.output)
    }

    /// With `training` set, samples a fresh dropout mask from the given RNG.
    pub fn forward(&self, window: &Matrix, training: Option<&mut dyn rand::RngCore>) -> Result<ForecasterTape> {
        match training {
            Some(rng) if self.dropout_rate > 0.0 => {
                let mask = dropout_mask(self.hidden(), self.dropout_rate, rng);
                self.forward_with_mask(window, Some(&mask))
            }
            _ => self.forward_with_mask(window, None),
        }
    }

    /// Forward pass with an explicit (frozen) dropout mask.
    pub fn forward_with_mask(&self, window: &Matrix, mask: Option<&[f64]>) -> Result<ForecasterTape> {
        if window.rows() != self.time_lag {
            return Err(Error::ShapeMismatch(format!(
                "window has {} rows, model time lag is {}",
                window.rows(),
                self.time_lag
            )));
        }
        if let Some(m) = mask {
            if m.len() != self.hidden() {
                return Err(Error::ShapeMismatch("dropout mask length differs from hidden size".into()));
            }
        }
        let lstm = lstm_forward(&self.lstm, window, None)?;
        let h = lstm.final_hidden();
        let dropped: Vec<f64> = match mask {
            Some(m) => h.iter().zip(m).map(|(a, b)| a * b).collect(),
            None => h.to_vec(),
        };
        let pre_activation = self.head.forward(&dropped);
        let output = pre_activation
            .iter()
            .map(|&z| self.output_activation.apply(z))
            .collect();
        Ok(ForecasterTape {
            lstm,
            mask: mask.map(<[f64]>::to_vec),
            dropped,
            pre_activation,
            output,
        })
    }

    /// Accumulates `dL/dtheta` into `grads` given `dL/dprediction`; returns
    /// `dL/dwindow`.
    pub fn backward(&self, tape: &ForecasterTape, d_output: &[f64], grads: &mut LstmForecaster) -> Result<Matrix> {
        if d_output.len() != self.tau() || tape.output.len() != self.tau() || tape.lstm.len() != self.time_lag {
            return Err(Error::TapeMismatch(format!(
                "forecaster tape/gradient do not match tau = {}",
                self.tau()
            )));
        }
        let d_pre: Vec<f64> = d_output
            .iter()
            .zip(tape.pre_activation.iter().zip(&tape.output))
            .map(|(g, (&z, &y))| g * self.output_activation.derivative(z, y))
            .collect();
        let d_dropped = self.head.backward(&tape.dropped, &d_pre, &mut grads.head);
        let d_h: Vec<f64> = match &tape.mask {
            Some(m) => d_dropped.iter().zip(m).map(|(a, b)| a * b).collect(),
            None => d_dropped,
        };
        let mut d_hidden = Matrix::zeros(tape.lstm.len(), self.hidden());
        d_hidden.row_mut(tape.lstm.len() - 1).copy_from_slice(&d_h);
        lstm_backward(&self.lstm, &tape.lstm, &d_hidden, &mut grads.lstm)
    }
}

impl Parameters for LstmForecaster {
    fn param_slices(&self) -> Vec<&[f64]> {
        let mut v = self.lstm.param_slices();
        v.extend(self.head.param_slices());
        v
    }

    fn param_slices_mut(&mut self) -> Vec<&mut [f64]> {
        let mut v = self.lstm.param_slices_mut();
        v.extend(self.head.param_slices_mut());
        v
    }
}
