use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{lstm_backward, lstm_forward, sigmoid, Dense, LstmParams, LstmTape, Parameters};
use crate::error::{Error, Result};
use crate::linalg::Matrix;

/// LSTM with a single sigmoid output scoring how "real" a PC sequence looks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Discriminator {
    pub lstm: LstmParams,
    pub head: Dense,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DiscriminatorTape {
    pub lstm: LstmTape,
    pub logit: f64,
    pub prob: f64,
}

impl Discriminator {
    pub fn new(input_dim: usize, hidden: usize, rng: &mut impl Rng) -> Result<Self> {
        if input_dim == 0 || hidden == 0 {
            return Err(Error::InvalidConfig("discriminator dims must be positive".into()));
        }
        let lstm = LstmParams::init(input_dim, hidden, rng);
        let head = Dense::init(hidden, 1, 1.0 / (hidden as f64).sqrt(), rng);
        Ok(Self { lstm, head })
    }

    pub fn input_dim(&self) -> usize {
        self.lstm.input_dim
    }

    pub fn forward(&self, sequence: &Matrix) -> Result<DiscriminatorTape> {
        let lstm = lstm_forward(&self.lstm, sequence, None)?;
        let logit = self.head.forward(lstm.final_hidden())[0];
        Ok(DiscriminatorTape {
            lstm,
            logit,
            prob: sigmoid(logit),
        })
    }

    pub fn probability(&self, sequence: &Matrix) -> Result<f64> {
        Ok(self.forward(sequence)?.prob)
    }

    /// Accumulates parameter gradients given `dL/dprob`; returns `dL/dsequence`.
    pub fn backward(&self, tape: &DiscriminatorTape, d_prob: f64, grads: &mut Discriminator) -> Result<Matrix> {
        if tape.lstm.hidden_dim != self.lstm.hidden_dim {
            return Err(Error::TapeMismatch("discriminator tape hidden size differs".into()));
        }
        let d_logit = d_prob * tape.prob * (1.0 - tape.prob);
        let d_h = self
            .head
            .backward(tape.lstm.final_hidden(), &[d_logit], &mut grads.head);
        let n = tape.lstm.len();
        let mut d_hidden = Matrix::zeros(n, self.lstm.hidden_dim);
        d_hidden.row_mut(n - 1).copy_from_slice(&d_h);
        lstm_backward(&self.lstm, &tape.lstm, &d_hidden, &mut grads.lstm)
    }
}

impl Parameters for Discriminator {
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

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn output_is_a_probability() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut d = Discriminator::new(3, 5, &mut rng).unwrap();
        let seq = Matrix::from_rows(&[vec![5.0, -3.0, 9.0]]).unwrap();
        for k in [1.0, 10.0, 100.0] {
            d.head.scale_params(k);
            let p = d.probability(&seq).unwrap();
            assert!(p > 0.0 && p <= 1.0);
        }
        let zero = d.zeros_like();
        assert_eq!(zero.probability(&seq).unwrap(), 0.5);
    }
}
