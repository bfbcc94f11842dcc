//! Truncated principal component analysis of a snapshot matrix.
//!
//! `X = P Pi + mean`, where the EOFs `Pi` are the right singular vectors of
//! the centred data and the scores `P = U S`. Truncating to the leading `tau`
//! rows of `Pi` gives the reduced-order state.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::container::{Container, NamedArray};
use crate::error::{Error, Result};
use crate::linalg::{jacobi_svd, Matrix};

/// How many components to keep.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Truncation {
    Rank(usize),
    /// Smallest rank whose cumulative explained variance reaches this fraction.
    Variance(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct PcaBasis {
    pub mean: Vec<f64>,
    /// `r x m`, rows orthonormal.
    pub eofs: Matrix,
    pub singular_values: Vec<f64>,
    pub tau: usize,
    pub n: usize,
    pub m: usize,
}

/// Singular values below this fraction of the largest are treated as exact zeros.
const RANK_TOL: f64 = 1e-13;

/// Sidecar metadata stored next to the array container.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PcaManifest {
    pub tau: usize,
    pub n: usize,
    pub m: usize,
    pub field: String,
}

pub fn fit(data: &Matrix, truncation: Truncation) -> Result<PcaBasis> {
    let (n, m) = data.shape();
    if n < 2 || m < 1 {
        return Err(Error::TooFewSteps(format!("PCA needs n >= 2 rows, got {n}x{m}")));
    }
    if !data.is_finite() {
        return Err(Error::NonFiniteInput("PCA input has NaN/Inf".into()));
    }
    let mut mean = vec![0.0; m];
    for t in 0..n {
        for (a, x) in mean.iter_mut().zip(data.row(t)) {
            *a += x;
        }
    }
    mean.iter_mut().for_each(|a| *a /= n as f64);

    let mut centred = data.clone();
    for t in 0..n {
        for (x, mu) in centred.row_mut(t).iter_mut().zip(&mean) {
            *x -= mu;
        }
    }
    if centred.as_slice().iter().all(|&x| x == 0.0) {
        return Err(Error::DegenerateData(
            "centred snapshot matrix is identically zero".into(),
        ));
    }

    let (mut eofs, mut singular_values) = if n <= m {
        let svd = jacobi_svd(&centred)?;
        (svd.vt, svd.singular_values)
    } else {
        // X^T = U' S V'^T, so the EOFs are the columns of U'.
        let svd = jacobi_svd(&centred.transpose())?;
        (svd.u.transpose(), svd.singular_values)
    };
    let smax = singular_values.first().copied().unwrap_or(0.0);
    if smax == 0.0 {
        return Err(Error::DegenerateData("all singular values are zero".into()));
    }
    for s in singular_values.iter_mut() {
        if *s < smax * RANK_TOL {
            *s = 0.0;
        }
    }
    for k in 0..eofs.rows() {
        let row = eofs.row_mut(k);
        let pivot = row
            .iter()
            .copied()
            .fold(0.0f64, |best, x| if x.abs() > best.abs() { x } else { best });
        if pivot < 0.0 {
            row.iter_mut().for_each(|x| *x = -*x);
        }
    }

    let r = singular_values.len();
    let tau = match truncation {
        Truncation::Rank(tau) => {
            if tau == 0 || tau > r {
                return Err(Error::InvalidConfig(format!(
                    "tau must lie in 1..={r}, got {tau}"
                )));
            }
            tau
        }
        Truncation::Variance(v) => {
            if !(v > 0.0 && v <= 1.0) {
                return Err(Error::InvalidConfig(format!(
                    "variance fraction must lie in (0, 1], got {v}"
                )));
            }
            let cum = cumulative_fractions(&singular_values)?;
            cum.iter().position(|&c| c >= v).map_or(r, |k| k + 1)
        }
    };

    Ok(PcaBasis {
        mean,
        eofs,
        singular_values,
        tau,
        n,
        m,
    })
}

/// Cumulative explained-variance fractions of singular values sorted
/// nonincreasing. The last entry is exactly 1.
pub fn cumulative_explained_variance(singular_values: &[f64]) -> Result<Vec<f64>> {
    let mut s = singular_values.to_vec();
    s.sort_by(|a, b| b.total_cmp(a));
    cumulative_fractions(&s)
}

fn cumulative_fractions(sorted: &[f64]) -> Result<Vec<f64>> {
    let total: f64 = sorted.iter().map(|s| s * s).sum();
    if !(total > 0.0) {
        return Err(Error::DegenerateData("no nonzero singular values".into()));
    }
    let mut acc = 0.0;
    let mut out: Vec<f64> = sorted
        .iter()
        .map(|s| {
            acc += s * s;
            acc / total
        })
        .collect();
    if let Some(last) = out.last_mut() {
        *last = 1.0;
    }
    Ok(out)
}

impl PcaBasis {
    pub fn rank_capacity(&self) -> usize {
        self.singular_values.len()
    }

    pub fn explained_variance(&self) -> Result<Vec<f64>> {
        cumulative_fractions(&self.singular_values)
    }

    /// Returns a copy truncated at a different rank.
    pub fn with_tau(&self, tau: usize) -> Result<PcaBasis> {
        if tau == 0 || tau > self.rank_capacity() {
            return Err(Error::InvalidConfig(format!(
                "tau must lie in 1..={}, got {tau}",
                self.rank_capacity()
            )));
        }
        Ok(PcaBasis {
            tau,
            ..self.clone()
        })
    }

    /// `(states - mean) Pi_tau^T`.
    pub fn project(&self, states: &Matrix) -> Result<Matrix> {
        if states.cols() != self.m {
            return Err(Error::ShapeMismatch(format!(
                "states have {} columns, basis expects {}",
                states.cols(),
                self.m
            )));
        }
        let mut out = Matrix::zeros(states.rows(), self.tau);
        let mut centred = vec![0.0; self.m];
        for t in 0..states.rows() {
            for ((c, x), mu) in centred.iter_mut().zip(states.row(t)).zip(&self.mean) {
                *c = x - mu;
            }
            for k in 0..self.tau {
                out.set(t, k, crate::linalg::dot(&centred, self.eofs.row(k)));
            }
        }
        Ok(out)
    }

    /// `scores Pi_tau + mean`.
    pub fn reconstruct(&self, scores: &Matrix) -> Result<Matrix> {
        if scores.cols() != self.tau {
            return Err(Error::ShapeMismatch(format!(
                "scores have {} columns, basis keeps tau = {}",
                scores.cols(),
                self.tau
            )));
        }
        let mut out = Matrix::zeros(scores.rows(), self.m);
        for t in 0..scores.rows() {
            let row = out.row_mut(t);
            row.copy_from_slice(&self.mean);
            for k in 0..self.tau {
                let p = scores.get(t, k);
                for (o, e) in row.iter_mut().zip(self.eofs.row(k)) {
                    *o += p * e;
                }
            }
        }
        Ok(out)
    }

    pub fn to_container(&self) -> Container {
        let mut c = Container::new();
        c.push(NamedArray::vector("mean", self.mean.clone()));
        c.push(NamedArray::matrix("eofs", &self.eofs));
        c.push(NamedArray::vector(
            "singular_values",
            self.singular_values.clone(),
        ));
        c
    }

    pub fn from_container(c: &Container, manifest: &PcaManifest) -> Result<Self> {
        let mean = c.get("mean")?.data.clone();
        let eofs = c.get("eofs")?.to_matrix()?;
        let singular_values = c.get("singular_values")?.data.clone();
        if mean.len() != manifest.m || eofs.cols() != manifest.m {
            return Err(Error::Format("PCA arrays disagree with manifest m".into()));
        }
        if eofs.rows() != singular_values.len() || manifest.tau == 0 || manifest.tau > eofs.rows()
        {
            return Err(Error::Format("PCA arrays disagree with manifest tau".into()));
        }
        Ok(Self {
            mean,
            eofs,
            singular_values,
            tau: manifest.tau,
            n: manifest.n,
            m: manifest.m,
        })
    }

    pub fn save(&self, path: &Path, field: &str) -> Result<PcaManifest> {
        self.to_container().write(path)?;
        let manifest = PcaManifest {
            tau: self.tau,
            n: self.n,
            m: self.m,
            field: field.to_string(),
        };
        std::fs::write(
            path.with_extension("json"),
            serde_json::to_string_pretty(&manifest)?,
        )?;
        Ok(manifest)
    }

    pub fn load(path: &Path) -> Result<(Self, PcaManifest)> {
        let manifest: PcaManifest =
            serde_json::from_str(&std::fs::read_to_string(path.with_extension("json"))?)?;
        let basis = Self::from_container(&Container::read(path)?, &manifest)?;
        Ok((basis, manifest))
    }
}
