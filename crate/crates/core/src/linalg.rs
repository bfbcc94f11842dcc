//! Dense row-major matrices and the one-sided Jacobi SVD used by the PCA.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::ShapeMismatch(format!(
                "{} values cannot fill a {rows}x{cols} matrix",
                data.len()
            )));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(rows.len() * cols);
        for (i, r) in rows.iter().enumerate() {
            if r.len() != cols {
                return Err(Error::ShapeMismatch(format!(
                    "row {i} has {} columns, expected {cols}",
                    r.len()
                )));
            }
            data.extend_from_slice(r);
        }
        Ok(Self {
            rows: rows.len(),
            cols,
            data,
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.cols + j] = v;
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.rows).map(|i| self.get(i, j)).collect()
    }

    pub fn transpose(&self) -> Matrix {
        let mut t = Matrix::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                t.data[j * self.rows + i] = self.data[i * self.cols + j];
            }
        }
        t
    }

    pub fn matmul(&self, other: &Matrix) -> Result<Matrix> {
        if self.cols != other.rows {
            return Err(Error::ShapeMismatch(format!(
                "cannot multiply {}x{} by {}x{}",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        let mut out = Matrix::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            let out_row = &mut out.data[i * other.cols..(i + 1) * other.cols];
            for k in 0..self.cols {
                let a = self.data[i * self.cols + k];
                if a == 0.0 {
                    continue;
                }
                for (o, b) in out_row.iter_mut().zip(other.row(k)) {
                    *o += a * b;
                }
            }
        }
        Ok(out)
    }

    /// `self * other^T` without materialising the transpose.
    pub fn matmul_transposed(&self, other: &Matrix) -> Result<Matrix> {
        if self.cols != other.cols {
            return Err(Error::ShapeMismatch(format!(
                "cannot multiply {}x{} by transpose of {}x{}",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        let mut out = Matrix::zeros(self.rows, other.rows);
        for i in 0..self.rows {
            let a = self.row(i);
            for j in 0..other.rows {
                out.data[i * other.rows + j] = dot(a, other.row(j));
            }
        }
        Ok(out)
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn sub(&self, other: &Matrix) -> Result<Matrix> {
        if self.shape() != other.shape() {
            return Err(Error::ShapeMismatch(format!(
                "{:?} vs {:?}",
                self.shape(),
                other.shape()
            )));
        }
        let data = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| a - b)
            .collect();
        Ok(Matrix {
            rows: self.rows,
            cols: self.cols,
            data,
        })
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Keep the first `k` columns.
    pub fn take_columns(&self, k: usize) -> Matrix {
        let k = k.min(self.cols);
        let mut out = Matrix::zeros(self.rows, k);
        for i in 0..self.rows {
            out.row_mut(i).copy_from_slice(&self.row(i)[..k]);
        }
        out
    }

    /// Keep the first `k` rows.
    pub fn take_rows(&self, k: usize) -> Matrix {
        let k = k.min(self.rows);
        Matrix {
            rows: k,
            cols: self.cols,
            data: self.data[..k * self.cols].to_vec(),
        }
    }

    pub fn slice_rows(&self, start: usize, end: usize) -> Matrix {
        Matrix {
            rows: end - start,
            cols: self.cols,
            data: self.data[start * self.cols..end * self.cols].to_vec(),
        }
    }
}

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let n = a.len().min(b.len());
    let (a, b) = (&a[..n], &b[..n]);
    // Independent partial sums so the loop is not bound by add latency.
    let mut acc = [0.0f64; 8];
    let ac = a.chunks_exact(8);
    let bc = b.chunks_exact(8);
    let (ra, rb) = (ac.remainder(), bc.remainder());
    for (x, y) in ac.zip(bc) {
        for k in 0..8 {
            acc[k] += x[k] * y[k];
        }
    }
    let mut tail = 0.0;
    for (x, y) in ra.iter().zip(rb) {
        tail += x * y;
    }
    ((acc[0] + acc[4]) + (acc[1] + acc[5])) + ((acc[2] + acc[6]) + (acc[3] + acc[7])) + tail
}

#[inline]
pub fn norm2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Thin SVD `A = U diag(s) V^T` of an `r x c` matrix with `r <= c`.
#[derive(Debug, Clone)]
pub struct ThinSvd {
    /// `r x r`, columns are left singular vectors.
    pub u: Matrix,
    /// Nonincreasing, length `r`.
    pub singular_values: Vec<f64>,
    /// `r x c`, rows are right singular vectors (orthonormal).
    pub vt: Matrix,
    pub sweeps: usize,
}

pub const JACOBI_TOL: f64 = 1e-12;
pub const JACOBI_MAX_SWEEPS: usize = 60;
/// Relative (to the Frobenius norm) size below which a row is treated as zero.
pub const NEGLIGIBLE_ROW: f64 = 1e-14;

/// One-sided (Hestenes) Jacobi SVD for a wide matrix `A` (`r <= c`).
///
/// Rotations act on the `r` rows of `A`, i.e. on the columns of `A^T`, so the
/// work per sweep is `O(r^2 c)`. On exit the rotated rows are mutually
/// orthogonal; their norms are the singular values and the accumulated
/// rotation is `U`.
pub fn jacobi_svd(a: &Matrix) -> Result<ThinSvd> {
    let (r, c) = a.shape();
    if r > c {
        return Err(Error::ShapeMismatch(format!(
            "jacobi_svd expects a wide matrix, got {r}x{c}"
        )));
    }
    if !a.is_finite() {
        return Err(Error::NonFiniteInput("SVD input has NaN/Inf".into()));
    }
    let mut w = a.clone();
    let mut u = Matrix::zeros(r, r);
    for i in 0..r {
        u.set(i, i, 1.0);
    }
    let mut norms: Vec<f64> = (0..r).map(|i| dot(w.row(i), w.row(i))).collect();
    // Rows below this squared norm are numerically zero and take no part in rotations.
    let negligible = norms.iter().sum::<f64>() * NEGLIGIBLE_ROW * NEGLIGIBLE_ROW;

    let mut sweeps = 0;
    let mut converged = r < 2;
    while !converged && sweeps < JACOBI_MAX_SWEEPS {
        sweeps += 1;
        let mut rotated = false;
        // de Rijk ordering: largest rows first speeds convergence on graded spectra
        sort_rows_by_norm(&mut w, &mut u, &mut norms);
        for p in 0..r - 1 {
            for q in p + 1..r {
                let alpha = norms[p];
                let beta = norms[q];
                if alpha <= negligible || beta <= negligible {
                    continue;
                }
                let gamma = dot(w.row(p), w.row(q));
                if gamma.abs() <= JACOBI_TOL * (alpha * beta).sqrt() {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let t = if zeta == 0.0 { 1.0 } else { t };
                let cs = 1.0 / (1.0 + t * t).sqrt();
                let sn = cs * t;
                rotate_rows(&mut w, p, q, cs, sn);
                rotate_rows(&mut u, p, q, cs, sn);
                norms[p] = dot(w.row(p), w.row(p));
                norms[q] = dot(w.row(q), w.row(q));
            }
        }
        converged = !rotated;
    }
    if !converged {
        return Err(Error::NumericalFailure(format!(
            "Jacobi SVD did not converge in {JACOBI_MAX_SWEEPS} sweeps"
        )));
    }

    // Rows of `w` are now s_i * v_i^T; rows of `u` hold U^T.
    let mut order: Vec<usize> = (0..r).collect();
    let sv: Vec<f64> = (0..r).map(|i| norm2(w.row(i))).collect();
    order.sort_by(|&i, &j| sv[j].total_cmp(&sv[i]).then(i.cmp(&j)));

    let mut singular_values = Vec::with_capacity(r);
    let mut vt = Matrix::zeros(r, c);
    let mut u_out = Matrix::zeros(r, r);
    let scale = sv.iter().cloned().fold(0.0, f64::max);
    for (k, &i) in order.iter().enumerate() {
        let s = if norms[i] <= negligible { 0.0 } else { sv[i] };
        singular_values.push(s);
        for j in 0..r {
            u_out.set(j, k, u.get(i, j));
        }
        if s > scale * 1e-14 && s > 0.0 {
            for (dst, src) in vt.row_mut(k).iter_mut().zip(w.row(i)) {
                *dst = src / s;
            }
        }
    }
    complete_orthonormal_rows(&mut vt, &singular_values, scale);
    Ok(ThinSvd {
        u: u_out,
        singular_values,
        vt,
        sweeps,
    })
}

fn sort_rows_by_norm(w: &mut Matrix, u: &mut Matrix, norms: &mut Vec<f64>) {
    let mut order: Vec<usize> = (0..norms.len()).collect();
    order.sort_by(|&i, &j| norms[j].total_cmp(&norms[i]).then(i.cmp(&j)));
    if order.iter().enumerate().all(|(k, &i)| k == i) {
        return;
    }
    let permute = |m: &Matrix| {
        let mut out = Matrix::zeros(m.rows, m.cols);
        for (k, &i) in order.iter().enumerate() {
            out.row_mut(k).copy_from_slice(m.row(i));
        }
        out
    };
    *w = permute(w);
    *u = permute(u);
    *norms = order.iter().map(|&i| norms[i]).collect();
}

fn rotate_rows(m: &mut Matrix, p: usize, q: usize, cs: f64, sn: f64) {
    let cols = m.cols;
    let (head, tail) = m.data.split_at_mut(q * cols);
    let rp = &mut head[p * cols..(p + 1) * cols];
    let rq = &mut tail[..cols];
    for (x, y) in rp.iter_mut().zip(rq.iter_mut()) {
        let a = *x;
        let b = *y;
        *x = cs * a - sn * b;
        *y = sn * a + cs * b;
    }
}

/// Rows belonging to (numerically) zero singular values carry no direction
/// after the sweep. Fill them with unit vectors orthogonal to every other row
/// via Gram-Schmidt against the canonical basis, so `V^T V` stays orthonormal.
fn complete_orthonormal_rows(vt: &mut Matrix, sv: &[f64], scale: f64) {
    let (r, c) = vt.shape();
    let mut candidate = 0usize;
    for k in 0..r {
        if sv[k] > scale * 1e-14 && sv[k] > 0.0 {
            continue;
        }
        loop {
            if candidate >= c {
                return;
            }
            let mut e = vec![0.0; c];
            e[candidate] = 1.0;
            candidate += 1;
            // two passes of modified Gram-Schmidt
            for _ in 0..2 {
                for j in 0..r {
                    if j == k || (j > k && !(sv[j] > scale * 1e-14 && sv[j] > 0.0)) {
                        continue;
                    }
                    let proj = dot(&e, vt.row(j));
                    for (x, y) in e.iter_mut().zip(vt.row(j)) {
                        *x -= proj * y;
                    }
                }
            }
            let n = norm2(&e);
            if n > 1e-6 {
                for (dst, x) in vt.row_mut(k).iter_mut().zip(&e) {
                    *dst = x / n;
                }
                break;
            }
        }
    }
}
