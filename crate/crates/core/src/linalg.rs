//! Small dense helpers shared by the numerical modules.

use alloc::vec;
use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector};
#[allow(unused_imports)] // inherent float methods shadow it when std is linked
use num_traits::Float;

use crate::{Error, Result};

/// Trapezoid-rule weights for a strictly increasing grid.
pub fn trapezoid_weights(grid: &[f64]) -> Vec<f64> {
    let n = grid.len();
    match n {
        0 => Vec::new(),
        1 => vec![1.0],
        _ => {
            let mut w = vec![0.0; n];
            for j in 0..n - 1 {
                let h = 0.5 * (grid[j + 1] - grid[j]);
                w[j] += h;
                w[j + 1] += h;
            }
            w
        }
    }
}

/// Symmetric eigendecomposition with eigenvalues sorted in descending order.
///
/// Returns `(values, vectors)` where column `m` of `vectors` belongs to
/// `values[m]`.
pub fn sym_eigen_desc(m: DMatrix<f64>) -> (Vec<f64>, DMatrix<f64>) {
    let n = m.nrows();
    let eig = m.symmetric_eigen();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| {
        eig.eigenvalues[b]
            .partial_cmp(&eig.eigenvalues[a])
            .unwrap_or(core::cmp::Ordering::Equal)
            .then(a.cmp(&b))
    });
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vectors = DMatrix::from_fn(n, n, |r, c| eig.eigenvectors[(r, order[c])]);
    (values, vectors)
}

/// Largest eigenvalue of a symmetric positive semidefinite matrix.
pub fn spectral_norm_psd(m: &DMatrix<f64>) -> f64 {
    if m.nrows() == 0 {
        return 0.0;
    }
    let eig = m.clone().symmetric_eigen();
    eig.eigenvalues.iter().cloned().fold(0.0, f64::max)
}

pub fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return 0.0;
    }
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Sample variance with divisor `n - 1`.
pub fn sample_var(xs: &[f64]) -> f64 {
    let n = xs.len();
    if n < 2 {
        return 0.0;
    }
    let m = mean(xs);
    xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (n - 1) as f64
}

/// Numerically stable `ln(sum(exp(v)))`.
pub fn log_sum_exp(v: &[f64]) -> f64 {
    let m = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !m.is_finite() {
        return m;
    }
    m + v.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

/// Linear-interpolation quantile (the usual "type 7" definition).
pub fn quantile(sorted: &[f64], p: f64) -> f64 {
    let n = sorted.len();
    if n == 0 {
        return f64::NAN;
    }
    let h = (n - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(n - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

pub fn median(xs: &[f64]) -> f64 {
    let mut s = xs.to_vec();
    s.sort_by(|a, b| a.partial_cmp(b).unwrap_or(core::cmp::Ordering::Equal));
    quantile(&s, 0.5)
}

pub fn euclidean(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

/// Per-column centering and scaling constants.
#[derive(Debug, Clone, PartialEq)]
pub struct Standardizer {
    pub means: Vec<f64>,
    pub sds: Vec<f64>,
}

impl Standardizer {
    /// Fits column means and sample standard deviations. Columns with zero
    /// spread get scale 1 and their indices are returned.
    pub fn fit(x: &DMatrix<f64>) -> (Self, Vec<usize>) {
        let mut means = Vec::with_capacity(x.ncols());
        let mut sds = Vec::with_capacity(x.ncols());
        let mut constant = Vec::new();
        for c in 0..x.ncols() {
            let col: Vec<f64> = x.column(c).iter().cloned().collect();
            let m = mean(&col);
            let sd = sample_var(&col).sqrt();
            means.push(m);
            if sd > 1e-12 * (1.0 + m.abs()) && sd.is_finite() {
                sds.push(sd);
            } else {
                sds.push(1.0);
                constant.push(c);
            }
        }
        (Self { means, sds }, constant)
    }

    pub fn identity(d: usize) -> Self {
        Self { means: vec![0.0; d], sds: vec![1.0; d] }
    }

    pub fn apply(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        DMatrix::from_fn(x.nrows(), x.ncols(), |r, c| {
            (x[(r, c)] - self.means[c]) / self.sds[c]
        })
    }

    pub fn apply_row(&self, row: &[f64]) -> Vec<f64> {
        row.iter()
            .enumerate()
            .map(|(c, v)| (v - self.means[c]) / self.sds[c])
            .collect()
    }
}

/// Solves a symmetric positive (semi)definite system, adding a small ridge
/// when the Cholesky factorization fails.
pub fn solve_spd(a: &DMatrix<f64>, b: &DVector<f64>) -> Result<DVector<f64>> {
    if let Some(ch) = a.clone().cholesky() {
        return Ok(ch.solve(b));
    }
    let scale = (0..a.nrows()).map(|i| a[(i, i)].abs()).fold(0.0, f64::max).max(1.0);
    let mut reg = a.clone();
    for i in 0..a.nrows() {
        reg[(i, i)] += 1e-10 * scale;
    }
    reg.cholesky()
        .map(|ch| ch.solve(b))
        .ok_or_else(|| Error::Numerical(alloc::string::String::from("singular normal equations")))
}
