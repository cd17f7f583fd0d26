#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use prognos_core::fda::FeatureMatrix;
use prognos_core::mixture::{MixtureParams, Responsibilities};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn normal(rng: &mut ChaCha8Rng) -> f64 {
    StandardNormal.sample(rng)
}

/// Two-mode mixture of regressions: mode 0 loads on the first group, mode 1
/// on the second, with opposite-sign slopes. Returns design, response and the
/// true labels.
pub fn two_mode_fixture(seed: u64, n: usize, groups: &[usize], noise: f64) -> (FeatureMatrix, Vec<f64>, Vec<usize>) {
    let mut r = rng(seed);
    let d: usize = groups.iter().sum();
    let x = DMatrix::from_fn(n, d, |_, _| normal(&mut r));
    let x = FeatureMatrix::from_raw(x, groups).unwrap();
    let e = Normal::new(0.0, noise).unwrap();
    let mut y = Vec::with_capacity(n);
    let mut labels = Vec::with_capacity(n);
    for i in 0..n {
        let k = i % 2;
        let first = if k == 0 { 0 } else { groups[0].min(d - 1) };
        let slope = if k == 0 { 2.0 } else { -2.0 };
        y.push(slope * x.x[(i, first)] + e.sample(&mut r));
        labels.push(k);
    }
    (x, y, labels)
}

/// Arbitrary valid parameters for a design with the given groups.
pub fn random_params(seed: u64, k: usize, groups: &[usize]) -> MixtureParams {
    let mut r = rng(seed);
    let mut p = MixtureParams::zeros(k, groups);
    let raw: Vec<f64> = (0..k).map(|_| r.random_range(0.2..1.0)).collect();
    let s: f64 = raw.iter().sum();
    p.pi = raw.iter().map(|v| v / s).collect();
    for c in 0..k {
        p.rho[c] = r.random_range(0.5..2.0);
        p.phi0[c] = normal(&mut r) * 0.5;
        p.phi[c] = DVector::from_fn(p.n_features(), |_, _| normal(&mut r) * 0.5);
    }
    p
}

/// Responsibilities with random simplex rows.
pub fn random_simplex(seed: u64, n: usize, k: usize) -> Responsibilities {
    Responsibilities::random(n, k, seed)
}

pub fn grid(g: usize, lo: f64, hi: f64) -> Vec<f64> {
    (0..g).map(|j| lo + (hi - lo) * j as f64 / (g - 1) as f64).collect()
}

/// Independent composite trapezoid rule.
pub fn trapezoid(x: &[f64], f: &[f64]) -> f64 {
    x.windows(2).zip(f.windows(2)).map(|(t, v)| 0.5 * (t[1] - t[0]) * (v[0] + v[1])).sum()
}

/// `n` noise-free curves `mean(t) + sum_r a_ir f_r(t)` from `rank` smooth
/// shapes.
pub fn rank_r_curves(seed: u64, n: usize, grid: &[f64], rank: usize) -> DMatrix<f64> {
    let mut r = rng(seed);
    let shapes: Vec<Box<dyn Fn(f64) -> f64>> = vec![
        Box::new(|t: f64| t.sin()),
        Box::new(|t: f64| (2.0 * t).cos()),
        Box::new(|t: f64| t * t - 1.0),
        Box::new(|t: f64| (0.5 * t).exp()),
    ];
    assert!(rank <= shapes.len());
    let coef: Vec<Vec<f64>> = (0..n).map(|_| (0..rank).map(|_| normal(&mut r) * 2.0).collect()).collect();
    DMatrix::from_fn(n, grid.len(), |i, j| {
        let t = grid[j];
        0.3 * t + (0..rank).map(|m| coef[i][m] * shapes[m](t)).sum::<f64>()
    })
}
