use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector};
#[allow(unused_imports)] // inherent float methods shadow it when std is linked
use num_traits::Float;

use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LassoConfig {
    pub n_lambdas: usize,
    /// Smallest path value as a fraction of `lambda_max`.
    pub min_ratio: f64,
    pub max_sweeps: usize,
    pub tolerance: f64,
    /// Added to distances before taking reciprocals.
    pub weight_epsilon: f64,
}

impl Default for LassoConfig {
    fn default() -> Self {
        Self { n_lambdas: 50, min_ratio: 1e-4, max_sweeps: 10_000, tolerance: 1e-12, weight_epsilon: 1e-8 }
    }
}

/// `w_i = 1 / (|z_i - centroid| + eps)` with the unweighted row mean as
/// centroid.
pub fn distance_weights(z: &DMatrix<f64>, eps: f64) -> Vec<f64> {
    let n = z.nrows();
    let centroid: Vec<f64> = (0..z.ncols()).map(|j| z.column(j).sum() / n as f64).collect();
    (0..n)
        .map(|i| {
            let d = (0..z.ncols())
                .map(|j| (z[(i, j)] - centroid[j]).powi(2))
                .sum::<f64>()
                .sqrt();
            1.0 / (d + eps)
        })
        .collect()
}

/// Weighted first and second moments of the rows.
#[derive(Debug, Clone)]
struct Moments {
    w: f64,
    wz: DVector<f64>,
    wy: f64,
    wzz: DMatrix<f64>,
    wzy: DVector<f64>,
}

impl Moments {
    fn empty(h: usize) -> Self {
        Self { w: 0.0, wz: DVector::zeros(h), wy: 0.0, wzz: DMatrix::zeros(h, h), wzy: DVector::zeros(h) }
    }

    fn new(z: &DMatrix<f64>, y: &[f64], w: &[f64]) -> Self {
        let mut m = Self::empty(z.ncols());
        for i in 0..y.len() {
            m.add(z, y, w, i);
        }
        m
    }

    fn add(&mut self, z: &DMatrix<f64>, y: &[f64], w: &[f64], i: usize) {
        self.add_scaled(z, y, w[i], i);
    }

    fn add_scaled(&mut self, z: &DMatrix<f64>, y: &[f64], wi: f64, i: usize) {
        let h = z.ncols();
        self.w += wi;
        self.wy += wi * y[i];
        for a in 0..h {
            self.wz[a] += wi * z[(i, a)];
            self.wzy[a] += wi * z[(i, a)] * y[i];
            for b in 0..h {
                self.wzz[(a, b)] += wi * z[(i, a)] * z[(i, b)];
            }
        }
    }

    /// Centered Gram `sum w (z - zbar)(z - zbar)'` and cross-product with `y`.
    fn centered(&self) -> (DMatrix<f64>, DVector<f64>) {
        let gram = &self.wzz - (&self.wz * self.wz.transpose()) / self.w;
        let cross = &self.wzy - &self.wz * (self.wy / self.w);
        (gram, cross)
    }

    fn intercept(&self, c: &DVector<f64>) -> f64 {
        (self.wy - self.wz.dot(c)) / self.w
    }
}

/// Coordinate descent on `c' G c - 2 b'c + lambda |c|_1` from `c`.
fn cd_gram(gram: &DMatrix<f64>, cross: &DVector<f64>, lambda: f64, c: &mut DVector<f64>, cfg: &LassoConfig) {
    let h = c.len();
    let scale = cross.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1e-300);
    for _ in 0..cfg.max_sweeps {
        let mut delta = 0.0f64;
        for j in 0..h {
            let a = gram[(j, j)];
            if !(a > 1e-14) {
                c[j] = 0.0;
                continue;
            }
            // Symmetric: column j equals row j and needs no copy.
            let partial = cross[j] - gram.column(j).dot(c) + a * c[j];
            let next = soft(partial, 0.5 * lambda) / a;
            delta = delta.max((next - c[j]).abs() * a.sqrt());
            c[j] = next;
        }
        if delta <= cfg.tolerance * (1.0 + scale) {
            break;
        }
    }
}

fn soft(x: f64, t: f64) -> f64 {
    if x > t {
        x - t
    } else if x < -t {
        x + t
    } else {
        0.0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LassoFit {
    pub c0: f64,
    pub c: Vec<f64>,
}

impl LassoFit {
    pub fn predict(&self, z: &[f64]) -> f64 {
        self.c0 + self.c.iter().zip(z).map(|(a, b)| a * b).sum::<f64>()
    }
}

fn check_inputs(z: &DMatrix<f64>, y: &[f64], w: &[f64]) -> Result<()> {
    if z.nrows() != y.len() || w.len() != y.len() {
        return Err(Error::Dimension("scores, responses and weights differ in length".into()));
    }
    if y.is_empty() {
        return Err(Error::EmptyDataset);
    }
    if w.iter().any(|&v| !(v > 0.0) || !v.is_finite()) {
        return Err(Error::InvalidParameter("weights must be positive and finite".into()));
    }
    if z.iter().chain(y).any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("regression inputs".into()));
    }
    Ok(())
}

/// Minimizes `sum w (y - c0 - z'c)^2 + lambda |c|_1`.
pub fn weighted_lasso(z: &DMatrix<f64>, y: &[f64], w: &[f64], lambda: f64, cfg: &LassoConfig) -> Result<LassoFit> {
    check_inputs(z, y, w)?;
    let m = Moments::new(z, y, w);
    let (gram, cross) = m.centered();
    let mut c = DVector::zeros(z.ncols());
    cd_gram(&gram, &cross, lambda, &mut c, cfg);
    Ok(LassoFit { c0: m.intercept(&c), c: c.iter().cloned().collect() })
}

/// Smallest penalty with an all-zero solution.
pub fn lasso_lambda_max(z: &DMatrix<f64>, y: &[f64], w: &[f64]) -> Result<f64> {
    check_inputs(z, y, w)?;
    let (_, cross) = Moments::new(z, y, w).centered();
    Ok(2.0 * cross.iter().fold(0.0f64, |m, v| m.max(v.abs())))
}

/// Log-spaced decreasing path from `lambda_max` to `min_ratio * lambda_max`.
pub fn lasso_path(lambda_max: f64, cfg: &LassoConfig) -> Vec<f64> {
    let n = cfg.n_lambdas.max(1);
    if n == 1 || !(lambda_max > 0.0) {
        return vec![lambda_max.max(0.0)];
    }
    (0..n)
        .map(|l| lambda_max * cfg.min_ratio.powf(l as f64 / (n - 1) as f64))
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct LassoCv {
    pub fit: LassoFit,
    pub lambda: f64,
    pub path: Vec<f64>,
    /// Weighted leave-one-out error per path value.
    pub cv_error: Vec<f64>,
}

/// Picks the penalty on the path by weighted leave-one-out error and refits
/// on every row. Ties go to the larger penalty.
pub fn lasso_loocv(z: &DMatrix<f64>, y: &[f64], w: &[f64], cfg: &LassoConfig) -> Result<LassoCv> {
    check_inputs(z, y, w)?;
    let n = y.len();
    if n < 3 {
        return Err(Error::TooFewSamples("leave-one-out needs three rows".into()));
    }
    let full = Moments::new(z, y, w);
    let (gram, cross) = full.centered();
    let lambda_max = 2.0 * cross.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let path = lasso_path(lambda_max, cfg);
    // Full-data solutions along the path warm-start every held-out fit.
    let mut full_path = Vec::with_capacity(path.len());
    let mut c = DVector::zeros(z.ncols());
    for &lam in &path {
        cd_gram(&gram, &cross, lam, &mut c, cfg);
        full_path.push(c.clone());
    }
    let total_w: f64 = w.iter().sum();
    let mut sq = vec![0.0; path.len()];
    for i in 0..n {
        // Downdating loses precision when the row carries most of the weight.
        let m = if w[i] <= 0.5 * total_w {
            let mut m = full.clone();
            m.add_scaled(z, y, -w[i], i);
            m
        } else {
            let mut m = Moments::empty(z.ncols());
            for r in (0..n).filter(|&r| r != i) {
                m.add(z, y, w, r);
            }
            m
        };
        let (g_i, b_i) = m.centered();
        let zi: Vec<f64> = z.row(i).iter().cloned().collect();
        for (l, &lam) in path.iter().enumerate() {
            c.copy_from(&full_path[l]);
            cd_gram(&g_i, &b_i, lam, &mut c, cfg);
            let pred = m.intercept(&c) + c.iter().zip(&zi).map(|(a, b)| a * b).sum::<f64>();
            sq[l] += w[i] * (y[i] - pred).powi(2);
        }
    }
    let cv_error: Vec<f64> = sq.iter().map(|s| s / total_w).collect();
    let mut best = 0;
    for l in 1..path.len() {
        if cv_error[l] < cv_error[best] {
            best = l;
        }
    }
    let c = &full_path[best];
    let fit = LassoFit { c0: full.intercept(c), c: c.iter().cloned().collect() };
    if !fit.c0.is_finite() || fit.c.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("regression coefficients".into()));
    }
    Ok(LassoCv { fit, lambda: path[best], path, cv_error })
}

/// Mode-specific weighted regression of standardized `ln TTF` on standardized
/// scores.
#[derive(Debug, Clone, PartialEq)]
pub struct RegressionModel {
    pub mode: usize,
    pub c0: f64,
    pub coefficients: Vec<f64>,
    pub weights: Vec<f64>,
    pub lasso_lambda: f64,
    pub ln_mean: f64,
    pub ln_var: f64,
    /// Training indices of the rows.
    pub members: Vec<usize>,
    /// Set when the mode's own survivors could not support the fit.
    pub fallback: Option<String>,
}

impl RegressionModel {
    pub fn predict_standardized(&self, scores: &[f64]) -> f64 {
        self.c0 + self.coefficients.iter().zip(scores).map(|(a, b)| a * b).sum::<f64>()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RulPrediction {
    pub unit_id: String,
    pub t_star: f64,
    pub mode: usize,
    pub rul: f64,
    pub estimated_life: f64,
    /// The raw value was negative and was clamped to zero.
    pub clamped: bool,
    pub scores: Vec<f64>,
    pub votes: Vec<usize>,
    pub fallback: Option<String>,
}

/// Remaining life from standardized scores:
/// `exp(pred * ln_var + ln_mean) - t_star`, clamped at zero.
pub fn predict_rul(model: &RegressionModel, unit_id: &str, t_star: f64, scores: &[f64]) -> Result<RulPrediction> {
    if scores.len() != model.coefficients.len() {
        return Err(Error::Dimension("score length differs from the coefficients".into()));
    }
    if scores.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("test scores".into()));
    }
    let pred = model.predict_standardized(scores);
    let raw = (pred * model.ln_var + model.ln_mean).exp() - t_star;
    if !raw.is_finite() {
        return Err(Error::NonFinite("predicted remaining life".into()));
    }
    let clamped = raw < 0.0;
    let rul = raw.max(0.0);
    Ok(RulPrediction {
        unit_id: unit_id.into(),
        t_star,
        mode: model.mode,
        rul,
        estimated_life: t_star + rul,
        clamped,
        scores: scores.to_vec(),
        votes: Vec::new(),
        fallback: model.fallback.clone(),
    })
}
