//! Mixture of Gaussian regressions with an adaptive sparse group lasso
//! penalty, fitted by EM in the scale-invariant parameterization
//! `rho = 1/sigma`, `phi = beta/sigma`.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;
use core::ops::Range;

use nalgebra::{DMatrix, DVector};
#[allow(unused_imports)] // inherent float methods shadow it when std is linked
use num_traits::Float;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::Exp1;

use crate::fda::FeatureMatrix;
use crate::linalg::{log_sum_exp, spectral_norm_psd};
use crate::{Error, Result, Warning};

const PI_FLOOR: f64 = 1e-10;
const RHO_MIN: f64 = 1e-8;
const RHO_MAX: f64 = 1e8;
const EMPTY_MODE_FRACTION: f64 = 1e-6;
const SIGNIFICANT_NORM: f64 = 1e-8;
const MAX_HALVINGS: i32 = 20;

#[derive(Debug, Clone, PartialEq)]
pub struct MixtureParams {
    pub pi: Vec<f64>,
    pub rho: Vec<f64>,
    pub phi0: Vec<f64>,
    /// Per mode, all coefficients laid out by `group_offsets`.
    pub phi: Vec<DVector<f64>>,
    pub group_offsets: Vec<Range<usize>>,
}

impl MixtureParams {
    /// Null model: equal weights, unit precision, zero coefficients.
    pub fn zeros(k: usize, group_sizes: &[usize]) -> Self {
        let mut offsets = Vec::with_capacity(group_sizes.len());
        let mut start = 0;
        for &q in group_sizes {
            offsets.push(start..start + q);
            start += q;
        }
        Self {
            pi: vec![1.0 / k as f64; k],
            rho: vec![1.0; k],
            phi0: vec![0.0; k],
            phi: vec![DVector::zeros(start); k],
            group_offsets: offsets,
        }
    }

    pub fn n_modes(&self) -> usize {
        self.pi.len()
    }

    pub fn n_features(&self) -> usize {
        self.group_offsets.last().map_or(0, |r| r.end)
    }

    pub fn group(&self, k: usize, p: usize) -> &[f64] {
        &self.phi[k].as_slice()[self.group_offsets[p].clone()]
    }

    pub fn sigma(&self, k: usize) -> f64 {
        1.0 / self.rho[k]
    }

    /// Coefficients on the original scale, `phi / rho`.
    pub fn beta(&self, k: usize) -> DVector<f64> {
        &self.phi[k] / self.rho[k]
    }

    pub fn beta0(&self, k: usize) -> f64 {
        self.phi0[k] / self.rho[k]
    }

    /// Mean response of mode `k` at `x`, `(phi0 + x'phi) / rho`.
    pub fn mode_mean(&self, k: usize, x: &[f64]) -> f64 {
        let lin: f64 = self.phi[k].iter().zip(x).map(|(a, b)| a * b).sum();
        (self.phi0[k] + lin) / self.rho[k]
    }

    /// Prior-weighted mixture mean, usable without a response.
    pub fn predict_mean(&self, x: &[f64]) -> f64 {
        (0..self.n_modes()).map(|k| self.pi[k] * self.mode_mean(k, x)).sum()
    }

    /// Parameters with modes reordered so that new mode `j` is old `perm[j]`.
    pub fn permuted(&self, perm: &[usize]) -> Self {
        Self {
            pi: perm.iter().map(|&k| self.pi[k]).collect(),
            rho: perm.iter().map(|&k| self.rho[k]).collect(),
            phi0: perm.iter().map(|&k| self.phi0[k]).collect(),
            phi: perm.iter().map(|&k| self.phi[k].clone()).collect(),
            group_offsets: self.group_offsets.clone(),
        }
    }

    fn check(&self, x: &FeatureMatrix, y: &[f64]) -> Result<()> {
        let k = self.n_modes();
        if k == 0 {
            return Err(Error::InvalidParameter("at least one mode is required".into()));
        }
        if self.rho.len() != k || self.phi0.len() != k || self.phi.len() != k {
            return Err(Error::Dimension("mode parameter lengths differ".into()));
        }
        if x.x.ncols() != self.n_features() || self.phi.iter().any(|v| v.len() != self.n_features()) {
            return Err(Error::Dimension(format!(
                "design has {} columns, parameters expect {}",
                x.x.ncols(),
                self.n_features()
            )));
        }
        if x.n_rows() != y.len() {
            return Err(Error::Dimension(format!("{} rows but {} responses", x.n_rows(), y.len())));
        }
        if self.rho.iter().any(|&r| !(r > 0.0) || !r.is_finite()) {
            return Err(Error::InvalidParameter("rho must be positive and finite".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Responsibilities {
    /// `N x K`, rows on the simplex.
    pub gamma: DMatrix<f64>,
}

impl Responsibilities {
    pub fn hard_labels(&self) -> Vec<usize> {
        (0..self.gamma.nrows())
            .map(|i| {
                let mut best = 0;
                for k in 1..self.gamma.ncols() {
                    if self.gamma[(i, k)] > self.gamma[(i, best)] {
                        best = k;
                    }
                }
                best
            })
            .collect()
    }

    pub fn column_means(&self) -> Vec<f64> {
        let n = self.gamma.nrows() as f64;
        (0..self.gamma.ncols()).map(|k| self.gamma.column(k).sum() / n).collect()
    }

    /// `-sum g ln g`, with `0 ln 0 = 0`.
    pub fn entropy(&self) -> f64 {
        -self.gamma.iter().filter(|&&g| g > 0.0).map(|&g| g * g.ln()).sum::<f64>()
    }

    /// One-hot rows softened to `0.9` on the given label and `0.1/(K-1)`
    /// elsewhere.
    pub fn from_labels(labels: &[usize], k: usize) -> Result<Self> {
        if labels.iter().any(|&l| l >= k) {
            return Err(Error::InvalidParameter(format!("labels must lie in [0, {k})")));
        }
        let (hit, miss) = if k == 1 { (1.0, 0.0) } else { (0.9, 0.1 / (k - 1) as f64) };
        let gamma = DMatrix::from_fn(labels.len(), k, |i, c| if labels[i] == c { hit } else { miss });
        Ok(Self { gamma })
    }

    /// Rows drawn from a flat Dirichlet distribution.
    pub fn random(n: usize, k: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut gamma = DMatrix::zeros(n, k);
        for i in 0..n {
            let draws: Vec<f64> = (0..k).map(|_| rng.sample::<f64, _>(Exp1)).collect();
            let s: f64 = draws.iter().sum();
            for c in 0..k {
                gamma[(i, c)] = draws[c] / s;
            }
        }
        Self { gamma }
    }
}

/// `lambda` is per unit: the penalty is weighed against the mean negative
/// log-likelihood, so the summed objectives below carry it times `N`.
#[derive(Debug, Clone, PartialEq)]
pub struct PenaltyConfig {
    pub lambda: f64,
    pub alpha: f64,
    pub group_sizes: Vec<usize>,
}

impl PenaltyConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda >= 0.0) || !self.lambda.is_finite() {
            return Err(Error::InvalidParameter("lambda must be nonnegative".into()));
        }
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(Error::InvalidParameter("alpha must lie in [0, 1]".into()));
        }
        Ok(())
    }

    /// `alpha |phi|_1 + (1 - alpha) sum_p sqrt(q_p) |phi_p|_2` for one mode.
    fn shape(&self, phi: &DVector<f64>, offsets: &[Range<usize>]) -> f64 {
        let l1: f64 = phi.iter().map(|v| v.abs()).sum();
        let group: f64 = offsets
            .iter()
            .map(|r| {
                let q = r.len() as f64;
                q.sqrt() * phi.rows(r.start, r.len()).norm()
            })
            .sum();
        self.alpha * l1 + (1.0 - self.alpha) * group
    }

    /// Multiplier of the penalty shape in objectives summed over `n` units.
    pub fn weight(&self, n: usize) -> f64 {
        self.lambda * n as f64
    }

    /// Full penalty `N lambda sum_k pi_k shape(phi_k)` for `n` units.
    pub fn value(&self, params: &MixtureParams, n: usize) -> f64 {
        if self.lambda == 0.0 {
            return 0.0;
        }
        (0..params.n_modes())
            .map(|k| params.pi[k] * self.shape(&params.phi[k], &params.group_offsets))
            .sum::<f64>()
            * self.weight(n)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InitMode {
    RandomResponsibilities,
    LabelsProvided,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmConfig {
    pub max_iterations: usize,
    pub tolerance: f64,
    pub inner_max_iterations: usize,
    pub inner_tolerance: f64,
    pub init_mode: InitMode,
    pub seed: u64,
}

impl Default for EmConfig {
    fn default() -> Self {
        Self {
            max_iterations: 500,
            tolerance: 1e-6,
            inner_max_iterations: 1000,
            inner_tolerance: 1e-8,
            init_mode: InitMode::RandomResponsibilities,
            seed: 0,
        }
    }
}

impl EmConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.tolerance > 0.0) || !(self.inner_tolerance > 0.0) {
            return Err(Error::InvalidParameter("tolerances must be positive".into()));
        }
        if self.max_iterations == 0 || self.inner_max_iterations == 0 {
            return Err(Error::InvalidParameter("iteration caps must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SensorSelectionReport {
    /// `P x K` group norms of `phi`.
    pub norms: DMatrix<f64>,
    pub significant: Vec<Vec<bool>>,
}

impl SensorSelectionReport {
    /// Sensors significant for mode `k`.
    pub fn selected(&self, k: usize) -> Vec<usize> {
        (0..self.norms.nrows()).filter(|&p| self.significant[p][k]).collect()
    }

    /// Sensors ordered by decreasing norm for mode `k`, ties by index.
    pub fn ranked(&self, k: usize) -> Vec<usize> {
        let mut idx: Vec<usize> = (0..self.norms.nrows()).collect();
        idx.sort_by(|&a, &b| {
            self.norms[(b, k)]
                .partial_cmp(&self.norms[(a, k)])
                .unwrap_or(core::cmp::Ordering::Equal)
                .then(a.cmp(&b))
        });
        idx
    }

    pub fn union(&self) -> Vec<usize> {
        (0..self.norms.nrows()).filter(|&p| self.significant[p].iter().any(|&s| s)).collect()
    }
}

pub fn selection_report(params: &MixtureParams) -> SensorSelectionReport {
    let p_count = params.group_offsets.len();
    let k = params.n_modes();
    let norms = DMatrix::from_fn(p_count, k, |p, c| {
        params.group(c, p).iter().map(|v| v * v).sum::<f64>().sqrt()
    });
    let significant = (0..p_count)
        .map(|p| (0..k).map(|c| norms[(p, c)] > SIGNIFICANT_NORM).collect())
        .collect();
    SensorSelectionReport { norms, significant }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitResult {
    pub params: MixtureParams,
    pub gamma: Responsibilities,
    /// Penalized negative log-likelihood after every M-step.
    pub objective_trace: Vec<f64>,
    pub hard_labels: Vec<usize>,
    pub selection: SensorSelectionReport,
    pub converged: bool,
    pub warnings: Vec<Warning>,
}

impl FitResult {
    pub fn objective(&self) -> f64 {
        self.objective_trace.last().cloned().unwrap_or(f64::NAN)
    }
}

/// `l[i][k] = ln pi_k + ln rho_k - ln(2 pi)/2 - r_ik^2/2`.
fn log_joint(params: &MixtureParams, x: &FeatureMatrix, y: &[f64]) -> DMatrix<f64> {
    let n = y.len();
    let k = params.n_modes();
    let half_ln_2pi = 0.5 * (2.0 * PI).ln();
    let mut out = DMatrix::zeros(n, k);
    for c in 0..k {
        let fitted = &x.x * &params.phi[c];
        let base = params.pi[c].max(PI_FLOOR).ln() + params.rho[c].ln() - half_ln_2pi;
        for i in 0..n {
            let r = y[i] * params.rho[c] - params.phi0[c] - fitted[i];
            out[(i, c)] = base - 0.5 * r * r;
        }
    }
    out
}

fn row_lse(l: &DMatrix<f64>, i: usize) -> f64 {
    let row: Vec<f64> = l.row(i).iter().cloned().collect();
    log_sum_exp(&row)
}

/// Negative incomplete-data log-likelihood.
pub fn neg_idll(params: &MixtureParams, x: &FeatureMatrix, y: &[f64]) -> Result<f64> {
    params.check(x, y)?;
    let l = log_joint(params, x, y);
    let v = -(0..y.len()).map(|i| row_lse(&l, i)).sum::<f64>();
    if !v.is_finite() {
        return Err(Error::NonFinite("negative log-likelihood".into()));
    }
    Ok(v)
}

/// Posterior mode probabilities.
pub fn e_step(params: &MixtureParams, x: &FeatureMatrix, y: &[f64]) -> Result<Responsibilities> {
    params.check(x, y)?;
    let l = log_joint(params, x, y);
    let mut gamma = DMatrix::zeros(y.len(), params.n_modes());
    for i in 0..y.len() {
        let lse = row_lse(&l, i);
        if !lse.is_finite() {
            return Err(Error::NonFinite(format!("log-density of system {i}")));
        }
        for c in 0..params.n_modes() {
            gamma[(i, c)] = (l[(i, c)] - lse).exp();
        }
    }
    Ok(Responsibilities { gamma })
}

/// Expected negative complete-data log-likelihood under `gamma`.
pub fn q_function(
    params: &MixtureParams,
    gamma: &Responsibilities,
    x: &FeatureMatrix,
    y: &[f64],
) -> Result<f64> {
    params.check(x, y)?;
    if gamma.gamma.nrows() != y.len() || gamma.gamma.ncols() != params.n_modes() {
        return Err(Error::Dimension("responsibilities do not match data and modes".into()));
    }
    let l = log_joint(params, x, y);
    let mut q = 0.0;
    for (g, v) in gamma.gamma.iter().zip(l.iter()) {
        if *g > 0.0 {
            q -= g * v;
        }
    }
    Ok(q)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundCheck {
    /// Expected complete-data log-likelihood under `g`.
    pub lhs: f64,
    /// Incomplete-data log-likelihood.
    pub rhs: f64,
    pub holds: bool,
    /// `rhs - (lhs + entropy(g))`; zero exactly when `g` is the posterior.
    pub entropy_gap: f64,
}

/// Jensen lower bound on the log-likelihood for arbitrary responsibilities.
pub fn check_cdll_bound(
    params: &MixtureParams,
    g: &Responsibilities,
    x: &FeatureMatrix,
    y: &[f64],
) -> Result<BoundCheck> {
    let lhs = -q_function(params, g, x, y)?;
    let rhs = -neg_idll(params, x, y)?;
    Ok(BoundCheck {
        lhs,
        rhs,
        holds: lhs <= rhs + 1e-9,
        entropy_gap: rhs - (lhs + g.entropy()),
    })
}

fn surrogate(
    params: &MixtureParams,
    gamma: &Responsibilities,
    x: &FeatureMatrix,
    y: &[f64],
    penalty: &PenaltyConfig,
) -> Result<f64> {
    Ok(q_function(params, gamma, x, y)? + penalty.value(params, y.len()))
}

/// Mixing-weight update: moves from `pi` towards the responsibility means by
/// the largest step in `{1, 1/2, ..., 2^-20}` that does not increase the
/// penalized expected objective. Returns the accepted step (0 when `pi` is
/// kept).
pub fn pi_step(
    params: &mut MixtureParams,
    gamma: &Responsibilities,
    x: &FeatureMatrix,
    y: &[f64],
    penalty: &PenaltyConfig,
) -> Result<f64> {
    let target = gamma.column_means();
    let current = params.pi.clone();
    let base = surrogate(params, gamma, x, y, penalty)?;
    for h in 0..=MAX_HALVINGS {
        let u = 0.5f64.powi(h);
        let mut trial: Vec<f64> = current.iter().zip(&target).map(|(p, t)| p + u * (t - p)).collect();
        let s: f64 = trial.iter().sum();
        trial.iter_mut().for_each(|v| *v /= s);
        params.pi = trial;
        if surrogate(params, gamma, x, y, penalty)? <= base {
            return Ok(u);
        }
    }
    params.pi = current;
    Ok(0.0)
}

/// Proximal map of `t_l1 |u|_1 + t_group |u|_2`.
pub fn sgl_prox(v: &[f64], t_l1: f64, t_group: f64) -> Vec<f64> {
    let mut u: Vec<f64> = v.iter().map(|&x| soft(x, t_l1)).collect();
    let norm = u.iter().map(|a| a * a).sum::<f64>().sqrt();
    if norm <= t_group {
        u.iter_mut().for_each(|a| *a = 0.0);
    } else {
        let scale = 1.0 - t_group / norm;
        u.iter_mut().for_each(|a| *a *= scale);
    }
    u
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

/// Weighted sufficient statistics of one mode.
struct ModeStats {
    total: f64,
    s_y: f64,
    s_yy: f64,
    /// `X' g`
    g_x: DVector<f64>,
    /// `X' G y`
    g_xy: DVector<f64>,
    /// `X' G X`
    gram: DMatrix<f64>,
}

impl ModeStats {
    fn new(weights: &[f64], x: &DMatrix<f64>, y: &[f64]) -> Self {
        let d = x.ncols();
        let mut total = 0.0;
        let mut s_y = 0.0;
        let mut s_yy = 0.0;
        let mut g_x = DVector::zeros(d);
        let mut g_xy = DVector::zeros(d);
        let mut wx = x.clone();
        for i in 0..y.len() {
            let w = weights[i];
            total += w;
            s_y += w * y[i];
            s_yy += w * y[i] * y[i];
            for j in 0..d {
                g_x[j] += w * x[(i, j)];
                g_xy[j] += w * y[i] * x[(i, j)];
                wx[(i, j)] *= w;
            }
        }
        let gram = x.transpose() * wx;
        Self { total, s_y, s_yy, g_x, g_xy, gram }
    }

    /// `sum g (y rho - phi0 - x'phi)^2` given `gphi = gram * phi`.
    fn rss(&self, rho: f64, phi0: f64, phi: &DVector<f64>, gphi: &DVector<f64>) -> f64 {
        let v = rho * rho * self.s_yy + phi0 * phi0 * self.total + phi.dot(gphi)
            - 2.0 * rho * phi0 * self.s_y
            - 2.0 * rho * phi.dot(&self.g_xy)
            + 2.0 * phi0 * phi.dot(&self.g_x);
        v.max(0.0)
    }

    fn rho_update(&self, phi0: f64, phi: &DVector<f64>) -> f64 {
        let s_ya = phi0 * self.s_y + phi.dot(&self.g_xy);
        let rho = (s_ya + (s_ya * s_ya + 4.0 * self.total * self.s_yy).sqrt()) / (2.0 * self.s_yy);
        rho.clamp(RHO_MIN, RHO_MAX)
    }

    fn phi0_update(&self, rho: f64, phi: &DVector<f64>) -> f64 {
        (rho * self.s_y - self.g_x.dot(phi)) / self.total
    }

    /// Gradient of the smooth part in `phi`.
    fn gradient(&self, rho: f64, phi0: f64, phi: &DVector<f64>) -> DVector<f64> {
        &self.gram * phi + &self.g_x * phi0 - &self.g_xy * rho
    }

    /// Largest eigenvalue of each diagonal block of the Gram matrix.
    fn block_lipschitz(&self, offsets: &[Range<usize>]) -> Vec<f64> {
        offsets
            .iter()
            .map(|r| {
                let block = self.gram.view((r.start, r.start), (r.len(), r.len())).into_owned();
                spectral_norm_psd(&block)
            })
            .collect()
    }
}

/// Closed-form precision for fixed linear predictor, exposed for testing the
/// stationarity equation.
pub fn rho_update(gamma_k: &[f64], x: &FeatureMatrix, y: &[f64], phi0: f64, phi: &DVector<f64>) -> f64 {
    ModeStats::new(gamma_k, &x.x, y).rho_update(phi0, phi)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModeFit {
    pub rho: f64,
    pub phi0: f64,
    pub phi: DVector<f64>,
    pub iterations: usize,
    /// The mode carried too little responsibility and was left unchanged.
    pub empty: bool,
}

/// Solves the per-mode penalized problem by block coordinate descent from
/// the warm start `(rho, phi0, phi)`. Each sweep sets `rho` and `phi0` in
/// closed form, then takes one proximal gradient step per sensor group with
/// that group's own Lipschitz step, so every update is a majorize-minimize
/// step and the mode objective never increases.
#[allow(clippy::too_many_arguments)]
pub fn m_step_mode(
    gamma_k: &[f64],
    pi_k: f64,
    x: &FeatureMatrix,
    y: &[f64],
    penalty: &PenaltyConfig,
    warm: (f64, f64, &DVector<f64>),
    inner_max_iterations: usize,
    inner_tolerance: f64,
) -> Result<ModeFit> {
    let stats = ModeStats::new(gamma_k, &x.x, y);
    let (mut rho, mut phi0) = (warm.0, warm.1);
    let mut phi = warm.2.clone();
    if stats.total < EMPTY_MODE_FRACTION * y.len() as f64 {
        return Ok(ModeFit { rho, phi0, phi, iterations: 0, empty: true });
    }
    if !(stats.s_yy > 0.0) {
        return Err(Error::DegenerateResponse(0));
    }
    let offsets = &x.group_offsets;
    let lips = stats.block_lipschitz(offsets);
    let mut gphi = &stats.gram * &phi;
    let lam = penalty.weight(y.len());
    let objective = |rho: f64, phi0: f64, phi: &DVector<f64>, gphi: &DVector<f64>| {
        -stats.total * rho.ln()
            + 0.5 * stats.rss(rho, phi0, phi, gphi)
            + lam * pi_k * penalty.shape(phi, offsets)
    };
    let mut obj = objective(rho.clamp(RHO_MIN, RHO_MAX), phi0, &phi, &gphi);
    let mut iterations = 0;
    let mut trial = Vec::new();
    for it in 0..inner_max_iterations {
        iterations = it + 1;
        rho = stats.rho_update(phi0, &phi);
        phi0 = stats.phi0_update(rho, &phi);
        for (r, &lip) in offsets.iter().zip(&lips) {
            if !(lip > 0.0) {
                continue;
            }
            let step = 1.0 / lip;
            let q = r.len() as f64;
            trial.clear();
            trial.extend(r.clone().map(|j| {
                let grad = gphi[j] + stats.g_x[j] * phi0 - stats.g_xy[j] * rho;
                phi[j] - step * grad
            }));
            let t_l1 = step * lam * pi_k * penalty.alpha;
            let t_group = step * lam * pi_k * (1.0 - penalty.alpha) * q.sqrt();
            let block = sgl_prox(&trial, t_l1, t_group);
            for (o, j) in r.clone().enumerate() {
                let delta = block[o] - phi[j];
                if delta != 0.0 {
                    gphi.axpy(delta, &stats.gram.column(j), 1.0);
                    phi[j] = block[o];
                }
            }
        }
        let next = objective(rho, phi0, &phi, &gphi);
        let change = (obj - next).abs();
        obj = next;
        if change <= inner_tolerance * (1.0 + obj.abs()) {
            break;
        }
    }
    // Leave rho and phi0 optimal for the final phi.
    rho = stats.rho_update(phi0, &phi);
    phi0 = stats.phi0_update(rho, &phi);
    if !rho.is_finite() || !phi0.is_finite() || phi.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("mode parameters".into()));
    }
    Ok(ModeFit { rho, phi0, phi, iterations, empty: false })
}

fn group_threshold(g: &[f64], pi_k: f64, alpha: f64, q: f64) -> f64 {
    let g_inf = g.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let g_two = g.iter().map(|v| v * v).sum::<f64>().sqrt();
    if g_inf == 0.0 {
        return 0.0;
    }
    if alpha == 0.0 {
        return g_two / (pi_k * q.sqrt());
    }
    if alpha == 1.0 {
        return g_inf / pi_k;
    }
    // ||soft(g, lam pi alpha)|| - lam pi (1 - alpha) sqrt(q) decreases in lam.
    let excess = |lam: f64| {
        let t = lam * pi_k * alpha;
        g.iter().map(|&v| soft(v, t).powi(2)).sum::<f64>().sqrt() - lam * pi_k * (1.0 - alpha) * q.sqrt()
    };
    let (mut lo, mut hi) = (0.0, g_inf / (pi_k * alpha));
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if excess(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    hi
}

/// Smallest `lambda` for which `phi = 0` is optimal in every mode, given the
/// responsibilities and mixing weights. Each mode's gradient is evaluated at
/// its intercept-and-precision null fit.
pub fn lambda_max(
    x: &FeatureMatrix,
    y: &[f64],
    gamma: &Responsibilities,
    pi: &[f64],
    alpha: f64,
) -> Result<f64> {
    if gamma.gamma.nrows() != y.len() || x.n_rows() != y.len() || pi.len() != gamma.gamma.ncols() {
        return Err(Error::Dimension("lambda_max inputs disagree".into()));
    }
    let mut best = 0.0f64;
    for c in 0..pi.len() {
        let w: Vec<f64> = gamma.gamma.column(c).iter().cloned().collect();
        let stats = ModeStats::new(&w, &x.x, y);
        if stats.total < EMPTY_MODE_FRACTION * y.len() as f64 {
            continue;
        }
        let centered = stats.s_yy - stats.s_y * stats.s_y / stats.total;
        if !(centered > 0.0) {
            return Err(Error::DegenerateResponse(c));
        }
        let zero = DVector::zeros(x.x.ncols());
        let rho = (stats.total / centered).sqrt();
        let phi0 = stats.phi0_update(rho, &zero);
        let grad = stats.gradient(rho, phi0, &zero);
        let pi_k = pi[c].max(PI_FLOOR);
        for r in &x.group_offsets {
            let g = &grad.as_slice()[r.clone()];
            best = best.max(group_threshold(g, pi_k, alpha, r.len() as f64));
        }
    }
    // Thresholds above are on the summed scale; lambda is per unit.
    Ok(best / y.len() as f64)
}

/// One M-step: mixing weights by line search, then every mode from its warm
/// start. Returns indices of modes left unchanged.
fn m_step(
    params: &mut MixtureParams,
    gamma: &Responsibilities,
    x: &FeatureMatrix,
    y: &[f64],
    penalty: &PenaltyConfig,
    cfg: &EmConfig,
) -> Result<Vec<usize>> {
    pi_step(params, gamma, x, y, penalty)?;
    let mut empty = Vec::new();
    for c in 0..params.n_modes() {
        let w: Vec<f64> = gamma.gamma.column(c).iter().cloned().collect();
        let fit = m_step_mode(
            &w,
            params.pi[c],
            x,
            y,
            penalty,
            (params.rho[c], params.phi0[c], &params.phi[c]),
            cfg.inner_max_iterations,
            cfg.inner_tolerance,
        )
        .map_err(|e| match e {
            Error::DegenerateResponse(_) => Error::DegenerateResponse(c),
            other => other,
        })?;
        if fit.empty {
            empty.push(c);
        }
        params.rho[c] = fit.rho;
        params.phi0[c] = fit.phi0;
        params.phi[c] = fit.phi;
    }
    Ok(empty)
}

/// Penalized negative incomplete-data log-likelihood, summed over units:
/// `N` times the per-unit objective.
pub fn penalized_objective(
    params: &MixtureParams,
    x: &FeatureMatrix,
    y: &[f64],
    penalty: &PenaltyConfig,
) -> Result<f64> {
    Ok(neg_idll(params, x, y)? + penalty.value(params, y.len()))
}

/// EM for the penalized mixture. `init_labels` is required when
/// `cfg.init_mode` is `LabelsProvided` and ignored otherwise.
pub fn fit_em(
    x: &FeatureMatrix,
    y: &[f64],
    k: usize,
    penalty: &PenaltyConfig,
    cfg: &EmConfig,
    init_labels: Option<&[usize]>,
) -> Result<FitResult> {
    penalty.validate()?;
    cfg.validate()?;
    let n = y.len();
    if k == 0 {
        return Err(Error::InvalidParameter("k must be positive".into()));
    }
    if n <= k {
        return Err(Error::TooFewSamples(format!("{n} systems for {k} modes")));
    }
    if x.n_rows() != n {
        return Err(Error::Dimension(format!("{} rows but {n} responses", x.n_rows())));
    }
    if x.x.iter().chain(y).any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("EM input".into()));
    }
    if penalty.group_sizes != x.group_sizes() {
        return Err(Error::Dimension("penalty group sizes differ from the design".into()));
    }
    let mut gamma = match cfg.init_mode {
        InitMode::RandomResponsibilities => Responsibilities::random(n, k, cfg.seed),
        InitMode::LabelsProvided => {
            let labels = init_labels.ok_or_else(|| {
                Error::InvalidParameter("label initialization needs labels".into())
            })?;
            if labels.len() != n {
                return Err(Error::Dimension("one initial label per system".into()));
            }
            Responsibilities::from_labels(labels, k)?
        }
    };
    let mut params = MixtureParams::zeros(k, &x.group_sizes());
    params.pi = gamma.column_means();

    let mut warnings = Vec::new();
    let mut trace = Vec::new();
    let mut converged = false;
    let mut flagged_empty = vec![false; k];
    for _ in 0..cfg.max_iterations {
        let empty = m_step(&mut params, &gamma, x, y, penalty, cfg)?;
        for c in empty {
            if !flagged_empty[c] {
                flagged_empty[c] = true;
                warnings.push(Warning::EmptyMode { mode: c });
            }
        }
        let obj = penalized_objective(&params, x, y, penalty)?;
        let prev = trace.last().cloned();
        trace.push(obj);
        gamma = e_step(&params, x, y)?;
        if let Some(prev) = prev {
            if (prev - obj).abs() <= cfg.tolerance * prev.abs().max(1e-12) {
                converged = true;
                break;
            }
        }
    }
    if !converged {
        warnings.push(Warning::EmNotConverged { iterations: trace.len() });
    }
    let selection = selection_report(&params);
    if selection.union().is_empty() {
        warnings.push(Warning::DegenerateSelection);
    }
    Ok(FitResult {
        hard_labels: gamma.hard_labels(),
        params,
        gamma,
        objective_trace: trace,
        selection,
        converged,
        warnings,
    })
}
