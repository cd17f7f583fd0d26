//! Degradation-signal data model.
//!
//! Every system in a [`SignalDataset`] is sampled on one shared, strictly
//! increasing time grid. A record may stop early (an online unit that is still
//! running, or a training unit that failed before the end of the grid); the
//! number of columns in [`SystemRecord::values`] is its observed-through index.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use nalgebra::DMatrix;
#[allow(unused_imports)] // inherent float methods shadow it when std is linked
use num_traits::Float;

use crate::linalg::{mean, median, sample_var};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct SystemRecord {
    pub id: String,
    /// Time to failure; `None` for units whose failure time is unknown.
    pub ttf: Option<f64>,
    /// `P x observed` sensor readings on the dataset grid.
    pub values: DMatrix<f64>,
}

impl SystemRecord {
    pub fn new(id: impl Into<String>, ttf: Option<f64>, values: DMatrix<f64>) -> Self {
        Self { id: id.into(), ttf, values }
    }

    /// Number of grid points observed.
    pub fn observed(&self) -> usize {
        self.values.ncols()
    }

    /// Readings of one sensor.
    pub fn sensor(&self, p: usize) -> Vec<f64> {
        self.values.row(p).iter().cloned().collect()
    }

    /// Copy restricted to the first `len` grid points.
    pub fn prefix(&self, len: usize) -> SystemRecord {
        let len = len.min(self.observed());
        SystemRecord {
            id: self.id.clone(),
            ttf: self.ttf,
            values: self.values.columns(0, len).into_owned(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SignalDataset {
    pub sensor_ids: Vec<String>,
    pub time_grid: Vec<f64>,
    pub systems: Vec<SystemRecord>,
    pub truncated_at: Option<f64>,
}

impl SignalDataset {
    /// Validates shape invariants: `P >= 1`, `N >= 2`, `G >= 3`, a strictly
    /// increasing grid, `P` rows per record and finite observed values.
    pub fn new(
        sensor_ids: Vec<String>,
        time_grid: Vec<f64>,
        systems: Vec<SystemRecord>,
    ) -> Result<Self> {
        validate_grid(&time_grid)?;
        if sensor_ids.is_empty() {
            return Err(Error::InvalidParameter("dataset needs at least one sensor".into()));
        }
        if systems.is_empty() {
            return Err(Error::EmptyDataset);
        }
        if systems.len() < 2 {
            return Err(Error::TooFewSamples("dataset needs at least two systems".into()));
        }
        let p = sensor_ids.len();
        for s in &systems {
            if s.values.nrows() != p {
                return Err(Error::Dimension(format!(
                    "system {} has {} sensor rows, expected {}",
                    s.id,
                    s.values.nrows(),
                    p
                )));
            }
            if s.values.ncols() > time_grid.len() {
                return Err(Error::Dimension(format!(
                    "system {} has {} samples on a grid of {}",
                    s.id,
                    s.values.ncols(),
                    time_grid.len()
                )));
            }
            if s.values.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite(format!("signals of system {}", s.id)));
            }
            if let Some(t) = s.ttf {
                if !t.is_finite() {
                    return Err(Error::NonFinite(format!("ttf of system {}", s.id)));
                }
            }
        }
        Ok(Self { sensor_ids, time_grid, systems, truncated_at: None })
    }

    pub fn n_systems(&self) -> usize {
        self.systems.len()
    }

    pub fn n_sensors(&self) -> usize {
        self.sensor_ids.len()
    }

    pub fn grid_len(&self) -> usize {
        self.time_grid.len()
    }

    /// Times to failure; errors if any is missing or non-positive.
    pub fn ttfs(&self) -> Result<Vec<f64>> {
        self.systems
            .iter()
            .map(|s| match s.ttf {
                None => Err(Error::MissingTtf(s.id.clone())),
                Some(t) if t <= 0.0 => Err(Error::NonPositiveTtf { id: s.id.clone(), value: t }),
                Some(t) => Ok(t),
            })
            .collect()
    }

    /// `n x G` matrix with one sensor's curves, one row per system. All
    /// systems must be observed over the full grid.
    pub fn sensor_curves(&self, p: usize) -> Result<DMatrix<f64>> {
        let g = self.grid_len();
        if let Some(s) = self.systems.iter().find(|s| s.observed() < g) {
            return Err(Error::CurveTooShort { got: s.observed(), need: g });
        }
        Ok(DMatrix::from_fn(self.n_systems(), g, |i, j| self.systems[i].values[(p, j)]))
    }

    /// Number of grid points at or before `t`.
    pub fn grid_points_through(&self, t: f64) -> usize {
        points_through(&self.time_grid, t)
    }
}

pub(crate) fn points_through(grid: &[f64], t: f64) -> usize {
    let tol = 1e-12 * (1.0 + t.abs());
    grid.iter().take_while(|&&g| g <= t + tol).count()
}

fn validate_grid(grid: &[f64]) -> Result<()> {
    if grid.len() < 3 {
        return Err(Error::InvalidGrid(format!("need at least 3 points, got {}", grid.len())));
    }
    if grid.iter().any(|t| !t.is_finite()) {
        return Err(Error::NonFinite("time grid".into()));
    }
    if grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidGrid("time grid must be strictly increasing".into()));
    }
    Ok(())
}

/// Restricts the grid to `t <= min ttf` so every system covers the same domain.
pub fn truncate_to_min_ttf(dataset: &SignalDataset) -> Result<SignalDataset> {
    if dataset.systems.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let ttfs = dataset.ttfs()?;
    let min_ttf = ttfs.iter().cloned().fold(f64::INFINITY, f64::min);
    let kept = dataset.grid_points_through(min_ttf);
    if kept < 3 {
        return Err(Error::TruncationTooShort { min_ttf, kept });
    }
    let mut systems = Vec::with_capacity(dataset.n_systems());
    for s in &dataset.systems {
        if s.observed() < kept {
            return Err(Error::CurveTooShort { got: s.observed(), need: kept });
        }
        systems.push(s.prefix(kept));
    }
    Ok(SignalDataset {
        sensor_ids: dataset.sensor_ids.clone(),
        time_grid: dataset.time_grid[..kept].to_vec(),
        systems,
        truncated_at: Some(min_ttf),
    })
}

/// Standardized log time-to-failure.
///
/// The scale divides by the sample variance of `ln TTF` rather than its
/// standard deviation. The same `ln_var` is used to undo the transform when
/// predicting remaining life, so the round trip is exact.
#[derive(Debug, Clone, PartialEq)]
pub struct StandardizedTtf {
    pub y: Vec<f64>,
    pub ln_mean: f64,
    pub ln_var: f64,
}

impl StandardizedTtf {
    pub fn from_ttfs(ttfs: &[f64]) -> Result<Self> {
        if ttfs.len() < 2 {
            return Err(Error::TooFewSamples("need at least two failure times".into()));
        }
        if let Some((i, &t)) = ttfs.iter().enumerate().find(|(_, &t)| !(t > 0.0)) {
            return Err(Error::NonPositiveTtf { id: format!("#{i}"), value: t });
        }
        let logs: Vec<f64> = ttfs.iter().map(|t| t.ln()).collect();
        let ln_mean = mean(&logs);
        let ln_var = sample_var(&logs);
        if !(ln_var > 0.0) {
            return Err(Error::ZeroVariance);
        }
        let y = logs.iter().map(|l| (l - ln_mean) / ln_var).collect();
        Ok(Self { y, ln_mean, ln_var })
    }

    pub fn standardize(&self, ttf: f64) -> f64 {
        (ttf.ln() - self.ln_mean) / self.ln_var
    }

    /// Maps a standardized value back to a time-to-failure.
    pub fn ttf_of(&self, y: f64) -> f64 {
        (y * self.ln_var + self.ln_mean).exp()
    }
}

pub fn standardize_ln_ttf(dataset: &SignalDataset) -> Result<StandardizedTtf> {
    StandardizedTtf::from_ttfs(&dataset.ttfs()?)
}

/// Robust local quadratic smoothing settings.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SmoothingConfig {
    /// Fraction of the series used as the local window.
    pub bandwidth: f64,
    pub robust_iterations: usize,
    pub polynomial_order: usize,
}

impl Default for SmoothingConfig {
    fn default() -> Self {
        Self { bandwidth: 0.5, robust_iterations: 5, polynomial_order: 2 }
    }
}

impl SmoothingConfig {
    pub fn window(&self, len: usize) -> usize {
        (self.bandwidth * len as f64 + 1e-9).floor() as usize
    }

    pub fn validate(&self, len: usize) -> Result<()> {
        if !(self.bandwidth > 0.0 && self.bandwidth <= 1.0) {
            return Err(Error::InvalidParameter(format!(
                "bandwidth {} outside (0, 1]",
                self.bandwidth
            )));
        }
        if self.polynomial_order != 2 {
            return Err(Error::InvalidParameter("only quadratic local fits are supported".into()));
        }
        if self.window(len) < self.polynomial_order + 1 {
            return Err(Error::InvalidParameter(format!(
                "window of {} points is too small for a quadratic fit",
                self.window(len)
            )));
        }
        Ok(())
    }
}

/// Robust local quadratic regression (`rloess`).
///
/// Each fitted value is a weighted quadratic fit over the nearest
/// `floor(bandwidth * G)` points with tricube distance weights, multiplied by
/// bisquare robustness weights that are recomputed from the residuals
/// `robust_iterations` times. Residuals beyond six median absolute residuals
/// get weight zero.
pub fn smooth_rloess(series: &[f64], grid: &[f64], cfg: &SmoothingConfig) -> Result<Vec<f64>> {
    let n = series.len();
    if grid.len() != n {
        return Err(Error::Dimension(format!("series has {n} points, grid has {}", grid.len())));
    }
    cfg.validate(n)?;
    if series.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("series".into()));
    }
    let q = cfg.window(n).min(n);
    let lo = series.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = series.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let tiny = 1e-12 * (1.0 + (hi - lo));

    let mut robust = vec![1.0; n];
    let mut fit = vec![0.0; n];
    for pass in 0..=cfg.robust_iterations {
        for i in 0..n {
            fit[i] = local_fit(series, grid, &robust, i, q);
        }
        if pass == cfg.robust_iterations {
            break;
        }
        let resid: Vec<f64> = series.iter().zip(&fit).map(|(y, f)| (y - f).abs()).collect();
        let mad = median(&resid).max(tiny);
        let cut = 6.0 * mad;
        for (w, r) in robust.iter_mut().zip(&resid) {
            let u = r / cut;
            *w = if u < 1.0 { (1.0 - u * u) * (1.0 - u * u) } else { 0.0 };
        }
    }
    Ok(fit)
}

/// Local fit at index `i` with the `q` nearest points, widened until at
/// least three points carry positive robustness weight.
fn local_fit(y: &[f64], x: &[f64], robust: &[f64], i: usize, q: usize) -> f64 {
    let n = y.len();
    let positive = robust.iter().filter(|&&w| w > 0.0).count();
    let robust_ok = positive >= 3;
    let (mut a, mut b) = (i, i); // inclusive window
    let grow = |a: &mut usize, b: &mut usize| -> bool {
        if *a == 0 && *b == n - 1 {
            return false;
        }
        if *a == 0 {
            *b += 1;
        } else if *b == n - 1 {
            *a -= 1;
        } else if x[i] - x[*a - 1] <= x[*b + 1] - x[i] {
            *a -= 1;
        } else {
            *b += 1;
        }
        true
    };
    while b - a + 1 < q {
        if !grow(&mut a, &mut b) {
            break;
        }
    }
    if robust_ok {
        while (a..=b).filter(|&j| robust[j] > 0.0).count() < 3 {
            if !grow(&mut a, &mut b) {
                break;
            }
        }
    }
    let h = (x[i] - x[a]).max(x[b] - x[i]) * (1.0 + 1e-10);
    let mut s = [0.0f64; 5]; // sums of w * u^k
    let mut t = [0.0f64; 3]; // sums of w * u^k * y
    for j in a..=b {
        let u = (x[j] - x[i]) / h;
        let d = u.abs();
        let tri = {
            let c = 1.0 - d * d * d;
            c * c * c
        };
        let w = tri * if robust_ok { robust[j] } else { 1.0 };
        if w <= 0.0 {
            continue;
        }
        let mut uk = 1.0;
        for item in s.iter_mut() {
            *item += w * uk;
            uk *= u;
        }
        t[0] += w * y[j];
        t[1] += w * u * y[j];
        t[2] += w * u * u * y[j];
    }
    // Quadratic normal equations, falling back to lower order when singular.
    let m = nalgebra::Matrix3::new(s[0], s[1], s[2], s[1], s[2], s[3], s[2], s[3], s[4]);
    if let Some(ch) = m.cholesky() {
        let beta = ch.solve(&nalgebra::Vector3::new(t[0], t[1], t[2]));
        if beta[0].is_finite() {
            return beta[0];
        }
    }
    let det = s[0] * s[2] - s[1] * s[1];
    if det > 1e-14 * s[0] * s[2].max(1e-300) {
        return (s[2] * t[0] - s[1] * t[1]) / det;
    }
    if s[0] > 0.0 {
        return t[0] / s[0];
    }
    y[i]
}

/// Per-sensor z-normalization constants estimated from training signals.
#[derive(Debug, Clone, PartialEq)]
pub struct SensorScaler {
    pub means: Vec<f64>,
    pub sds: Vec<f64>,
}

impl SensorScaler {
    /// Pools every observed reading of each sensor across all systems.
    pub fn fit(dataset: &SignalDataset) -> Self {
        let p = dataset.n_sensors();
        let mut means = Vec::with_capacity(p);
        let mut sds = Vec::with_capacity(p);
        for s in 0..p {
            let vals: Vec<f64> = dataset
                .systems
                .iter()
                .flat_map(|r| r.values.row(s).iter().cloned().collect::<Vec<_>>())
                .collect();
            let m = mean(&vals);
            let sd = sample_var(&vals).sqrt();
            means.push(m);
            sds.push(if sd > 0.0 && sd.is_finite() { sd } else { 1.0 });
        }
        Self { means, sds }
    }

    pub fn apply_record(&self, r: &SystemRecord) -> SystemRecord {
        let mut out = r.clone();
        for p in 0..out.values.nrows() {
            for j in 0..out.values.ncols() {
                out.values[(p, j)] = (out.values[(p, j)] - self.means[p]) / self.sds[p];
            }
        }
        out
    }

    pub fn apply(&self, d: &SignalDataset) -> SignalDataset {
        SignalDataset {
            sensor_ids: d.sensor_ids.clone(),
            time_grid: d.time_grid.clone(),
            systems: d.systems.iter().map(|r| self.apply_record(r)).collect(),
            truncated_at: d.truncated_at,
        }
    }
}
