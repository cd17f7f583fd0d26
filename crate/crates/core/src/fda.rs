//! Functional principal component analysis.
//!
//! Curves live on a discrete grid with trapezoid quadrature weights `W`. The
//! covariance operator is discretized as `W^{1/2} C W^{1/2}`; its eigenvectors
//! are rescaled by `W^{-1/2}` so eigenfunctions are orthonormal in the
//! quadrature inner product `<f, g> = sum_j w_j f_j g_j`.
//!
//! Multivariate decompositions concatenate sensor blocks: a basis with
//! `blocks = B` over a grid of `G` points has `B * G` entries per function and
//! the per-block trapezoid weights repeated `B` times.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;
use core::ops::Range;

use nalgebra::DMatrix;
#[allow(unused_imports)] // inherent float methods shadow it when std is linked
use num_traits::Float;

use crate::linalg::{sym_eigen_desc, trapezoid_weights, Standardizer};
use crate::signal::SignalDataset;
use crate::{Error, Result, Warning};

/// Beyond this many quadrature nodes, decompositions with fewer curves than
/// nodes are computed through the `n x n` Gram matrix instead.
const PRIMAL_LIMIT: usize = 300;

#[derive(Debug, Clone, PartialEq)]
pub struct EigenBasis {
    /// Time grid of one block.
    pub grid: Vec<f64>,
    /// Number of concatenated sensor blocks (1 for a univariate basis).
    pub blocks: usize,
    pub mean: Vec<f64>,
    /// `M x (blocks * G)`; row `m` is the `m`-th eigenfunction.
    pub eigenfunctions: DMatrix<f64>,
    pub eigenvalues: Vec<f64>,
    pub noise_var: f64,
    pub quadrature_weights: Vec<f64>,
}

impl EigenBasis {
    pub fn n_components(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn len(&self) -> usize {
        self.mean.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mean.is_empty()
    }

    /// Quadrature inner product of two functions on this basis' nodes.
    pub fn inner(&self, f: &[f64], g: &[f64]) -> f64 {
        self.quadrature_weights
            .iter()
            .zip(f.iter().zip(g))
            .map(|(w, (a, b))| w * a * b)
            .sum()
    }

    /// Largest deviation of the Gram matrix of eigenfunctions from identity.
    pub fn orthonormality_error(&self) -> f64 {
        let m = self.n_components();
        let mut worst: f64 = 0.0;
        for a in 0..m {
            let fa: Vec<f64> = self.eigenfunctions.row(a).iter().cloned().collect();
            for b in a..m {
                let fb: Vec<f64> = self.eigenfunctions.row(b).iter().cloned().collect();
                let target = if a == b { 1.0 } else { 0.0 };
                worst = worst.max((self.inner(&fa, &fb) - target).abs());
            }
        }
        worst
    }

    /// Mean plus the first `q` components weighted by `scores`.
    pub fn reconstruct(&self, scores: &[f64]) -> Vec<f64> {
        let mut out = self.mean.clone();
        for (m, s) in scores.iter().enumerate() {
            for (j, o) in out.iter_mut().enumerate() {
                *o += s * self.eigenfunctions[(m, j)];
            }
        }
        out
    }

    fn mean_grid_step(&self) -> f64 {
        let g = self.grid.len();
        if g < 2 {
            return 1.0;
        }
        (self.grid[g - 1] - self.grid[0]) / (g - 1) as f64
    }
}

/// How the measurement-error variance is obtained.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum NoiseModel {
    /// Raw covariance diagonal against a local-linear smooth of the
    /// off-diagonal band.
    Estimate,
    Fixed(f64),
}

/// Which covariance surface is decomposed in a univariate FPCA.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum CovarianceEstimate {
    /// Sample covariance minus `noise_var` on the diagonal.
    Raw,
    /// Local-linear smooth of the off-diagonal sample covariance. The
    /// half-width is `bandwidth` times the grid span, at least two grid steps.
    Smoothed { bandwidth: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FpcaOptions {
    pub noise: NoiseModel,
    pub covariance: CovarianceEstimate,
    /// Extra cap on the number of components kept (after `min(n - 1, L)`).
    pub max_components: Option<usize>,
}

impl Default for FpcaOptions {
    fn default() -> Self {
        Self {
            noise: NoiseModel::Estimate,
            covariance: CovarianceEstimate::Smoothed { bandwidth: 0.35 },
            max_components: None,
        }
    }
}

impl FpcaOptions {
    /// Sample covariance with no noise correction.
    pub fn raw() -> Self {
        Self { noise: NoiseModel::Fixed(0.0), covariance: CovarianceEstimate::Raw, max_components: None }
    }
}

/// Univariate FPCA of `n x G` curves.
pub fn fit_fpca(curves: &DMatrix<f64>, grid: &[f64], opts: &FpcaOptions) -> Result<EigenBasis> {
    if curves.ncols() != grid.len() {
        return Err(Error::Dimension(format!(
            "curves have {} columns, grid has {} points",
            curves.ncols(),
            grid.len()
        )));
    }
    let weights = trapezoid_weights(grid);
    fit_weighted(curves, grid, 1, weights, opts)
}

fn fit_weighted(
    curves: &DMatrix<f64>,
    grid: &[f64],
    blocks: usize,
    weights: Vec<f64>,
    opts: &FpcaOptions,
) -> Result<EigenBasis> {
    let n = curves.nrows();
    let len = curves.ncols();
    if n < 2 {
        return Err(Error::TooFewSamples(format!("FPCA needs at least 2 curves, got {n}")));
    }
    if curves.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("curves".into()));
    }
    let mean: Vec<f64> = (0..len).map(|j| curves.column(j).sum() / n as f64).collect();
    let centered = DMatrix::from_fn(n, len, |i, j| curves[(i, j)] - mean[j]);
    let mut cap = (n - 1).min(len);
    if let Some(m) = opts.max_components {
        cap = cap.min(m.max(1));
    }
    let noise_var = match opts.noise {
        NoiseModel::Fixed(v) => {
            if !(v >= 0.0) {
                return Err(Error::InvalidParameter(format!("noise variance {v}")));
            }
            v
        }
        NoiseModel::Estimate if blocks == 1 => estimate_noise(&centered, grid),
        NoiseModel::Estimate => 0.0,
    };

    let denom = (n - 1) as f64;
    let sqrt_w: Vec<f64> = weights.iter().map(|w| w.sqrt()).collect();

    let smoothing = match opts.covariance {
        CovarianceEstimate::Smoothed { bandwidth } if blocks == 1 => {
            if !(bandwidth > 0.0) {
                return Err(Error::InvalidParameter(format!("covariance bandwidth {bandwidth}")));
            }
            Some(bandwidth)
        }
        _ => None,
    };
    let (mut values, mut functions) = if len <= PRIMAL_LIMIT || len <= n || smoothing.is_some() || noise_var > 0.0 {
        let raw = (centered.transpose() * &centered) / denom;
        // Covariance of the smooth part, then W^{1/2} C W^{1/2}.
        let cov = match smoothing {
            Some(bw) => smooth_covariance(&raw, grid, bw),
            None => {
                let mut c = raw;
                for j in 0..len {
                    c[(j, j)] -= noise_var;
                }
                c
            }
        };
        let a = DMatrix::from_fn(len, len, |i, j| cov[(i, j)] * sqrt_w[i] * sqrt_w[j]);
        let a = (&a + a.transpose()) * 0.5;
        let (vals, vecs) = sym_eigen_desc(a);
        let funcs = DMatrix::from_fn(cap, len, |m, j| vecs[(j, m)] / sqrt_w[j]);
        (vals[..cap].to_vec(), funcs)
    } else {
        // Dual problem through the n x n Gram matrix X W X^T / (n - 1).
        let xw = DMatrix::from_fn(n, len, |i, j| centered[(i, j)] * sqrt_w[j]);
        let b = (&xw * xw.transpose()) / denom;
        let b = (&b + b.transpose()) * 0.5;
        let (vals, vecs) = sym_eigen_desc(b);
        let top = vals.first().cloned().unwrap_or(0.0).max(0.0);
        let keep = vals
            .iter()
            .take(cap)
            .take_while(|&&v| top > 0.0 && v > 1e-12 * top)
            .count();
        let mut funcs = DMatrix::zeros(keep, len);
        for m in 0..keep {
            let scale = 1.0 / (denom * vals[m]).sqrt();
            for j in 0..len {
                let mut acc = 0.0;
                for i in 0..n {
                    acc += centered[(i, j)] * vecs[(i, m)];
                }
                funcs[(m, j)] = acc * scale;
            }
        }
        (vals[..keep].to_vec(), funcs)
    };

    for v in values.iter_mut() {
        if *v < 0.0 {
            *v = 0.0;
        }
    }
    // Deterministic sign: the entry of largest magnitude is positive.
    for m in 0..functions.nrows() {
        let mut best = 0usize;
        for j in 1..len {
            if functions[(m, j)].abs() > functions[(m, best)].abs() {
                best = j;
            }
        }
        if functions[(m, best)] < 0.0 {
            for j in 0..len {
                functions[(m, j)] = -functions[(m, j)];
            }
        }
    }
    // Keep ordering exact after clamping.
    for m in 1..values.len() {
        if values[m] > values[m - 1] {
            values[m] = values[m - 1];
        }
    }

    Ok(EigenBasis {
        grid: grid.to_vec(),
        blocks,
        mean,
        eigenfunctions: functions,
        eigenvalues: values,
        noise_var,
        quadrature_weights: weights,
    })
}

/// Local-linear smooth of a covariance surface from its off-diagonal
/// entries, with product Epanechnikov weights.
fn smooth_covariance(raw: &DMatrix<f64>, grid: &[f64], bandwidth: f64) -> DMatrix<f64> {
    let g = grid.len();
    if g < 3 {
        return raw.clone();
    }
    let span = grid[g - 1] - grid[0];
    let step = span / (g - 1) as f64;
    let h = (bandwidth * span).max(2.0 * step) * (1.0 + 1e-9);
    let kernel = |d: f64| {
        let u = d / h;
        if u.abs() < 1.0 {
            1.0 - u * u
        } else {
            0.0
        }
    };
    let window = |j: usize| {
        let lo = grid.partition_point(|&t| t < grid[j] - h);
        let hi = grid.partition_point(|&t| t <= grid[j] + h);
        lo..hi
    };
    let mut out = DMatrix::zeros(g, g);
    for a in 0..g {
        for b in a..g {
            let mut ata = nalgebra::Matrix3::<f64>::zeros();
            let mut atb = nalgebra::Vector3::<f64>::zeros();
            for s in window(a) {
                let ws = kernel(grid[s] - grid[a]);
                for u in window(b) {
                    if s == u {
                        continue;
                    }
                    let w = ws * kernel(grid[u] - grid[b]);
                    if w == 0.0 {
                        continue;
                    }
                    let r = nalgebra::Vector3::new(1.0, (grid[s] - grid[a]) / h, (grid[u] - grid[b]) / h);
                    ata += r * r.transpose() * w;
                    atb += r * (w * raw[(s, u)]);
                }
            }
            let v = match ata.cholesky() {
                Some(ch) => ch.solve(&atb)[0],
                None => raw[(a, b)],
            };
            out[(a, b)] = v;
            out[(b, a)] = v;
        }
    }
    out
}

/// Measurement-error variance: average excess of the raw covariance diagonal
/// over a local-linear surface fitted to nearby off-diagonal entries, taken
/// over the middle half of the domain and floored at zero.
fn estimate_noise(centered: &DMatrix<f64>, grid: &[f64]) -> f64 {
    let n = centered.nrows();
    let g = grid.len();
    if g < 5 || n < 2 {
        return 0.0;
    }
    let cov = (centered.transpose() * centered) / (n - 1) as f64;
    let h = (g / 20).max(2);
    let lo = g / 4;
    let hi = (3 * g).div_ceil(4).max(lo + 1).min(g);
    let mut total = 0.0;
    let mut count = 0usize;
    for j in lo..hi {
        // Local plane c0 + c1 (s - t_j) + c2 (u - t_j) on the band around (j, j).
        let a0 = j.saturating_sub(h);
        let a1 = (j + h).min(g - 1);
        let mut ata = nalgebra::Matrix3::<f64>::zeros();
        let mut atb = nalgebra::Vector3::<f64>::zeros();
        let span = (grid[a1] - grid[a0]).max(f64::MIN_POSITIVE);
        for a in a0..=a1 {
            for b in a0..=a1 {
                if a == b {
                    continue;
                }
                let ds = (grid[a] - grid[j]) / span;
                let du = (grid[b] - grid[j]) / span;
                let r = nalgebra::Vector3::new(1.0, ds, du);
                ata += r * r.transpose();
                atb += r * cov[(a, b)];
            }
        }
        if let Some(ch) = ata.cholesky() {
            let c = ch.solve(&atb);
            total += cov[(j, j)] - c[0];
            count += 1;
        }
    }
    if count == 0 {
        return 0.0;
    }
    (total / count as f64).max(0.0)
}

/// Smallest `q` whose leading eigenvalues explain at least `threshold` of the
/// total variance.
pub fn select_fve(eigenvalues: &[f64], threshold: f64) -> Result<usize> {
    let total: f64 = eigenvalues.iter().map(|v| v.max(0.0)).sum();
    if !(total > 0.0) {
        return Err(Error::NoVariance);
    }
    let mut acc = 0.0;
    for (m, v) in eigenvalues.iter().enumerate() {
        acc += v.max(0.0);
        if acc / total >= threshold - 1e-12 {
            return Ok(m + 1);
        }
    }
    Ok(eigenvalues.len())
}

/// Plain quadrature projections `<s - mu, phi_m>` for every component.
pub fn projection_scores(basis: &EigenBasis, curves: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    check_len(basis, curves)?;
    let m = basis.n_components();
    let w = &basis.quadrature_weights;
    let n = curves.nrows();
    let mut out = DMatrix::zeros(n, m);
    for i in 0..n {
        for c in 0..m {
            let mut acc = 0.0;
            for j in 0..basis.len() {
                acc += w[j] * (curves[(i, j)] - basis.mean[j]) * basis.eigenfunctions[(c, j)];
            }
            out[(i, c)] = acc;
        }
    }
    Ok(out)
}

fn check_len(basis: &EigenBasis, curves: &DMatrix<f64>) -> Result<()> {
    if curves.ncols() != basis.len() {
        return Err(Error::CurveTooShort { got: curves.ncols(), need: basis.len() });
    }
    if curves.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("curves".into()));
    }
    Ok(())
}

/// Conditional-expectation (PACE) scores.
///
/// With white measurement noise of variance `noise_var` per grid point and
/// eigenfunctions orthonormal under the quadrature weights, the posterior mean
/// of each score is the quadrature projection shrunk by
/// `lambda_m / (lambda_m + noise_var * h)`, `h` being the mean grid step. With
/// zero noise the scores are exactly the projections.
pub fn pace_scores(basis: &EigenBasis, curves: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let mut scores = projection_scores(basis, curves)?;
    let noise = basis.noise_var * basis.mean_grid_step();
    if noise > 0.0 {
        for c in 0..basis.n_components() {
            let lam = basis.eigenvalues[c];
            let shrink = lam / (lam + noise);
            for i in 0..scores.nrows() {
                scores[(i, c)] *= shrink;
            }
        }
    }
    Ok(scores)
}

/// Cluster-wise bases for every sensor.
#[derive(Debug, Clone, PartialEq)]
pub struct ClusterBases {
    /// `bases[p][c]`: basis of effective cluster `c` of sensor `p`.
    pub bases: Vec<Vec<EigenBasis>>,
    /// `label_map[p][k]`: effective cluster used for raw label `k` of sensor `p`.
    pub label_map: Vec<Vec<usize>>,
    /// Retained components per sensor.
    pub retained: Vec<usize>,
}

impl ClusterBases {
    pub fn basis_for(&self, sensor: usize, label: usize) -> &EigenBasis {
        &self.bases[sensor][self.label_map[sensor][label]]
    }
}

/// Standardized score features grouped by sensor.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    pub x: DMatrix<f64>,
    pub group_offsets: Vec<Range<usize>>,
    pub standardizer: Standardizer,
}

impl FeatureMatrix {
    /// Wraps an already prepared design; groups are consecutive column blocks.
    pub fn from_raw(x: DMatrix<f64>, group_sizes: &[usize]) -> Result<Self> {
        let total: usize = group_sizes.iter().sum();
        if total != x.ncols() {
            return Err(Error::Dimension(format!(
                "group sizes sum to {total}, design has {} columns",
                x.ncols()
            )));
        }
        let mut offsets = Vec::with_capacity(group_sizes.len());
        let mut start = 0;
        for &q in group_sizes {
            offsets.push(start..start + q);
            start += q;
        }
        let d = x.ncols();
        Ok(Self { x, group_offsets: offsets, standardizer: Standardizer::identity(d) })
    }

    pub fn n_rows(&self) -> usize {
        self.x.nrows()
    }

    pub fn n_groups(&self) -> usize {
        self.group_offsets.len()
    }

    pub fn group_sizes(&self) -> Vec<usize> {
        self.group_offsets.iter().map(|r| r.len()).collect()
    }

    /// Subset of rows, keeping groups and standardization constants.
    pub fn select_rows(&self, rows: &[usize]) -> Self {
        Self {
            x: DMatrix::from_fn(rows.len(), self.x.ncols(), |i, j| self.x[(rows[i], j)]),
            group_offsets: self.group_offsets.clone(),
            standardizer: self.standardizer.clone(),
        }
    }
}

/// Result of cluster-wise FPCA.
#[derive(Debug, Clone, PartialEq)]
pub struct CafpcaFit {
    pub bases: ClusterBases,
    pub features: FeatureMatrix,
    pub warnings: Vec<Warning>,
}

/// Cluster-wise FPCA.
///
/// `labels[i][p]` is the cluster of system `i` for sensor `p`. Each sensor's
/// systems are split by label and FPCA is fitted per cell; the sensor keeps
/// `q_p = max_k q_p^k` components (capped by the smallest cell) and every
/// system is scored against its own cell's basis.
pub fn fit_cafpca(
    dataset: &SignalDataset,
    labels: &[Vec<usize>],
    k: usize,
    fve: f64,
    opts: &FpcaOptions,
) -> Result<CafpcaFit> {
    let n = dataset.n_systems();
    let p_count = dataset.n_sensors();
    if labels.len() != n || labels.iter().any(|l| l.len() != p_count) {
        return Err(Error::Dimension("labels must be N x P".into()));
    }
    if k == 0 || labels.iter().flatten().any(|&l| l >= k) {
        return Err(Error::InvalidParameter(format!("labels must lie in [0, {k})")));
    }
    let grid = &dataset.time_grid;
    let mut warnings = Vec::new();
    let mut all_bases = Vec::with_capacity(p_count);
    let mut label_maps = Vec::with_capacity(p_count);
    let mut retained = Vec::with_capacity(p_count);
    let mut raw_blocks: Vec<DMatrix<f64>> = Vec::with_capacity(p_count);

    for p in 0..p_count {
        let curves = dataset.sensor_curves(p)?;
        let sensor_labels: Vec<usize> = labels.iter().map(|l| l[p]).collect();
        let (members, label_map) = merge_small_cells(&curves, &sensor_labels, k, p, &mut warnings);

        let mut bases = Vec::with_capacity(members.len());
        let mut wanted = 1usize;
        let mut cap = usize::MAX;
        for cell in &members {
            let sub = DMatrix::from_fn(cell.len(), curves.ncols(), |i, j| curves[(cell[i], j)]);
            let basis = fit_fpca(&sub, grid, opts)?;
            let q = match select_fve(&basis.eigenvalues, fve) {
                Ok(q) => q,
                Err(Error::NoVariance) => 1,
                Err(e) => return Err(e),
            };
            wanted = wanted.max(q);
            cap = cap.min(basis.n_components());
            bases.push(basis);
        }
        let q_p = wanted.min(cap);
        if q_p == 0 {
            return Err(Error::TooFewSamples(format!("sensor {p} has a cell without components")));
        }
        if q_p < wanted {
            warnings.push(Warning::CappedComponents { sensor: p, wanted, kept: q_p });
        }

        let mut block = DMatrix::zeros(n, q_p);
        for (c, cell) in members.iter().enumerate() {
            let sub = DMatrix::from_fn(cell.len(), curves.ncols(), |i, j| curves[(cell[i], j)]);
            let scores = pace_scores(&bases[c], &sub)?;
            for (r, &i) in cell.iter().enumerate() {
                for m in 0..q_p {
                    block[(i, m)] = scores[(r, m)];
                }
            }
        }
        raw_blocks.push(block);
        all_bases.push(bases);
        label_maps.push(label_map);
        retained.push(q_p);
    }

    let d: usize = retained.iter().sum();
    let mut raw = DMatrix::zeros(n, d);
    let mut offsets = Vec::with_capacity(p_count);
    let mut col = 0;
    for (p, block) in raw_blocks.iter().enumerate() {
        for m in 0..retained[p] {
            for i in 0..n {
                raw[(i, col + m)] = block[(i, m)];
            }
        }
        offsets.push(col..col + retained[p]);
        col += retained[p];
    }
    let (standardizer, constant) = Standardizer::fit(&raw);
    for c in constant {
        warnings.push(Warning::ConstantFeature { column: c });
    }
    let x = standardizer.apply(&raw);
    Ok(CafpcaFit {
        bases: ClusterBases { bases: all_bases, label_map: label_maps, retained },
        features: FeatureMatrix { x, group_offsets: offsets, standardizer },
        warnings,
    })
}

/// Groups systems by label and folds cells with fewer than two members into
/// the cluster whose mean curve is closest. Returns the member lists of the
/// surviving cells and the raw-label to cell map.
fn merge_small_cells(
    curves: &DMatrix<f64>,
    labels: &[usize],
    k: usize,
    sensor: usize,
    warnings: &mut Vec<Warning>,
) -> (Vec<Vec<usize>>, Vec<usize>) {
    let mut groups: Vec<Vec<usize>> = vec![Vec::new(); k];
    for (i, &l) in labels.iter().enumerate() {
        groups[l].push(i);
    }
    let g = curves.ncols();
    let mean_of = |members: &[usize]| -> Vec<f64> {
        (0..g)
            .map(|j| members.iter().map(|&i| curves[(i, j)]).sum::<f64>() / members.len() as f64)
            .collect()
    };
    // target[k] = raw label whose members absorbed cluster k
    let mut target: Vec<usize> = (0..k).collect();
    loop {
        let small = (0..k).find(|&c| groups[c].len() == 1);
        let Some(c) = small else { break };
        let here = mean_of(&groups[c]);
        let mut best: Option<(usize, f64)> = None;
        for o in 0..k {
            if o == c || groups[o].is_empty() {
                continue;
            }
            let m = mean_of(&groups[o]);
            let d: f64 = here.iter().zip(&m).map(|(a, b)| (a - b) * (a - b)).sum();
            if best.is_none_or(|(_, bd)| d < bd) {
                best = Some((o, d));
            }
        }
        let Some((into, _)) = best else { break };
        let moved = core::mem::take(&mut groups[c]);
        groups[into].extend(moved);
        groups[into].sort_unstable();
        for t in target.iter_mut() {
            if *t == c {
                *t = into;
            }
        }
        warnings.push(Warning::MergedCluster { sensor, from: c, into });
    }
    let mut cell_of_raw = vec![usize::MAX; k];
    let mut members = Vec::new();
    for c in 0..k {
        if !groups[c].is_empty() {
            cell_of_raw[c] = members.len();
            members.push(groups[c].clone());
        }
    }
    // Empty raw labels (never populated) map to the largest cell.
    let largest = (0..members.len()).max_by_key(|&c| members[c].len()).unwrap_or(0);
    let label_map = (0..k)
        .map(|c| {
            let t = target[c];
            if cell_of_raw[t] != usize::MAX {
                cell_of_raw[t]
            } else {
                largest
            }
        })
        .collect();
    (members, label_map)
}

/// Standardized multivariate scores.
#[derive(Debug, Clone, PartialEq)]
pub struct MfpcaScores {
    /// `n x H` standardized scores.
    pub zeta: DMatrix<f64>,
    pub h: usize,
    pub standardizer: Standardizer,
}

/// Concatenates per-sensor `n x G` curve blocks row-wise.
pub fn concat_blocks(blocks: &[DMatrix<f64>]) -> Result<DMatrix<f64>> {
    let Some(first) = blocks.first() else {
        return Err(Error::InvalidParameter("empty sensor subset".into()));
    };
    let n = first.nrows();
    let g = first.ncols();
    if blocks.iter().any(|b| b.nrows() != n || b.ncols() != g) {
        return Err(Error::Dimension("sensor blocks differ in shape".into()));
    }
    Ok(DMatrix::from_fn(n, g * blocks.len(), |i, j| blocks[j / g][(i, j % g)]))
}

/// Multivariate FPCA on sensor-concatenated curves. Scores are quadrature
/// projections standardized to zero mean and unit variance over the fitting
/// sample; `H` follows the FVE rule.
pub fn fit_mfpca(
    blocks: &[DMatrix<f64>],
    grid: &[f64],
    fve: f64,
) -> Result<(EigenBasis, MfpcaScores)> {
    let stacked = concat_blocks(blocks)?;
    if grid.len() != blocks[0].ncols() {
        return Err(Error::Dimension("grid does not match curve length".into()));
    }
    let w1 = trapezoid_weights(grid);
    let weights: Vec<f64> = (0..blocks.len()).flat_map(|_| w1.iter().cloned()).collect();
    let opts = FpcaOptions::raw();
    let basis = fit_weighted(&stacked, grid, blocks.len(), weights, &opts)?;
    let h = select_fve(&basis.eigenvalues, fve)?;
    let raw = projection_scores(&basis, &stacked)?;
    let raw = raw.columns(0, h).into_owned();
    let (standardizer, _) = Standardizer::fit(&raw);
    let zeta = standardizer.apply(&raw);
    Ok((basis, MfpcaScores { zeta, h, standardizer }))
}

/// Scores new multivariate curves against a fitted basis and standardizes
/// them with the training constants. Each block may be longer than the basis
/// grid; only its prefix is used.
pub fn project_scores(
    basis: &EigenBasis,
    standardizer: &Standardizer,
    blocks: &[Vec<f64>],
) -> Result<Vec<f64>> {
    let g = basis.grid.len();
    if blocks.len() != basis.blocks {
        return Err(Error::Dimension(format!(
            "expected {} sensor blocks, got {}",
            basis.blocks,
            blocks.len()
        )));
    }
    let mut row = Vec::with_capacity(g * blocks.len());
    for b in blocks {
        if b.len() < g {
            return Err(Error::CurveTooShort { got: b.len(), need: g });
        }
        row.extend_from_slice(&b[..g]);
    }
    let m = DMatrix::from_row_slice(1, row.len(), &row);
    let h = standardizer.means.len();
    let raw = pace_scores(basis, &m)?;
    let raw: Vec<f64> = (0..h).map(|c| raw[(0, c)]).collect();
    Ok(standardizer.apply_row(&raw))
}
