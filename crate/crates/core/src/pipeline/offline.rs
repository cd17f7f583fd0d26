use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use nalgebra::DMatrix;

use crate::cluster::{kmeans, KmeansModel};
use crate::fda::{fit_cafpca, fit_fpca, pace_scores, select_fve, CafpcaFit, EigenBasis, FpcaOptions};
use crate::linalg::Standardizer;
use crate::mixture::{fit_em, EmConfig, FitResult, InitMode, PenaltyConfig};
use crate::signal::{truncate_to_min_ttf, SignalDataset, StandardizedTtf, SystemRecord};
use crate::{Error, Result, Warning};

/// How EM responsibilities are initialized.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OfflineInit {
    /// Flat Dirichlet responsibilities.
    Random,
    /// k-means on the pooled, standardized per-sensor FPC scores.
    PooledKmeans,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OfflineConfig {
    pub k: usize,
    pub fve: f64,
    pub kmeans_restarts: usize,
    pub fpca: FpcaOptions,
    pub init: OfflineInit,
    pub em: EmConfig,
    /// Independent EM starts; the lowest final objective wins.
    pub em_starts: usize,
    pub seed: u64,
}

impl Default for OfflineConfig {
    fn default() -> Self {
        Self {
            k: 2,
            fve: 0.95,
            kmeans_restarts: 10,
            fpca: FpcaOptions::default(),
            init: OfflineInit::PooledKmeans,
            em: EmConfig::default(),
            em_starts: 1,
            seed: 0,
        }
    }
}

impl OfflineConfig {
    pub fn validate(&self) -> Result<()> {
        if self.k == 0 {
            return Err(Error::InvalidParameter("k must be positive".into()));
        }
        if !(self.fve > 0.0 && self.fve <= 1.0) {
            return Err(Error::InvalidParameter("fve must lie in (0, 1]".into()));
        }
        if self.em_starts == 0 {
            return Err(Error::InvalidParameter("need at least one EM start".into()));
        }
        self.em.validate()
    }
}

/// Plain FPCA and k-means labels for one sensor.
#[derive(Debug, Clone, PartialEq)]
pub struct SensorClustering {
    pub basis: EigenBasis,
    /// Components used as clustering features.
    pub q: usize,
    pub kmeans: KmeansModel,
}

impl SensorClustering {
    fn scores(&self, curves: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        Ok(pace_scores(&self.basis, curves)?.columns(0, self.q).into_owned())
    }

    /// Cluster of a single curve on the basis grid.
    pub fn assign(&self, curve: &[f64]) -> Result<usize> {
        let m = DMatrix::from_row_slice(1, curve.len(), curve);
        let s = self.scores(&m)?;
        let row: Vec<f64> = s.row(0).iter().cloned().collect();
        Ok(self.kmeans.assign(&row))
    }
}

/// Everything the offline fit needs that does not depend on the penalty.
#[derive(Debug, Clone, PartialEq)]
pub struct OfflineFeatures {
    pub truncated: SignalDataset,
    pub clusterings: Vec<SensorClustering>,
    /// `labels[i][p]`
    pub sensor_labels: Vec<Vec<usize>>,
    pub cafpca: CafpcaFit,
    pub ttf: StandardizedTtf,
    /// Initial mode labels for `OfflineInit::PooledKmeans`.
    pub pooled_labels: Option<Vec<usize>>,
}

fn sensor_seed(seed: u64, p: usize) -> u64 {
    seed ^ (0x9e37_79b9_7f4a_7c15u64.wrapping_mul(p as u64 + 1))
}

/// Truncation, per-sensor clustering, cluster-wise FPCA and the response.
pub fn extract_features(train: &SignalDataset, cfg: &OfflineConfig) -> Result<OfflineFeatures> {
    cfg.validate()?;
    let truncated = truncate_to_min_ttf(train)?;
    let n = truncated.n_systems();
    let p_count = truncated.n_sensors();
    if n < cfg.k {
        return Err(Error::TooFewSamples(format!("{n} systems for {} modes", cfg.k)));
    }
    let grid = &truncated.time_grid;
    let mut clusterings = Vec::with_capacity(p_count);
    let mut labels = vec![vec![0usize; p_count]; n];
    let mut pooled_blocks = Vec::new();
    for p in 0..p_count {
        let curves = truncated.sensor_curves(p)?;
        let basis = fit_fpca(&curves, grid, &cfg.fpca)?;
        let q = match select_fve(&basis.eigenvalues, cfg.fve) {
            Ok(q) => q,
            Err(Error::NoVariance) => 1,
            Err(e) => return Err(e),
        }
        .min(basis.n_components().max(1));
        let mut c = SensorClustering {
            basis,
            q,
            kmeans: KmeansModel {
                centroids: DMatrix::zeros(0, 0),
                labels: Vec::new(),
                inertia: 0.0,
                seed: 0,
                inertia_trace: Vec::new(),
            },
        };
        let scores = c.scores(&curves)?;
        c.kmeans = kmeans(&scores, cfg.k, sensor_seed(cfg.seed, p), cfg.kmeans_restarts)?;
        for (i, l) in c.kmeans.labels.iter().enumerate() {
            labels[i][p] = *l;
        }
        if cfg.init == OfflineInit::PooledKmeans {
            pooled_blocks.push(scores);
        }
        clusterings.push(c);
    }
    let cafpca = fit_cafpca(&truncated, &labels, cfg.k, cfg.fve, &cfg.fpca)?;
    let ttf = StandardizedTtf::from_ttfs(&truncated.ttfs()?)?;
    let pooled_labels = if cfg.init == OfflineInit::PooledKmeans {
        let d: usize = pooled_blocks.iter().map(|b| b.ncols()).sum();
        let mut pooled = DMatrix::zeros(n, d);
        let mut col = 0;
        for b in &pooled_blocks {
            pooled.columns_mut(col, b.ncols()).copy_from(b);
            col += b.ncols();
        }
        let (st, _) = Standardizer::fit(&pooled);
        let z = st.apply(&pooled);
        Some(kmeans(&z, cfg.k, cfg.seed, cfg.kmeans_restarts)?.labels)
    } else {
        None
    };
    Ok(OfflineFeatures { truncated, clusterings, sensor_labels: labels, cafpca, ttf, pooled_labels })
}

impl OfflineFeatures {
    /// Standardized design row for a unit outside the training sample. The
    /// unit must be observed through the truncated grid.
    pub fn transform(&self, record: &SystemRecord) -> Result<Vec<f64>> {
        let g = self.truncated.grid_len();
        if record.observed() < g {
            return Err(Error::CurveTooShort { got: record.observed(), need: g });
        }
        let mut raw = Vec::with_capacity(self.cafpca.features.x.ncols());
        for (p, c) in self.clusterings.iter().enumerate() {
            let curve: Vec<f64> = (0..g).map(|j| record.values[(p, j)]).collect();
            let label = c.assign(&curve)?;
            let basis = self.cafpca.bases.basis_for(p, label);
            let m = DMatrix::from_row_slice(1, g, &curve);
            let s = pace_scores(basis, &m)?;
            for col in 0..self.cafpca.bases.retained[p] {
                raw.push(s[(0, col)]);
            }
        }
        Ok(self.cafpca.features.standardizer.apply_row(&raw))
    }

    pub fn group_sizes(&self) -> Vec<usize> {
        self.cafpca.features.group_sizes()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OfflineModel {
    pub features: OfflineFeatures,
    pub fit: FitResult,
    pub penalty: PenaltyConfig,
    /// Selected sensor indices per mode.
    pub selected_sensors: Vec<Vec<usize>>,
    /// Hard mode per training system.
    pub labels: Vec<usize>,
    pub warnings: Vec<Warning>,
}

impl OfflineModel {
    pub fn union_sensors(&self) -> Vec<usize> {
        self.fit.selection.union()
    }

    /// Prior-weighted mixture prediction of standardized `ln TTF`.
    pub fn predict_standardized(&self, record: &SystemRecord) -> Result<f64> {
        let x = self.features.transform(record)?;
        Ok(self.fit.params.predict_mean(&x))
    }
}

/// Runs EM on precomputed features.
pub fn fit_on_features(
    features: OfflineFeatures,
    cfg: &OfflineConfig,
    lambda: f64,
    alpha: f64,
) -> Result<OfflineModel> {
    cfg.validate()?;
    let penalty = PenaltyConfig { lambda, alpha, group_sizes: features.group_sizes() };
    let x = &features.cafpca.features;
    let y = &features.ttf.y;
    let mut em = cfg.em.clone();
    let labels = match cfg.init {
        OfflineInit::Random => {
            em.init_mode = InitMode::RandomResponsibilities;
            None
        }
        OfflineInit::PooledKmeans => {
            em.init_mode = InitMode::LabelsProvided;
            features.pooled_labels.as_deref()
        }
    };
    let mut best: Option<FitResult> = None;
    for start in 0..cfg.em_starts {
        em.seed = cfg.em.seed.wrapping_add(start as u64);
        let fit = fit_em(x, y, cfg.k, &penalty, &em, labels)?;
        if best.as_ref().is_none_or(|b| fit.objective() < b.objective()) {
            best = Some(fit);
        }
        if cfg.init == OfflineInit::PooledKmeans {
            // Deterministic start; more starts would repeat it.
            break;
        }
    }
    let fit = best.expect("at least one EM start");
    let selected_sensors = (0..cfg.k).map(|k| fit.selection.selected(k)).collect();
    let mut warnings = features.cafpca.warnings.clone();
    warnings.extend(fit.warnings.iter().cloned());
    Ok(OfflineModel {
        labels: fit.hard_labels.clone(),
        selected_sensors,
        penalty,
        fit,
        features,
        warnings,
    })
}

/// Offline workflow: sensor-wise clustering, cluster-wise FPCA, penalized
/// mixture regression and sensor selection.
pub fn offline_fit(
    train: &SignalDataset,
    cfg: &OfflineConfig,
    lambda: f64,
    alpha: f64,
) -> Result<OfflineModel> {
    let features = extract_features(train, cfg)?;
    fit_on_features(features, cfg, lambda, alpha)
}
