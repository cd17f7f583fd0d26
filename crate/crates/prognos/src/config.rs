//! TOML run configuration. Every section and key is optional; unknown keys
//! are rejected. Command-line flags override the file.

use std::path::{Path, PathBuf};

use prognos_core::cluster::KnnConfig;
use prognos_core::fda::{CovarianceEstimate, FpcaOptions, NoiseModel};
use prognos_core::mixture::EmConfig;
use prognos_core::pipeline::cv::{linspace, CvConfig};
use prognos_core::pipeline::{LassoConfig, OfflineConfig, OfflineInit, OnlineConfig, TrainSmoothing};
use prognos_core::signal::SmoothingConfig;
use prognos_core::sim::{Coupling, SignScope, SimConfig};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::cmapss::{IngestOptions, DEFAULT_EXCLUDE};
use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub k: usize,
    pub simulation: SimulationSection,
    pub offline: OfflineSection,
    pub cv: CvSection,
    pub online: OnlineSection,
    pub cmapss: CmapssSection,
    pub paths: PathsSection,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            k: 2,
            simulation: SimulationSection::default(),
            offline: OfflineSection::default(),
            cv: CvSection::default(),
            online: OnlineSection::default(),
            cmapss: CmapssSection::default(),
            paths: PathsSection::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CouplingName {
    Printed,
    Latent,
    Correlated,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SignScopeName {
    PerSystem,
    PerModeSensor,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulationSection {
    pub mu: Vec<f64>,
    pub threshold: Vec<f64>,
    pub informative: Vec<Vec<usize>>,
    pub n_sensors: usize,
    pub n_per_mode: usize,
    pub train_per_mode: usize,
    pub snr_informative: [f64; 2],
    pub snr_noninformative: [f64; 2],
    pub rho_informative: [f64; 2],
    pub rho_noninformative: [f64; 2],
    pub theta_sd: f64,
    pub sensor_theta_sd: f64,
    pub grid_points: usize,
    pub grid_start: f64,
    pub grid_end: f64,
    pub coupling: CouplingName,
    pub sign_scope: SignScopeName,
}

impl Default for SimulationSection {
    fn default() -> Self {
        let d = SimConfig::default();
        Self {
            mu: d.mu,
            threshold: d.threshold,
            informative: d.informative,
            n_sensors: d.n_sensors,
            n_per_mode: d.n_per_mode,
            train_per_mode: d.train_per_mode,
            snr_informative: [d.snr_informative.0, d.snr_informative.1],
            snr_noninformative: [d.snr_noninformative.0, d.snr_noninformative.1],
            rho_informative: [d.rho_informative.0, d.rho_informative.1],
            rho_noninformative: [d.rho_noninformative.0, d.rho_noninformative.1],
            theta_sd: d.theta_sd,
            sensor_theta_sd: d.sensor_theta_sd,
            grid_points: 100,
            grid_start: 0.01,
            grid_end: 0.99,
            coupling: CouplingName::Correlated,
            sign_scope: SignScopeName::PerModeSensor,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InitName {
    Random,
    PooledKmeans,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CovarianceName {
    Raw,
    Smoothed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OfflineSection {
    pub lambda: f64,
    pub alpha: f64,
    pub fve: f64,
    pub init: InitName,
    pub kmeans_restarts: usize,
    pub em_starts: usize,
    pub covariance: CovarianceName,
    pub covariance_bandwidth: f64,
    /// Fixed measurement-noise variance; estimated when absent.
    pub noise_variance: Option<f64>,
    pub em: EmSection,
}

impl Default for OfflineSection {
    fn default() -> Self {
        Self {
            lambda: 0.0466,
            alpha: 1.0,
            fve: 0.95,
            init: InitName::PooledKmeans,
            kmeans_restarts: 10,
            em_starts: 1,
            covariance: CovarianceName::Smoothed,
            covariance_bandwidth: 0.35,
            noise_variance: None,
            em: EmSection::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EmSection {
    pub max_iterations: usize,
    pub tolerance: f64,
    pub inner_max_iterations: usize,
    pub inner_tolerance: f64,
}

impl Default for EmSection {
    fn default() -> Self {
        let d = EmConfig::default();
        Self {
            max_iterations: d.max_iterations,
            tolerance: d.tolerance,
            inner_max_iterations: d.inner_max_iterations,
            inner_tolerance: d.inner_tolerance,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CvSection {
    pub folds: usize,
    /// Explicit grid; when empty, `lambda_count` evenly spaced values from
    /// `lambda_min` to `lambda_max`.
    pub lambda_grid: Vec<f64>,
    pub lambda_min: f64,
    pub lambda_max: f64,
    pub lambda_count: usize,
    pub alpha_grid: Vec<f64>,
}

impl Default for CvSection {
    fn default() -> Self {
        Self {
            folds: 5,
            lambda_grid: Vec::new(),
            lambda_min: 0.005,
            lambda_max: 0.4,
            lambda_count: 20,
            alpha_grid: vec![0.0, 0.25, 0.5, 0.75, 1.0],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TrainSmoothingName {
    Prefix,
    FullHistory,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OnlineSection {
    pub smoothing_bandwidth: f64,
    pub robust_iterations: usize,
    pub train_smoothing: TrainSmoothingName,
    pub neighbor_fraction: f64,
    pub minimum_neighbors: usize,
    pub fve: f64,
    pub lasso_lambdas: usize,
    pub lasso_min_ratio: f64,
    pub lasso_max_sweeps: usize,
    pub lasso_tolerance: f64,
    pub weight_epsilon: f64,
}

impl Default for OnlineSection {
    fn default() -> Self {
        let s = SmoothingConfig::default();
        let k = KnnConfig::default();
        let l = LassoConfig::default();
        Self {
            smoothing_bandwidth: s.bandwidth,
            robust_iterations: s.robust_iterations,
            train_smoothing: TrainSmoothingName::Prefix,
            neighbor_fraction: k.neighbor_fraction,
            minimum_neighbors: k.minimum_neighbors,
            fve: 0.95,
            lasso_lambdas: l.n_lambdas,
            lasso_min_ratio: l.min_ratio,
            lasso_max_sweeps: l.max_sweeps,
            lasso_tolerance: l.tolerance,
            weight_epsilon: l.weight_epsilon,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CmapssSection {
    pub exclude: Vec<usize>,
    pub normalize: bool,
}

impl Default for CmapssSection {
    fn default() -> Self {
        Self { exclude: DEFAULT_EXCLUDE.to_vec(), normalize: true }
    }
}

/// Fallback directories when the matching flag is not given.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PathsSection {
    pub data: Option<PathBuf>,
    pub model: Option<PathBuf>,
    pub out: Option<PathBuf>,
}

fn interval(name: &str, v: [f64; 2]) -> CliResult<(f64, f64)> {
    if !(v[0].is_finite() && v[1].is_finite() && v[0] <= v[1]) {
        return Err(CliError::usage(format!("{name} must be an ordered pair of finite numbers")));
    }
    Ok((v[0], v[1]))
}

fn unit_interval(name: &str, v: f64) -> CliResult<()> {
    if !(v > 0.0 && v <= 1.0) {
        return Err(CliError::usage(format!("{name} must lie in (0, 1]")));
    }
    Ok(())
}

impl RunConfig {
    pub fn from_toml(text: &str) -> CliResult<Self> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| CliError::usage(format!("config: {}", e.message())))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: Option<&Path>) -> CliResult<Self> {
        match path {
            None => Ok(Self::default()),
            Some(p) => {
                let text = std::fs::read_to_string(p)
                    .map_err(|e| CliError::usage(format!("cannot read config: {e}")).at(p))?;
                Self::from_toml(&text).map_err(|e| e.at(p))
            }
        }
    }

    /// Checks every section by building the core configurations.
    pub fn validate(&self) -> CliResult<()> {
        self.sim_config()?.validate()?;
        self.offline_config()?.validate()?;
        self.cv_config()?.validate()?;
        self.online_config()?;
        if !(self.offline.lambda >= 0.0 && self.offline.lambda.is_finite()) {
            return Err(CliError::usage("offline.lambda must be a nonnegative number"));
        }
        if !(0.0..=1.0).contains(&self.offline.alpha) {
            return Err(CliError::usage("offline.alpha must lie in [0, 1]"));
        }
        Ok(())
    }

    /// Canonical TOML of the effective configuration.
    pub fn canonical(&self) -> String {
        toml::to_string(self).expect("configuration serializes")
    }

    /// SHA-256 of the command name and the canonical configuration.
    pub fn digest(&self, command: &str) -> String {
        let mut h = Sha256::new();
        h.update(command.as_bytes());
        h.update([0]);
        h.update(self.canonical().as_bytes());
        hex(&h.finalize())
    }

    pub fn sim_config(&self) -> CliResult<SimConfig> {
        let s = &self.simulation;
        if s.grid_points < 3 || !(s.grid_start < s.grid_end) {
            return Err(CliError::usage("simulation grid needs 3+ points and grid_start < grid_end"));
        }
        Ok(SimConfig {
            mu: s.mu.clone(),
            threshold: s.threshold.clone(),
            informative: s.informative.clone(),
            n_sensors: s.n_sensors,
            n_per_mode: s.n_per_mode,
            train_per_mode: s.train_per_mode,
            snr_informative: interval("simulation.snr_informative", s.snr_informative)?,
            snr_noninformative: interval("simulation.snr_noninformative", s.snr_noninformative)?,
            rho_informative: interval("simulation.rho_informative", s.rho_informative)?,
            rho_noninformative: interval("simulation.rho_noninformative", s.rho_noninformative)?,
            theta_sd: s.theta_sd,
            sensor_theta_sd: s.sensor_theta_sd,
            grid: linspace(s.grid_start, s.grid_end, s.grid_points),
            coupling: match s.coupling {
                CouplingName::Printed => Coupling::Printed,
                CouplingName::Latent => Coupling::Latent,
                CouplingName::Correlated => Coupling::Correlated,
            },
            sign_scope: match s.sign_scope {
                SignScopeName::PerSystem => SignScope::PerSystem,
                SignScopeName::PerModeSensor => SignScope::PerModeSensor,
            },
            seed: self.seed,
        })
    }

    pub fn offline_config(&self) -> CliResult<OfflineConfig> {
        let o = &self.offline;
        unit_interval("offline.fve", o.fve)?;
        let covariance = match o.covariance {
            CovarianceName::Raw => CovarianceEstimate::Raw,
            CovarianceName::Smoothed => {
                unit_interval("offline.covariance_bandwidth", o.covariance_bandwidth)?;
                CovarianceEstimate::Smoothed { bandwidth: o.covariance_bandwidth }
            }
        };
        let noise = match o.noise_variance {
            None => NoiseModel::Estimate,
            Some(v) if v >= 0.0 && v.is_finite() => NoiseModel::Fixed(v),
            Some(_) => return Err(CliError::usage("offline.noise_variance must be nonnegative")),
        };
        Ok(OfflineConfig {
            k: self.k,
            fve: o.fve,
            kmeans_restarts: o.kmeans_restarts.max(1),
            fpca: FpcaOptions { noise, covariance, max_components: None },
            init: match o.init {
                InitName::Random => OfflineInit::Random,
                InitName::PooledKmeans => OfflineInit::PooledKmeans,
            },
            em: EmConfig {
                max_iterations: o.em.max_iterations,
                tolerance: o.em.tolerance,
                inner_max_iterations: o.em.inner_max_iterations,
                inner_tolerance: o.em.inner_tolerance,
                seed: self.seed,
                ..EmConfig::default()
            },
            em_starts: o.em_starts,
            seed: self.seed,
        })
    }

    pub fn cv_config(&self) -> CliResult<CvConfig> {
        let c = &self.cv;
        let lambda_grid = if c.lambda_grid.is_empty() {
            linspace(c.lambda_min, c.lambda_max, c.lambda_count)
        } else {
            c.lambda_grid.clone()
        };
        if lambda_grid.iter().chain(&c.alpha_grid).any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(CliError::usage("cv grids must hold nonnegative numbers"));
        }
        if c.alpha_grid.iter().any(|&a| a > 1.0) {
            return Err(CliError::usage("cv.alpha_grid values must lie in [0, 1]"));
        }
        Ok(CvConfig { folds: c.folds, lambda_grid, alpha_grid: c.alpha_grid.clone(), seed: self.seed })
    }

    pub fn online_config(&self) -> CliResult<OnlineConfig> {
        let o = &self.online;
        unit_interval("online.smoothing_bandwidth", o.smoothing_bandwidth)?;
        unit_interval("online.fve", o.fve)?;
        unit_interval("online.neighbor_fraction", o.neighbor_fraction)?;
        if o.lasso_lambdas == 0 || !(o.lasso_min_ratio > 0.0 && o.lasso_min_ratio < 1.0) {
            return Err(CliError::usage("online lasso path needs lasso_lambdas >= 1 and lasso_min_ratio in (0, 1)"));
        }
        if !(o.lasso_tolerance > 0.0) || o.lasso_max_sweeps == 0 || !(o.weight_epsilon > 0.0) {
            return Err(CliError::usage("online lasso tolerance, sweeps and weight_epsilon must be positive"));
        }
        Ok(OnlineConfig {
            smoothing: SmoothingConfig {
                bandwidth: o.smoothing_bandwidth,
                robust_iterations: o.robust_iterations,
                polynomial_order: 2,
            },
            train_smoothing: match o.train_smoothing {
                TrainSmoothingName::Prefix => TrainSmoothing::Prefix,
                TrainSmoothingName::FullHistory => TrainSmoothing::FullHistory,
            },
            knn: KnnConfig { neighbor_fraction: o.neighbor_fraction, minimum_neighbors: o.minimum_neighbors },
            fve: o.fve,
            lasso: LassoConfig {
                n_lambdas: o.lasso_lambdas,
                min_ratio: o.lasso_min_ratio,
                max_sweeps: o.lasso_max_sweeps,
                tolerance: o.lasso_tolerance,
                weight_epsilon: o.weight_epsilon,
            },
        })
    }

    pub fn ingest_options(&self) -> IngestOptions {
        IngestOptions { exclude: self.cmapss.exclude.clone(), normalize: self.cmapss.normalize }
    }
}

pub fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}
