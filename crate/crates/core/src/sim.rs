//! Seeded generator for multi-mode degradation signals.
//!
//! A latent path `-theta_i / ln t` per system fails when it reaches the mode
//! threshold `D_k`, so `ttf = exp(-theta_i / D_k)`. Each sensor carries its own
//! drift `theta_ip` plus white noise with `sigma = mu_k / SNR`.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

use nalgebra::DMatrix;
#[allow(unused_imports)] // inherent float methods shadow it when std is linked
use num_traits::Float;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::signal::{points_through, SignalDataset, SystemRecord};
use crate::{Error, Result};

/// How a sensor's drift depends on its system's latent rate.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Coupling {
    /// `theta_ip ~ N(mu_k (1 - sqrt(1 - rho)), sd^2)`: independent of `theta_i`.
    Printed,
    /// `theta_ip ~ N(theta_i (1 - sqrt(1 - rho)), sd^2)`: tracks the latent rate.
    Latent,
    /// `theta_ip = mu_k (1 - sqrt(1 - rho)) + rho (theta_i - mu_k) + sd sqrt(1 - rho^2) e`:
    /// the stated marginal mean, and correlation `rho` with `theta_i` when
    /// `sd` equals the latent standard deviation.
    Correlated,
}

/// Granularity of the random sign applied to `theta_ip`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SignScope {
    /// One sign per (system, sensor).
    PerSystem,
    /// One sign per (mode, sensor), shared by all systems of that mode.
    PerModeSensor,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    pub mu: Vec<f64>,
    pub threshold: Vec<f64>,
    /// Informative sensor numbers per mode, counted from 1.
    pub informative: Vec<Vec<usize>>,
    pub n_sensors: usize,
    pub n_per_mode: usize,
    pub train_per_mode: usize,
    pub snr_informative: (f64, f64),
    pub snr_noninformative: (f64, f64),
    pub rho_informative: (f64, f64),
    pub rho_noninformative: (f64, f64),
    pub theta_sd: f64,
    pub sensor_theta_sd: f64,
    pub grid: Vec<f64>,
    pub coupling: Coupling,
    pub sign_scope: SignScope,
    pub seed: u64,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            mu: vec![1.0, 0.8],
            threshold: vec![2.0, 1.5],
            informative: vec![vec![5, 12, 16, 19], vec![3, 7, 9, 19]],
            n_sensors: 20,
            n_per_mode: 200,
            train_per_mode: 160,
            snr_informative: (2.0, 5.0),
            snr_noninformative: (1.0, 3.0),
            rho_informative: (0.80, 0.99),
            rho_noninformative: (0.1, 0.6),
            theta_sd: 0.1,
            sensor_theta_sd: 0.1,
            grid: default_grid(),
            coupling: Coupling::Correlated,
            sign_scope: SignScope::PerModeSensor,
            seed: 0,
        }
    }
}

/// 100 equally spaced points on `[0.01, 0.99]`.
pub fn default_grid() -> Vec<f64> {
    (0..100).map(|j| 0.01 + 0.98 * j as f64 / 99.0).collect()
}

impl SimConfig {
    /// Default configuration with the informative SNR interval replaced.
    pub fn with_snr(lo: f64, hi: f64, seed: u64) -> Self {
        Self { snr_informative: (lo, hi), seed, ..Self::default() }
    }

    pub fn n_modes(&self) -> usize {
        self.mu.len()
    }

    pub fn validate(&self) -> Result<()> {
        let k = self.mu.len();
        if k == 0 || self.threshold.len() != k || self.informative.len() != k {
            return Err(Error::InvalidParameter(
                "mu, threshold and informative sets need one entry per mode".into(),
            ));
        }
        if self.mu.iter().chain(&self.threshold).any(|&v| !(v > 0.0) || !v.is_finite()) {
            return Err(Error::InvalidParameter("mu and thresholds must be positive".into()));
        }
        if self.n_sensors == 0 {
            return Err(Error::InvalidParameter("need at least one sensor".into()));
        }
        for set in &self.informative {
            if set.iter().any(|&s| s == 0 || s > self.n_sensors) {
                return Err(Error::InvalidParameter(format!(
                    "informative sensors must lie in 1..={}",
                    self.n_sensors
                )));
            }
        }
        if self.train_per_mode == 0 || self.train_per_mode > self.n_per_mode {
            return Err(Error::InvalidParameter("train_per_mode must lie in 1..=n_per_mode".into()));
        }
        for (name, (lo, hi)) in [
            ("snr_informative", self.snr_informative),
            ("snr_noninformative", self.snr_noninformative),
            ("rho_informative", self.rho_informative),
            ("rho_noninformative", self.rho_noninformative),
        ] {
            if !(lo <= hi) || !(lo > 0.0) {
                return Err(Error::InvalidParameter(format!("{name} must be an ordered positive interval")));
            }
        }
        if self.rho_informative.1 > 1.0 || self.rho_noninformative.1 > 1.0 {
            return Err(Error::InvalidParameter("correlations must not exceed 1".into()));
        }
        if !(self.theta_sd >= 0.0) || !(self.sensor_theta_sd >= 0.0) {
            return Err(Error::InvalidParameter("standard deviations must be nonnegative".into()));
        }
        if self.grid.len() < 3 || self.grid.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidGrid("grid must be strictly increasing with 3+ points".into()));
        }
        if self.grid.iter().any(|&t| !(t > 0.0 && t < 1.0)) {
            return Err(Error::InvalidGrid("grid must lie inside (0, 1)".into()));
        }
        Ok(())
    }

    fn is_informative(&self, k: usize, p: usize) -> bool {
        self.informative[k].contains(&(p + 1))
    }
}

/// Failure time of the latent path `-theta / ln t` at threshold `d`.
pub fn ttf_of(theta: f64, d: f64) -> Result<f64> {
    if !(theta > 0.0) || !(d > 0.0) {
        return Err(Error::InvalidParameter("theta and threshold must be positive".into()));
    }
    Ok((-theta / d).exp())
}

/// `sign * (-theta_ip / ln t) + N(0, sigma^2)` on the grid.
pub fn gen_sensor_path<R: Rng + ?Sized>(
    theta_ip: f64,
    sigma: f64,
    sign: f64,
    grid: &[f64],
    rng: &mut R,
) -> Result<Vec<f64>> {
    if grid.iter().any(|&t| !(t > 0.0 && t < 1.0)) {
        return Err(Error::InvalidGrid("sensor paths need grid points inside (0, 1)".into()));
    }
    let noise = Normal::new(0.0, sigma)
        .map_err(|_| Error::InvalidParameter("noise sd must be finite and nonnegative".into()))?;
    Ok(grid.iter().map(|&t| sign * (-theta_ip / t.ln()) + noise.sample(rng)).collect())
}

#[derive(Debug, Clone, PartialEq)]
pub struct TruthRow {
    pub system_id: String,
    /// Zero-based mode.
    pub mode: usize,
    pub theta: f64,
    pub ttf: f64,
}

/// Per (mode, sensor) draws shared by every system of the mode.
#[derive(Debug, Clone, PartialEq)]
pub struct SensorDraws {
    /// `K x P`
    pub rho: DMatrix<f64>,
    pub snr: DMatrix<f64>,
    pub sigma: DMatrix<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimOutput {
    /// Training systems, each observed through its own failure time; not
    /// truncated.
    pub train: SignalDataset,
    /// Test systems, each observed through its own failure time.
    pub test: Vec<SystemRecord>,
    pub train_truth: Vec<TruthRow>,
    pub test_truth: Vec<TruthRow>,
    pub sensor_draws: SensorDraws,
    /// Nonpositive `theta` draws that were redrawn.
    pub redraws: usize,
}

impl SimOutput {
    pub fn train_modes(&self) -> Vec<usize> {
        self.train_truth.iter().map(|t| t.mode).collect()
    }

    pub fn test_modes(&self) -> Vec<usize> {
        self.test_truth.iter().map(|t| t.mode).collect()
    }
}

const STREAM_LATENT: u64 = 1;
const STREAM_SENSOR_PARAMS: u64 = 2;
const STREAM_PATH: u64 = 3;
const STREAM_SIGN: u64 = 4;

fn stream(seed: u64, kind: u64, mode: usize, system: usize, sensor: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream((kind << 60) | ((mode as u64) << 48) | ((system as u64) << 20) | sensor as u64);
    rng
}

fn positive_normal(rng: &mut ChaCha8Rng, mean: f64, sd: f64, redraws: &mut usize) -> Result<f64> {
    let dist = Normal::new(mean, sd)
        .map_err(|_| Error::InvalidParameter("standard deviation must be finite".into()))?;
    for _ in 0..10_000 {
        let v = dist.sample(rng);
        if v > 0.0 {
            return Ok(v);
        }
        *redraws += 1;
    }
    Err(Error::InvalidParameter(format!("N({mean}, {sd}^2) rarely yields a positive draw")))
}

/// Generates the train/test datasets and ground truth.
pub fn gen_dataset(cfg: &SimConfig) -> Result<SimOutput> {
    cfg.validate()?;
    let k_count = cfg.n_modes();
    let p_count = cfg.n_sensors;
    let mut rho = DMatrix::zeros(k_count, p_count);
    let mut snr = DMatrix::zeros(k_count, p_count);
    let mut sigma = DMatrix::zeros(k_count, p_count);
    let mut mode_sign = DMatrix::zeros(k_count, p_count);
    for k in 0..k_count {
        for p in 0..p_count {
            let mut rng = stream(cfg.seed, STREAM_SENSOR_PARAMS, k, 0, p);
            let (rlo, rhi, slo, shi) = if cfg.is_informative(k, p) {
                (cfg.rho_informative.0, cfg.rho_informative.1, cfg.snr_informative.0, cfg.snr_informative.1)
            } else {
                (
                    cfg.rho_noninformative.0,
                    cfg.rho_noninformative.1,
                    cfg.snr_noninformative.0,
                    cfg.snr_noninformative.1,
                )
            };
            rho[(k, p)] = uniform(&mut rng, rlo, rhi);
            snr[(k, p)] = uniform(&mut rng, slo, shi);
            sigma[(k, p)] = cfg.mu[k] / snr[(k, p)];
            mode_sign[(k, p)] = if rng.random::<bool>() { 1.0 } else { -1.0 };
        }
    }

    let mut redraws = 0;
    let mut train = Vec::new();
    let mut test = Vec::new();
    let mut train_truth = Vec::new();
    let mut test_truth = Vec::new();
    for k in 0..k_count {
        for i in 0..cfg.n_per_mode {
            let mut latent = stream(cfg.seed, STREAM_LATENT, k, i, 0);
            let theta = positive_normal(&mut latent, cfg.mu[k], cfg.theta_sd, &mut redraws)?;
            let ttf = ttf_of(theta, cfg.threshold[k])?;
            let observed = points_through(&cfg.grid, ttf);
            let grid = &cfg.grid[..observed];
            let mut values = DMatrix::zeros(p_count, observed);
            for p in 0..p_count {
                let mut rng = stream(cfg.seed, STREAM_PATH, k, i, p);
                let shrink = 1.0 - (1.0 - rho[(k, p)]).sqrt();
                let r = rho[(k, p)];
                let (center, sd) = match cfg.coupling {
                    Coupling::Printed => (cfg.mu[k] * shrink, cfg.sensor_theta_sd),
                    Coupling::Latent => (theta * shrink, cfg.sensor_theta_sd),
                    Coupling::Correlated => (
                        cfg.mu[k] * shrink + r * (theta - cfg.mu[k]) * cfg.sensor_theta_sd / cfg.theta_sd.max(f64::MIN_POSITIVE),
                        cfg.sensor_theta_sd * (1.0 - r * r).max(0.0).sqrt(),
                    ),
                };
                // Only the latent rate must be positive; a sensor drift may take either sign.
                let theta_ip = Normal::new(center, sd)
                    .map_err(|_| Error::InvalidParameter("standard deviation must be finite".into()))?
                    .sample(&mut rng);
                let sign = match cfg.sign_scope {
                    SignScope::PerModeSensor => mode_sign[(k, p)],
                    SignScope::PerSystem => {
                        let mut s = stream(cfg.seed, STREAM_SIGN, k, i, p);
                        if s.random::<bool>() { 1.0 } else { -1.0 }
                    }
                };
                let path = gen_sensor_path(theta_ip, sigma[(k, p)], sign, grid, &mut rng)?;
                for (j, v) in path.into_iter().enumerate() {
                    values[(p, j)] = v;
                }
            }
            let is_train = i < cfg.train_per_mode;
            let id = format!("{}-m{}-{:03}", if is_train { "train" } else { "test" }, k + 1, i + 1);
            let truth = TruthRow { system_id: id.clone(), mode: k, theta, ttf };
            let record = SystemRecord::new(id, Some(ttf), values);
            if is_train {
                train.push(record);
                train_truth.push(truth);
            } else {
                test.push(record);
                test_truth.push(truth);
            }
        }
    }
    let sensor_ids = (1..=p_count).map(|p| p.to_string()).collect();
    let train = SignalDataset::new(sensor_ids, cfg.grid.clone(), train)?;
    Ok(SimOutput {
        train,
        test,
        train_truth,
        test_truth,
        sensor_draws: SensorDraws { rho, snr, sigma },
        redraws,
    })
}

fn uniform(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> f64 {
    if hi > lo {
        rng.random_range(lo..=hi)
    } else {
        lo
    }
}
