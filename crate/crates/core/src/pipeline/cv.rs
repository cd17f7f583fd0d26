use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::offline::{extract_features, fit_on_features, OfflineConfig, OfflineFeatures};
use crate::signal::{truncate_to_min_ttf, SignalDataset};
use crate::{Error, Result, Warning};

#[derive(Debug, Clone, PartialEq)]
pub struct CvConfig {
    pub folds: usize,
    pub lambda_grid: Vec<f64>,
    pub alpha_grid: Vec<f64>,
    pub seed: u64,
}

/// `count` evenly spaced values from `lo` to `hi` inclusive.
pub fn linspace(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    match count {
        0 => Vec::new(),
        1 => alloc::vec![lo],
        _ => (0..count).map(|i| lo + (hi - lo) * i as f64 / (count - 1) as f64).collect(),
    }
}

impl Default for CvConfig {
    fn default() -> Self {
        Self {
            folds: 5,
            lambda_grid: linspace(0.005, 0.4, 20),
            alpha_grid: alloc::vec![0.0, 0.25, 0.5, 0.75, 1.0],
            seed: 0,
        }
    }
}

impl CvConfig {
    pub fn validate(&self) -> Result<()> {
        if self.folds < 2 {
            return Err(Error::InvalidParameter("need at least two folds".into()));
        }
        if self.lambda_grid.is_empty() || self.alpha_grid.is_empty() {
            return Err(Error::InvalidParameter("tuning grids must be nonempty".into()));
        }
        Ok(())
    }

    /// Grid points in evaluation order: lambda-major, alpha-minor.
    pub fn grid(&self) -> Vec<(f64, f64)> {
        self.lambda_grid
            .iter()
            .flat_map(|&l| self.alpha_grid.iter().map(move |&a| (l, a)))
            .collect()
    }
}

/// Shuffled fold assignment: `fold_of[i]` in `0..folds`.
pub fn fold_assignment(n: usize, folds: usize, seed: u64) -> Vec<usize> {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut fold_of = alloc::vec![0; n];
    for (pos, &i) in order.iter().enumerate() {
        fold_of[i] = pos % folds;
    }
    fold_of
}

/// Penalty-independent state for one fold.
#[derive(Debug, Clone, PartialEq)]
pub struct CvFold {
    pub train_idx: Vec<usize>,
    pub test_idx: Vec<usize>,
    /// `Err` carries the reason the fold is skipped.
    pub features: core::result::Result<OfflineFeatures, String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CvPlan {
    pub truncated: SignalDataset,
    pub folds: Vec<CvFold>,
}

/// Truncates once, splits into folds and extracts each fold's features.
pub fn prepare_cv(dataset: &SignalDataset, offline: &OfflineConfig, cv: &CvConfig) -> Result<CvPlan> {
    cv.validate()?;
    let truncated = truncate_to_min_ttf(dataset)?;
    let n = truncated.n_systems();
    if n < cv.folds {
        return Err(Error::TooFewSamples(format!("{n} systems for {} folds", cv.folds)));
    }
    let fold_of = fold_assignment(n, cv.folds, cv.seed);
    let mut folds = Vec::with_capacity(cv.folds);
    for f in 0..cv.folds {
        let train_idx: Vec<usize> = (0..n).filter(|&i| fold_of[i] != f).collect();
        let test_idx: Vec<usize> = (0..n).filter(|&i| fold_of[i] == f).collect();
        let subset = SignalDataset::new(
            truncated.sensor_ids.clone(),
            truncated.time_grid.clone(),
            train_idx.iter().map(|&i| truncated.systems[i].clone()).collect(),
        );
        let features = subset
            .and_then(|s| extract_features(&s, offline))
            .map_err(|e| e.to_string());
        folds.push(CvFold { train_idx, test_idx, features });
    }
    Ok(CvPlan { truncated, folds })
}

#[derive(Debug, Clone, PartialEq)]
pub struct CvRow {
    pub lambda: f64,
    pub alpha: f64,
    /// Mean of the per-fold MSEs over folds that were fitted.
    pub mse: f64,
    /// `None` for skipped folds.
    pub fold_mse: Vec<Option<f64>>,
    pub warnings: Vec<Warning>,
}

/// Held-out MSE of standardized `ln TTF` for one grid point.
pub fn evaluate_point(plan: &CvPlan, offline: &OfflineConfig, lambda: f64, alpha: f64) -> CvRow {
    let mut fold_mse = Vec::with_capacity(plan.folds.len());
    let mut warnings = Vec::new();
    for (f, fold) in plan.folds.iter().enumerate() {
        let outcome = match &fold.features {
            Err(reason) => Err(reason.clone()),
            Ok(features) => fold_error(plan, fold, features.clone(), offline, lambda, alpha)
                .map_err(|e| e.to_string()),
        };
        match outcome {
            Ok(mse) => fold_mse.push(Some(mse)),
            Err(reason) => {
                warnings.push(Warning::FoldSkipped { fold: f, reason });
                fold_mse.push(None);
            }
        }
    }
    let done: Vec<f64> = fold_mse.iter().flatten().cloned().collect();
    let mse = if done.is_empty() { f64::INFINITY } else { done.iter().sum::<f64>() / done.len() as f64 };
    CvRow { lambda, alpha, mse, fold_mse, warnings }
}

fn fold_error(
    plan: &CvPlan,
    fold: &CvFold,
    features: OfflineFeatures,
    offline: &OfflineConfig,
    lambda: f64,
    alpha: f64,
) -> Result<f64> {
    let model = fit_on_features(features, offline, lambda, alpha)?;
    let mut sse = 0.0;
    for &i in &fold.test_idx {
        let record = &plan.truncated.systems[i];
        let ttf = record.ttf.ok_or_else(|| Error::MissingTtf(record.id.clone()))?;
        let y = model.features.ttf.standardize(ttf);
        let pred = model.predict_standardized(record)?;
        sse += (y - pred) * (y - pred);
    }
    let mse = sse / fold.test_idx.len() as f64;
    if !mse.is_finite() {
        return Err(Error::NonFinite("fold prediction error".into()));
    }
    Ok(mse)
}

/// First row with the smallest MSE.
pub fn select_best(rows: &[CvRow]) -> Option<&CvRow> {
    let mut best: Option<&CvRow> = None;
    for r in rows {
        if r.mse.is_finite() && best.is_none_or(|b| r.mse < b.mse) {
            best = Some(r);
        }
    }
    best
}

#[derive(Debug, Clone, PartialEq)]
pub struct CvResult {
    pub best_lambda: f64,
    pub best_alpha: f64,
    pub table: Vec<CvRow>,
}

/// Grid search over `(lambda, alpha)` by k-fold cross-validation of the
/// prior-weighted mixture prediction.
pub fn cross_validate(dataset: &SignalDataset, offline: &OfflineConfig, cv: &CvConfig) -> Result<CvResult> {
    let plan = prepare_cv(dataset, offline, cv)?;
    let table: Vec<CvRow> = cv.grid().into_iter().map(|(l, a)| evaluate_point(&plan, offline, l, a)).collect();
    finish_cv(table)
}

/// Picks the argmin of an evaluated table.
pub fn finish_cv(table: Vec<CvRow>) -> Result<CvResult> {
    let best = select_best(&table)
        .ok_or_else(|| Error::Numerical("every fold failed at every grid point".into()))?;
    Ok(CvResult { best_lambda: best.lambda, best_alpha: best.alpha, table: table.clone() })
}
