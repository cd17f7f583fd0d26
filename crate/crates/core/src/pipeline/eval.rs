use alloc::vec::Vec;

use crate::linalg::{mean, quantile};
use crate::{Error, Result};

/// `|estimated - actual| / actual * 100`.
pub fn relative_error(estimated_life: f64, actual_life: f64) -> Result<f64> {
    if !(actual_life > 0.0) {
        return Err(Error::InvalidParameter("actual life must be positive".into()));
    }
    Ok((estimated_life - actual_life).abs() / actual_life * 100.0)
}

/// Observation time at `percent` of a unit's life.
pub fn life_percentile_t_star(ttf: f64, percent: f64) -> f64 {
    ttf * percent / 100.0
}

/// Life percentiles used for evaluation: 10, 20, ..., 90.
pub fn default_percentiles() -> Vec<f64> {
    (1..=9).map(|p| 10.0 * p as f64).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct ErrorSummary {
    pub percentile: f64,
    pub count: usize,
    pub median: f64,
    pub q1: f64,
    pub q3: f64,
    pub mean: f64,
}

pub fn summarize(percentile: f64, errors: &[f64]) -> ErrorSummary {
    let mut s = errors.to_vec();
    s.sort_by(|a, b| a.partial_cmp(b).unwrap_or(core::cmp::Ordering::Equal));
    ErrorSummary {
        percentile,
        count: s.len(),
        median: quantile(&s, 0.5),
        q1: quantile(&s, 0.25),
        q3: quantile(&s, 0.75),
        mean: mean(&s),
    }
}

/// Mean relative error over units whose true remaining life at the
/// observation time is at most `bound`.
pub fn cohort_mean(errors: &[f64], true_rul: &[f64], bound: f64) -> Option<f64> {
    let v: Vec<f64> = errors
        .iter()
        .zip(true_rul)
        .filter(|(_, &r)| r <= bound)
        .map(|(&e, _)| e)
        .collect();
    if v.is_empty() {
        None
    } else {
        Some(mean(&v))
    }
}
