use alloc::format;
use alloc::string::{String, ToString};
use alloc::collections::BTreeMap;
use alloc::vec;
use alloc::vec::Vec;

use nalgebra::DMatrix;

use super::regression::{distance_weights, lasso_loocv, predict_rul, LassoConfig, RegressionModel, RulPrediction};
use crate::cluster::{knn_diagnose, KnnConfig, KnnVote};
use crate::fda::{fit_mfpca, project_scores, EigenBasis, MfpcaScores};
use crate::signal::{points_through, smooth_rloess, SignalDataset, SmoothingConfig, StandardizedTtf, SystemRecord};
use crate::{Error, Result, Warning};

/// Span over which training units are smoothed before they are cut at `t*`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TrainSmoothing {
    /// Readings through `t*` only, matching what a test unit offers.
    Prefix,
    /// The whole recorded history, smoothed once.
    FullHistory,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OnlineConfig {
    pub smoothing: SmoothingConfig,
    pub train_smoothing: TrainSmoothing,
    pub knn: KnnConfig,
    pub fve: f64,
    pub lasso: LassoConfig,
}

impl Default for OnlineConfig {
    fn default() -> Self {
        Self {
            smoothing: SmoothingConfig::default(),
            train_smoothing: TrainSmoothing::Prefix,
            knn: KnnConfig::default(),
            fve: 0.95,
            lasso: LassoConfig::default(),
        }
    }
}

/// Smooths every sensor of a record over its observed span. Spans too short
/// for the smoothing window are left as they are.
pub fn smooth_record(record: &SystemRecord, grid: &[f64], cfg: &SmoothingConfig) -> Result<SystemRecord> {
    let g = record.observed();
    // Only a short span is tolerated; a bad bandwidth or order still fails.
    if cfg.validate(1 << 20).is_ok() && cfg.window(g) < cfg.polynomial_order + 1 {
        return Ok(record.clone());
    }
    let mut out = record.clone();
    for p in 0..record.values.nrows() {
        let s = smooth_rloess(&record.sensor(p), &grid[..g], cfg)?;
        for (j, v) in s.into_iter().enumerate() {
            out.values[(p, j)] = v;
        }
    }
    Ok(out)
}

/// Smooths each training record once over its full history.
pub fn smooth_dataset(dataset: &SignalDataset, cfg: &SmoothingConfig) -> Result<SignalDataset> {
    let systems = dataset
        .systems
        .iter()
        .map(|r| smooth_record(r, &dataset.time_grid, cfg))
        .collect::<Result<Vec<_>>>()?;
    Ok(SignalDataset { systems, ..dataset.clone() })
}

/// Multivariate basis fitted on one population of survivors.
#[derive(Debug, Clone, PartialEq)]
pub struct ModeBasis {
    pub sensors: Vec<usize>,
    pub basis: EigenBasis,
    pub scores: MfpcaScores,
    /// Training indices, row order of `scores.zeta`.
    pub members: Vec<usize>,
    pub fallback: Option<String>,
}

/// Survivors of `t_star` and the diagnosis basis on the union of selected
/// sensors.
#[derive(Debug, Clone, PartialEq)]
pub struct DiagnosisContext {
    pub t_star: f64,
    /// Grid points in `[0, t_star]`.
    pub grid_len: usize,
    pub time_grid: Vec<f64>,
    pub surviving: Vec<usize>,
    /// Smoothed survivors cut at `t_star`, aligned with `surviving`.
    pub smoothed: Vec<SystemRecord>,
    pub union_sensors: Vec<usize>,
    pub union_basis: EigenBasis,
    pub union_scores: MfpcaScores,
    /// Offline label of each surviving unit, aligned with `surviving`.
    pub knn_labels: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OnlineContext {
    pub diagnosis: DiagnosisContext,
    /// Regression basis per mode; `Err` holds why none could be built.
    pub mode_bases: Vec<core::result::Result<ModeBasis, String>>,
}

fn blocks_for(records: &[SystemRecord], rows: &[usize], sensors: &[usize], g: usize) -> Vec<DMatrix<f64>> {
    sensors
        .iter()
        .map(|&p| DMatrix::from_fn(rows.len(), g, |i, j| records[rows[i]].values[(p, j)]))
        .collect()
}

fn record_blocks(record: &SystemRecord, sensors: &[usize], g: usize) -> Vec<Vec<f64>> {
    sensors.iter().map(|&p| (0..g).map(|j| record.values[(p, j)]).collect()).collect()
}

/// Survivors and diagnosis basis at `t_star`.
///
/// `train` holds raw histories under [`TrainSmoothing::Prefix`] and histories
/// already smoothed under [`TrainSmoothing::FullHistory`]. `labels` and
/// `selected` come from the offline fit.
pub fn prepare_diagnosis(
    train: &SignalDataset,
    labels: &[usize],
    selected: &[Vec<usize>],
    t_star: f64,
    cfg: &OnlineConfig,
) -> Result<DiagnosisContext> {
    if labels.len() != train.n_systems() {
        return Err(Error::Dimension("one offline label per training unit".into()));
    }
    let g = points_through(&train.time_grid, t_star);
    if g < 2 {
        return Err(Error::InvalidGrid(format!("t* = {t_star} covers fewer than two grid points")));
    }
    let ttfs = train.ttfs()?;
    let surviving: Vec<usize> = (0..train.n_systems())
        .filter(|&i| ttfs[i] > t_star && train.systems[i].observed() >= g)
        .collect();
    if surviving.is_empty() {
        return Err(Error::NoSurvivors(t_star));
    }
    if surviving.len() < 3 {
        return Err(Error::TooFewSamples(format!("{} units survive t* = {t_star}", surviving.len())));
    }
    let mut union_sensors: Vec<usize> = selected.iter().flatten().cloned().collect();
    union_sensors.sort_unstable();
    union_sensors.dedup();
    if union_sensors.is_empty() {
        return Err(Error::EmptySelection);
    }
    let prefixes = surviving
        .iter()
        .map(|&i| {
            let cut = train.systems[i].prefix(g);
            match cfg.train_smoothing {
                TrainSmoothing::Prefix => smooth_record(&cut, &train.time_grid, &cfg.smoothing),
                TrainSmoothing::FullHistory => Ok(cut),
            }
        })
        .collect::<Result<Vec<_>>>()?;
    let all: Vec<usize> = (0..surviving.len()).collect();
    let blocks = blocks_for(&prefixes, &all, &union_sensors, g);
    let time_grid = train.time_grid[..g].to_vec();
    let (union_basis, union_scores) = fit_mfpca(&blocks, &time_grid, cfg.fve)?;
    let knn_labels: Vec<usize> = surviving.iter().map(|&i| labels[i]).collect();
    Ok(DiagnosisContext {
        t_star,
        grid_len: g,
        time_grid,
        surviving,
        smoothed: prefixes,
        union_sensors,
        union_basis,
        union_scores,
        knn_labels,
    })
}

/// Regression basis of mode `k` on its selected sensors over its survivors.
/// Falls back to the union of sensors when the mode selected none, and to
/// all survivors when fewer than three of its own remain.
pub fn mode_basis(
    labels: &[usize],
    selected: &[Vec<usize>],
    diag: &DiagnosisContext,
    k: usize,
    fve: f64,
) -> Result<ModeBasis> {
    let sel = selected.get(k).ok_or_else(|| Error::InvalidParameter(format!("mode {k} out of range")))?;
    let mut notes = Vec::new();
    let sensors = if sel.is_empty() {
        notes.push("no sensor selected for this mode; using the union".to_string());
        diag.union_sensors.clone()
    } else {
        sel.clone()
    };
    let mut rows: Vec<usize> = (0..diag.surviving.len()).filter(|&r| labels[diag.surviving[r]] == k).collect();
    if rows.len() < 3 {
        notes.push(format!("{} mode survivors; pooling all survivors", rows.len()));
        rows = (0..diag.surviving.len()).collect();
    }
    let members: Vec<usize> = rows.iter().map(|&r| diag.surviving[r]).collect();
    let blocks = blocks_for(&diag.smoothed, &rows, &sensors, diag.grid_len);
    let (basis, scores) = fit_mfpca(&blocks, &diag.time_grid, fve)?;
    let fallback = if notes.is_empty() { None } else { Some(notes.join("; ")) };
    Ok(ModeBasis { sensors, basis, scores, members, fallback })
}

/// Diagnosis context plus every mode's regression basis.
pub fn online_prepare(
    train: &SignalDataset,
    labels: &[usize],
    selected: &[Vec<usize>],
    t_star: f64,
    cfg: &OnlineConfig,
) -> Result<OnlineContext> {
    let diagnosis = prepare_diagnosis(train, labels, selected, t_star, cfg)?;
    let mode_bases = (0..selected.len())
        .map(|k| mode_basis(labels, selected, &diagnosis, k, cfg.fve).map_err(|e| e.to_string()))
        .collect();
    Ok(OnlineContext { diagnosis, mode_bases })
}

/// Nearest-neighbour mode of a (smoothed) unit observed through `t_star`.
pub fn diagnose(ctx: &DiagnosisContext, record: &SystemRecord, knn: &KnnConfig) -> Result<KnnVote> {
    if record.observed() < ctx.grid_len {
        return Err(Error::CurveTooShort { got: record.observed(), need: ctx.grid_len });
    }
    let blocks = record_blocks(record, &ctx.union_sensors, ctx.grid_len);
    let score = project_scores(&ctx.union_basis, &ctx.union_scores.standardizer, &blocks)?;
    knn_diagnose(&ctx.union_scores.zeta, &ctx.knn_labels, &score, knn)
}

/// Weighted lasso of standardized `ln TTF` on the mode's standardized scores,
/// penalty chosen by weighted leave-one-out error.
pub fn fit_weighted_regression(
    mb: &ModeBasis,
    mode: usize,
    ttf: &StandardizedTtf,
    train_ttfs: &[f64],
    cfg: &LassoConfig,
) -> Result<RegressionModel> {
    let n = mb.members.len();
    let mut fallback = mb.fallback.clone();
    let mut h = mb.scores.h;
    if n < h + 2 {
        h = n.saturating_sub(2).max(1);
        let note = format!("{n} units for {} scores; keeping {h}", mb.scores.h);
        fallback = Some(match fallback {
            Some(f) => format!("{f}; {note}"),
            None => note,
        });
    }
    let z = mb.scores.zeta.columns(0, h).into_owned();
    let y: Vec<f64> = mb.members.iter().map(|&i| ttf.standardize(train_ttfs[i])).collect();
    let weights = distance_weights(&z, cfg.weight_epsilon);
    let cv = lasso_loocv(&z, &y, &weights, cfg)?;
    Ok(RegressionModel {
        mode,
        c0: cv.fit.c0,
        coefficients: cv.fit.c,
        weights,
        lasso_lambda: cv.lambda,
        ln_mean: ttf.ln_mean,
        ln_var: ttf.ln_var,
        members: mb.members.clone(),
        fallback,
    })
}

/// Scores of a (smoothed) unit on a mode's regression basis.
pub fn mode_scores(mb: &ModeBasis, grid_len: usize, record: &SystemRecord) -> Result<Vec<f64>> {
    if record.observed() < grid_len {
        return Err(Error::CurveTooShort { got: record.observed(), need: grid_len });
    }
    let blocks = record_blocks(record, &mb.sensors, grid_len);
    project_scores(&mb.basis, &mb.scores.standardizer, &blocks)
}

/// Per-key state cached by [`OnlineModel::predict_many`].
struct Prepared {
    diagnosis: Result<DiagnosisContext>,
    regressions: Vec<Option<Result<(ModeBasis, RegressionModel)>>>,
}

/// Trained state shared by every online prediction.
#[derive(Debug, Clone, PartialEq)]
pub struct OnlineModel {
    /// Training histories, smoothed in full under
    /// [`TrainSmoothing::FullHistory`] and raw otherwise.
    pub train: SignalDataset,
    pub labels: Vec<usize>,
    pub selected: Vec<Vec<usize>>,
    pub ttf: StandardizedTtf,
    pub train_ttfs: Vec<f64>,
    pub cfg: OnlineConfig,
}

impl OnlineModel {
    /// `train` must hold the untruncated training histories in the same order
    /// as the offline labels.
    pub fn new(
        train: &SignalDataset,
        labels: Vec<usize>,
        selected: Vec<Vec<usize>>,
        cfg: OnlineConfig,
    ) -> Result<Self> {
        let train_ttfs = train.ttfs()?;
        let ttf = StandardizedTtf::from_ttfs(&train_ttfs)?;
        if labels.len() != train.n_systems() {
            return Err(Error::Dimension("one offline label per training unit".into()));
        }
        let train = match cfg.train_smoothing {
            TrainSmoothing::Prefix => train.clone(),
            TrainSmoothing::FullHistory => smooth_dataset(train, &cfg.smoothing)?,
        };
        Ok(Self { train, labels, selected, ttf, train_ttfs, cfg })
    }

    pub fn prepare(&self, t_star: f64) -> Result<OnlineContext> {
        online_prepare(&self.train, &self.labels, &self.selected, t_star, &self.cfg)
    }

    /// Remaining life of `record` (raw readings) given its readings through
    /// `t_star`. With fewer than three survivors the survivors' mean
    /// remaining life is returned, or zero when none survive.
    pub fn predict(&self, record: &SystemRecord, t_star: f64) -> Result<(RulPrediction, Vec<Warning>)> {
        self.predict_cached(record, t_star, &mut BTreeMap::new())
    }

    /// Same as [`OnlineModel::predict`] per query. Queries sharing a grid
    /// length and survivor set reuse one diagnosis basis and one regression
    /// per mode; neither depends on the test unit, so results are identical.
    pub fn predict_many(&self, queries: &[(&SystemRecord, f64)]) -> Vec<Result<(RulPrediction, Vec<Warning>)>> {
        let mut cache = BTreeMap::new();
        queries.iter().map(|&(r, t)| self.predict_cached(r, t, &mut cache)).collect()
    }

    fn predict_cached(
        &self,
        record: &SystemRecord,
        t_star: f64,
        cache: &mut BTreeMap<(usize, Vec<usize>), Prepared>,
    ) -> Result<(RulPrediction, Vec<Warning>)> {
        let mut warnings = Vec::new();
        let g = points_through(&self.train.time_grid, t_star);
        if record.observed() < g {
            return Err(Error::CurveTooShort { got: record.observed(), need: g });
        }
        let surviving: Vec<usize> = (0..self.train.n_systems())
            .filter(|&i| self.train_ttfs[i] > t_star && self.train.systems[i].observed() >= g)
            .collect();
        let Prepared { diagnosis, regressions } = cache.entry((g, surviving)).or_insert_with(|| Prepared {
            diagnosis: prepare_diagnosis(&self.train, &self.labels, &self.selected, t_star, &self.cfg),
            regressions: vec![None; self.selected.len()],
        });
        let ctx = match diagnosis {
            Ok(ctx) => &*ctx,
            Err(e @ (Error::NoSurvivors(_) | Error::TooFewSamples(_))) => {
                let left: Vec<f64> =
                    self.train_ttfs.iter().filter(|&&t| t > t_star).map(|&t| t - t_star).collect();
                let rul = if left.is_empty() { 0.0 } else { left.iter().sum::<f64>() / left.len() as f64 };
                let reason = e.to_string();
                warnings.push(Warning::RegressionFallback { mode: 0, reason: reason.clone() });
                let p = RulPrediction {
                    unit_id: record.id.clone(),
                    t_star,
                    mode: 0,
                    rul,
                    estimated_life: t_star + rul,
                    clamped: false,
                    scores: Vec::new(),
                    votes: Vec::new(),
                    fallback: Some(reason),
                };
                return Ok((p, warnings));
            }
            Err(e) => return Err(e.clone()),
        };
        let smoothed = smooth_record(&record.prefix(g), &self.train.time_grid, &self.cfg.smoothing)?;
        let vote = diagnose(&ctx, &smoothed, &self.cfg.knn)?;
        let slot = regressions
            .get_mut(vote.mode)
            .ok_or_else(|| Error::InvalidParameter(format!("diagnosed mode {} out of range", vote.mode)))?;
        let (mb, model) = slot
            .get_or_insert_with(|| {
                let mb = mode_basis(&self.labels, &self.selected, ctx, vote.mode, self.cfg.fve)?;
                let model = fit_weighted_regression(&mb, vote.mode, &self.ttf, &self.train_ttfs, &self.cfg.lasso)?;
                Ok((mb, model))
            })
            .as_ref()
            .map_err(Clone::clone)?;
        let scores = mode_scores(mb, ctx.grid_len, &smoothed)?;
        let scores = &scores[..model.coefficients.len()];
        let mut pred = predict_rul(model, &record.id, t_star, scores)?;
        pred.votes = vote.votes;
        if let Some(reason) = &model.fallback {
            warnings.push(Warning::RegressionFallback { mode: vote.mode, reason: reason.clone() });
        }
        if pred.clamped {
            warnings.push(Warning::NegativeRul);
        }
        Ok((pred, warnings))
    }
}
