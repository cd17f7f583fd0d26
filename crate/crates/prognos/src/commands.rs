//! One function per subcommand. Each validates its inputs, writes into an
//! exclusively locked output directory and finishes with a manifest.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use prognos_core::pipeline::eval::{cohort_mean, life_percentile_t_star, relative_error, summarize};
use prognos_core::pipeline::{cross_validate, offline_fit, OnlineModel};
use prognos_core::signal::SystemRecord;
use prognos_core::sim::gen_dataset;
use serde::{Deserialize, Serialize};

use crate::bundle::{load_bundle, write_bundle, ModelInfo};
use crate::cmapss;
use crate::config::RunConfig;
use crate::data::{self, read_rows, write_rows, write_rows_with_header, DataDir, TruthCsvRow};
use crate::error::{CliError, CliResult};
use crate::output::{Manifest, OutputDir};
use crate::report;

pub const CV_TABLE: &str = "cv_table.csv";
pub const CV_BEST: &str = "best.csv";
pub const PREDICTIONS: &str = "rul_predictions.csv";
pub const RELATIVE_ERRORS: &str = "relative_errors.csv";
pub const ERROR_SUMMARY: &str = "error_summary.csv";
pub const COHORT_SUMMARY: &str = "cohort_summary.csv";
pub const SCALER: &str = "scaler.csv";

/// Cohort bounds on the true remaining life at the observation time.
pub const COHORT_BOUNDS: [f64; 2] = [20.0, 100.0];

fn finish(out: OutputDir, command: &str, cfg: &RunConfig) -> CliResult<Manifest> {
    out.finish(command, &cfg.digest(command))
}

fn required(flag: Option<PathBuf>, fallback: &Option<PathBuf>, name: &str) -> CliResult<PathBuf> {
    flag.or_else(|| fallback.clone())
        .ok_or_else(|| CliError::usage(format!("--{name} is required (or set paths.{name} in the config)")))
}

pub fn simulate(cfg: &RunConfig, out: Option<PathBuf>) -> CliResult<Manifest> {
    let out_dir = required(out, &cfg.paths.out, "out")?;
    let sim = gen_dataset(&cfg.sim_config()?)?;
    let truth: Vec<TruthCsvRow> = sim.train_truth.iter().chain(&sim.test_truth).map(TruthCsvRow::from).collect();
    let dir = DataDir { train: sim.train, test: sim.test, truth };
    let mut out = OutputDir::create(&out_dir)?;
    for name in dir.save(&out_dir)? {
        out.record(name);
    }
    finish(out, "simulate", cfg)
}

pub fn ingest_cmapss(cfg: &RunConfig, train: &Path, test: &Path, rul: &Path, out: Option<PathBuf>) -> CliResult<Manifest> {
    let out_dir = required(out, &cfg.paths.out, "out")?;
    let read = |p: &Path| std::fs::read_to_string(p).map_err(|e| CliError::from(e).at(p));
    let train_rows = cmapss::parse(&read(train)?).map_err(|e| e.at(train))?;
    let test_rows = cmapss::parse(&read(test)?).map_err(|e| e.at(test))?;
    let rul_rows = cmapss::parse_rul(&read(rul)?).map_err(|e| e.at(rul))?;
    let ing = cmapss::ingest(&train_rows, &test_rows, &rul_rows, &cfg.ingest_options())?;
    let truth = ing
        .test
        .iter()
        .map(|r| TruthCsvRow { system_id: r.id.clone(), mode: None, theta: None, ttf: r.ttf.unwrap_or(f64::NAN) })
        .collect();
    let scaler = ing.scaler.clone();
    let dir = DataDir { train: ing.train, test: ing.test, truth };
    let mut out = OutputDir::create(&out_dir)?;
    for name in dir.save(&out_dir)? {
        out.record(name);
    }
    if let Some(sc) = scaler {
        let rows: Vec<ScalerRow> = dir
            .train
            .sensor_ids
            .iter()
            .enumerate()
            .map(|(p, id)| ScalerRow { sensor_id: id.clone(), mean: sc.means[p], sd: sc.sds[p] })
            .collect();
        write_rows(&out.path(SCALER), &rows)?;
        out.record(SCALER);
    }
    finish(out, "ingest-cmapss", cfg)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalerRow {
    pub sensor_id: String,
    pub mean: f64,
    pub sd: f64,
}

pub fn fit_offline(cfg: &RunConfig, data_dir: Option<PathBuf>, out: Option<PathBuf>) -> CliResult<Manifest> {
    let data_dir = required(data_dir, &cfg.paths.data, "data")?;
    let out_dir = required(out, &cfg.paths.out, "out")?;
    let data = DataDir::load(&data_dir)?;
    let model = offline_fit(&data.train, &cfg.offline_config()?, cfg.offline.lambda, cfg.offline.alpha)?;
    let info = ModelInfo {
        format: "prognos-offline v1".into(),
        k: cfg.k,
        lambda: cfg.offline.lambda,
        alpha: cfg.offline.alpha,
        seed: cfg.seed,
        config_digest: cfg.digest("fit-offline"),
        converged: model.fit.converged,
        iterations: model.fit.objective_trace.len(),
        n_train: data.train.n_systems(),
        n_features: model.fit.params.n_features(),
        truncated_at: model.features.truncated.truncated_at.unwrap_or(f64::NAN),
        warnings: model.warnings.iter().map(|w| format!("{w:?}")).collect(),
    };
    let mut out = OutputDir::create(&out_dir)?;
    write_bundle(&mut out, &model, &data.train, &data.truth, &info)?;
    finish(out, "fit-offline", cfg)
}

pub fn cv(cfg: &RunConfig, data_dir: Option<PathBuf>, out: Option<PathBuf>) -> CliResult<Manifest> {
    let data_dir = required(data_dir, &cfg.paths.data, "data")?;
    let out_dir = required(out, &cfg.paths.out, "out")?;
    let data = DataDir::load(&data_dir)?;
    let cv_cfg = cfg.cv_config()?;
    let result = cross_validate(&data.train, &cfg.offline_config()?, &cv_cfg)?;
    let mut out = OutputDir::create(&out_dir)?;
    let mut w = csv::Writer::from_path(out.path(CV_TABLE))?;
    let mut header = vec!["lambda".to_string(), "alpha".into(), "mse".into(), "skipped_folds".into()];
    header.extend((0..cv_cfg.folds).map(|f| format!("fold_{f}")));
    w.write_record(&header)?;
    for row in &result.table {
        let mut rec = vec![
            row.lambda.to_string(),
            row.alpha.to_string(),
            row.mse.to_string(),
            row.fold_mse.iter().filter(|m| m.is_none()).count().to_string(),
        ];
        rec.extend(row.fold_mse.iter().map(|m| m.map_or(String::new(), |v| v.to_string())));
        w.write_record(&rec)?;
    }
    w.flush()?;
    out.record(CV_TABLE);
    let best = result
        .table
        .iter()
        .find(|r| r.lambda == result.best_lambda && r.alpha == result.best_alpha)
        .map_or(f64::NAN, |r| r.mse);
    write_rows(&out.path(CV_BEST), &[BestRow { lambda: result.best_lambda, alpha: result.best_alpha, mse: best }])?;
    out.record(CV_BEST);
    finish(out, "cv", cfg)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BestRow {
    pub lambda: f64,
    pub alpha: f64,
    pub mse: f64,
}

/// How observation times are chosen for `predict`.
#[derive(Debug, Clone, PartialEq)]
pub enum TStar {
    /// The same time for every test unit.
    Fixed(f64),
    /// Percentages of each unit's known failure time.
    Percentiles(Vec<f64>),
    /// Each unit's last observed grid time.
    LastObserved,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionRow {
    pub system_id: String,
    pub percentile: Option<f64>,
    pub t_star: f64,
    pub mode: Option<usize>,
    pub rul: Option<f64>,
    pub estimated_life: Option<f64>,
    pub clamped: Option<bool>,
    /// Neighbour votes per mode, `;`-separated.
    pub votes: String,
    pub fallback: String,
    /// `ok`, or the reason no prediction was made.
    pub status: String,
}

pub fn predict_rows(model: &OnlineModel, test: &[SystemRecord], grid: &[f64], t_star: &TStar) -> CliResult<Vec<PredictionRow>> {
    let mut queries: Vec<(&SystemRecord, Option<f64>, f64)> = Vec::new();
    for rec in test {
        match t_star {
            TStar::Fixed(t) => queries.push((rec, None, *t)),
            TStar::LastObserved => queries.push((rec, None, grid[rec.observed() - 1])),
            TStar::Percentiles(ps) => {
                let ttf = rec.ttf.ok_or_else(|| {
                    CliError::data(format!("percentile t* needs the failure time of {} (test_ttf.csv)", rec.id))
                })?;
                for &p in ps {
                    queries.push((rec, Some(p), life_percentile_t_star(ttf, p)));
                }
            }
        }
    }
    // Queries sharing a grid length share one prepared context; batching by
    // it keeps a single context alive at a time.
    let mut batches: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (q, &(_, _, t)) in queries.iter().enumerate() {
        batches.entry(model.train.grid_points_through(t)).or_default().push(q);
    }
    let mut results: Vec<Option<_>> = vec![None; queries.len()];
    for idx in batches.values() {
        let calls: Vec<(&SystemRecord, f64)> = idx.iter().map(|&q| (queries[q].0, queries[q].2)).collect();
        for (&q, res) in idx.iter().zip(model.predict_many(&calls)) {
            results[q] = Some(res);
        }
    }
    let results = results.into_iter().map(|r| r.expect("every query is in one batch"));
    Ok(queries
        .iter()
        .zip(results)
        .map(|(&(rec, percentile, t), res)| match res {
            Ok((p, _)) => PredictionRow {
                system_id: rec.id.clone(),
                percentile,
                t_star: t,
                mode: Some(p.mode),
                rul: Some(p.rul),
                estimated_life: Some(p.estimated_life),
                clamped: Some(p.clamped),
                votes: p.votes.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(";"),
                fallback: p.fallback.unwrap_or_default(),
                status: "ok".into(),
            },
            Err(e) => PredictionRow {
                system_id: rec.id.clone(),
                percentile,
                t_star: t,
                mode: None,
                rul: None,
                estimated_life: None,
                clamped: None,
                votes: String::new(),
                fallback: String::new(),
                status: e.to_string(),
            },
        })
        .collect())
}

pub fn predict(
    cfg: &RunConfig,
    model_dir: Option<PathBuf>,
    data_dir: Option<PathBuf>,
    t_star: TStar,
    out: Option<PathBuf>,
) -> CliResult<Manifest> {
    let model_dir = required(model_dir, &cfg.paths.model, "model")?;
    let data_dir = required(data_dir, &cfg.paths.data, "data")?;
    let out_dir = required(out, &cfg.paths.out, "out")?;
    match &t_star {
        TStar::Fixed(t) if !(t.is_finite() && *t > 0.0) => return Err(CliError::usage("--t-star must be positive")),
        TStar::Percentiles(ps) if ps.is_empty() || ps.iter().any(|p| !(*p > 0.0 && *p <= 100.0)) => {
            return Err(CliError::usage("--percentile values must lie in (0, 100]"))
        }
        _ => {}
    }
    let data = DataDir::load(&data_dir)?;
    if data.test.is_empty() {
        return Err(CliError::data(format!("{} holds no test units", data_dir.join(data::TEST_SIGNALS).display())));
    }
    let bundle = load_bundle(&model_dir, &data.train)?;
    let model = OnlineModel::new(&data.train, bundle.labels, bundle.selected, cfg.online_config()?)?;
    let rows = predict_rows(&model, &data.test, &data.train.time_grid, &t_star)?;
    let mut out = OutputDir::create(&out_dir)?;
    write_rows(&out.path(PREDICTIONS), &rows)?;
    out.record(PREDICTIONS);
    finish(out, "predict", cfg)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RelativeErrorRow {
    pub system_id: String,
    pub percentile: Option<f64>,
    pub t_star: f64,
    pub estimated_life: f64,
    pub actual_life: f64,
    pub true_rul: f64,
    pub relative_error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorSummaryRow {
    /// Empty for predictions made at a fixed or last-observed time.
    pub percentile: Option<f64>,
    pub count: usize,
    pub skipped: usize,
    pub median: f64,
    pub q1: f64,
    pub q3: f64,
    pub mean: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CohortRow {
    /// Units whose true remaining life at `t*` is at most this.
    pub max_true_rul: f64,
    pub count: usize,
    pub mean_relative_error: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub errors: Vec<RelativeErrorRow>,
    pub summary: Vec<ErrorSummaryRow>,
    pub cohorts: Vec<CohortRow>,
}

pub fn evaluate_rows(preds: &[PredictionRow], truth: &[TruthCsvRow]) -> CliResult<Evaluation> {
    let life: BTreeMap<&str, f64> = truth.iter().map(|t| (t.system_id.as_str(), t.ttf)).collect();
    let mut errors = Vec::new();
    // Percentile keys as bit patterns keep a total order; None sorts last.
    let mut skipped: BTreeMap<(bool, u64), usize> = BTreeMap::new();
    let key = |p: Option<f64>| (p.is_none(), p.map_or(0, |v| v.to_bits()));
    for p in preds {
        let actual = *life
            .get(p.system_id.as_str())
            .ok_or_else(|| CliError::data(format!("no truth row for {}", p.system_id)))?;
        match p.estimated_life {
            Some(est) if p.status == "ok" => errors.push(RelativeErrorRow {
                system_id: p.system_id.clone(),
                percentile: p.percentile,
                t_star: p.t_star,
                estimated_life: est,
                actual_life: actual,
                true_rul: actual - p.t_star,
                relative_error: relative_error(est, actual)?,
            }),
            _ => *skipped.entry(key(p.percentile)).or_default() += 1,
        }
    }
    let mut groups: BTreeMap<(bool, u64), (Option<f64>, Vec<f64>)> = BTreeMap::new();
    for e in &errors {
        groups.entry(key(e.percentile)).or_insert_with(|| (e.percentile, Vec::new())).1.push(e.relative_error);
    }
    for k in skipped.keys() {
        groups.entry(*k).or_insert_with(|| ((!k.0).then(|| f64::from_bits(k.1)), Vec::new()));
    }
    let summary = groups
        .iter()
        .map(|(k, (pct, errs))| {
            let s = summarize(pct.unwrap_or(f64::NAN), errs);
            ErrorSummaryRow {
                percentile: *pct,
                count: s.count,
                skipped: skipped.get(k).copied().unwrap_or(0),
                median: s.median,
                q1: s.q1,
                q3: s.q3,
                mean: s.mean,
            }
        })
        .collect();
    let errs: Vec<f64> = errors.iter().map(|e| e.relative_error).collect();
    let ruls: Vec<f64> = errors.iter().map(|e| e.true_rul).collect();
    let cohorts = COHORT_BOUNDS
        .iter()
        .map(|&b| CohortRow {
            max_true_rul: b,
            count: ruls.iter().filter(|&&r| r <= b).count(),
            mean_relative_error: cohort_mean(&errs, &ruls, b),
        })
        .collect();
    Ok(Evaluation { errors, summary, cohorts })
}

pub fn evaluate(cfg: &RunConfig, preds_dir: &Path, truth: &Path, out: Option<PathBuf>) -> CliResult<Manifest> {
    let out_dir = required(out, &cfg.paths.out, "out")?;
    let preds: Vec<PredictionRow> = read_rows(&preds_dir.join(PREDICTIONS))?;
    let truth_rows: Vec<TruthCsvRow> = read_rows(truth)?;
    let ev = evaluate_rows(&preds, &truth_rows)?;
    let mut out = OutputDir::create(&out_dir)?;
    write_rows_with_header(
        &out.path(RELATIVE_ERRORS),
        &["system_id", "percentile", "t_star", "estimated_life", "actual_life", "true_rul", "relative_error"],
        &ev.errors,
    )?;
    out.record(RELATIVE_ERRORS);
    write_rows_with_header(
        &out.path(ERROR_SUMMARY),
        &["percentile", "count", "skipped", "median", "q1", "q3", "mean"],
        &ev.summary,
    )?;
    out.record(ERROR_SUMMARY);
    write_rows(&out.path(COHORT_SUMMARY), &ev.cohorts)?;
    out.record(COHORT_SUMMARY);
    finish(out, "evaluate", cfg)
}

pub fn report(cfg: &RunConfig, run: &Path, out: Option<PathBuf>) -> CliResult<Manifest> {
    let out_dir = out.unwrap_or_else(|| run.join("report"));
    let rep = report::build(run, &out_dir)?;
    let mut out = OutputDir::create(&out_dir)?;
    out.write_text(report::REPORT, &rep.markdown)?;
    for (name, table) in &rep.tables {
        out.write_text(name, table)?;
    }
    finish(out, "report", cfg)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pred(id: &str, pct: Option<f64>, t: f64, est: Option<f64>) -> PredictionRow {
        PredictionRow {
            system_id: id.into(),
            percentile: pct,
            t_star: t,
            mode: Some(0),
            rul: est.map(|e| e - t),
            estimated_life: est,
            clamped: Some(false),
            votes: "1;0".into(),
            fallback: String::new(),
            status: if est.is_some() { "ok".into() } else { "failed".into() },
        }
    }

    #[test]
    fn evaluation_groups_by_percentile_and_cohort() {
        let truth = vec![
            TruthCsvRow { system_id: "a".into(), mode: None, theta: None, ttf: 100.0 },
            TruthCsvRow { system_id: "b".into(), mode: None, theta: None, ttf: 200.0 },
        ];
        let preds = vec![
            pred("a", Some(90.0), 90.0, Some(110.0)),
            pred("b", Some(10.0), 20.0, Some(180.0)),
            pred("a", Some(10.0), 10.0, None),
        ];
        let ev = evaluate_rows(&preds, &truth).unwrap();
        assert_eq!(ev.errors.len(), 2);
        assert!((ev.errors[0].relative_error - 10.0).abs() < 1e-12);
        assert_eq!(ev.summary.len(), 2);
        assert_eq!(ev.summary[0].percentile, Some(10.0));
        assert_eq!(ev.summary[0].skipped, 1);
        assert_eq!(ev.cohorts[0].count, 1);
        assert_eq!(ev.cohorts[0].mean_relative_error, Some(10.0));
        assert_eq!(ev.cohorts[1].count, 1);
    }

    #[test]
    fn missing_truth_is_a_data_error() {
        let e = evaluate_rows(&[pred("x", None, 1.0, Some(2.0))], &[]).unwrap_err();
        assert_eq!(e.kind.exit_code(), 2);
    }
}
