//! Markdown summary and long-form plot tables for a run directory tree.
//!
//! Every directory under the run root (the root included, the report output
//! excluded) is scanned for known command outputs. Directory labels are
//! paths relative to the root with `/` separators, so the report does not
//! depend on where the tree lives.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use crate::bundle::{AccuracyRow, ModelInfo, SelectionRow, TraceRow, ACCURACY, INFO, SELECTION, TRACE};
use crate::commands::{
    BestRow, CohortRow, ErrorSummaryRow, PredictionRow, RelativeErrorRow, COHORT_SUMMARY, CV_BEST, CV_TABLE,
    ERROR_SUMMARY, PREDICTIONS, RELATIVE_ERRORS,
};
use crate::data::read_rows;
use crate::error::{CliError, CliResult};

pub const REPORT: &str = "report.md";
pub const PLOT_OBJECTIVE: &str = "plot_objective.csv";
pub const PLOT_SELECTION: &str = "plot_selection.csv";
pub const PLOT_CV: &str = "plot_cv.csv";
pub const PLOT_ERRORS: &str = "plot_errors.csv";

/// Sensors listed per mode in the summary.
const TOP_SENSORS: usize = 4;

#[derive(Debug, Clone, PartialEq)]
pub struct Report {
    pub markdown: String,
    /// `(file name, CSV text)`
    pub tables: Vec<(String, String)>,
}

fn dirs_under(root: &Path, skip: &Path) -> CliResult<Vec<PathBuf>> {
    let mut out = vec![root.to_path_buf()];
    let mut i = 0;
    while i < out.len() {
        let mut children: Vec<PathBuf> = fs::read_dir(&out[i])
            .map_err(|e| CliError::from(e).at(&out[i]))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.is_dir() && !same_dir(p, skip))
            .collect();
        children.sort();
        out.extend(children);
        i += 1;
    }
    Ok(out)
}

fn same_dir(a: &Path, b: &Path) -> bool {
    match (a.canonicalize(), b.canonicalize()) {
        (Ok(x), Ok(y)) => x == y,
        _ => false,
    }
}

fn label(root: &Path, dir: &Path) -> String {
    let rel = dir.strip_prefix(root).unwrap_or(dir);
    let parts: Vec<String> = rel.components().map(|c| c.as_os_str().to_string_lossy().into_owned()).collect();
    if parts.is_empty() {
        ".".into()
    } else {
        parts.join("/")
    }
}

fn table(header: &[&str], rows: Vec<Vec<String>>) -> CliResult<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header)?;
    for r in rows {
        w.write_record(&r)?;
    }
    let bytes = w.into_inner().map_err(|e| CliError::data(e.to_string()))?;
    Ok(String::from_utf8(bytes).expect("CSV of UTF-8 fields"))
}

fn opt(v: Option<f64>) -> String {
    v.map_or(String::new(), |x| x.to_string())
}

fn fmt3(v: f64) -> String {
    if v.is_finite() {
        format!("{v:.3}")
    } else {
        "n/a".into()
    }
}

pub fn build(root: &Path, out_dir: &Path) -> CliResult<Report> {
    if !root.is_dir() {
        return Err(CliError::usage(format!("{} is not a directory", root.display())));
    }
    let mut md = String::from("# Run report\n");
    let mut objective = Vec::new();
    let mut selection = Vec::new();
    let mut cv = Vec::new();
    let mut errors = Vec::new();
    let mut sections = 0;
    for dir in dirs_under(root, out_dir)? {
        let name = label(root, &dir);
        let has = |f: &str| dir.join(f).is_file();
        if !(has(INFO) || has(CV_TABLE) || has(PREDICTIONS) || has(ERROR_SUMMARY)) {
            continue;
        }
        sections += 1;
        let _ = writeln!(md, "\n## `{name}`");
        if has(INFO) {
            let text = fs::read_to_string(dir.join(INFO))?;
            let info: ModelInfo =
                toml::from_str(&text).map_err(|e| CliError::data(e.message().to_string()).at(&dir.join(INFO)))?;
            let _ = writeln!(
                md,
                "\nOffline fit: K = {}, lambda = {}, alpha = {}, seed = {}, {} EM iterations ({}), {} training units, {} features.",
                info.k,
                info.lambda,
                info.alpha,
                info.seed,
                info.iterations,
                if info.converged { "converged" } else { "not converged" },
                info.n_train,
                info.n_features
            );
            if !info.warnings.is_empty() {
                md.push('\n');
            }
            for w in &info.warnings {
                let _ = writeln!(md, "- warning: `{w}`");
            }
            if has(ACCURACY) {
                let rows: Vec<AccuracyRow> = read_rows(&dir.join(ACCURACY))?;
                md.push_str("\n| true mode | fitted label | units | accuracy |\n|---|---|---|---|\n");
                for r in rows {
                    let _ = writeln!(md, "| {} | {} | {} | {} |", r.true_mode, r.fitted_label, r.units, fmt3(r.accuracy));
                }
            }
            if has(SELECTION) {
                let rows: Vec<SelectionRow> = read_rows(&dir.join(SELECTION))?;
                md.push_str("\n| mode | selected sensors | top sensors by l2 norm |\n|---|---|---|\n");
                for k in 0..info.k {
                    let mut of_mode: Vec<&SelectionRow> = rows.iter().filter(|r| r.mode == k).collect();
                    of_mode.sort_by_key(|r| r.rank);
                    let chosen = of_mode.iter().filter(|r| r.selected).count();
                    let top: Vec<String> = of_mode
                        .iter()
                        .take(TOP_SENSORS)
                        .map(|r| format!("{} ({})", r.sensor_id, fmt3(r.l2_norm)))
                        .collect();
                    let _ = writeln!(md, "| {k} | {chosen} | {} |", top.join(", "));
                }
                for r in rows {
                    selection.push(vec![name.clone(), r.mode.to_string(), r.sensor_id, r.l2_norm.to_string(), r.rank.to_string(), r.selected.to_string()]);
                }
            }
            if has(TRACE) {
                for r in read_rows::<TraceRow>(&dir.join(TRACE))? {
                    objective.push(vec![name.clone(), r.iteration.to_string(), r.objective.to_string()]);
                }
            }
        }
        if has(CV_TABLE) {
            let mut rdr = csv::Reader::from_path(dir.join(CV_TABLE))?;
            for rec in rdr.records() {
                let rec = rec?;
                cv.push(vec![name.clone(), rec[0].to_string(), rec[1].to_string(), rec[2].to_string()]);
            }
            if has(CV_BEST) {
                for b in read_rows::<BestRow>(&dir.join(CV_BEST))? {
                    let _ = writeln!(md, "\nCross-validation choice: lambda = {}, alpha = {} (MSE {}).", b.lambda, b.alpha, fmt3(b.mse));
                }
            }
        }
        if has(PREDICTIONS) {
            let rows: Vec<PredictionRow> = read_rows(&dir.join(PREDICTIONS))?;
            let ok = rows.iter().filter(|r| r.status == "ok").count();
            let clamped = rows.iter().filter(|r| r.clamped == Some(true)).count();
            let fallback = rows.iter().filter(|r| !r.fallback.is_empty()).count();
            let _ = writeln!(
                md,
                "\nPredictions: {} rows, {ok} ok, {clamped} clamped at zero, {fallback} via a fallback.",
                rows.len()
            );
        }
        if has(ERROR_SUMMARY) {
            let rows: Vec<ErrorSummaryRow> = read_rows(&dir.join(ERROR_SUMMARY))?;
            md.push_str("\n| percentile | count | median | q1 | q3 | mean |\n|---|---|---|---|---|---|\n");
            for r in rows {
                let p = r.percentile.map_or("-".to_string(), |p| p.to_string());
                let _ = writeln!(md, "| {p} | {} | {} | {} | {} | {} |", r.count, fmt3(r.median), fmt3(r.q1), fmt3(r.q3), fmt3(r.mean));
            }
            if has(COHORT_SUMMARY) {
                md.push_str("\n| true RUL at most | units | mean relative error |\n|---|---|---|\n");
                for c in read_rows::<CohortRow>(&dir.join(COHORT_SUMMARY))? {
                    let _ = writeln!(md, "| {} | {} | {} |", c.max_true_rul, c.count, c.mean_relative_error.map_or("n/a".into(), fmt3));
                }
            }
            if has(RELATIVE_ERRORS) {
                for r in read_rows::<RelativeErrorRow>(&dir.join(RELATIVE_ERRORS))? {
                    errors.push(vec![name.clone(), opt(r.percentile), r.system_id, r.t_star.to_string(), r.true_rul.to_string(), r.relative_error.to_string()]);
                }
            }
        }
    }
    if sections == 0 {
        return Err(CliError::data(format!("no command outputs found under {}", root.display())));
    }
    let tables = vec![
        (PLOT_OBJECTIVE.to_string(), table(&["run", "iteration", "objective"], objective)?),
        (PLOT_SELECTION.to_string(), table(&["run", "mode", "sensor_id", "l2_norm", "rank", "selected"], selection)?),
        (PLOT_CV.to_string(), table(&["run", "lambda", "alpha", "mse"], cv)?),
        (PLOT_ERRORS.to_string(), table(&["run", "percentile", "system_id", "t_star", "true_rul", "relative_error"], errors)?),
    ];
    Ok(Report { markdown: md, tables })
}
