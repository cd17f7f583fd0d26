//! Offline model bundle written by `fit-offline` and read by `predict`.
//!
//! Only `labels.csv` and `selection.csv` are needed to rebuild the online
//! model; the rest documents the fit.

use std::path::Path;

use prognos_core::cluster::align_labels;
use prognos_core::pipeline::OfflineModel;
use prognos_core::signal::SignalDataset;
use serde::{Deserialize, Serialize};

use crate::data::{read_rows, write_rows, TruthCsvRow};
use crate::error::{CliError, CliResult};
use crate::output::OutputDir;

pub const INFO: &str = "model.toml";
pub const LABELS: &str = "labels.csv";
pub const SELECTION: &str = "selection.csv";
pub const PARAMS: &str = "params.csv";
pub const COEFFICIENTS: &str = "coefficients.csv";
pub const TRACE: &str = "objective_trace.csv";
pub const RESPONSIBILITIES: &str = "responsibilities.csv";
pub const ACCURACY: &str = "accuracy.csv";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelInfo {
    pub format: String,
    pub k: usize,
    pub lambda: f64,
    pub alpha: f64,
    pub seed: u64,
    pub config_digest: String,
    pub converged: bool,
    pub iterations: usize,
    pub n_train: usize,
    pub n_features: usize,
    pub truncated_at: f64,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelRow {
    pub system_id: String,
    pub label: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionRow {
    pub mode: usize,
    pub sensor_id: String,
    pub l2_norm: f64,
    pub selected: bool,
    /// 1 for the largest norm within the mode.
    pub rank: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamRow {
    pub mode: usize,
    pub pi: f64,
    pub rho: f64,
    pub sigma: f64,
    pub phi0: f64,
    pub beta0: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoefficientRow {
    pub mode: usize,
    pub sensor_id: String,
    /// 1-based score index within the sensor.
    pub component: usize,
    pub phi: f64,
    pub beta: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub iteration: usize,
    pub objective: f64,
}

/// Agreement between fitted labels and known modes after the best
/// relabelling.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AccuracyRow {
    pub true_mode: usize,
    pub fitted_label: usize,
    pub units: usize,
    pub correct: usize,
    pub accuracy: f64,
}

pub fn selection_rows(model: &OfflineModel, sensor_ids: &[String]) -> Vec<SelectionRow> {
    let sel = &model.fit.selection;
    let mut rows = Vec::new();
    for k in 0..model.fit.params.n_modes() {
        let ranked = sel.ranked(k);
        for (p, id) in sensor_ids.iter().enumerate() {
            rows.push(SelectionRow {
                mode: k,
                sensor_id: id.clone(),
                l2_norm: sel.norms[(p, k)],
                selected: sel.significant[p][k],
                rank: ranked.iter().position(|&q| q == p).map_or(0, |r| r + 1),
            });
        }
    }
    rows
}

/// Per-mode accuracy of the fitted labels against truth rows that carry a
/// mode. `None` when no training unit has a known mode.
pub fn accuracy_rows(labels: &[usize], ids: &[String], truth: &[TruthCsvRow], k: usize) -> CliResult<Option<Vec<AccuracyRow>>> {
    let mut pred = Vec::new();
    let mut known = Vec::new();
    for (id, &l) in ids.iter().zip(labels) {
        if let Some(m) = truth.iter().find(|t| &t.system_id == id).and_then(|t| t.mode) {
            pred.push(l);
            known.push(m);
        }
    }
    if known.is_empty() {
        return Ok(None);
    }
    let k = k.max(known.iter().max().map_or(0, |m| m + 1));
    let al = align_labels(&pred, &known, k)?;
    let relabelled = al.relabel(&pred);
    let rows = (0..k)
        .map(|m| {
            let units = known.iter().filter(|&&t| t == m).count();
            let correct = known.iter().zip(&relabelled).filter(|(&t, &p)| t == m && p == m).count();
            AccuracyRow {
                true_mode: m,
                fitted_label: al.permutation.iter().position(|&t| t == m).unwrap_or(m),
                units,
                correct,
                accuracy: if units == 0 { f64::NAN } else { correct as f64 / units as f64 },
            }
        })
        .collect();
    Ok(Some(rows))
}

pub fn write_bundle(
    out: &mut OutputDir,
    model: &OfflineModel,
    train: &SignalDataset,
    truth: &[TruthCsvRow],
    info: &ModelInfo,
) -> CliResult<()> {
    let ids = &train.sensor_ids;
    out.write_text(INFO, &toml::to_string(info).expect("model info serializes"))?;

    let labels: Vec<LabelRow> = train
        .systems
        .iter()
        .zip(&model.labels)
        .map(|(s, &label)| LabelRow { system_id: s.id.clone(), label })
        .collect();
    write_rows(&out.path(LABELS), &labels)?;
    out.record(LABELS);

    write_rows(&out.path(SELECTION), &selection_rows(model, ids))?;
    out.record(SELECTION);

    let p = &model.fit.params;
    let params: Vec<ParamRow> = (0..p.n_modes())
        .map(|k| ParamRow { mode: k, pi: p.pi[k], rho: p.rho[k], sigma: p.sigma(k), phi0: p.phi0[k], beta0: p.beta0(k) })
        .collect();
    write_rows(&out.path(PARAMS), &params)?;
    out.record(PARAMS);

    let mut coefs = Vec::new();
    for k in 0..p.n_modes() {
        let beta = p.beta(k);
        for (g, range) in p.group_offsets.iter().enumerate() {
            for (c, j) in range.clone().enumerate() {
                coefs.push(CoefficientRow { mode: k, sensor_id: ids[g].clone(), component: c + 1, phi: p.phi[k][j], beta: beta[j] });
            }
        }
    }
    write_rows(&out.path(COEFFICIENTS), &coefs)?;
    out.record(COEFFICIENTS);

    let trace: Vec<TraceRow> = model
        .fit
        .objective_trace
        .iter()
        .enumerate()
        .map(|(i, &objective)| TraceRow { iteration: i, objective })
        .collect();
    write_rows(&out.path(TRACE), &trace)?;
    out.record(TRACE);

    let gamma = &model.fit.gamma.gamma;
    let mut w = csv::Writer::from_path(out.path(RESPONSIBILITIES))?;
    let mut header = vec!["system_id".to_string()];
    header.extend((0..gamma.ncols()).map(|k| format!("gamma_{k}")));
    w.write_record(&header)?;
    for (i, s) in train.systems.iter().enumerate() {
        let mut rec = vec![s.id.clone()];
        rec.extend((0..gamma.ncols()).map(|k| gamma[(i, k)].to_string()));
        w.write_record(&rec)?;
    }
    w.flush()?;
    out.record(RESPONSIBILITIES);

    let system_ids: Vec<String> = train.systems.iter().map(|s| s.id.clone()).collect();
    if let Some(rows) = accuracy_rows(&model.labels, &system_ids, truth, info.k)? {
        write_rows(&out.path(ACCURACY), &rows)?;
        out.record(ACCURACY);
    }
    Ok(())
}

/// What the online step needs from a bundle.
#[derive(Debug, Clone, PartialEq)]
pub struct LoadedBundle {
    pub info: ModelInfo,
    /// Per training unit of `train`, in its order.
    pub labels: Vec<usize>,
    /// Selected sensor indices of `train` per mode.
    pub selected: Vec<Vec<usize>>,
}

pub fn load_bundle(dir: &Path, train: &SignalDataset) -> CliResult<LoadedBundle> {
    let info_path = dir.join(INFO);
    let text = std::fs::read_to_string(&info_path).map_err(|e| CliError::from(e).at(&info_path))?;
    let info: ModelInfo = toml::from_str(&text).map_err(|e| CliError::data(e.message().to_string()).at(&info_path))?;
    let label_rows: Vec<LabelRow> = read_rows(&dir.join(LABELS))?;
    if label_rows.len() != train.n_systems()
        || label_rows.iter().zip(&train.systems).any(|(l, s)| l.system_id != s.id)
    {
        return Err(CliError::data("labels do not match the training units of this data directory").at(&dir.join(LABELS)));
    }
    if let Some(l) = label_rows.iter().find(|l| l.label >= info.k) {
        return Err(CliError::data(format!("label {} of {} is not below k = {}", l.label, l.system_id, info.k)));
    }
    let mut selected = vec![Vec::new(); info.k];
    for r in read_rows::<SelectionRow>(&dir.join(SELECTION))? {
        let p = train
            .sensor_ids
            .iter()
            .position(|s| s == &r.sensor_id)
            .ok_or_else(|| CliError::data(format!("unknown sensor {}", r.sensor_id)).at(&dir.join(SELECTION)))?;
        let slot = selected
            .get_mut(r.mode)
            .ok_or_else(|| CliError::data(format!("mode {} is not below k", r.mode)).at(&dir.join(SELECTION)))?;
        if r.selected && !slot.contains(&p) {
            slot.push(p);
        }
    }
    for s in &mut selected {
        s.sort_unstable();
    }
    Ok(LoadedBundle { info, labels: label_rows.into_iter().map(|l| l.label).collect(), selected })
}
