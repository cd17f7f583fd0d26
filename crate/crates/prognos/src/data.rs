//! Canonical CSV files.
//!
//! | file | header |
//! |------|--------|
//! | `grid.csv` | `time` |
//! | `signals.csv`, `test_signals.csv` | `system_id,sensor_id,time,value` |
//! | `ttf.csv`, `test_ttf.csv` | `system_id,ttf` |
//! | `truth.csv` | `system_id,mode,theta,ttf` (mode and theta may be empty) |
//!
//! Floats are written with Rust's shortest round-trip formatting, so a
//! write followed by a read is bit-exact.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fs;
use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use prognos_core::signal::{SignalDataset, SystemRecord};
use prognos_core::sim::TruthRow;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};

pub const GRID: &str = "grid.csv";
pub const SIGNALS: &str = "signals.csv";
pub const TTF: &str = "ttf.csv";
pub const TEST_SIGNALS: &str = "test_signals.csv";
pub const TEST_TTF: &str = "test_ttf.csv";
pub const TRUTH: &str = "truth.csv";

/// Relative tolerance under which a reading time counts as a grid point.
const TIME_MATCH: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SignalRow {
    pub system_id: String,
    pub sensor_id: String,
    pub time: f64,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TtfRow {
    pub system_id: String,
    pub ttf: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruthCsvRow {
    pub system_id: String,
    pub mode: Option<usize>,
    pub theta: Option<f64>,
    pub ttf: f64,
}

impl From<&TruthRow> for TruthCsvRow {
    fn from(t: &TruthRow) -> Self {
        Self { system_id: t.system_id.clone(), mode: Some(t.mode), theta: Some(t.theta), ttf: t.ttf }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct GridRow {
    time: f64,
}

pub fn write_rows<T: Serialize>(path: &Path, rows: &[T]) -> CliResult<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| CliError::from(e).at(path))?;
    for r in rows {
        w.serialize(r).map_err(|e| CliError::from(e).at(path))?;
    }
    w.flush().map_err(|e| CliError::from(e).at(path))?;
    Ok(())
}

/// Writes a header-only file when `rows` is empty, so every schema is
/// present and re-readable.
pub fn write_rows_with_header<T: Serialize>(path: &Path, header: &[&str], rows: &[T]) -> CliResult<()> {
    if !rows.is_empty() {
        return write_rows(path, rows);
    }
    let mut w = csv::Writer::from_path(path).map_err(|e| CliError::from(e).at(path))?;
    w.write_record(header).map_err(|e| CliError::from(e).at(path))?;
    w.flush().map_err(|e| CliError::from(e).at(path))?;
    Ok(())
}

pub fn read_rows<T: for<'de> Deserialize<'de>>(path: &Path) -> CliResult<Vec<T>> {
    let mut r = csv::Reader::from_path(path).map_err(|e| CliError::from(e).at(path))?;
    r.deserialize().map(|row| row.map_err(|e| CliError::from(e).at(path))).collect()
}

pub fn signal_rows(sensor_ids: &[String], grid: &[f64], records: &[SystemRecord]) -> Vec<SignalRow> {
    let mut rows = Vec::new();
    for rec in records {
        for (p, sensor) in sensor_ids.iter().enumerate() {
            for j in 0..rec.observed() {
                rows.push(SignalRow {
                    system_id: rec.id.clone(),
                    sensor_id: sensor.clone(),
                    time: grid[j],
                    value: rec.values[(p, j)],
                });
            }
        }
    }
    rows
}

pub fn write_grid(path: &Path, grid: &[f64]) -> CliResult<()> {
    let rows: Vec<GridRow> = grid.iter().map(|&time| GridRow { time }).collect();
    write_rows(path, &rows)
}

pub fn read_grid(path: &Path) -> CliResult<Vec<f64>> {
    Ok(read_rows::<GridRow>(path)?.into_iter().map(|r| r.time).collect())
}

/// Signals regrouped onto a grid.
#[derive(Debug, Clone, PartialEq)]
pub struct SignalTable {
    pub sensor_ids: Vec<String>,
    pub grid: Vec<f64>,
    /// Systems in order of first appearance.
    pub records: Vec<SystemRecord>,
}

/// Regroups long-form rows. Without `grid`, the union of reading times is
/// used. Each series is linearly interpolated onto the grid and kept
/// through the last grid point covered by every sensor of its system; a
/// reading time on the grid is copied exactly.
pub fn assemble(rows: &[SignalRow], grid: Option<&[f64]>, sensor_order: Option<&[String]>) -> CliResult<SignalTable> {
    let mut system_order: Vec<String> = Vec::new();
    let mut seen: HashSet<&str> = HashSet::new();
    let mut sensor_ids: Vec<String> = sensor_order.map(|s| s.to_vec()).unwrap_or_default();
    let mut series: HashMap<(String, String), Vec<(f64, f64)>> = HashMap::new();
    for r in rows {
        if !r.time.is_finite() || !r.value.is_finite() {
            return Err(CliError::data(format!(
                "non-finite reading for system {} sensor {}",
                r.system_id, r.sensor_id
            )));
        }
        if seen.insert(&r.system_id) {
            system_order.push(r.system_id.clone());
        }
        if !sensor_ids.contains(&r.sensor_id) {
            if sensor_order.is_some() {
                return Err(CliError::data(format!("unknown sensor {}", r.sensor_id)));
            }
            sensor_ids.push(r.sensor_id.clone());
        }
        series.entry((r.system_id.clone(), r.sensor_id.clone())).or_default().push((r.time, r.value));
    }
    if system_order.is_empty() {
        return Err(CliError::data("no signal rows"));
    }
    let grid: Vec<f64> = match grid {
        Some(g) => g.to_vec(),
        None => {
            let mut t: Vec<f64> = rows.iter().map(|r| r.time).collect();
            t.sort_by(f64::total_cmp);
            t.dedup();
            t
        }
    };
    let mut records = Vec::with_capacity(system_order.len());
    for id in &system_order {
        let mut per_sensor = Vec::with_capacity(sensor_ids.len());
        for sensor in &sensor_ids {
            let mut pts = series
                .remove(&(id.clone(), sensor.clone()))
                .ok_or_else(|| CliError::data(format!("system {id} has no readings for sensor {sensor}")))?;
            pts.sort_by(|a, b| a.0.total_cmp(&b.0));
            if pts.windows(2).any(|w| w[0].0 == w[1].0) {
                return Err(CliError::data(format!("system {id} sensor {sensor} repeats a reading time")));
            }
            per_sensor.push(pts);
        }
        let covered = per_sensor.iter().map(|pts| covered_points(pts, &grid)).min().unwrap_or(0);
        if covered == 0 {
            return Err(CliError::data(format!("system {id} has no readings on the grid start")));
        }
        let values = DMatrix::from_fn(sensor_ids.len(), covered, |p, j| interpolate(&per_sensor[p], grid[j]));
        records.push(SystemRecord::new(id.clone(), None, values));
    }
    Ok(SignalTable { sensor_ids, grid, records })
}

/// Leading grid points inside the span of `pts`.
fn covered_points(pts: &[(f64, f64)], grid: &[f64]) -> usize {
    let (lo, hi) = (pts[0].0, pts[pts.len() - 1].0);
    if !within(grid.first().copied().unwrap_or(f64::NAN), lo, hi) {
        return 0;
    }
    grid.iter().take_while(|&&t| within(t, lo, hi)).count()
}

fn within(t: f64, lo: f64, hi: f64) -> bool {
    let tol = TIME_MATCH * (1.0 + t.abs());
    t >= lo - tol && t <= hi + tol
}

fn interpolate(pts: &[(f64, f64)], t: f64) -> f64 {
    let tol = TIME_MATCH * (1.0 + t.abs());
    let i = pts.partition_point(|p| p.0 < t - tol);
    if i < pts.len() && (pts[i].0 - t).abs() <= tol {
        return pts[i].1;
    }
    if i == 0 {
        return pts[0].1;
    }
    if i == pts.len() {
        return pts[pts.len() - 1].1;
    }
    let (t0, v0) = pts[i - 1];
    let (t1, v1) = pts[i];
    v0 + (v1 - v0) * (t - t0) / (t1 - t0)
}

fn attach_ttf(records: &mut [SystemRecord], ttfs: &[TtfRow], path: &Path) -> CliResult<()> {
    let map: BTreeMap<&str, f64> = ttfs.iter().map(|r| (r.system_id.as_str(), r.ttf)).collect();
    if map.len() != ttfs.len() {
        return Err(CliError::data("duplicate system_id").at(path));
    }
    for rec in records.iter_mut() {
        rec.ttf = Some(
            *map.get(rec.id.as_str())
                .ok_or_else(|| CliError::data(format!("no ttf for system {}", rec.id)).at(path))?,
        );
    }
    Ok(())
}

/// A data directory as written by `simulate` or `ingest-cmapss`.
#[derive(Debug, Clone, PartialEq)]
pub struct DataDir {
    /// Training units observed through their failure times, not truncated.
    pub train: SignalDataset,
    /// Test units; `ttf` is filled when `test_ttf.csv` exists.
    pub test: Vec<SystemRecord>,
    pub truth: Vec<TruthCsvRow>,
}

impl DataDir {
    pub fn load(dir: &Path) -> CliResult<Self> {
        let path = |name: &str| -> PathBuf { dir.join(name) };
        let grid = if path(GRID).exists() { Some(read_grid(&path(GRID))?) } else { None };
        let rows: Vec<SignalRow> = read_rows(&path(SIGNALS))?;
        let mut table = assemble(&rows, grid.as_deref(), None)?;
        attach_ttf(&mut table.records, &read_rows(&path(TTF))?, &path(TTF))?;
        let train = SignalDataset::new(table.sensor_ids.clone(), table.grid.clone(), table.records)
            .map_err(|e| CliError::from(e).at(&path(SIGNALS)))?;
        let mut test = Vec::new();
        if path(TEST_SIGNALS).exists() {
            let rows: Vec<SignalRow> = read_rows(&path(TEST_SIGNALS))?;
            if !rows.is_empty() {
                test = assemble(&rows, Some(&train.time_grid), Some(&train.sensor_ids))?.records;
            }
            if path(TEST_TTF).exists() {
                attach_ttf(&mut test, &read_rows(&path(TEST_TTF))?, &path(TEST_TTF))?;
            }
        }
        let truth = if path(TRUTH).exists() { read_rows(&path(TRUTH))? } else { Vec::new() };
        Ok(Self { train, test, truth })
    }

    /// Writes every canonical file; returns the written names.
    pub fn save(&self, dir: &Path) -> CliResult<Vec<&'static str>> {
        fs::create_dir_all(dir)?;
        let grid = &self.train.time_grid;
        let ids = &self.train.sensor_ids;
        write_grid(&dir.join(GRID), grid)?;
        write_rows(&dir.join(SIGNALS), &signal_rows(ids, grid, &self.train.systems))?;
        write_rows(&dir.join(TTF), &ttf_rows(&self.train.systems)?)?;
        write_rows_with_header(
            &dir.join(TEST_SIGNALS),
            &["system_id", "sensor_id", "time", "value"],
            &signal_rows(ids, grid, &self.test),
        )?;
        let mut names = vec![GRID, SIGNALS, TTF, TEST_SIGNALS];
        if self.test.iter().all(|r| r.ttf.is_some()) {
            write_rows_with_header(&dir.join(TEST_TTF), &["system_id", "ttf"], &ttf_rows(&self.test)?)?;
            names.push(TEST_TTF);
        }
        if !self.truth.is_empty() {
            write_rows(&dir.join(TRUTH), &self.truth)?;
            names.push(TRUTH);
        }
        Ok(names)
    }
}

fn ttf_rows(records: &[SystemRecord]) -> CliResult<Vec<TtfRow>> {
    records
        .iter()
        .map(|r| {
            r.ttf
                .map(|ttf| TtfRow { system_id: r.id.clone(), ttf })
                .ok_or_else(|| CliError::data(format!("system {} has no ttf", r.id)))
        })
        .collect()
}
