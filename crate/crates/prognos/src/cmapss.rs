//! C-MAPSS turbofan text files: whitespace-separated lines of
//! `unit cycle op1 op2 op3 s1 .. s21`, plus a RUL file with one value per
//! test unit. The cycle index becomes the time coordinate.

use nalgebra::DMatrix;
use prognos_core::signal::{SensorScaler, SignalDataset, SystemRecord};

use crate::error::{CliError, CliResult};

pub const N_COLUMNS: usize = 26;
pub const N_SENSORS: usize = 21;
/// Sensors (1-based) dropped by default for carrying little information.
pub const DEFAULT_EXCLUDE: [usize; 7] = [1, 5, 6, 10, 16, 18, 19];

#[derive(Debug, Clone, PartialEq)]
pub struct CmapssRecord {
    pub unit: u32,
    pub cycle: u32,
    pub op_settings: [f64; 3],
    pub sensors: [f64; N_SENSORS],
}

/// Parses a train or test file. Each unit's cycles must run 1, 2, 3, ... in
/// file order, and a unit's lines must be contiguous.
pub fn parse(text: &str) -> CliResult<Vec<CmapssRecord>> {
    let mut out: Vec<CmapssRecord> = Vec::new();
    for (lineno, line) in text.lines().enumerate().map(|(i, l)| (i + 1, l)) {
        let cols: Vec<&str> = line.split_whitespace().collect();
        if cols.is_empty() {
            continue;
        }
        if cols.len() != N_COLUMNS {
            return Err(CliError::data(format!("line {lineno}: expected {N_COLUMNS} columns, found {}", cols.len())));
        }
        let int = |s: &str| -> CliResult<u32> {
            // Some distributions write integers as `1.0`.
            let v: f64 = s.parse().map_err(|_| CliError::data(format!("line {lineno}: bad integer {s:?}")))?;
            if v < 1.0 || v.fract() != 0.0 || v > u32::MAX as f64 {
                return Err(CliError::data(format!("line {lineno}: bad integer {s:?}")));
            }
            Ok(v as u32)
        };
        let real = |s: &str| -> CliResult<f64> {
            s.parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| CliError::data(format!("line {lineno}: bad number {s:?}")))
        };
        let unit = int(cols[0])?;
        let cycle = int(cols[1])?;
        let mut op_settings = [0.0; 3];
        for (k, c) in cols[2..5].iter().enumerate() {
            op_settings[k] = real(c)?;
        }
        let mut sensors = [0.0; N_SENSORS];
        for (k, c) in cols[5..].iter().enumerate() {
            sensors[k] = real(c)?;
        }
        match out.last() {
            Some(prev) if prev.unit == unit => {
                if cycle != prev.cycle + 1 {
                    return Err(CliError::data(format!(
                        "line {lineno}: unit {unit} jumps from cycle {} to {cycle}",
                        prev.cycle
                    )));
                }
            }
            _ => {
                if out.iter().any(|r| r.unit == unit) {
                    return Err(CliError::data(format!("line {lineno}: unit {unit} reappears after other units")));
                }
                if cycle != 1 {
                    return Err(CliError::data(format!("line {lineno}: unit {unit} starts at cycle {cycle}, not 1")));
                }
            }
        }
        out.push(CmapssRecord { unit, cycle, op_settings, sensors });
    }
    if out.is_empty() {
        return Err(CliError::data("no data lines"));
    }
    Ok(out)
}

/// Inverse of [`parse`]; values use shortest round-trip formatting.
pub fn emit(records: &[CmapssRecord]) -> String {
    let mut s = String::new();
    for r in records {
        let mut cols = vec![r.unit.to_string(), r.cycle.to_string()];
        cols.extend(r.op_settings.iter().map(|v| v.to_string()));
        cols.extend(r.sensors.iter().map(|v| v.to_string()));
        s.push_str(&cols.join(" "));
        s.push('\n');
    }
    s
}

pub fn parse_rul(text: &str) -> CliResult<Vec<f64>> {
    let mut out = Vec::new();
    for (lineno, line) in text.lines().enumerate().map(|(i, l)| (i + 1, l)) {
        let t = line.trim();
        if t.is_empty() {
            continue;
        }
        let v: f64 = t
            .parse()
            .ok()
            .filter(|v: &f64| v.is_finite() && *v >= 0.0)
            .ok_or_else(|| CliError::data(format!("line {lineno}: bad RUL value {t:?}")))?;
        out.push(v);
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct IngestOptions {
    /// 1-based sensor numbers to drop.
    pub exclude: Vec<usize>,
    /// Per-sensor z-normalization with training-set constants.
    pub normalize: bool,
}

impl Default for IngestOptions {
    fn default() -> Self {
        Self { exclude: DEFAULT_EXCLUDE.to_vec(), normalize: true }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Ingested {
    /// Training units through their last cycle; `ttf` is that cycle.
    pub train: SignalDataset,
    /// Test units through their last provided cycle; `ttf` is that cycle
    /// plus the true RUL.
    pub test: Vec<SystemRecord>,
    pub test_rul: Vec<f64>,
    pub scaler: Option<SensorScaler>,
}

fn units(records: &[CmapssRecord]) -> Vec<&[CmapssRecord]> {
    records.chunk_by(|a, b| a.unit == b.unit).collect()
}

fn to_record(id: String, rows: &[CmapssRecord], keep: &[usize], ttf: f64) -> SystemRecord {
    let values = DMatrix::from_fn(keep.len(), rows.len(), |p, j| rows[j].sensors[keep[p] - 1]);
    SystemRecord::new(id, Some(ttf), values)
}

pub fn ingest(train: &[CmapssRecord], test: &[CmapssRecord], rul: &[f64], opts: &IngestOptions) -> CliResult<Ingested> {
    if let Some(&bad) = opts.exclude.iter().find(|&&s| s == 0 || s > N_SENSORS) {
        return Err(CliError::usage(format!("excluded sensor {bad} is outside 1..={N_SENSORS}")));
    }
    let keep: Vec<usize> = (1..=N_SENSORS).filter(|s| !opts.exclude.contains(s)).collect();
    if keep.is_empty() {
        return Err(CliError::usage("every sensor is excluded"));
    }
    let train_units = units(train);
    let test_units = units(test);
    if test_units.len() != rul.len() {
        return Err(CliError::data(format!(
            "{} test units but {} RUL rows",
            test_units.len(),
            rul.len()
        )));
    }
    let longest = train_units.iter().chain(&test_units).map(|u| u.len()).max().unwrap_or(0);
    let grid: Vec<f64> = (1..=longest).map(|c| c as f64).collect();
    let train_records: Vec<SystemRecord> = train_units
        .iter()
        .enumerate()
        .map(|(i, u)| to_record(format!("tr{:03}", i + 1), u, &keep, u.len() as f64))
        .collect();
    let test_records: Vec<SystemRecord> = test_units
        .iter()
        .zip(rul)
        .enumerate()
        .map(|(i, (u, r))| to_record(format!("te{:03}", i + 1), u, &keep, u.len() as f64 + r))
        .collect();
    let sensor_ids: Vec<String> = keep.iter().map(|s| format!("s{s}")).collect();
    let mut train_ds = SignalDataset::new(sensor_ids, grid, train_records)?;
    let mut test_records = test_records;
    let scaler = if opts.normalize {
        let sc = SensorScaler::fit(&train_ds);
        train_ds = sc.apply(&train_ds);
        test_records = test_records.iter().map(|r| sc.apply_record(r)).collect();
        Some(sc)
    } else {
        None
    };
    Ok(Ingested { train: train_ds, test: test_records, test_rul: rul.to_vec(), scaler })
}
