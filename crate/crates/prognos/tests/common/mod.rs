#![allow(dead_code)]

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

/// Six sensors, 32 units, 40 grid points: each command finishes in well
/// under a second in an optimized build.
pub const SMALL_CONFIG: &str = r#"
seed = 7

[simulation]
n_sensors = 6
n_per_mode = 16
train_per_mode = 12
informative = [[1, 2, 4], [2, 3, 5]]
snr_informative = [8.0, 11.0]
grid_points = 40

[offline]
lambda = 0.02
alpha = 0.5
kmeans_restarts = 3

[cv]
folds = 2
lambda_grid = [0.02]
alpha_grid = [0.5]
"#;

pub fn bin() -> &'static str {
    env!("CARGO_BIN_EXE_prognos")
}

pub fn run(args: &[&str]) -> Output {
    Command::new(bin()).args(args).output().expect("binary runs")
}

pub fn run_ok(args: &[&str]) -> Output {
    let out = run(args);
    assert!(
        out.status.success(),
        "prognos {args:?} failed with {:?}\n{}",
        out.status.code(),
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

pub fn write_config(dir: &Path, text: &str) -> PathBuf {
    let p = dir.join("config.toml");
    fs::write(&p, text).unwrap();
    p
}

pub fn s(p: &Path) -> &str {
    p.to_str().expect("UTF-8 temp path")
}

/// Every command in order under `root`, as the tests and the determinism
/// check run it.
pub fn full_run(root: &Path, config: &Path) {
    let c = s(config);
    let d = root.join("data");
    let m = root.join("model");
    run_ok(&["simulate", "--config", c, "--out", s(&d)]);
    run_ok(&["fit-offline", "--config", c, "--data", s(&d), "--out", s(&m)]);
    run_ok(&["cv", "--config", c, "--data", s(&d), "--out", s(&root.join("cv"))]);
    run_ok(&[
        "predict", "--config", c, "--model", s(&m), "--data", s(&d), "--percentile", "30,60,90", "--out",
        s(&root.join("pred")),
    ]);
    run_ok(&[
        "evaluate", "--config", c, "--preds", s(&root.join("pred")), "--truth", s(&d.join("truth.csv")), "--out",
        s(&root.join("eval")),
    ]);
    run_ok(&["report", "--config", c, "--run", s(root)]);
}

/// Relative path to file bytes for every file under `root`.
pub fn tree(root: &Path) -> BTreeMap<String, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for e in fs::read_dir(&dir).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                let rel = p.strip_prefix(root).unwrap().to_string_lossy().replace('\\', "/");
                out.insert(rel, fs::read(&p).unwrap());
            }
        }
    }
    out
}

/// Files that differ or exist on one side only.
pub fn tree_diff(a: &Path, b: &Path) -> Vec<String> {
    let (ta, tb) = (tree(a), tree(b));
    let mut names: Vec<&String> = ta.keys().chain(tb.keys()).collect();
    names.sort();
    names.dedup();
    names.into_iter().filter(|n| ta.get(*n) != tb.get(*n)).cloned().collect()
}

/// Deterministic noise in `[-0.5, 0.5)`.
fn jitter(a: u32, b: u32, c: usize) -> f64 {
    let x = ((a as f64) * 12.9898 + (b as f64) * 78.233 + (c as f64) * 37.719).sin() * 43_758.545_3;
    x - x.floor() - 0.5
}

/// C-MAPSS-shaped files: two wear patterns, excluded sensors constant,
/// test units cut short by their RUL. Returns train, test and RUL text.
pub fn cmapss_fixture(n_train: u32, n_test: u32) -> (String, String, String) {
    use prognos::cmapss::{emit, CmapssRecord, DEFAULT_EXCLUDE, N_SENSORS};
    let unit_rows = |unit: u32, life: u32, observed: u32, salt: u32| -> Vec<CmapssRecord> {
        let pattern = (unit + salt) % 2;
        (1..=observed)
            .map(|cycle| {
                let wear = ((cycle as f64 / life as f64) * 3.0).exp() / 3f64.exp();
                let mut sensors = [0.0; N_SENSORS];
                for (s, v) in sensors.iter_mut().enumerate() {
                    let base = 100.0 + 10.0 * s as f64;
                    *v = if DEFAULT_EXCLUDE.contains(&(s + 1)) {
                        base
                    } else {
                        let sign = if (s + pattern as usize) % 3 == 0 { -1.0 } else { 1.0 };
                        base + sign * 5.0 * wear + 0.3 * jitter(unit + salt, cycle, s)
                    };
                }
                CmapssRecord { unit, cycle, op_settings: [0.001 * jitter(unit, cycle, 99), 0.0, 100.0], sensors }
            })
            .collect()
    };
    let mut train = Vec::new();
    for u in 1..=n_train {
        let life = 40 + (u * 7) % 25;
        train.extend(unit_rows(u, life, life, 0));
    }
    let mut test = Vec::new();
    let mut rul = String::new();
    for u in 1..=n_test {
        let life = 42 + (u * 11) % 21;
        let left = 3 + (u * 5) % 24;
        test.extend(unit_rows(u, life, life - left, 1000));
        rul.push_str(&format!("{left}\n"));
    }
    (emit(&train), emit(&test), rul)
}

/// Writes the fixture as `train_FD003.txt`, `test_FD003.txt` and
/// `RUL_FD003.txt` under `dir`.
pub fn write_cmapss_fixture(dir: &Path, n_train: u32, n_test: u32) -> [PathBuf; 3] {
    let (tr, te, rul) = cmapss_fixture(n_train, n_test);
    let paths = [dir.join("train_FD003.txt"), dir.join("test_FD003.txt"), dir.join("RUL_FD003.txt")];
    fs::create_dir_all(dir).unwrap();
    for (p, text) in paths.iter().zip([tr, te, rul]) {
        fs::write(p, text).unwrap();
    }
    paths
}
