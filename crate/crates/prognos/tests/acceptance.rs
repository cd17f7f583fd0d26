//! Acceptance run: one PASS / FAIL / SKIP line per criterion, then a
//! summary. Failures are reported, never panicked, so every criterion is
//! always evaluated. Set `PROGNOS_CMAPSS_DIR` to a directory holding
//! `train_FD003.txt`, `test_FD003.txt` and `RUL_FD003.txt` to evaluate the
//! turbofan criterion.

mod common;

use std::fmt::Write as _;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use prognos::commands::{CohortRow, PredictionRow};
use prognos::data::{read_rows, DataDir};
use prognos_core::cluster::{align_labels, per_class_accuracy};
use prognos_core::fda::{
    fit_fpca, fit_mfpca, pace_scores, project_scores, projection_scores, select_fve, FeatureMatrix, FpcaOptions,
};
use prognos_core::linalg::median;
use prognos_core::mixture::{
    check_cdll_bound, e_step, fit_em, lambda_max, m_step_mode, sgl_prox, EmConfig, MixtureParams, PenaltyConfig,
    Responsibilities,
};
use prognos_core::pipeline::eval::{default_percentiles, life_percentile_t_star, relative_error};
use prognos_core::pipeline::regression::{predict_rul, weighted_lasso, LassoConfig, RegressionModel};
use prognos_core::pipeline::{offline_fit, OfflineConfig, OfflineModel, OnlineConfig, OnlineModel};
use prognos_core::signal::StandardizedTtf;
use prognos_core::sim::{gen_dataset, SimConfig, SimOutput};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

#[derive(Debug, Clone, Copy, PartialEq)]
enum Status {
    Pass,
    Fail,
    /// Inputs unavailable; neither a pass nor a failure.
    Skip,
}

struct Outcome {
    status: Status,
    detail: String,
}

fn verdict(ok: bool, detail: String) -> Outcome {
    Outcome { status: if ok { Status::Pass } else { Status::Fail }, detail }
}

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn normal(r: &mut ChaCha8Rng) -> f64 {
    StandardNormal.sample(r)
}

/// Two-mode mixture of regressions with opposite slopes on the first
/// feature of each mode's group.
fn mixture_fixture(seed: u64, n: usize, groups: &[usize], noise: f64) -> (FeatureMatrix, Vec<f64>, Vec<usize>) {
    let mut r = rng(seed);
    let d: usize = groups.iter().sum();
    let x = DMatrix::from_fn(n, d, |_, _| normal(&mut r));
    let mut y = Vec::with_capacity(n);
    let mut labels = Vec::with_capacity(n);
    for i in 0..n {
        let k = i % 2;
        let (col, slope) = if k == 0 { (0, 2.0) } else { (groups[0].min(d - 1), -2.0) };
        y.push(slope * x[(i, col)] + noise * normal(&mut r));
        labels.push(k);
    }
    (FeatureMatrix::from_raw(x, groups).unwrap(), y, labels)
}

fn random_params(seed: u64, k: usize, groups: &[usize]) -> MixtureParams {
    let mut r = rng(seed);
    let mut p = MixtureParams::zeros(k, groups);
    let raw: Vec<f64> = (0..k).map(|_| r.random_range(0.2..1.0)).collect();
    let total: f64 = raw.iter().sum();
    p.pi = raw.iter().map(|v| v / total).collect();
    for c in 0..k {
        p.rho[c] = r.random_range(0.5..2.0);
        p.phi0[c] = 0.5 * normal(&mut r);
        p.phi[c] = DVector::from_fn(p.n_features(), |_, _| 0.5 * normal(&mut r));
    }
    p
}

fn trapezoid(x: &[f64], f: &[f64]) -> f64 {
    x.windows(2).zip(f.windows(2)).map(|(t, v)| 0.5 * (t[1] - t[0]) * (v[0] + v[1])).sum()
}

fn grid(g: usize, lo: f64, hi: f64) -> Vec<f64> {
    (0..g).map(|j| lo + (hi - lo) * j as f64 / (g - 1) as f64).collect()
}

/// Noise-free curves `0.3 t + sum_m a_im f_m(t)` of exact rank `rank` (plus
/// the mean).
fn rank_r_curves(seed: u64, n: usize, grid: &[f64], rank: usize) -> DMatrix<f64> {
    let shapes: [fn(f64) -> f64; 4] = [f64::sin, |t| (2.0 * t).cos(), |t| t * t - 1.0, |t| (0.5 * t).exp()];
    let mut r = rng(seed);
    let coef: Vec<Vec<f64>> = (0..n).map(|_| (0..rank).map(|_| 2.0 * normal(&mut r)).collect()).collect();
    DMatrix::from_fn(n, grid.len(), |i, j| {
        let t = grid[j];
        0.3 * t + (0..rank).map(|m| coef[i][m] * shapes[m](t)).sum::<f64>()
    })
}

/// Largest relative per-step rise of an objective trace.
fn worst_rise(trace: &[f64]) -> f64 {
    trace.windows(2).map(|w| (w[1] - w[0]) / (1.0 + w[0].abs())).fold(f64::NEG_INFINITY, f64::max)
}

const MONOTONE_TOL: f64 = 1e-8;

struct Regime {
    name: &'static str,
    snr: (f64, f64),
    lambda: f64,
    alpha: f64,
    /// Per-mode median accuracy must reach this.
    min_accuracy: f64,
    /// Whether sensor recovery is assessed.
    recovery: bool,
}

const REGIMES: [Regime; 3] = [
    Regime { name: "snr[2,5]", snr: (2.0, 5.0), lambda: 0.0466, alpha: 1.0, min_accuracy: 0.70, recovery: true },
    Regime { name: "snr[5,8]", snr: (5.0, 8.0), lambda: 0.0258, alpha: 0.0, min_accuracy: 0.45, recovery: false },
    Regime { name: "snr[8,11]", snr: (8.0, 11.0), lambda: 0.0258, alpha: 0.25, min_accuracy: 0.70, recovery: true },
];
const SEEDS: u64 = 5;

struct ReferenceFit {
    regime: usize,
    seed: u64,
    truth: Vec<usize>,
    model: OfflineModel,
}

fn reference_fits() -> Vec<ReferenceFit> {
    let mut out = Vec::new();
    for (ri, reg) in REGIMES.iter().enumerate() {
        for seed in 0..SEEDS {
            let sim = gen_dataset(&SimConfig::with_snr(reg.snr.0, reg.snr.1, seed)).unwrap();
            let model =
                offline_fit(&sim.train, &OfflineConfig { seed, ..Default::default() }, reg.lambda, reg.alpha).unwrap();
            out.push(ReferenceFit { regime: ri, seed, truth: sim.train_modes(), model });
        }
    }
    out
}

fn em_monotone(fits: &[ReferenceFit]) -> Outcome {
    let groups = [2, 3, 1];
    let mut r = rng(2024);
    let mut worst_fixture = f64::NEG_INFINITY;
    for seed in 0..20 {
        let (x, y, _) = mixture_fixture(seed, 60, &groups, 0.3);
        let pen = PenaltyConfig { lambda: r.random_range(0.0..0.2), alpha: r.random_range(0.0..=1.0), group_sizes: groups.to_vec() };
        let cfg = EmConfig { seed, max_iterations: 200, ..Default::default() };
        let f = fit_em(&x, &y, 2, &pen, &cfg, None).unwrap();
        worst_fixture = worst_fixture.max(worst_rise(&f.objective_trace));
    }
    let worst_ref = fits.iter().map(|f| worst_rise(&f.model.fit.objective_trace)).fold(f64::NEG_INFINITY, f64::max);
    let worst = worst_fixture.max(worst_ref);
    verdict(
        worst <= MONOTONE_TOL,
        format!(
            "largest step rise / (1 + |f|): {worst_fixture:.2e} over 20 fixtures, {worst_ref:.2e} over {} reference fits (tol {MONOTONE_TOL:.0e})",
            fits.len()
        ),
    )
}

fn jensen_identity() -> Outcome {
    let groups = [2, 2];
    let (mut bound_gap, mut identity_gap) = (f64::NEG_INFINITY, 0.0f64);
    for seed in 0..20 {
        let (x, y, _) = mixture_fixture(seed, 30, &groups, 0.5);
        let k = 2 + (seed as usize % 3);
        let params = random_params(seed + 100, k, &groups);
        let g = Responsibilities::random(30, k, seed + 200);
        let b = check_cdll_bound(&params, &g, &x, &y).unwrap();
        bound_gap = bound_gap.max(b.lhs - b.rhs);
        let post = e_step(&params, &x, &y).unwrap();
        let at = check_cdll_bound(&params, &post, &x, &y).unwrap();
        identity_gap = identity_gap.max(at.entropy_gap.abs());
    }
    verdict(
        bound_gap <= 1e-9 && identity_gap <= 1e-9,
        format!("max(E_g[l_C] - l) = {bound_gap:.2e}, max |l - E_post[l_C] - H| = {identity_gap:.2e} over 20 fixtures (tol 1e-9)"),
    )
}

fn prox_objective(u: [f64; 2], v: [f64; 2], t1: f64, t2: f64) -> f64 {
    0.5 * ((u[0] - v[0]).powi(2) + (u[1] - v[1]).powi(2))
        + t1 * (u[0].abs() + u[1].abs())
        + t2 * (u[0] * u[0] + u[1] * u[1]).sqrt()
}

/// Lattice search with step 1e-3 over the box spanned by 0 and `v`.
fn prox_grid_search(v: [f64; 2], t1: f64, t2: f64) -> [f64; 2] {
    let step = 1e-3;
    let range = |c: f64| {
        let (lo, hi) = if c < 0.0 { (c - 0.01, 0.01) } else { (-0.01, c + 0.01) };
        ((lo / step).floor() as i64, (hi / step).ceil() as i64)
    };
    let ((a0, b0), (a1, b1)) = (range(v[0]), range(v[1]));
    let mut best = [0.0, 0.0];
    let mut best_val = prox_objective(best, v, t1, t2);
    for i in a0..=b0 {
        for j in a1..=b1 {
            let u = [i as f64 * step, j as f64 * step];
            let val = prox_objective(u, v, t1, t2);
            if val < best_val {
                best_val = val;
                best = u;
            }
        }
    }
    best
}

fn prox_and_threshold() -> Outcome {
    let mut r = rng(77);
    let mut worst = 0.0f64;
    for _ in 0..20 {
        let v = [r.random_range(-3.0..3.0), r.random_range(-3.0..3.0)];
        let (t1, t2) = (r.random_range(0.0..1.5), r.random_range(0.0..1.5));
        let u = sgl_prox(&v, t1, t2);
        let g = prox_grid_search(v, t1, t2);
        worst = worst.max((u[0] - g[0]).abs()).max((u[1] - g[1]).abs());
    }
    let groups = [2, 3, 1];
    let mut nonzero_at_or_above = 0;
    let mut cases = 0;
    for seed in 0..5 {
        let (x, y, labels) = mixture_fixture(seed, 50, &groups, 0.3);
        let gamma = Responsibilities::from_labels(&labels, 2).unwrap();
        let pi = gamma.column_means();
        for alpha in [0.0, 0.3, 1.0] {
            let lmax = lambda_max(&x, &y, &gamma, &pi, alpha).unwrap();
            for scale in [1.0 + 1e-9, 2.0, 10.0] {
                let pen = PenaltyConfig { lambda: lmax * scale, alpha, group_sizes: groups.to_vec() };
                for c in 0..2 {
                    let w: Vec<f64> = gamma.gamma.column(c).iter().cloned().collect();
                    let zero = DVector::zeros(6);
                    let f = m_step_mode(&w, pi[c], &x, &y, &pen, (1.0, 0.0, &zero), 1000, 1e-10).unwrap();
                    cases += 1;
                    if f.phi.iter().any(|&v| v != 0.0) {
                        nonzero_at_or_above += 1;
                    }
                }
            }
        }
    }
    verdict(
        worst <= 2e-3 && nonzero_at_or_above == 0,
        format!(
            "prox vs lattice argmin: max |diff| {worst:.2e} over 20 inputs (tol 2e-3); {nonzero_at_or_above} of {cases} mode fits at lambda >= lambda_max kept a nonzero coefficient"
        ),
    )
}

fn score_oracle() -> Outcome {
    let mut score_err = 0.0f64;
    let mut ortho_err = 0.0f64;
    let mut recon_err = 0.0f64;

    // Univariate: PACE scores with zero noise against trapezoid projections.
    let g = grid(60, 0.0, 2.0);
    let curves = rank_r_curves(1, 15, &g, 4);
    let mut b = fit_fpca(&curves, &g, &FpcaOptions::raw()).unwrap();
    b.noise_var = 0.0;
    let scores = pace_scores(&b, &curves).unwrap();
    for i in 0..curves.nrows() {
        for m in 0..b.n_components() {
            let f: Vec<f64> = (0..g.len()).map(|j| (curves[(i, j)] - b.mean[j]) * b.eigenfunctions[(m, j)]).collect();
            score_err = score_err.max((scores[(i, m)] - trapezoid(&g, &f)).abs());
        }
    }
    // Orthonormality on an uneven grid, measured with an independent rule.
    let mut r = rng(5);
    let mut uneven = vec![0.0];
    for _ in 0..35 {
        let last = *uneven.last().unwrap();
        uneven.push(last + r.random_range(0.01..0.2));
    }
    let ub = fit_fpca(&rank_r_curves(9, 30, &uneven, 4), &uneven, &FpcaOptions::raw()).unwrap();
    for a in 0..ub.n_components() {
        for c in 0..ub.n_components() {
            let f: Vec<f64> = (0..uneven.len()).map(|j| ub.eigenfunctions[(a, j)] * ub.eigenfunctions[(c, j)]).collect();
            let want = if a == c { 1.0 } else { 0.0 };
            ortho_err = ortho_err.max((trapezoid(&uneven, &f) - want).abs());
        }
    }
    // Rank-3 reconstruction.
    let g3 = grid(80, -1.0, 1.5);
    let c3 = rank_r_curves(2, 25, &g3, 3);
    let b3 = fit_fpca(&c3, &g3, &FpcaOptions::raw()).unwrap();
    let q = select_fve(&b3.eigenvalues, 1.0 - 1e-12).unwrap();
    let s3 = projection_scores(&b3, &c3).unwrap();
    for i in 0..c3.nrows() {
        let s: Vec<f64> = (0..q).map(|m| s3[(i, m)]).collect();
        let back = b3.reconstruct(&s);
        for j in 0..g3.len() {
            recon_err = recon_err.max((back[j] - c3[(i, j)]).abs());
        }
    }
    // Multivariate: standardized scores undone and compared to the sum of
    // per-sensor trapezoid integrals.
    let gm = grid(25, 0.0, 1.0);
    let blocks = vec![rank_r_curves(6, 20, &gm, 2), rank_r_curves(106, 20, &gm, 3)];
    let (mb, ms) = fit_mfpca(&blocks, &gm, 0.95).unwrap();
    let st = &ms.standardizer;
    for i in 0..20 {
        let unit: Vec<Vec<f64>> = blocks.iter().map(|b| b.row(i).iter().cloned().collect()).collect();
        let z = project_scores(&mb, st, &unit).unwrap();
        for m in 0..ms.h {
            let mut raw = 0.0;
            for (p, blk) in unit.iter().enumerate() {
                let f: Vec<f64> = (0..gm.len())
                    .map(|j| (blk[j] - mb.mean[p * gm.len() + j]) * mb.eigenfunctions[(m, p * gm.len() + j)])
                    .collect();
                raw += trapezoid(&gm, &f);
            }
            score_err = score_err.max((z[m] * st.sds[m] + st.means[m] - raw).abs());
            score_err = score_err.max((z[m] - ms.zeta[(i, m)]).abs() * st.sds[m]);
        }
        for a in 0..ms.h {
            for c in 0..ms.h {
                let mut ip = 0.0;
                for p in 0..blocks.len() {
                    let f: Vec<f64> = (0..gm.len())
                        .map(|j| mb.eigenfunctions[(a, p * gm.len() + j)] * mb.eigenfunctions[(c, p * gm.len() + j)])
                        .collect();
                    ip += trapezoid(&gm, &f);
                }
                ortho_err = ortho_err.max((ip - if a == c { 1.0 } else { 0.0 }).abs());
            }
        }
    }
    verdict(
        score_err <= 1e-8 && ortho_err <= 1e-8 && recon_err <= 1e-6,
        format!(
            "score |diff| {score_err:.2e} (tol 1e-8), orthonormality {ortho_err:.2e} (tol 1e-8), rank-3 reconstruction {recon_err:.2e} (tol 1e-6)"
        ),
    )
}

fn clustering(fits: &[ReferenceFit]) -> Outcome {
    let mut ok = true;
    let mut detail = String::new();
    for (ri, reg) in REGIMES.iter().enumerate() {
        let mut per_mode = vec![Vec::new(); 2];
        for f in fits.iter().filter(|f| f.regime == ri) {
            let al = align_labels(&f.model.labels, &f.truth, 2).unwrap();
            let acc = per_class_accuracy(&al.relabel(&f.model.labels), &f.truth, 2);
            for (k, a) in acc.into_iter().enumerate() {
                per_mode[k].push(a);
            }
        }
        let med: Vec<f64> = per_mode.iter().map(|v| median(v)).collect();
        let pass = med.iter().all(|&m| m >= reg.min_accuracy);
        ok &= pass;
        let _ = write!(
            detail,
            "{}{} (lambda {}, alpha {}): median {:.3}/{:.3} >= {:.2}",
            if detail.is_empty() { "" } else { "; " },
            reg.name,
            reg.lambda,
            reg.alpha,
            med[0],
            med[1],
            reg.min_accuracy
        );
    }
    verdict(ok, format!("{detail}, seeds 0-{}", SEEDS - 1))
}

fn sensor_recovery(fits: &[ReferenceFit]) -> Outcome {
    let informative = SimConfig::default().informative;
    let mut ok = true;
    let mut detail = String::new();
    for (ri, reg) in REGIMES.iter().enumerate().filter(|(_, r)| r.recovery) {
        let mut good_seeds = 0;
        let mut hits = Vec::new();
        for f in fits.iter().filter(|f| f.regime == ri) {
            let al = align_labels(&f.model.labels, &f.truth, 2).unwrap();
            let mut seed_ok = true;
            let mut seed_hits = Vec::new();
            for label in 0..2 {
                let mode = al.permutation[label];
                let top = f.model.fit.selection.ranked(label);
                let n = top.iter().take(4).filter(|&&p| informative[mode].contains(&(p + 1))).count();
                seed_hits.push(n);
                seed_ok &= n >= 3;
            }
            good_seeds += usize::from(seed_ok);
            hits.push(format!("seed {}: {}/{}", f.seed, seed_hits[0], seed_hits[1]));
        }
        let pass = good_seeds >= 3;
        ok &= pass;
        let _ = write!(
            detail,
            "{}{}: {good_seeds} of {SEEDS} seeds with >= 3 of top-4 informative in both modes [{}]",
            if detail.is_empty() { "" } else { "; " },
            reg.name,
            hits.join(", ")
        );
    }
    verdict(ok, detail)
}

struct TrendRun {
    medians: Vec<(f64, f64)>,
    diagnosis_at_half_life: f64,
}

fn trend_run() -> TrendRun {
    let seed = 0;
    let sim: SimOutput = gen_dataset(&SimConfig::with_snr(8.0, 11.0, seed)).unwrap();
    let m = offline_fit(&sim.train, &OfflineConfig { seed, ..Default::default() }, 0.0258, 0.25).unwrap();
    let al = align_labels(&m.labels, &sim.train_modes(), 2).unwrap();
    let online = OnlineModel::new(&sim.train, m.labels.clone(), m.selected_sensors.clone(), OnlineConfig::default()).unwrap();
    let mut medians = Vec::new();
    let mut diagnosis_at_half_life = f64::NAN;
    for pct in default_percentiles() {
        let queries: Vec<_> =
            sim.test.iter().zip(&sim.test_truth).map(|(r, t)| (r, life_percentile_t_star(t.ttf, pct))).collect();
        let mut errors = Vec::new();
        let mut correct = 0;
        for (res, truth) in online.predict_many(&queries).into_iter().zip(&sim.test_truth) {
            if let Ok((p, _)) = res {
                errors.push(relative_error(p.estimated_life, truth.ttf).unwrap());
                correct += usize::from(al.permutation[p.mode] == truth.mode);
            }
        }
        if pct == 50.0 {
            diagnosis_at_half_life = correct as f64 / errors.len().max(1) as f64;
        }
        medians.push((pct, median(&errors)));
    }
    TrendRun { medians, diagnosis_at_half_life }
}

fn rul_trend(run: &TrendRun) -> Outcome {
    let m: Vec<f64> = run.medians.iter().map(|p| p.1).collect();
    let steps = m.windows(2).filter(|w| w[1] <= w[0]).count();
    let last_below_first = m.last() < m.first();
    let listing: Vec<String> = run.medians.iter().map(|(p, v)| format!("{p}%:{v:.2}")).collect();
    verdict(
        last_below_first && steps >= 6,
        format!(
            "medians {}; 90% < 10%: {last_below_first}; nonincreasing steps {steps} of {} (need 6)",
            listing.join(" "),
            m.len() - 1
        ),
    )
}

fn regression_reductions() -> Outcome {
    let mut ols_err = 0.0f64;
    for seed in 0..5 {
        let (n, d) = (30, 3);
        let mut r = rng(seed);
        let z = DMatrix::from_fn(n, d, |_, _| normal(&mut r));
        let y: Vec<f64> = (0..n).map(|i| 0.5 + 1.5 * z[(i, 0)] - 0.7 * z[(i, d - 1)] + 0.3 * normal(&mut r)).collect();
        let fit = weighted_lasso(&z, &y, &vec![1.0; n], 0.0, &LassoConfig::default()).unwrap();
        let mut a = DMatrix::from_element(n, d + 1, 1.0);
        a.view_mut((0, 1), (n, d)).copy_from(&z);
        let beta = a.svd(true, true).solve(&DVector::from_vec(y), 1e-12).unwrap();
        ols_err = ols_err.max((fit.c0 - beta[0]).abs());
        for j in 0..d {
            ols_err = ols_err.max((fit.c[j] - beta[j + 1]).abs());
        }
    }
    // Exact standardized targets must map back to the lives they came from.
    let mut r = rng(11);
    let ttfs: Vec<f64> = (0..40).map(|_| r.random_range(0.05..400.0)).collect();
    let st = StandardizedTtf::from_ttfs(&ttfs).unwrap();
    let mut round_trip = 0.0f64;
    for &t in &ttfs {
        let scores = [normal(&mut r), normal(&mut r)];
        let coefficients = vec![0.3, -0.8];
        let c0 = st.standardize(t) - (coefficients[0] * scores[0] + coefficients[1] * scores[1]);
        let model = RegressionModel {
            mode: 0,
            c0,
            coefficients,
            weights: vec![1.0; ttfs.len()],
            lasso_lambda: 0.0,
            ln_mean: st.ln_mean,
            ln_var: st.ln_var,
            members: (0..ttfs.len()).collect(),
            fallback: None,
        };
        let t_star = 0.01 * t;
        let p = predict_rul(&model, "u", t_star, &scores).unwrap();
        round_trip = round_trip.max((p.estimated_life - t).abs() / t).max(((p.rul + t_star) - t).abs() / t);
    }
    verdict(
        ols_err <= 1e-6 && round_trip <= 1e-9,
        format!("unpenalized equal-weight fit vs OLS: {ols_err:.2e} (tol 1e-6); life round trip relative error {round_trip:.2e} (tol 1e-9)"),
    )
}

struct TurbofanSummary {
    train_units: usize,
    sensors: usize,
    finite_predictions: usize,
    test_units: usize,
    cohort_20: Option<f64>,
    cohort_100: Option<f64>,
}

fn turbofan_pipeline(raw: &Path, work: &Path) -> TurbofanSummary {
    use common::{run_ok, s};
    let [tr, te, ru] = ["train_FD003.txt", "test_FD003.txt", "RUL_FD003.txt"].map(|f| raw.join(f));
    let (d, m, p, e) = (work.join("data"), work.join("model"), work.join("pred"), work.join("eval"));
    run_ok(&["ingest-cmapss", "--train", s(&tr), "--test", s(&te), "--rul", s(&ru), "--out", s(&d)]);
    run_ok(&["fit-offline", "--data", s(&d), "--lambda", "0.1089", "--alpha", "1", "--out", s(&m)]);
    run_ok(&["predict", "--model", s(&m), "--data", s(&d), "--out", s(&p)]);
    run_ok(&["evaluate", "--preds", s(&p), "--truth", s(&d.join("truth.csv")), "--out", s(&e)]);
    let data = DataDir::load(&d).unwrap();
    let preds: Vec<PredictionRow> = read_rows(&p.join("rul_predictions.csv")).unwrap();
    let cohorts: Vec<CohortRow> = read_rows(&e.join("cohort_summary.csv")).unwrap();
    let cohort = |b: f64| cohorts.iter().find(|c| c.max_true_rul == b).and_then(|c| c.mean_relative_error);
    TurbofanSummary {
        train_units: data.train.n_systems(),
        sensors: data.train.n_sensors(),
        finite_predictions: preds.iter().filter(|r| r.status == "ok" && r.rul.is_some_and(f64::is_finite)).count(),
        test_units: data.test.len(),
        cohort_20: cohort(20.0),
        cohort_100: cohort(100.0),
    }
}

fn describe(t: &TurbofanSummary) -> String {
    let f = |v: Option<f64>| v.map_or("n/a".to_string(), |x| format!("{x:.2}"));
    format!(
        "{} train units, {} sensors, {} of {} test units with a finite RUL, mean relative error {} (RUL <= 20) vs {} (RUL <= 100)",
        t.train_units,
        t.sensors,
        t.finite_predictions,
        t.test_units,
        f(t.cohort_20),
        f(t.cohort_100)
    )
}

fn turbofan() -> Outcome {
    let work = tempfile::tempdir().unwrap();
    match std::env::var_os("PROGNOS_CMAPSS_DIR") {
        Some(dir) => {
            let t = turbofan_pipeline(Path::new(&dir), work.path());
            let ordered = matches!((t.cohort_20, t.cohort_100), (Some(a), Some(b)) if a < b);
            verdict(
                t.train_units == 100 && t.sensors == 14 && t.finite_predictions == 100 && t.test_units == 100 && ordered,
                describe(&t),
            )
        }
        None => {
            let raw = work.path().join("raw");
            common::write_cmapss_fixture(&raw, 24, 10);
            let t = turbofan_pipeline(&raw, &work.path().join("run"));
            Outcome {
                status: Status::Skip,
                detail: format!(
                    "PROGNOS_CMAPSS_DIR not set, not evaluated; synthetic C-MAPSS-format fixture ran end to end: {}",
                    describe(&t)
                ),
            }
        }
    }
}

fn determinism() -> Outcome {
    let tmp = tempfile::tempdir().unwrap();
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    for root in [&a, &b] {
        std::fs::create_dir_all(root).unwrap();
        let cfg = common::write_config(root, common::SMALL_CONFIG);
        common::full_run(root, &cfg);
        let raw = root.join("raw");
        let [tr, te, ru] = common::write_cmapss_fixture(&raw, 6, 3);
        common::run_ok(&[
            "ingest-cmapss", "--train", common::s(&tr), "--test", common::s(&te), "--rul", common::s(&ru), "--out",
            common::s(&root.join("turbofan")),
        ]);
    }
    let files = common::tree(&a).len();
    let diff = common::tree_diff(&a, &b);
    verdict(
        diff.is_empty(),
        format!(
            "simulate, fit-offline, cv, predict, evaluate, report and ingest-cmapss run twice: {} of {files} files differ{}",
            diff.len(),
            if diff.is_empty() { String::new() } else { format!(" ({})", diff.join(", ")) }
        ),
    )
}

fn guarded(f: impl FnOnce() -> Outcome) -> Outcome {
    catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|e| {
        let msg = e
            .downcast_ref::<String>()
            .cloned()
            .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
            .unwrap_or_else(|| "panic".into());
        Outcome { status: Status::Fail, detail: format!("aborted: {msg}") }
    })
}

fn main() {
    let start = Instant::now();
    println!("acceptance: running (reference fits take a few minutes in an optimized build)");
    let fits = catch_unwind(reference_fits).unwrap_or_default();
    let trend = catch_unwind(trend_run).ok();

    let have_fits = !fits.is_empty();
    let need_fits = |f: &dyn Fn(&[ReferenceFit]) -> Outcome| {
        if have_fits {
            guarded(|| f(&fits))
        } else {
            Outcome { status: Status::Fail, detail: "reference fits aborted".into() }
        }
    };
    let checks: Vec<(&str, &str, Outcome)> = vec![
        ("A1", "em-objective-monotone", need_fits(&em_monotone)),
        ("A2", "likelihood-lower-bound", guarded(jensen_identity)),
        ("A3", "prox-and-null-threshold", guarded(prox_and_threshold)),
        ("A4", "fpc-score-oracle", guarded(score_oracle)),
        ("A5", "simulated-clustering", need_fits(&clustering)),
        ("A6", "sensor-recovery", need_fits(&sensor_recovery)),
        (
            "A7",
            "rul-error-trend",
            match &trend {
                Some(t) => guarded(|| rul_trend(t)),
                None => Outcome { status: Status::Fail, detail: "prediction run aborted".into() },
            },
        ),
        ("A8", "regression-reductions", guarded(regression_reductions)),
        ("A9", "turbofan-end-to-end", guarded(turbofan)),
        ("A10", "rerun-determinism", guarded(determinism)),
    ];
    let mut counts = [0usize; 3];
    for (id, name, o) in &checks {
        let tag = match o.status {
            Status::Pass => "PASS",
            Status::Fail => "FAIL",
            Status::Skip => "SKIP",
        };
        counts[o.status as usize] += 1;
        println!("{tag} {id:<3} {name}: {}", o.detail);
    }
    if let Some(t) = &trend {
        println!(
            "INFO     diagnosis accuracy at 50% of life, snr[8,11] seed 0: {:.3} (informational, no threshold)",
            t.diagnosis_at_half_life
        );
    }
    println!(
        "acceptance: {} passed, {} failed, {} not evaluated in {:.0} s",
        counts[0],
        counts[1],
        counts[2],
        start.elapsed().as_secs_f64()
    );
}
