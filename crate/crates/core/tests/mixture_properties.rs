mod common;

use common::*;
use nalgebra::DVector;
use prognos_core::mixture::*;
use proptest::prelude::*;

fn fit(seed: u64, lambda: f64, alpha: f64, groups: &[usize]) -> FitResult {
    let (x, y, _) = two_mode_fixture(seed, 60, groups, 0.3);
    let pen = PenaltyConfig { lambda, alpha, group_sizes: groups.to_vec() };
    let cfg = EmConfig { seed, max_iterations: 200, ..Default::default() };
    fit_em(&x, &y, 2, &pen, &cfg, None).unwrap()
}

fn assert_monotone(trace: &[f64]) {
    for w in trace.windows(2) {
        assert!(w[1] <= w[0] + 1e-8 * (1.0 + w[0].abs()), "objective rose from {} to {}", w[0], w[1]);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn em_objective_never_increases(seed in 0u64..1000, lambda in 0.0f64..0.2, alpha in 0.0f64..=1.0) {
        let f = fit(seed, lambda, alpha, &[2, 3, 1]);
        prop_assert!(!f.objective_trace.is_empty());
        assert_monotone(&f.objective_trace);
    }

    #[test]
    fn jensen_bound_for_any_simplex(seed in 0u64..1000) {
        let groups = [2, 2];
        let (x, y, _) = two_mode_fixture(seed, 30, &groups, 0.5);
        let params = random_params(seed + 1, 3, &groups);
        let g = random_simplex(seed + 2, 30, 3);
        let b = check_cdll_bound(&params, &g, &x, &y).unwrap();
        prop_assert!(b.lhs <= b.rhs + 1e-9);
        prop_assert!(b.holds);
        let post = e_step(&params, &x, &y).unwrap();
        let at = check_cdll_bound(&params, &post, &x, &y).unwrap();
        prop_assert!(at.entropy_gap.abs() <= 1e-9, "gap {}", at.entropy_gap);
    }

    #[test]
    fn responsibilities_sum_to_one(seed in 0u64..1000) {
        let groups = [1, 3];
        let (x, y, _) = two_mode_fixture(seed, 25, &groups, 0.5);
        let params = random_params(seed, 2, &groups);
        let g = e_step(&params, &x, &y).unwrap();
        for i in 0..25 {
            prop_assert!((g.gamma.row(i).sum() - 1.0).abs() <= 1e-10);
        }
    }

    #[test]
    fn relabeling_modes_leaves_likelihood(seed in 0u64..1000) {
        let groups = [2, 1];
        let (x, y, _) = two_mode_fixture(seed, 20, &groups, 0.5);
        let params = random_params(seed, 3, &groups);
        let a = neg_idll(&params, &x, &y).unwrap();
        let b = neg_idll(&params.permuted(&[2, 0, 1]), &x, &y).unwrap();
        prop_assert!((a - b).abs() <= 1e-10);
        let ga = e_step(&params, &x, &y).unwrap();
        let gb = e_step(&params.permuted(&[2, 0, 1]), &x, &y).unwrap();
        for i in 0..20 {
            prop_assert!((gb.gamma[(i, 0)] - ga.gamma[(i, 2)]).abs() <= 1e-12);
        }
    }

    #[test]
    fn prox_matches_grid_search(v0 in -3.0f64..3.0, v1 in -3.0f64..3.0, t1 in 0.0f64..1.5, t2 in 0.0f64..1.5) {
        let u = sgl_prox(&[v0, v1], t1, t2);
        let best = grid_argmin(&[v0, v1], t1, t2);
        prop_assert!((u[0] - best[0]).abs() <= 2e-3 && (u[1] - best[1]).abs() <= 2e-3,
            "prox {:?} grid {:?}", u, best);
    }
}

fn prox_objective(u: &[f64; 2], v: &[f64; 2], t1: f64, t2: f64) -> f64 {
    let d = 0.5 * ((u[0] - v[0]).powi(2) + (u[1] - v[1]).powi(2));
    d + t1 * (u[0].abs() + u[1].abs()) + t2 * (u[0] * u[0] + u[1] * u[1]).sqrt()
}

/// Dense lattice search with step 1e-3 around the origin-to-`v` box.
fn grid_argmin(v: &[f64; 2], t1: f64, t2: f64) -> [f64; 2] {
    let step = 1e-3;
    let range = |c: f64| {
        let (lo, hi) = if c < 0.0 { (c - 0.01, 0.01) } else { (-0.01, c + 0.01) };
        ((lo / step).floor() as i64, (hi / step).ceil() as i64)
    };
    let (a0, b0) = range(v[0]);
    let (a1, b1) = range(v[1]);
    let mut best = [0.0, 0.0];
    let mut best_val = prox_objective(&best, v, t1, t2);
    for i in a0..=b0 {
        for j in a1..=b1 {
            let u = [i as f64 * step, j as f64 * step];
            let val = prox_objective(&u, v, t1, t2);
            if val < best_val {
                best_val = val;
                best = u;
            }
        }
    }
    best
}

#[test]
fn prox_closed_form_example() {
    let u = sgl_prox(&[3.0, 4.0], 1.0, 2.0);
    let scale = 1.0 - 2.0 / 13f64.sqrt();
    assert!((u[0] - 2.0 * scale).abs() < 1e-12);
    assert!((u[1] - 3.0 * scale).abs() < 1e-12);
    assert_eq!(sgl_prox(&[0.5, -0.2], 0.0, 0.0), vec![0.5, -0.2]);
    assert_eq!(sgl_prox(&[1.0, 1.0], 0.5, 1.0), vec![0.0, 0.0]);
}

#[test]
fn lambda_max_zeroes_every_group() {
    let groups = [2, 3, 1];
    for seed in 0..5 {
        let (x, y, labels) = two_mode_fixture(seed, 50, &groups, 0.3);
        let gamma = Responsibilities::from_labels(&labels, 2).unwrap();
        let pi = gamma.column_means();
        for alpha in [0.0, 0.3, 1.0] {
            let lmax = lambda_max(&x, &y, &gamma, &pi, alpha).unwrap();
            assert!(lmax > 0.0);
            for (scale, expect_zero) in [(1.0 + 1e-9, true), (2.0, true), (0.7, false)] {
                let pen = PenaltyConfig { lambda: lmax * scale, alpha, group_sizes: groups.to_vec() };
                let mut any_nonzero = false;
                for c in 0..2 {
                    let w: Vec<f64> = gamma.gamma.column(c).iter().cloned().collect();
                    let zero = DVector::zeros(6);
                    let f = m_step_mode(&w, pi[c], &x, &y, &pen, (1.0, 0.0, &zero), 1000, 1e-10).unwrap();
                    if expect_zero {
                        assert!(f.phi.iter().all(|&v| v == 0.0), "seed {seed} alpha {alpha}: {:?}", f.phi);
                    }
                    any_nonzero |= f.phi.iter().any(|&v| v != 0.0);
                }
                if !expect_zero {
                    assert!(any_nonzero, "seed {seed} alpha {alpha}: below lambda_max still all zero");
                }
            }
        }
    }
}

#[test]
fn unpenalized_single_mode_is_least_squares() {
    let groups = [2, 2];
    let (x, y, _) = two_mode_fixture(7, 40, &groups, 0.3);
    let n = y.len();
    let w = vec![1.0; n];
    let pen = PenaltyConfig { lambda: 0.0, alpha: 0.5, group_sizes: groups.to_vec() };
    let f = m_step_mode(&w, 1.0, &x, &y, &pen, (1.0, 0.0, &DVector::zeros(4)), 200_000, 1e-15).unwrap();
    // Oracle: OLS of y on [1, x] gives (b0, b); then phi = rho b, phi0 = rho b0
    // and rho solves the stationarity equation with the OLS residuals.
    let mut design = nalgebra::DMatrix::from_element(n, 5, 1.0);
    design.view_mut((0, 1), (n, 4)).copy_from(&x.x);
    let yv = DVector::from_vec(y.clone());
    let beta = (design.transpose() * &design).cholesky().unwrap().solve(&(design.transpose() * &yv));
    let rss = (&yv - &design * &beta).norm_squared();
    let rho = (n as f64 / rss).sqrt();
    assert!((f.rho - rho).abs() <= 1e-6 * rho, "rho {} vs {}", f.rho, rho);
    assert!((f.phi0 - rho * beta[0]).abs() <= 1e-6);
    for j in 0..4 {
        assert!((f.phi[j] - rho * beta[j + 1]).abs() <= 1e-6, "phi {j}: {} vs {}", f.phi[j], rho * beta[j + 1]);
    }
}

#[test]
fn zero_predictor_precision() {
    let groups = [1];
    let (x, y, _) = two_mode_fixture(3, 20, &groups, 0.3);
    let g: Vec<f64> = (0..20).map(|i| 0.2 + 0.03 * i as f64).collect();
    let total: f64 = g.iter().sum();
    let syy: f64 = g.iter().zip(&y).map(|(a, b)| a * b * b).sum();
    let rho = rho_update(&g, &x, &y, 0.0, &DVector::zeros(1));
    assert!((rho - (total / syy).sqrt()).abs() < 1e-12);
}

#[test]
fn duplicated_data_doubles_likelihood() {
    let groups = [2];
    let (x, y, _) = two_mode_fixture(5, 10, &groups, 0.5);
    let params = random_params(9, 2, &groups);
    let mut xx = nalgebra::DMatrix::zeros(20, 2);
    xx.view_mut((0, 0), (10, 2)).copy_from(&x.x);
    xx.view_mut((10, 0), (10, 2)).copy_from(&x.x);
    let x2 = prognos_core::fda::FeatureMatrix::from_raw(xx, &groups).unwrap();
    let y2: Vec<f64> = y.iter().chain(&y).cloned().collect();
    let a = neg_idll(&params, &x, &y).unwrap();
    let b = neg_idll(&params, &x2, &y2).unwrap();
    assert!((2.0 * a - b).abs() < 1e-10);
}

#[test]
fn identical_components_split_evenly_and_single_mode_is_certain() {
    let groups = [2];
    let (x, y, _) = two_mode_fixture(2, 12, &groups, 0.5);
    let mut p = random_params(4, 2, &groups);
    p.pi = vec![0.5, 0.5];
    p.rho[1] = p.rho[0];
    p.phi0[1] = p.phi0[0];
    p.phi[1] = p.phi[0].clone();
    let g = e_step(&p, &x, &y).unwrap();
    assert!(g.gamma.iter().all(|&v| (v - 0.5).abs() < 1e-12));
    let one = random_params(4, 1, &groups);
    let g1 = e_step(&one, &x, &y).unwrap();
    assert!(g1.gamma.iter().all(|&v| v == 1.0));
    let q = q_function(&one, &g1, &x, &y).unwrap();
    assert!((q - neg_idll(&one, &x, &y).unwrap()).abs() < 1e-10);
}

#[test]
fn separated_modes_are_recovered() {
    let groups = [2, 2];
    for seed in 0..5 {
        let (x, y, truth) = two_mode_fixture(100 + seed, 200, &groups, 0.2);
        let pen = PenaltyConfig { lambda: 0.005, alpha: 0.5, group_sizes: groups.to_vec() };
        // Start from the pooled least-squares split so EM cannot stall on
        // the symmetric saddle.
        let init: Vec<usize> = (0..200).map(|i| usize::from(y[i] * x.x[(i, 0)] < 0.0)).collect();
        let cfg = EmConfig { init_mode: InitMode::LabelsProvided, ..Default::default() };
        let f = fit_em(&x, &y, 2, &pen, &cfg, Some(&init)).unwrap();
        assert_monotone(&f.objective_trace);
        let al = prognos_core::cluster::align_labels(&f.hard_labels, &truth, 2).unwrap();
        // Units with a near-zero active predictor fit both modes equally.
        assert!(al.accuracy >= 0.9, "seed {seed}: accuracy {}", al.accuracy);
    }
}

#[test]
fn huge_penalty_selects_nothing() {
    let f = fit(11, 1e6, 0.5, &[2, 2]);
    assert!(f.selection.union().is_empty());
    assert!(f.params.phi.iter().all(|p| p.iter().all(|&v| v == 0.0)));
}
