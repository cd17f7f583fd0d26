mod common;

use common::*;
use nalgebra::DMatrix;
use prognos_core::fda::*;
use prognos_core::signal::{SignalDataset, SystemRecord};
use proptest::prelude::*;

fn raw_fit(curves: &DMatrix<f64>, grid: &[f64]) -> EigenBasis {
    fit_fpca(curves, grid, &FpcaOptions::raw()).unwrap()
}

fn eigenfunction(b: &EigenBasis, m: usize) -> Vec<f64> {
    b.eigenfunctions.row(m).iter().cloned().collect()
}

#[test]
fn scaled_sine_has_one_component() {
    let g = grid(101, 0.0, std::f64::consts::PI);
    let curves = DMatrix::from_fn(3, g.len(), |i, j| [-1.0, 1.0, 2.0][i] * g[j].sin());
    let b = raw_fit(&curves, &g);
    assert!(b.eigenvalues[0] > 0.1);
    assert!(b.eigenvalues[1..].iter().all(|v| v.abs() <= 1e-10 * b.eigenvalues[0]));
    let sine: Vec<f64> = g.iter().map(|t| t.sin()).collect();
    let norm = trapezoid(&g, &sine.iter().map(|v| v * v).collect::<Vec<_>>()).sqrt();
    let phi = eigenfunction(&b, 0);
    let sign = phi[50].signum();
    for j in 0..g.len() {
        assert!((sign * phi[j] - sine[j] / norm).abs() <= 1e-6);
    }
}

#[test]
fn scores_match_independent_quadrature() {
    let g = grid(60, 0.0, 2.0);
    let curves = rank_r_curves(1, 15, &g, 4);
    let b = raw_fit(&curves, &g);
    let scores = pace_scores(&b, &curves).unwrap();
    for i in 0..15 {
        for m in 0..b.n_components() {
            let integrand: Vec<f64> =
                (0..g.len()).map(|j| (curves[(i, j)] - b.mean[j]) * b.eigenfunctions[(m, j)]).collect();
            let oracle = trapezoid(&g, &integrand);
            assert!((scores[(i, m)] - oracle).abs() <= 1e-8, "unit {i} comp {m}");
        }
    }
}

#[test]
fn low_rank_curves_reconstruct_exactly() {
    let g = grid(80, -1.0, 1.5);
    let curves = rank_r_curves(2, 25, &g, 3);
    let b = raw_fit(&curves, &g);
    let q = select_fve(&b.eigenvalues, 1.0 - 1e-12).unwrap();
    assert_eq!(q, 3);
    let scores = projection_scores(&b, &curves).unwrap();
    for i in 0..25 {
        let s: Vec<f64> = (0..q).map(|m| scores[(i, m)]).collect();
        let back = b.reconstruct(&s);
        for j in 0..g.len() {
            assert!((back[j] - curves[(i, j)]).abs() <= 1e-6);
        }
    }
}

#[test]
fn mean_plus_two_first_components() {
    let g = grid(50, 0.0, 1.0);
    let curves = rank_r_curves(3, 12, &g, 2);
    let b = raw_fit(&curves, &g);
    let probe: Vec<f64> = (0..g.len()).map(|j| b.mean[j] + 2.0 * b.eigenfunctions[(0, j)]).collect();
    let s = pace_scores(&b, &DMatrix::from_row_slice(1, g.len(), &probe)).unwrap();
    assert!((s[(0, 0)] - 2.0).abs() <= 1e-6);
    for m in 1..b.n_components() {
        assert!(s[(0, m)].abs() <= 1e-6);
    }
}

#[test]
fn pace_shrinks_with_noise() {
    let g = grid(40, 0.0, 1.0);
    let curves = rank_r_curves(4, 10, &g, 3);
    let mut b = raw_fit(&curves, &g);
    let mut last = f64::INFINITY;
    for noise in [0.0, 1.0, 10.0, 100.0] {
        b.noise_var = noise;
        let s = pace_scores(&b, &curves).unwrap();
        let norm = s.norm();
        assert!(norm < last, "noise {noise}: {norm} vs {last}");
        last = norm;
    }
}

#[test]
fn single_sensor_multivariate_equals_univariate() {
    let g = grid(30, 0.0, 1.0);
    let curves = rank_r_curves(5, 18, &g, 4);
    let uni = raw_fit(&curves, &g);
    let (multi, scores) = fit_mfpca(std::slice::from_ref(&curves), &g, 0.95).unwrap();
    assert_eq!(uni.n_components(), multi.n_components());
    for (a, b) in uni.eigenvalues.iter().zip(&multi.eigenvalues) {
        assert!((a - b).abs() <= 1e-10 * (1.0 + a.abs()));
    }
    assert_eq!(scores.h, select_fve(&uni.eigenvalues, 0.95).unwrap());
}

fn two_sensor_blocks(seed: u64, n: usize, g: &[f64]) -> Vec<DMatrix<f64>> {
    vec![rank_r_curves(seed, n, g, 2), rank_r_curves(seed + 100, n, g, 3)]
}

#[test]
fn multivariate_scores_match_quadrature_and_round_trip() {
    let g = grid(25, 0.0, 1.0);
    let blocks = two_sensor_blocks(6, 20, &g);
    let (basis, scores) = fit_mfpca(&blocks, &g, 0.95).unwrap();
    assert!(basis.orthonormality_error() <= 1e-8);
    for i in 0..20 {
        let unit: Vec<Vec<f64>> = blocks.iter().map(|b| b.row(i).iter().cloned().collect()).collect();
        let z = project_scores(&basis, &scores.standardizer, &unit).unwrap();
        for m in 0..scores.h {
            assert!((z[m] - scores.zeta[(i, m)]).abs() <= 1e-8);
            // Independent oracle: sum of per-block trapezoid integrals.
            let mut raw = 0.0;
            for (p, blk) in unit.iter().enumerate() {
                let f: Vec<f64> = (0..g.len())
                    .map(|j| (blk[j] - basis.mean[p * g.len() + j]) * basis.eigenfunctions[(m, p * g.len() + j)])
                    .collect();
                raw += trapezoid(&g, &f);
            }
            let st = &scores.standardizer;
            assert!(((raw - st.means[m]) / st.sds[m] - z[m]).abs() <= 1e-8);
        }
    }
}

#[test]
fn shifted_mean_scores_are_inner_products_with_one() {
    let g = grid(25, 0.0, 1.0);
    let blocks = two_sensor_blocks(7, 20, &g);
    let (basis, scores) = fit_mfpca(&blocks, &g, 0.95).unwrap();
    let st = &scores.standardizer;
    let gl = g.len();
    for c in [0.0, 0.7, -2.5] {
        let unit: Vec<Vec<f64>> = (0..2).map(|p| basis.mean[p * gl..(p + 1) * gl].iter().map(|v| v + c).collect()).collect();
        let z = project_scores(&basis, st, &unit).unwrap();
        for m in 0..scores.h {
            let ones = vec![1.0; 2 * gl];
            let phi = eigenfunction(&basis, m);
            let expect = c * basis.inner(&ones, &phi);
            let raw = z[m] * st.sds[m] + st.means[m];
            assert!((raw - expect).abs() <= 1e-8, "c {c} comp {m}: {raw} vs {expect}");
        }
    }
}

fn dataset_from_blocks(blocks: &[DMatrix<f64>], g: &[f64]) -> SignalDataset {
    let n = blocks[0].nrows();
    let systems = (0..n)
        .map(|i| {
            let v = DMatrix::from_fn(blocks.len(), g.len(), |p, j| blocks[p][(i, j)]);
            SystemRecord::new(format!("u{i}"), Some(1.0 + i as f64), v)
        })
        .collect();
    SignalDataset::new(vec!["a".into(), "b".into()], g.to_vec(), systems).unwrap()
}

#[test]
fn single_cluster_reduces_to_plain_fpca() {
    let g = grid(30, 0.0, 1.0);
    let blocks = two_sensor_blocks(8, 16, &g);
    let ds = dataset_from_blocks(&blocks, &g);
    let labels = vec![vec![0, 0]; 16];
    let opts = FpcaOptions::raw();
    let fit = fit_cafpca(&ds, &labels, 1, 0.95, &opts).unwrap();
    let mut col = 0;
    for (p, blk) in blocks.iter().enumerate() {
        let plain = fit_fpca(blk, &g, &opts).unwrap();
        let cell = fit.bases.basis_for(p, 0);
        assert_eq!(cell.eigenvalues, plain.eigenvalues);
        let q = select_fve(&plain.eigenvalues, 0.95).unwrap();
        assert_eq!(fit.bases.retained[p], q);
        let s = pace_scores(&plain, blk).unwrap();
        for m in 0..q {
            let column: Vec<f64> = s.column(m).iter().cloned().collect();
            let mu = column.iter().sum::<f64>() / 16.0;
            let sd = (column.iter().map(|v| (v - mu).powi(2)).sum::<f64>() / 15.0).sqrt();
            for i in 0..16 {
                assert!((fit.features.x[(i, col)] - (column[i] - mu) / sd).abs() <= 1e-8);
            }
            col += 1;
        }
    }
    assert_eq!(col, fit.features.x.ncols());
}

#[test]
fn cluster_bases_reconstruct_disjoint_means() {
    let g = grid(40, 0.0, 1.0);
    let n = 20;
    let base = rank_r_curves(9, n, &g, 2);
    // Cluster 1 sits far above cluster 0 for both sensors.
    let shift = |i: usize| if i % 2 == 1 { 50.0 } else { 0.0 };
    let blk = DMatrix::from_fn(n, g.len(), |i, j| base[(i, j)] + shift(i));
    let blocks = vec![blk.clone(), blk * 0.5];
    let ds = dataset_from_blocks(&blocks, &g);
    let labels: Vec<Vec<usize>> = (0..n).map(|i| vec![i % 2; 2]).collect();
    let fit = fit_cafpca(&ds, &labels, 2, 1.0 - 1e-12, &FpcaOptions::raw()).unwrap();
    for p in 0..2 {
        for i in 0..n {
            let b = fit.bases.basis_for(p, i % 2);
            let curve = DMatrix::from_row_slice(1, g.len(), &blocks[p].row(i).iter().cloned().collect::<Vec<_>>());
            let s = projection_scores(b, &curve).unwrap();
            let q = fit.bases.retained[p].min(b.n_components());
            let back = b.reconstruct(&s.row(0).iter().take(q).cloned().collect::<Vec<_>>());
            for j in 0..g.len() {
                assert!((back[j] - blocks[p][(i, j)]).abs() <= 1e-8);
            }
        }
    }
    for c in 0..fit.features.x.ncols() {
        let col: Vec<f64> = fit.features.x.column(c).iter().cloned().collect();
        let mu = col.iter().sum::<f64>() / n as f64;
        let sd = (col.iter().map(|v| (v - mu).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt();
        assert!(mu.abs() <= 1e-8 && (sd - 1.0).abs() <= 1e-8);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn eigenfunctions_orthonormal_on_uneven_grids(seed in 0u64..10_000, gaps in prop::collection::vec(0.01f64..0.2, 20..40)) {
        let mut g = vec![0.0];
        for d in &gaps {
            g.push(g.last().unwrap() + d);
        }
        let curves = rank_r_curves(seed, 12, &g, 4);
        let b = raw_fit(&curves, &g);
        prop_assert!(b.orthonormality_error() <= 1e-8);
        for m in 0..b.n_components() {
            let phi = eigenfunction(&b, m);
            let sq: Vec<f64> = phi.iter().map(|v| v * v).collect();
            prop_assert!((trapezoid(&g, &sq) - 1.0).abs() <= 1e-8);
        }
    }

    #[test]
    fn fve_count_grows_with_threshold(vals in prop::collection::vec(0.0f64..5.0, 1..12), a in 0.05f64..1.0, b in 0.05f64..1.0) {
        let mut v = vals.clone();
        v.sort_by(|x, y| y.partial_cmp(x).unwrap());
        prop_assume!(v[0] > 0.0);
        let (lo, hi) = if a < b { (a, b) } else { (b, a) };
        prop_assert!(select_fve(&v, lo).unwrap() <= select_fve(&v, hi).unwrap());
    }
}
