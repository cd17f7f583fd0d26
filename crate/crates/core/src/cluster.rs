//! k-means labelling, nearest-neighbour mode diagnosis and label alignment.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use nalgebra::DMatrix;
#[allow(unused_imports)] // inherent float methods shadow it when std is linked
use num_traits::Float;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::{Error, Result};

const MAX_LLOYD_ITERATIONS: usize = 300;

#[derive(Debug, Clone, PartialEq)]
pub struct KmeansModel {
    /// `K x d`.
    pub centroids: DMatrix<f64>,
    pub labels: Vec<usize>,
    pub inertia: f64,
    pub seed: u64,
    /// Inertia after every Lloyd iteration of the winning restart.
    pub inertia_trace: Vec<f64>,
}

impl KmeansModel {
    /// Nearest centroid, ties to the lowest index.
    pub fn assign(&self, point: &[f64]) -> usize {
        nearest(&self.centroids, point).0
    }
}

fn sq_dist_row(m: &DMatrix<f64>, r: usize, p: &[f64]) -> f64 {
    p.iter().enumerate().map(|(j, v)| (m[(r, j)] - v) * (m[(r, j)] - v)).sum()
}

fn nearest(centroids: &DMatrix<f64>, p: &[f64]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for c in 0..centroids.nrows() {
        let d = sq_dist_row(centroids, c, p);
        if d < best.1 {
            best = (c, d);
        }
    }
    best
}

fn row(points: &DMatrix<f64>, i: usize) -> Vec<f64> {
    points.row(i).iter().cloned().collect()
}

/// Lloyd's algorithm from the best of `restarts` k-means++ seedings.
pub fn kmeans(points: &DMatrix<f64>, k: usize, seed: u64, restarts: usize) -> Result<KmeansModel> {
    let n = points.nrows();
    if k == 0 {
        return Err(Error::InvalidParameter("k must be positive".into()));
    }
    if n < k {
        return Err(Error::TooFewSamples(format!("{n} points for {k} clusters")));
    }
    if points.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("k-means input".into()));
    }
    let mut best: Option<KmeansModel> = None;
    for r in 0..restarts.max(1) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(r as u64);
        let init = kmeans_pp(points, k, &mut rng);
        let model = lloyd(points, init, seed);
        if best.as_ref().is_none_or(|b| model.inertia < b.inertia) {
            best = Some(model);
        }
    }
    Ok(best.expect("at least one restart"))
}

fn kmeans_pp(points: &DMatrix<f64>, k: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    let n = points.nrows();
    let d = points.ncols();
    let mut centroids = DMatrix::zeros(k, d);
    let first = rng.random_range(0..n);
    centroids.row_mut(0).copy_from(&points.row(first));
    let mut dist: Vec<f64> = (0..n).map(|i| sq_dist_row(&centroids, 0, &row(points, i))).collect();
    for c in 1..k {
        let total: f64 = dist.iter().sum();
        let pick = if total > 0.0 {
            let mut u = rng.random::<f64>() * total;
            let mut chosen = n - 1;
            for (i, &w) in dist.iter().enumerate() {
                if u < w {
                    chosen = i;
                    break;
                }
                u -= w;
            }
            chosen
        } else {
            rng.random_range(0..n)
        };
        centroids.row_mut(c).copy_from(&points.row(pick));
        for (i, di) in dist.iter_mut().enumerate() {
            *di = di.min(sq_dist_row(&centroids, c, &row(points, i)));
        }
    }
    centroids
}

fn lloyd(points: &DMatrix<f64>, mut centroids: DMatrix<f64>, seed: u64) -> KmeansModel {
    let n = points.nrows();
    let k = centroids.nrows();
    let d = points.ncols();
    let mut labels = vec![usize::MAX; n];
    let mut trace = Vec::new();
    for _ in 0..MAX_LLOYD_ITERATIONS {
        let mut changed = false;
        for i in 0..n {
            let (c, _) = nearest(&centroids, &row(points, i));
            if labels[i] != c {
                labels[i] = c;
                changed = true;
            }
        }
        if !changed {
            break;
        }
        // Refill empty clusters with the point farthest from its centroid.
        for c in 0..k {
            if labels.iter().any(|&l| l == c) {
                continue;
            }
            let mut far = (0usize, -1.0);
            for i in 0..n {
                let size = labels.iter().filter(|&&l| l == labels[i]).count();
                if size < 2 {
                    continue;
                }
                let dd = sq_dist_row(&centroids, labels[i], &row(points, i));
                if dd > far.1 {
                    far = (i, dd);
                }
            }
            labels[far.0] = c;
        }
        let mut sums = DMatrix::<f64>::zeros(k, d);
        let mut counts = vec![0usize; k];
        for i in 0..n {
            counts[labels[i]] += 1;
            for j in 0..d {
                sums[(labels[i], j)] += points[(i, j)];
            }
        }
        for c in 0..k {
            for j in 0..d {
                centroids[(c, j)] = sums[(c, j)] / counts[c] as f64;
            }
        }
        trace.push(inertia(points, &centroids, &labels));
    }
    let inertia = inertia(points, &centroids, &labels);
    KmeansModel { centroids, labels, inertia, seed, inertia_trace: trace }
}

fn inertia(points: &DMatrix<f64>, centroids: &DMatrix<f64>, labels: &[usize]) -> f64 {
    (0..points.nrows()).map(|i| sq_dist_row(centroids, labels[i], &row(points, i))).sum()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KnnConfig {
    pub neighbor_fraction: f64,
    pub minimum_neighbors: usize,
}

impl Default for KnnConfig {
    fn default() -> Self {
        Self { neighbor_fraction: 0.1, minimum_neighbors: 1 }
    }
}

impl KnnConfig {
    /// `ceil(fraction * n)`, at least `minimum_neighbors` (and 1), at most `n`.
    pub fn neighbors(&self, n: usize) -> usize {
        let raw = (self.neighbor_fraction * n as f64 - 1e-9).ceil().max(0.0) as usize;
        raw.max(self.minimum_neighbors).max(1).min(n)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct KnnVote {
    pub mode: usize,
    /// Training indices of the consulted neighbours, nearest first.
    pub neighbors: Vec<usize>,
    /// Votes per mode.
    pub votes: Vec<usize>,
}

/// Majority vote among the nearest training scores (Euclidean). A tied vote
/// goes to the tied mode that appears first in distance order.
pub fn knn_diagnose(
    train_scores: &DMatrix<f64>,
    train_modes: &[usize],
    test_score: &[f64],
    cfg: &KnnConfig,
) -> Result<KnnVote> {
    let n = train_scores.nrows();
    if n == 0 {
        return Err(Error::EmptyDataset);
    }
    if train_modes.len() != n || train_scores.ncols() != test_score.len() {
        return Err(Error::Dimension("training scores, modes and test score disagree".into()));
    }
    if !(cfg.neighbor_fraction > 0.0 && cfg.neighbor_fraction <= 1.0) {
        return Err(Error::InvalidParameter("neighbor fraction must lie in (0, 1]".into()));
    }
    let mut order: Vec<(usize, f64)> =
        (0..n).map(|i| (i, sq_dist_row(train_scores, i, test_score))).collect();
    order.sort_by(|a, b| a.1.partial_cmp(&b.1).unwrap_or(core::cmp::Ordering::Equal).then(a.0.cmp(&b.0)));
    let m = cfg.neighbors(n);
    let neighbors: Vec<usize> = order[..m].iter().map(|(i, _)| *i).collect();
    let modes = train_modes.iter().cloned().max().unwrap_or(0) + 1;
    let mut votes = vec![0usize; modes];
    for &i in &neighbors {
        votes[train_modes[i]] += 1;
    }
    let top = votes.iter().cloned().max().unwrap_or(0);
    let mode = neighbors
        .iter()
        .map(|&i| train_modes[i])
        .find(|&k| votes[k] == top)
        .unwrap_or(0);
    Ok(KnnVote { mode, neighbors, votes })
}

#[derive(Debug, Clone, PartialEq)]
pub struct Alignment {
    /// `permutation[pred] = truth label`.
    pub permutation: Vec<usize>,
    pub accuracy: f64,
}

impl Alignment {
    pub fn relabel(&self, pred: &[usize]) -> Vec<usize> {
        pred.iter().map(|&p| self.permutation[p]).collect()
    }
}

/// Permutation of predicted labels that maximizes agreement with the truth.
/// Exhaustive for `K <= 8`; larger `K` uses a greedy match on the confusion
/// matrix.
pub fn align_labels(pred: &[usize], truth: &[usize], k: usize) -> Result<Alignment> {
    if pred.len() != truth.len() {
        return Err(Error::Dimension(format!(
            "{} predictions for {} truths",
            pred.len(),
            truth.len()
        )));
    }
    if pred.iter().chain(truth).any(|&l| l >= k) {
        return Err(Error::InvalidParameter(format!("labels must lie in [0, {k})")));
    }
    let n = pred.len();
    let mut confusion = vec![vec![0usize; k]; k];
    for (&p, &t) in pred.iter().zip(truth) {
        confusion[p][t] += 1;
    }
    let permutation = if k <= 8 {
        let mut perm: Vec<usize> = (0..k).collect();
        let mut best = (perm.clone(), score(&confusion, &perm));
        while next_permutation(&mut perm) {
            let s = score(&confusion, &perm);
            if s > best.1 {
                best = (perm.clone(), s);
            }
        }
        best.0
    } else {
        greedy_match(&confusion)
    };
    let agree = score(&confusion, &permutation);
    let accuracy = if n == 0 { 1.0 } else { agree as f64 / n as f64 };
    Ok(Alignment { permutation, accuracy })
}

fn score(confusion: &[Vec<usize>], perm: &[usize]) -> usize {
    perm.iter().enumerate().map(|(p, &t)| confusion[p][t]).sum()
}

fn next_permutation(v: &mut [usize]) -> bool {
    let n = v.len();
    if n < 2 {
        return false;
    }
    let mut i = n - 1;
    while i > 0 && v[i - 1] >= v[i] {
        i -= 1;
    }
    if i == 0 {
        return false;
    }
    let mut j = n - 1;
    while v[j] <= v[i - 1] {
        j -= 1;
    }
    v.swap(i - 1, j);
    v[i..].reverse();
    true
}

fn greedy_match(confusion: &[Vec<usize>]) -> Vec<usize> {
    let k = confusion.len();
    let mut perm = vec![usize::MAX; k];
    let mut used = vec![false; k];
    let mut cells: Vec<(usize, usize, usize)> = Vec::new();
    for (p, row) in confusion.iter().enumerate() {
        for (t, &c) in row.iter().enumerate() {
            cells.push((c, p, t));
        }
    }
    cells.sort_by(|a, b| b.0.cmp(&a.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
    for (_, p, t) in cells {
        if perm[p] == usize::MAX && !used[t] {
            perm[p] = t;
            used[t] = true;
        }
    }
    perm
}

/// Fraction of each true class that carries its own label after alignment.
pub fn per_class_accuracy(aligned_pred: &[usize], truth: &[usize], k: usize) -> Vec<f64> {
    (0..k)
        .map(|c| {
            let members: Vec<usize> = (0..truth.len()).filter(|&i| truth[i] == c).collect();
            if members.is_empty() {
                return f64::NAN;
            }
            members.iter().filter(|&&i| aligned_pred[i] == c).count() as f64 / members.len() as f64
        })
        .collect()
}
