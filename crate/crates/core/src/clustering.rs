//! KMeans with k-means++ initialization, multi-restart, and empty-cluster
//! repair.

use ndarray::{Array2, ArrayView1, ArrayView2};
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sampling::{pick_weighted, seeded_rng};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ClusterParams {
    pub k: usize,
    pub restarts: usize,
    pub max_iter: usize,
    /// Relative inertia-change stopping tolerance; scale-free across
    /// embedding types.
    pub tol: f64,
    pub seed: u64,
}

impl ClusterParams {
    pub fn new(k: usize, seed: u64) -> Self {
        ClusterParams {
            k,
            restarts: 10,
            max_iter: 300,
            tol: 1e-6,
            seed,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ClusterResult {
    pub labels: Vec<usize>,
    pub centroids: Array2<f64>,
    pub inertia: f64,
}

fn sq_dist(a: ArrayView1<f64>, b: ArrayView1<f64>) -> f64 {
    a.iter()
        .zip(b.iter())
        .map(|(x, y)| (x - y) * (x - y))
        .sum()
}

/// k-means++ seeding: first centroid uniform, each next sampled with
/// probability proportional to the squared distance to the nearest chosen
/// centroid. Deterministic per seed.
pub fn kmeans_pp_init(x: &ArrayView2<f64>, k: usize, seed: u64) -> Result<Array2<f64>> {
    let n = x.nrows();
    if k == 0 || k > n {
        return Err(Error::validation(format!(
            "kmeans++ requires 1 <= k <= n, got k={k}, n={n}"
        )));
    }
    let mut rng = seeded_rng(seed, &[0x6b70]);
    let mut chosen: Vec<usize> = Vec::with_capacity(k);
    let first = rng.random_range(0..n);
    chosen.push(first);
    let mut d2: Vec<f64> = (0..n).map(|i| sq_dist(x.row(i), x.row(first))).collect();
    while chosen.len() < k {
        let total: f64 = d2.iter().sum();
        let next = if total > 0.0 {
            pick_weighted(&mut rng, &d2)
        } else {
            // All remaining distances zero (duplicate points): pick uniformly
            // among indices not yet chosen so k = n still yields a permutation.
            let unchosen: Vec<usize> = (0..n).filter(|i| !chosen.contains(i)).collect();
            unchosen[rng.random_range(0..unchosen.len())]
        };
        chosen.push(next);
        for i in 0..n {
            d2[i] = d2[i].min(sq_dist(x.row(i), x.row(next)));
        }
    }
    let mut centroids = Array2::zeros((k, x.ncols()));
    for (c, &i) in chosen.iter().enumerate() {
        centroids.row_mut(c).assign(&x.row(i));
    }
    Ok(centroids)
}

fn assign(x: &ArrayView2<f64>, centroids: &Array2<f64>) -> (Vec<usize>, f64) {
    let n = x.nrows();
    let k = centroids.nrows();
    let mut labels = vec![0usize; n];
    let mut inertia = 0.0;
    for i in 0..n {
        let mut best = 0usize;
        let mut best_d = f64::INFINITY;
        for c in 0..k {
            let d = sq_dist(x.row(i), centroids.row(c));
            if d < best_d {
                best_d = d;
                best = c;
            }
        }
        labels[i] = best;
        inertia += best_d;
    }
    (labels, inertia)
}

fn update_centroids(x: &ArrayView2<f64>, labels: &[usize], k: usize) -> (Array2<f64>, Vec<usize>) {
    let d = x.ncols();
    let mut centroids = Array2::zeros((k, d));
    let mut sizes = vec![0usize; k];
    for (i, &l) in labels.iter().enumerate() {
        sizes[l] += 1;
        for j in 0..d {
            centroids[[l, j]] += x[[i, j]];
        }
    }
    for c in 0..k {
        if sizes[c] > 0 {
            for j in 0..d {
                centroids[[c, j]] /= sizes[c] as f64;
            }
        }
    }
    (centroids, sizes)
}

/// Moves each empty cluster's centroid onto the point currently farthest from
/// its assigned centroid, so k stays fixed. Each repaired point is used once.
fn repair_empty(
    x: &ArrayView2<f64>,
    labels: &[usize],
    centroids: &mut Array2<f64>,
    sizes: &[usize],
) {
    let mut used: Vec<usize> = Vec::new();
    for c in 0..sizes.len() {
        if sizes[c] > 0 {
            continue;
        }
        let mut far_i = 0usize;
        let mut far_d = -1.0;
        for i in 0..x.nrows() {
            if used.contains(&i) {
                continue;
            }
            let d = sq_dist(x.row(i), centroids.row(labels[i]));
            if d > far_d {
                far_d = d;
                far_i = i;
            }
        }
        centroids.row_mut(c).assign(&x.row(far_i));
        used.push(far_i);
    }
}

/// One Lloyd run from a given initialization. Returns the result and the
/// per-iteration inertia trace (non-increasing).
pub fn kmeans_single(
    x: &ArrayView2<f64>,
    init: Array2<f64>,
    max_iter: usize,
    tol: f64,
) -> (ClusterResult, Vec<f64>) {
    let k = init.nrows();
    let mut centroids = init;
    let mut trace = Vec::new();
    let mut labels;
    let mut prev_inertia = f64::INFINITY;
    loop {
        let (l, inertia) = assign(x, &centroids);
        labels = l;
        trace.push(inertia);
        let (mut new_centroids, sizes) = update_centroids(x, &labels, k);
        if sizes.iter().any(|&s| s == 0) {
            repair_empty(x, &labels, &mut new_centroids, &sizes);
        }
        centroids = new_centroids;
        let rel_change = if prev_inertia.is_finite() && prev_inertia > 0.0 {
            (prev_inertia - inertia) / prev_inertia
        } else if prev_inertia == 0.0 {
            0.0
        } else {
            f64::INFINITY
        };
        if trace.len() >= max_iter || rel_change.abs() < tol {
            break;
        }
        prev_inertia = inertia;
    }
    // Final pass: labels against the last centroids, then make centroids the
    // exact means of their members so the convergence invariant holds.
    let (final_labels, _) = assign(x, &centroids);
    let (mut final_centroids, sizes) = update_centroids(x, &final_labels, k);
    if sizes.iter().any(|&s| s == 0) {
        repair_empty(x, &final_labels, &mut final_centroids, &sizes);
    }
    let inertia: f64 = final_labels
        .iter()
        .enumerate()
        .map(|(i, &l)| sq_dist(x.row(i), final_centroids.row(l)))
        .sum();
    trace.push(inertia);
    (
        ClusterResult {
            labels: final_labels,
            centroids: final_centroids,
            inertia,
        },
        trace,
    )
}

/// Best-of-restarts KMeans. Restarts run independently on derived seeds and
/// ties are broken by restart index, so the result is deterministic per seed
/// regardless of parallel execution.
pub fn kmeans_fit(x: &ArrayView2<f64>, params: &ClusterParams) -> Result<ClusterResult> {
    let n = x.nrows();
    if params.k == 0 || params.k > n {
        return Err(Error::validation(format!(
            "kmeans requires 1 <= k <= n, got k={}, n={n}",
            params.k
        )));
    }
    if params.restarts == 0 {
        return Err(Error::validation("kmeans requires at least 1 restart"));
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::validation("kmeans input contains NaN/Inf"));
    }
    let results: Vec<ClusterResult> = (0..params.restarts)
        .into_par_iter()
        .map(|r| {
            let init = kmeans_pp_init(x, params.k, crate::sampling::derive_seed(params.seed, &[r as u64]))
                .expect("validated k <= n");
            kmeans_single(x, init, params.max_iter, params.tol).0
        })
        .collect();
    let best = results
        .into_iter()
        .enumerate()
        .min_by(|(ia, a), (ib, b)| {
            a.inertia
                .partial_cmp(&b.inertia)
                .unwrap_or(std::cmp::Ordering::Equal)
                .then(ia.cmp(ib))
        })
        .map(|(_, r)| r)
        .expect("at least one restart");
    Ok(best)
}

/// Builds a ClusterResult from fixed labels: centroids are the member means
/// and inertia the squared distance to them. Used for BIC on baseline models
/// whose labels come from argmax rather than KMeans.
pub fn cluster_result_from_labels(x: &Array2<f64>, labels: &[usize], k: usize) -> Result<ClusterResult> {
    if labels.len() != x.nrows() {
        return Err(Error::validation("labels length mismatch"));
    }
    if let Some(&bad) = labels.iter().find(|&&l| l >= k) {
        return Err(Error::validation(format!("label {bad} out of range for k={k}")));
    }
    let view = x.view();
    let (centroids, _) = update_centroids(&view, labels, k);
    let inertia: f64 = labels
        .iter()
        .enumerate()
        .map(|(i, &l)| sq_dist(x.row(i), centroids.row(l)))
        .sum();
    Ok(ClusterResult {
        labels: labels.to_vec(),
        centroids,
        inertia,
    })
}
