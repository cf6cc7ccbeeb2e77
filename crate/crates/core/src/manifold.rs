//! Manifold projection: exact kNN graph, smooth-kNN calibration, fuzzy graph
//! construction, low-dimensional kernel curve fitting, and cross-entropy SGD
//! embedding.

use std::collections::HashMap;

use ndarray::{Array2, ArrayView2};
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sampling::seeded_rng;

/// Exact k-nearest-neighbor graph; per row, neighbor indices with ascending
/// Euclidean distances, ties broken by index, self excluded.
#[derive(Debug, Clone)]
pub struct KnnGraph {
    pub neighbors: Vec<Vec<usize>>,
    pub distances: Vec<Vec<f64>>,
}

/// Symmetric fuzzy membership graph. Each undirected edge is stored once with
/// i < j, so p_ij = p_ji holds bit-exactly by construction.
#[derive(Debug, Clone)]
pub struct FuzzyGraph {
    pub n: usize,
    pub edges: Vec<(usize, usize, f64)>,
    pub rho: Vec<f64>,
    pub sigma: Vec<f64>,
}

impl FuzzyGraph {
    /// Adjacency lists with weights, built on demand.
    pub fn adjacency(&self) -> Vec<Vec<(usize, f64)>> {
        let mut adj = vec![Vec::new(); self.n];
        for &(i, j, w) in &self.edges {
            adj[i].push((j, w));
            adj[j].push((i, w));
        }
        adj
    }

    /// Dense symmetric weight lookup for exact loss evaluation.
    pub fn weight_map(&self) -> HashMap<(usize, usize), f64> {
        let mut map = HashMap::with_capacity(self.edges.len());
        for &(i, j, w) in &self.edges {
            map.insert((i, j), w);
        }
        map
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct UmapParams {
    pub n_neighbors: usize,
    pub min_dist: f64,
    pub spread: f64,
    /// When set, `fit_ab` is skipped and these values are used directly.
    pub ab_override: Option<(f64, f64)>,
    pub n_epochs: usize,
    pub negatives_per_edge: usize,
    pub lr_initial: f64,
    pub target_dim: usize,
    pub seed: u64,
}

impl Default for UmapParams {
    fn default() -> Self {
        UmapParams {
            n_neighbors: 30,
            min_dist: 0.1,
            spread: 1.0,
            ab_override: None,
            n_epochs: 200,
            negatives_per_edge: 5,
            lr_initial: 1.0,
            target_dim: 2,
            seed: 0,
        }
    }
}

impl UmapParams {
    pub fn validate(&self) -> Result<()> {
        if self.n_neighbors < 2 {
            return Err(Error::validation("n_neighbors must be >= 2"));
        }
        if !(self.min_dist >= 0.0 && self.min_dist < self.spread) {
            return Err(Error::validation("require 0 <= min_dist < spread"));
        }
        if !matches!(self.target_dim, 2 | 3 | 5) {
            return Err(Error::validation("target_dim must be 2, 3 or 5"));
        }
        if self.lr_initial <= 0.0 {
            return Err(Error::validation("lr_initial must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Projection {
    pub coords: Array2<f64>,
}

fn sq_dist_rows(x: &ArrayView2<f64>, i: usize, j: usize) -> f64 {
    let (a, b) = (x.row(i), x.row(j));
    a.iter()
        .zip(b.iter())
        .map(|(p, q)| (p - q) * (p - q))
        .sum()
}

/// Brute-force exact kNN by Euclidean distance; ties broken by index.
pub fn knn_graph(x: &ArrayView2<f64>, k: usize) -> Result<KnnGraph> {
    let n = x.nrows();
    if k >= n {
        return Err(Error::validation(format!("knn requires k < n, got k={k}, n={n}")));
    }
    if k == 0 {
        return Err(Error::validation("knn requires k >= 1"));
    }
    let rows: Vec<(Vec<usize>, Vec<f64>)> = (0..n)
        .into_par_iter()
        .map(|i| {
            let mut dists: Vec<(f64, usize)> = (0..n)
                .filter(|&j| j != i)
                .map(|j| (sq_dist_rows(x, i, j), j))
                .collect();
            dists.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then(a.1.cmp(&b.1)));
            dists.truncate(k);
            let neighbors: Vec<usize> = dists.iter().map(|&(_, j)| j).collect();
            let distances: Vec<f64> = dists.iter().map(|&(d, _)| d.sqrt()).collect();
            (neighbors, distances)
        })
        .collect();
    let (neighbors, distances) = rows.into_iter().unzip();
    Ok(KnnGraph { neighbors, distances })
}

/// Smooth-kNN calibration for one row of ascending neighbor distances.
/// rho is the nearest-neighbor distance; sigma solves
/// `sum_j exp(-max(0, d_j - rho)/sigma) = log2(k)` by binary search (64
/// iterations, absolute tolerance 1e-5 on the sum), clamped below at
/// 1e-3 times the mean row distance.
pub fn smooth_knn_calibrate(row_distances: &[f64], k: usize) -> Result<(f64, f64)> {
    if k < 2 || row_distances.len() != k {
        return Err(Error::validation(format!(
            "calibration needs k >= 2 distances, got k={k}, len={}",
            row_distances.len()
        )));
    }
    if row_distances.windows(2).any(|w| w[1] < w[0]) {
        return Err(Error::validation("row distances must be ascending"));
    }
    let rho = row_distances[0];
    let mean: f64 = row_distances.iter().sum::<f64>() / k as f64;
    let floor = (1e-3 * mean).max(1e-8);
    let target = (k as f64).log2();
    let sum_at = |sigma: f64| -> f64 {
        row_distances
            .iter()
            .map(|&d| (-((d - rho).max(0.0)) / sigma).exp())
            .sum()
    };
    // The sum is increasing in sigma; its infimum (sigma -> 0) counts the
    // distances equal to rho. If that already reaches the target there is no
    // crossing and the clamp floor is the canonical answer.
    if sum_at(floor) >= target {
        return Ok((rho, floor));
    }
    let mut lo = floor;
    let mut hi = 1.0_f64.max(mean);
    let mut grow = 0;
    while sum_at(hi) < target && grow < 64 {
        hi *= 2.0;
        grow += 1;
    }
    let mut sigma = 0.5 * (lo + hi);
    for _ in 0..64 {
        let s = sum_at(sigma);
        if (s - target).abs() < 1e-5 {
            break;
        }
        if s < target {
            lo = sigma;
        } else {
            hi = sigma;
        }
        sigma = 0.5 * (lo + hi);
    }
    Ok((rho, sigma.max(floor)))
}

/// Builds the fuzzy graph: directed weights
/// `p_{j|i} = exp(-max(0, d - rho_i)/sigma_i)` over each row's neighbor list,
/// symmetrized by the probabilistic union `p + p' - p p'` and stored sparse.
pub fn fuzzy_graph(knn: &KnnGraph) -> Result<FuzzyGraph> {
    let n = knn.neighbors.len();
    let mut rho = Vec::with_capacity(n);
    let mut sigma = Vec::with_capacity(n);
    let k = knn.neighbors.first().map_or(0, |r| r.len());
    for dists in &knn.distances {
        let (r, s) = smooth_knn_calibrate(dists, k)?;
        rho.push(r);
        sigma.push(s);
    }
    let mut directed: HashMap<(usize, usize), f64> = HashMap::new();
    for i in 0..n {
        for (pos, &j) in knn.neighbors[i].iter().enumerate() {
            let d = knn.distances[i][pos];
            let w = (-((d - rho[i]).max(0.0)) / sigma[i]).exp();
            directed.insert((i, j), w);
        }
    }
    let mut edges: Vec<(usize, usize, f64)> = Vec::new();
    for (&(i, j), &w_ij) in &directed {
        if i > j && directed.contains_key(&(j, i)) {
            continue; // handled from the (j, i) side
        }
        let w_ji = directed.get(&(j, i)).copied().unwrap_or(0.0);
        let (a, b) = (w_ij, w_ji);
        let p = a + b - a * b;
        let (lo, hi) = if i < j { (i, j) } else { (j, i) };
        edges.push((lo, hi, p));
    }
    edges.sort_by(|a, b| (a.0, a.1).cmp(&(b.0, b.1)));
    Ok(FuzzyGraph { n, edges, rho, sigma })
}

/// Piecewise target curve the low-dimensional kernel is fitted against:
/// 1 inside min_dist, exponential decay with the given spread outside.
fn target_curve(d: f64, min_dist: f64, spread: f64) -> f64 {
    if d <= min_dist {
        1.0
    } else {
        (-(d - min_dist) / spread).exp()
    }
}

const AB_FIT_SAMPLES: usize = 300;
const AB_FIT_MAX_ITERS: usize = 500;

/// Least-squares fit of `1/(1 + a d^(2b))` to the target curve sampled at 300
/// points on [0, 3*spread], by Levenberg-Marquardt with relative parameter
/// tolerance 1e-4.
pub fn fit_ab(min_dist: f64, spread: f64) -> Result<(f64, f64)> {
    if !(min_dist >= 0.0 && min_dist < spread) {
        return Err(Error::validation("fit_ab requires 0 <= min_dist < spread"));
    }
    let xs: Vec<f64> = (0..AB_FIT_SAMPLES)
        .map(|i| 3.0 * spread * i as f64 / (AB_FIT_SAMPLES - 1) as f64)
        .collect();
    let ys: Vec<f64> = xs.iter().map(|&d| target_curve(d, min_dist, spread)).collect();

    let residuals = |a: f64, b: f64| -> Vec<f64> {
        xs.iter()
            .zip(ys.iter())
            .map(|(&d, &y)| {
                let q = if d == 0.0 { 1.0 } else { 1.0 / (1.0 + a * d.powf(2.0 * b)) };
                q - y
            })
            .collect()
    };
    let sse = |r: &[f64]| r.iter().map(|v| v * v).sum::<f64>();

    let mut a = 1.0;
    let mut b = 1.0;
    let mut lambda = 1e-3;
    let mut r = residuals(a, b);
    let mut err = sse(&r);
    for _iter in 0..AB_FIT_MAX_ITERS {
        // Jacobian of residuals wrt (a, b).
        let mut jtj = [[0.0f64; 2]; 2];
        let mut jtr = [0.0f64; 2];
        for (m, &d) in xs.iter().enumerate() {
            if d == 0.0 {
                continue;
            }
            let t = d.powf(2.0 * b);
            let denom = 1.0 + a * t;
            let ja = -t / (denom * denom);
            let jb = -2.0 * a * t * d.ln() / (denom * denom);
            jtj[0][0] += ja * ja;
            jtj[0][1] += ja * jb;
            jtj[1][1] += jb * jb;
            jtr[0] += ja * r[m];
            jtr[1] += jb * r[m];
        }
        jtj[1][0] = jtj[0][1];
        // Damped 2x2 solve: (JtJ + lambda diag(JtJ)) delta = -Jtr.
        let m00 = jtj[0][0] * (1.0 + lambda);
        let m11 = jtj[1][1] * (1.0 + lambda);
        let m01 = jtj[0][1];
        let det = m00 * m11 - m01 * m01;
        if det.abs() < 1e-300 {
            break;
        }
        let da = (-jtr[0] * m11 + jtr[1] * m01) / det;
        let db = (-jtr[1] * m00 + jtr[0] * m01) / det;
        let (na, nb) = (a + da, b + db);
        if na <= 0.0 || nb <= 0.0 {
            lambda *= 10.0;
            continue;
        }
        let nr = residuals(na, nb);
        let nerr = sse(&nr);
        if nerr < err {
            let rel = (da.abs() / na.abs()).max(db.abs() / nb.abs());
            a = na;
            b = nb;
            r = nr;
            err = nerr;
            lambda = (lambda / 3.0).max(1e-12);
            if rel < 1e-4 {
                return Ok((a, b));
            }
        } else {
            lambda *= 3.0;
            if lambda > 1e12 {
                // Damping saturated: parameters have stopped moving.
                return Ok((a, b));
            }
        }
    }
    Err(Error::CurveFitDiverged {
        iters: AB_FIT_MAX_ITERS,
        a,
        b,
    })
}

/// Root-mean-square error of the fitted kernel against the target curve on
/// the fit's own sampling grid.
pub fn ab_fit_rmse(a: f64, b: f64, min_dist: f64, spread: f64) -> f64 {
    let mut sum = 0.0;
    for i in 0..AB_FIT_SAMPLES {
        let d = 3.0 * spread * i as f64 / (AB_FIT_SAMPLES - 1) as f64;
        let q = if d == 0.0 { 1.0 } else { 1.0 / (1.0 + a * d.powf(2.0 * b)) };
        let y = target_curve(d, min_dist, spread);
        sum += (q - y) * (q - y);
    }
    (sum / AB_FIT_SAMPLES as f64).sqrt()
}

/// Low-dimensional membership kernel q = 1/(1 + a r^(2b)) on squared distance.
pub fn q_kernel(r2: f64, a: f64, b: f64) -> f64 {
    1.0 / (1.0 + a * r2.max(0.0).powf(b))
}

/// Coefficient c such that grad_{y_i}(-log q_ij) = c (y_i - y_j).
pub fn attractive_grad_coeff(r2: f64, a: f64, b: f64) -> f64 {
    let r2 = r2.max(1e-12);
    2.0 * a * b * r2.powf(b - 1.0) / (1.0 + a * r2.powf(b))
}

/// Coefficient c such that grad_{y_i}(-log(1 - q_ik)) = -c (y_i - y_k).
pub fn repulsive_grad_coeff(r2: f64, a: f64, b: f64) -> f64 {
    let r2 = r2.max(1e-12);
    2.0 * b / (r2 * (1.0 + a * r2.powf(b)))
}

fn connected_components(n: usize, adj: &[Vec<(usize, f64)>]) -> Vec<usize> {
    let mut comp = vec![usize::MAX; n];
    let mut next = 0;
    let mut stack = Vec::new();
    for start in 0..n {
        if comp[start] != usize::MAX {
            continue;
        }
        comp[start] = next;
        stack.push(start);
        while let Some(v) = stack.pop() {
            for &(u, _) in &adj[v] {
                if comp[u] == usize::MAX {
                    comp[u] = next;
                    stack.push(u);
                }
            }
        }
        next += 1;
    }
    comp
}

/// Spectral layout when the fuzzy graph's largest component covers at least
/// 95% of points, else seeded uniform in [-10, 10]^target_dim. The spectral
/// directions are the smallest nonzero eigenvectors of the normalized graph
/// Laplacian, found by deflated power iteration on the shifted operator.
pub fn initialize_embedding(graph: &FuzzyGraph, params: &UmapParams) -> Array2<f64> {
    let n = graph.n;
    let dim = params.target_dim;
    let mut rng = seeded_rng(params.seed, &[0x1217]);
    let adj = graph.adjacency();
    let comp = connected_components(n, &adj);
    let mut comp_sizes: HashMap<usize, usize> = HashMap::new();
    for &c in &comp {
        *comp_sizes.entry(c).or_insert(0) += 1;
    }
    let largest = comp_sizes.values().copied().max().unwrap_or(0);
    let mut coords = Array2::zeros((n, dim));
    if n >= 2 && (largest as f64) / (n as f64) >= 0.95 {
        let mut degree: Vec<f64> = vec![0.0; n];
        for &(i, j, w) in &graph.edges {
            degree[i] += w;
            degree[j] += w;
        }
        for d in degree.iter_mut() {
            if *d <= 0.0 {
                *d = 1.0;
            }
        }
        let sqrt_deg: Vec<f64> = degree.iter().map(|d| d.sqrt()).collect();
        // Trivial top eigenvector of the shifted operator M = I + D^-1/2 W D^-1/2.
        let norm0: f64 = sqrt_deg.iter().map(|v| v * v).sum::<f64>().sqrt();
        let v0: Vec<f64> = sqrt_deg.iter().map(|v| v / norm0).collect();
        let apply = |v: &[f64], out: &mut [f64]| {
            out.copy_from_slice(v); // identity part
            for &(i, j, w) in &graph.edges {
                out[i] += w * v[j] / (sqrt_deg[i] * sqrt_deg[j]);
                out[j] += w * v[i] / (sqrt_deg[i] * sqrt_deg[j]);
            }
        };
        let mut basis: Vec<Vec<f64>> = vec![v0];
        for _ in 0..dim {
            let mut v: Vec<f64> = (0..n).map(|_| rng.random::<f64>() - 0.5).collect();
            let mut buf = vec![0.0; n];
            for _ in 0..150 {
                // Deflate previously found directions, then apply M.
                for prev in &basis {
                    let dot: f64 = v.iter().zip(prev.iter()).map(|(a, b)| a * b).sum();
                    for (vi, pi) in v.iter_mut().zip(prev.iter()) {
                        *vi -= dot * pi;
                    }
                }
                apply(&v, &mut buf);
                std::mem::swap(&mut v, &mut buf);
                let norm: f64 = v.iter().map(|a| a * a).sum::<f64>().sqrt();
                if norm < 1e-12 {
                    for vi in v.iter_mut() {
                        *vi = rng.random::<f64>() - 0.5;
                    }
                } else {
                    for vi in v.iter_mut() {
                        *vi /= norm;
                    }
                }
            }
            basis.push(v);
        }
        for c in 0..dim {
            for i in 0..n {
                coords[[i, c]] = basis[c + 1][i];
            }
        }
        // Scale to the standard [-10, 10] box with a whisper of noise so
        // structurally identical points do not start coincident.
        let max_abs = coords.iter().fold(0.0f64, |m, &v| m.max(v.abs()));
        let scale = if max_abs > 0.0 { 10.0 / max_abs } else { 1.0 };
        for v in coords.iter_mut() {
            *v = *v * scale + (rng.random::<f64>() - 0.5) * 2e-4;
        }
    } else {
        for v in coords.iter_mut() {
            *v = (rng.random::<f64>() * 2.0 - 1.0) * 10.0;
        }
    }
    coords
}

const DISPLACEMENT_CLIP: f64 = 4.0;

fn clip(v: f64) -> f64 {
    v.clamp(-DISPLACEMENT_CLIP, DISPLACEMENT_CLIP)
}

/// Cross-entropy SGD on an existing layout. Per epoch, each edge fires with
/// probability equal to its membership strength and applies the attractive
/// gradient to both endpoints; `negatives_per_edge` uniform random points
/// apply the repulsive gradient to the edge's first endpoint. The learning
/// rate decays linearly to zero; per-step coordinate displacement is clipped
/// to 4.0.
pub fn optimize_from(
    mut coords: Array2<f64>,
    graph: &FuzzyGraph,
    params: &UmapParams,
) -> Result<Projection> {
    params.validate()?;
    let n = graph.n;
    if n < 2 {
        return Err(Error::validation("optimization requires at least 2 points"));
    }
    let (a, b) = match params.ab_override {
        Some(ab) => ab,
        None => fit_ab(params.min_dist, params.spread)?,
    };
    let dim = params.target_dim;
    let mut rng = seeded_rng(params.seed, &[0x09_71]);
    for epoch in 0..params.n_epochs {
        let lr = params.lr_initial * (1.0 - epoch as f64 / params.n_epochs as f64);
        for &(i, j, p) in &graph.edges {
            if rng.random::<f64>() >= p {
                continue;
            }
            let mut r2 = 0.0;
            for c in 0..dim {
                let d = coords[[i, c]] - coords[[j, c]];
                r2 += d * d;
            }
            let coeff = attractive_grad_coeff(r2, a, b);
            for c in 0..dim {
                let d = coords[[i, c]] - coords[[j, c]];
                let step = clip(lr * coeff * d);
                coords[[i, c]] -= step;
                coords[[j, c]] += step;
            }
            for _ in 0..params.negatives_per_edge {
                let k = rng.random_range(0..n);
                if k == i {
                    continue;
                }
                let mut r2 = 0.0;
                for c in 0..dim {
                    let d = coords[[i, c]] - coords[[k, c]];
                    r2 += d * d;
                }
                let coeff = repulsive_grad_coeff(r2, a, b);
                for c in 0..dim {
                    let d = coords[[i, c]] - coords[[k, c]];
                    coords[[i, c]] += clip(lr * coeff * d);
                }
            }
        }
    }
    Ok(Projection { coords })
}

/// Initializes and optimizes in one call.
pub fn optimize_embedding(graph: &FuzzyGraph, params: &UmapParams) -> Result<Projection> {
    params.validate()?;
    let init = initialize_embedding(graph, params);
    optimize_from(init, graph, params)
}

/// Exact cross-entropy over all ordered pairs i != j, with p taken as 0 for
/// non-edges and the 0 log 0 = 0 convention. Returned in nats.
pub fn cross_entropy_loss(graph: &FuzzyGraph, proj: &Projection, a: f64, b: f64) -> f64 {
    let n = graph.n;
    let weights = graph.weight_map();
    let mut loss = 0.0;
    for i in 0..n {
        for j in (i + 1)..n {
            let p = weights.get(&(i, j)).copied().unwrap_or(0.0);
            let mut r2 = 0.0;
            for c in 0..proj.coords.ncols() {
                let d = proj.coords[[i, c]] - proj.coords[[j, c]];
                r2 += d * d;
            }
            let q = q_kernel(r2, a, b);
            let mut term = 0.0;
            if p > 0.0 {
                term += p * (p / q).ln();
            }
            if p < 1.0 {
                term += (1.0 - p) * ((1.0 - p) / (1.0 - q)).ln();
            }
            loss += 2.0 * term; // both ordered pairs
        }
    }
    loss
}

/// Analytic gradient of [`cross_entropy_loss`] with respect to the layout.
/// Assembled from the same per-pair attractive/repulsive coefficients the
/// optimizer uses, so finite-difference agreement validates both.
pub fn loss_gradient(graph: &FuzzyGraph, proj: &Projection, a: f64, b: f64) -> Array2<f64> {
    let n = graph.n;
    let dim = proj.coords.ncols();
    let weights = graph.weight_map();
    let mut grad = Array2::zeros((n, dim));
    for i in 0..n {
        for j in (i + 1)..n {
            let p = weights.get(&(i, j)).copied().unwrap_or(0.0);
            let mut r2 = 0.0;
            for c in 0..dim {
                let d = proj.coords[[i, c]] - proj.coords[[j, c]];
                r2 += d * d;
            }
            let c_att = attractive_grad_coeff(r2, a, b);
            let c_rep = repulsive_grad_coeff(r2, a, b);
            // d/dy_i of [ -p log q - (1-p) log(1-q) ], doubled for ordered pairs.
            let scale = 2.0 * (p * c_att - (1.0 - p) * c_rep);
            for c in 0..dim {
                let d = proj.coords[[i, c]] - proj.coords[[j, c]];
                grad[[i, c]] += scale * d;
                grad[[j, c]] -= scale * d;
            }
        }
    }
    grad
}

/// Full projection pipeline: kNN (k clamped to n-1), calibration, fuzzy
/// graph, curve fit, embedding. Exact loss endpoints are recorded for
/// moderate n.
pub struct UmapRun {
    pub projection: Projection,
    pub graph: FuzzyGraph,
    pub a: f64,
    pub b: f64,
    pub loss_initial: Option<f64>,
    pub loss_final: Option<f64>,
}

const LOSS_EXACT_MAX_N: usize = 2000;

pub fn umap_project(x: &ArrayView2<f64>, params: &UmapParams) -> Result<UmapRun> {
    params.validate()?;
    let n = x.nrows();
    if n < 3 {
        return Err(Error::validation("umap requires at least 3 points"));
    }
    let k = params.n_neighbors.min(n - 1);
    let knn = knn_graph(x, k)?;
    let graph = fuzzy_graph(&knn)?;
    let (a, b) = match params.ab_override {
        Some(ab) => ab,
        None => fit_ab(params.min_dist, params.spread)?,
    };
    let mut fixed = params.clone();
    fixed.ab_override = Some((a, b));
    let init = initialize_embedding(&graph, &fixed);
    let loss_initial = (n <= LOSS_EXACT_MAX_N).then(|| {
        cross_entropy_loss(&graph, &Projection { coords: init.clone() }, a, b)
    });
    let projection = optimize_from(init, &graph, &fixed)?;
    let loss_final =
        (n <= LOSS_EXACT_MAX_N).then(|| cross_entropy_loss(&graph, &projection, a, b));
    Ok(UmapRun {
        projection,
        graph,
        a,
        b,
        loss_initial,
        loss_final,
    })
}

/// Writes a projection as CSV rows (id, x, y[, z...]).
pub fn projection_to_csv(proj: &Projection, ids: &[String]) -> String {
    let dim = proj.coords.ncols();
    let mut header = vec!["id".to_string(), "x".to_string(), "y".to_string()];
    if dim >= 3 {
        header.push("z".to_string());
    }
    for extra in 3..dim {
        header.push(format!("c{extra}"));
    }
    let mut out = header.join(",");
    out.push('\n');
    for (i, id) in ids.iter().enumerate() {
        let mut row = vec![id.clone()];
        for c in 0..dim {
            row.push(format!("{}", proj.coords[[i, c]]));
        }
        out.push_str(&row.join(","));
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::clustering::{kmeans_fit, ClusterParams};
    use crate::evaluation::ari;
    use approx::assert_abs_diff_eq;
    use ndarray::array;

    #[test]
    fn knn_collinear_hand_case() {
        let x = array![[0.0], [1.0], [3.0]];
        let knn = knn_graph(&x.view(), 1).unwrap();
        assert_eq!(knn.neighbors, vec![vec![1], vec![0], vec![1]]);
        assert_eq!(knn.distances[0], vec![1.0]);
        assert_eq!(knn.distances[2], vec![2.0]);
    }

    #[test]
    fn knn_duplicate_is_nearest_at_zero() {
        let x = array![[2.0, 2.0], [2.0, 2.0], [9.0, 9.0]];
        let knn = knn_graph(&x.view(), 2).unwrap();
        assert_eq!(knn.neighbors[0][0], 1);
        assert_eq!(knn.distances[0][0], 0.0);
        assert_eq!(knn.neighbors[1][0], 0);
    }

    #[test]
    fn knn_matches_naive_oracle() {
        let mut rng = seeded_rng(42, &[]);
        let data: Vec<f64> = (0..200).map(|_| rng.random::<f64>()).collect();
        let x = Array2::from_shape_vec((50, 4), data).unwrap();
        let k = 7;
        let knn = knn_graph(&x.view(), k).unwrap();
        for i in 0..50 {
            // Independent oracle: full sort of (distance, index).
            let mut all: Vec<(f64, usize)> = (0..50)
                .filter(|&j| j != i)
                .map(|j| {
                    let d: f64 = x
                        .row(i)
                        .iter()
                        .zip(x.row(j).iter())
                        .map(|(a, b)| (a - b) * (a - b))
                        .sum();
                    (d.sqrt(), j)
                })
                .collect();
            all.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then(a.1.cmp(&b.1)));
            let expected: Vec<usize> = all[..k].iter().map(|&(_, j)| j).collect();
            assert_eq!(knn.neighbors[i], expected, "row {i}");
        }
    }

    #[test]
    fn knn_rejects_k_ge_n() {
        let x = array![[0.0], [1.0]];
        assert!(knn_graph(&x.view(), 2).is_err());
    }

    #[test]
    fn calibrate_equal_distances_returns_floor() {
        let (rho, sigma) = smooth_knn_calibrate(&[1.0, 1.0], 2).unwrap();
        assert_eq!(rho, 1.0);
        assert_abs_diff_eq!(sigma, 1e-3, epsilon = 1e-12); // 1e-3 * mean(1,1)
    }

    #[test]
    fn calibrate_unreachable_target_converges_to_infimum() {
        // distances [0,1], k=2: sum = 1 + exp(-1/sigma) > 1 = log2(2) always,
        // so the infimum is at sigma -> 0 and the clamp floor is returned.
        let (rho, sigma) = smooth_knn_calibrate(&[0.0, 1.0], 2).unwrap();
        assert_eq!(rho, 0.0);
        assert_abs_diff_eq!(sigma, 5e-4, epsilon = 1e-12); // 1e-3 * mean(0,1)
        let sum = 1.0 + (-1.0 / sigma).exp();
        assert!((sum - 1.0).abs() < 1e-3);
    }

    #[test]
    fn calibrate_solves_root_and_plugs_back() {
        let dists = [1.0, 2.0, 3.0, 4.0];
        let (rho, sigma) = smooth_knn_calibrate(&dists, 4).unwrap();
        assert_eq!(rho, 1.0);
        let sum: f64 = dists.iter().map(|&d| (-((d - rho).max(0.0)) / sigma).exp()).sum();
        assert_abs_diff_eq!(sum, 2.0, epsilon = 1e-4);
        // Independent bisection re-check on g(sigma) = sum - 2.
        let g = |s: f64| -> f64 {
            dists.iter().map(|&d| (-((d - 1.0).max(0.0)) / s).exp()).sum::<f64>() - 2.0
        };
        let (mut lo, mut hi) = (1e-6, 100.0);
        for _ in 0..100 {
            let mid = 0.5 * (lo + hi);
            if g(mid) < 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        assert_abs_diff_eq!(sigma, 0.5 * (lo + hi), epsilon = 1e-3);
    }

    #[test]
    fn fuzzy_graph_nearest_neighbor_weight_is_one() {
        let x = array![[0.0], [1.0], [10.0], [11.0]];
        let knn = knn_graph(&x.view(), 2).unwrap();
        let graph = fuzzy_graph(&knn).unwrap();
        let weights = graph.weight_map();
        // 0-1 are mutual nearest neighbors: p_{1|0} = p_{0|1} = 1 -> union 1.
        assert_abs_diff_eq!(weights[&(0, 1)], 1.0, epsilon = 1e-12);
    }

    #[test]
    fn fuzzy_union_formula_cases() {
        // p=1, p'=0 -> 1; p=0.5, p'=0.5 -> 0.75 (checked via the raw formula).
        let union = |a: f64, b: f64| a + b - a * b;
        assert_eq!(union(1.0, 0.0), 1.0);
        assert_eq!(union(0.5, 0.5), 0.75);
    }

    #[test]
    fn fuzzy_graph_symmetric_and_bounded() {
        let mut rng = seeded_rng(3, &[]);
        let data: Vec<f64> = (0..90).map(|_| rng.random::<f64>()).collect();
        let x = Array2::from_shape_vec((30, 3), data).unwrap();
        let knn = knn_graph(&x.view(), 5).unwrap();
        let graph = fuzzy_graph(&knn).unwrap();
        for &(i, j, w) in &graph.edges {
            assert!(i < j);
            assert!(w > 0.0 && w <= 1.0 + 1e-12, "weight {w}");
        }
        for (&r, &s) in graph.rho.iter().zip(graph.sigma.iter()) {
            assert!(r >= 0.0);
            assert!(s > 0.0);
        }
    }

    #[test]
    fn fit_ab_regression_values() {
        // Oracle: global least-squares optimum verified independently by grid
        // search + scipy curve_fit on the identical sampling grid.
        let (a, b) = fit_ab(0.0, 1.0).unwrap();
        assert_abs_diff_eq!(a, 1.9328, epsilon = 2e-2);
        assert_abs_diff_eq!(b, 0.7905, epsilon = 1e-2);
        let rmse = ab_fit_rmse(a, b, 0.0, 1.0);
        assert!(rmse < 0.03, "rmse {rmse}");
        assert!(b > 0.5 && b < 1.5);

        let (a, b) = fit_ab(0.1, 1.0).unwrap();
        assert_abs_diff_eq!(a, 1.5769, epsilon = 2e-2);
        assert_abs_diff_eq!(b, 0.8951, epsilon = 1e-2);
        assert!(ab_fit_rmse(a, b, 0.1, 1.0) < 0.03);
    }

    #[test]
    fn fit_ab_override_bypasses() {
        let params = UmapParams {
            ab_override: Some((2.5, 0.9)),
            ..Default::default()
        };
        assert_eq!(params.ab_override, Some((2.5, 0.9)));
    }

    #[test]
    fn q_kernel_unit_case() {
        assert_abs_diff_eq!(q_kernel(1.0, 1.0, 1.0), 0.5, epsilon = 1e-12);
    }

    #[test]
    fn loss_single_pair_hand_value() {
        // Single pair with p=1 at distance 1 under a=b=1: q=0.5,
        // L = 2 * [1 * ln(1/0.5)] over ordered pairs = 2 ln 2; per ordered
        // pair ln 2.
        let graph = FuzzyGraph {
            n: 2,
            edges: vec![(0, 1, 1.0)],
            rho: vec![0.0, 0.0],
            sigma: vec![1.0, 1.0],
        };
        let proj = Projection {
            coords: array![[0.0, 0.0], [1.0, 0.0]],
        };
        let loss = cross_entropy_loss(&graph, &proj, 1.0, 1.0);
        assert_abs_diff_eq!(loss, 2.0 * std::f64::consts::LN_2, epsilon = 1e-12);
    }

    #[test]
    fn loss_all_zero_p_is_pure_repulsion() {
        let graph = FuzzyGraph {
            n: 3,
            edges: vec![],
            rho: vec![0.0; 3],
            sigma: vec![1.0; 3],
        };
        let proj = Projection {
            coords: array![[0.0, 0.0], [3.0, 0.0], [0.0, 4.0]],
        };
        let loss = cross_entropy_loss(&graph, &proj, 1.0, 1.0);
        assert!(loss >= 0.0);
        // Direct evaluation of sum log(1/(1-q)).
        let q = |r2: f64| 1.0 / (1.0 + r2);
        let expected = 2.0
            * ((1.0 / (1.0 - q(9.0))).ln() + (1.0 / (1.0 - q(25.0))).ln()
                + (1.0 / (1.0 - q(16.0))).ln());
        assert_abs_diff_eq!(loss, expected, epsilon = 1e-12);
    }

    #[test]
    fn loss_minimized_when_q_matches_p() {
        // With p = q for every pair, perturbing any single coordinate
        // increases the loss.
        let coords = array![[0.0, 0.0], [1.0, 0.0], [0.3, 1.1], [-0.7, 0.4]];
        let proj = Projection { coords: coords.clone() };
        let (a, b) = (1.3, 0.9);
        let mut edges = Vec::new();
        for i in 0..4 {
            for j in (i + 1)..4 {
                let mut r2 = 0.0;
                for c in 0..2 {
                    let d = coords[[i, c]] - coords[[j, c]];
                    r2 += d * d;
                }
                edges.push((i, j, q_kernel(r2, a, b)));
            }
        }
        let graph = FuzzyGraph {
            n: 4,
            edges,
            rho: vec![0.0; 4],
            sigma: vec![1.0; 4],
        };
        let base = cross_entropy_loss(&graph, &proj, a, b);
        for i in 0..4 {
            for c in 0..2 {
                let mut bumped = coords.clone();
                bumped[[i, c]] += 0.05;
                let loss = cross_entropy_loss(&graph, &Projection { coords: bumped }, a, b);
                assert!(loss > base - 1e-12, "perturbation decreased loss: {loss} < {base}");
            }
        }
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let coords = array![
            [0.0, 0.0],
            [1.0, 0.2],
            [0.4, 1.3],
            [-0.9, 0.7],
            [0.3, -1.1]
        ];
        let graph = FuzzyGraph {
            n: 5,
            edges: vec![
                (0, 1, 0.9),
                (0, 2, 0.4),
                (1, 2, 0.7),
                (2, 3, 1.0),
                (3, 4, 0.25),
            ],
            rho: vec![0.0; 5],
            sigma: vec![1.0; 5],
        };
        let (a, b) = (1.577, 0.895);
        let proj = Projection { coords: coords.clone() };
        let grad = loss_gradient(&graph, &proj, a, b);
        let h = 1e-6;
        for i in 0..5 {
            for c in 0..2 {
                let mut plus = coords.clone();
                plus[[i, c]] += h;
                let mut minus = coords.clone();
                minus[[i, c]] -= h;
                let fd = (cross_entropy_loss(&graph, &Projection { coords: plus }, a, b)
                    - cross_entropy_loss(&graph, &Projection { coords: minus }, a, b))
                    / (2.0 * h);
                let an = grad[[i, c]];
                let rel = (an - fd).abs() / fd.abs().max(1e-8);
                assert!(rel < 1e-4, "grad[{i},{c}]: analytic {an} vs fd {fd} (rel {rel})");
            }
        }
    }

    #[test]
    fn two_points_single_edge_converge() {
        let graph = FuzzyGraph {
            n: 2,
            edges: vec![(0, 1, 1.0)],
            rho: vec![0.0, 0.0],
            sigma: vec![1.0, 1.0],
        };
        let init = array![[0.0, 0.0], [5.0, 0.0]];
        let params = UmapParams {
            n_epochs: 300,
            negatives_per_edge: 0,
            lr_initial: 1.0,
            ab_override: Some((1.577, 0.895)),
            seed: 1,
            ..Default::default()
        };
        let before = 5.0;
        let proj = optimize_from(init, &graph, &params).unwrap();
        let d: f64 = (proj.coords[[0, 0]] - proj.coords[[1, 0]]).powi(2)
            + (proj.coords[[0, 1]] - proj.coords[[1, 1]]).powi(2);
        let d = d.sqrt();
        assert!(d < before, "distance should shrink, got {d}");
        let q = q_kernel(d * d, 1.577, 0.895);
        assert!(q >= 0.99, "q={q} at distance {d}");
    }

    fn gaussian_blobs(n_per: usize, dim: usize, centers: &[f64], seed: u64) -> (Array2<f64>, Vec<usize>) {
        let mut rng = seeded_rng(seed, &[0xb10b]);
        let n = n_per * centers.len();
        let mut data = Array2::zeros((n, dim));
        let mut labels = Vec::with_capacity(n);
        for (c, &center) in centers.iter().enumerate() {
            for i in 0..n_per {
                let row = c * n_per + i;
                for d in 0..dim {
                    // Box-Muller standard normal.
                    let u1: f64 = rng.random::<f64>().max(1e-12);
                    let u2: f64 = rng.random::<f64>();
                    let z = (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos();
                    data[[row, d]] = center + z * 0.5;
                }
                labels.push(c);
            }
        }
        (data, labels)
    }

    #[test]
    fn loss_decreases_endpoint_to_endpoint() {
        for seed in 0..3u64 {
            let (x, _) = gaussian_blobs(20, 8, &[0.0, 6.0, -6.0], seed);
            let params = UmapParams {
                n_neighbors: 10,
                n_epochs: 100,
                target_dim: 2,
                seed,
                ..Default::default()
            };
            let run = umap_project(&x.view(), &params).unwrap();
            let (l0, l1) = (run.loss_initial.unwrap(), run.loss_final.unwrap());
            assert!(l1 < l0, "seed {seed}: loss {l0} -> {l1}");
        }
    }

    #[test]
    fn blobs_preserved_under_projection() {
        let (x, labels) = gaussian_blobs(50, 16, &[0.0, 8.0, -8.0], 7);
        let params = UmapParams {
            n_neighbors: 15,
            n_epochs: 200,
            target_dim: 2,
            seed: 7,
            ..Default::default()
        };
        let run = umap_project(&x.view(), &params).unwrap();
        let result = kmeans_fit(&run.projection.coords.view(), &ClusterParams::new(3, 7)).unwrap();
        let score = ari(&labels, &result.labels).unwrap();
        assert!(score >= 0.95, "ARI {score}");
    }

    #[test]
    fn deterministic_under_seed() {
        let (x, _) = gaussian_blobs(15, 4, &[0.0, 5.0], 3);
        let params = UmapParams {
            n_neighbors: 8,
            n_epochs: 50,
            seed: 11,
            ..Default::default()
        };
        let a = umap_project(&x.view(), &params).unwrap();
        let b = umap_project(&x.view(), &params).unwrap();
        assert_eq!(a.projection.coords, b.projection.coords);
    }
}
