//! Cluster-quality metrics: Silhouette, Davies-Bouldin, Calinski-Harabasz,
//! NMI, ARI, cluster entropy, average max cosine, average max probability,
//! and a spherical-GMM BIC for k selection.
//!
//! Internal metrics use Euclidean distance. Entropies and mutual information
//! are in nats throughout.

use std::collections::HashMap;

use ndarray::{Array2, ArrayView1};
use serde::{Deserialize, Serialize};

use crate::clustering::ClusterResult;
use crate::error::{Error, Result};

/// One row of the benchmark table. Absent metrics stay `None` (serialized as
/// null), never zero-filled.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MetricReport {
    pub model_tag: String,
    pub k: usize,
    pub silhouette: Option<f64>,
    pub dbi: Option<f64>,
    pub chs: Option<f64>,
    pub nmi: Option<f64>,
    pub ari: Option<f64>,
    pub cluster_entropy: Option<f64>,
    pub avg_max_cosine: Option<f64>,
    pub avg_max_prob: Option<f64>,
    pub bic: Option<f64>,
}

impl MetricReport {
    pub fn new(model_tag: impl Into<String>, k: usize) -> Self {
        MetricReport {
            model_tag: model_tag.into(),
            k,
            silhouette: None,
            dbi: None,
            chs: None,
            nmi: None,
            ari: None,
            cluster_entropy: None,
            avg_max_cosine: None,
            avg_max_prob: None,
            bic: None,
        }
    }

    /// Metric field names in table order, matching the serialized names.
    pub fn metric_names() -> &'static [&'static str] {
        &[
            "silhouette",
            "dbi",
            "chs",
            "nmi",
            "ari",
            "cluster_entropy",
            "avg_max_cosine",
            "avg_max_prob",
            "bic",
        ]
    }

    pub fn metric_value(&self, name: &str) -> Option<f64> {
        match name {
            "silhouette" => self.silhouette,
            "dbi" => self.dbi,
            "chs" => self.chs,
            "nmi" => self.nmi,
            "ari" => self.ari,
            "cluster_entropy" => self.cluster_entropy,
            "avg_max_cosine" => self.avg_max_cosine,
            "avg_max_prob" => self.avg_max_prob,
            "bic" => self.bic,
            _ => None,
        }
    }
}

fn n_clusters(labels: &[usize]) -> usize {
    labels.iter().copied().max().map_or(0, |m| m + 1)
}

fn euclidean(a: ArrayView1<f64>, b: ArrayView1<f64>) -> f64 {
    a.iter()
        .zip(b.iter())
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

fn check_labels(x: &Array2<f64>, labels: &[usize]) -> Result<()> {
    if x.nrows() != labels.len() {
        return Err(Error::validation(format!(
            "labels length {} does not match {} rows",
            labels.len(),
            x.nrows()
        )));
    }
    Ok(())
}

/// Mean Silhouette coefficient: per point, (b - a) / max(a, b) where a is the
/// mean distance to the point's own cluster and b the smallest mean distance
/// to another cluster. Points in singleton clusters contribute 0.
pub fn silhouette(x: &Array2<f64>, labels: &[usize]) -> Result<f64> {
    check_labels(x, labels)?;
    let n = x.nrows();
    let k = n_clusters(labels);
    if distinct_count(labels) < 2 {
        return Err(Error::validation("silhouette undefined for k=1"));
    }
    if n < 3 {
        return Err(Error::validation("silhouette requires at least 3 points"));
    }
    let mut cluster_sizes = vec![0usize; k];
    for &l in labels {
        cluster_sizes[l] += 1;
    }
    let mut total = 0.0;
    for i in 0..n {
        if cluster_sizes[labels[i]] == 1 {
            continue; // singleton contributes 0
        }
        let mut dist_sums = vec![0.0f64; k];
        for j in 0..n {
            if i == j {
                continue;
            }
            dist_sums[labels[j]] += euclidean(x.row(i), x.row(j));
        }
        let own = labels[i];
        let a = dist_sums[own] / (cluster_sizes[own] - 1) as f64;
        let mut b = f64::INFINITY;
        for (c, &sum) in dist_sums.iter().enumerate() {
            if c != own && cluster_sizes[c] > 0 {
                b = b.min(sum / cluster_sizes[c] as f64);
            }
        }
        let denom = a.max(b);
        if denom > 0.0 {
            total += (b - a) / denom;
        }
    }
    Ok(total / n as f64)
}

fn distinct_count(labels: &[usize]) -> usize {
    let mut seen: Vec<usize> = labels.to_vec();
    seen.sort_unstable();
    seen.dedup();
    seen.len()
}

fn centroids_of(x: &Array2<f64>, labels: &[usize], k: usize) -> (Array2<f64>, Vec<usize>) {
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

/// Davies-Bouldin index: mean over clusters of the worst-pair ratio of summed
/// scatters to centroid separation. Coincident centroids with nonzero scatter
/// propagate +infinity.
pub fn davies_bouldin(x: &Array2<f64>, labels: &[usize]) -> Result<f64> {
    check_labels(x, labels)?;
    let k = n_clusters(labels);
    if distinct_count(labels) < 2 {
        return Err(Error::validation("davies-bouldin requires at least 2 clusters"));
    }
    let (centroids, sizes) = centroids_of(x, labels, k);
    let mut scatter = vec![0.0f64; k];
    for (i, &l) in labels.iter().enumerate() {
        scatter[l] += euclidean(x.row(i), centroids.row(l));
    }
    for c in 0..k {
        if sizes[c] > 0 {
            scatter[c] /= sizes[c] as f64;
        }
    }
    let occupied: Vec<usize> = (0..k).filter(|&c| sizes[c] > 0).collect();
    let mut total = 0.0;
    for &i in &occupied {
        let mut worst = 0.0f64;
        for &j in &occupied {
            if i == j {
                continue;
            }
            let sep = euclidean(centroids.row(i), centroids.row(j));
            let ratio = if sep > 0.0 {
                (scatter[i] + scatter[j]) / sep
            } else if scatter[i] + scatter[j] > 0.0 {
                f64::INFINITY
            } else {
                0.0
            };
            worst = worst.max(ratio);
        }
        total += worst;
    }
    Ok(total / occupied.len() as f64)
}

/// Calinski-Harabasz score: (B/(k-1)) / (W/(n-k)).
pub fn calinski_harabasz(x: &Array2<f64>, labels: &[usize]) -> Result<f64> {
    check_labels(x, labels)?;
    let n = x.nrows();
    let k = distinct_count(labels);
    if k < 2 {
        return Err(Error::validation("calinski-harabasz requires at least 2 clusters"));
    }
    let k_ids = n_clusters(labels);
    let (centroids, sizes) = centroids_of(x, labels, k_ids);
    let global = x.mean_axis(ndarray::Axis(0)).expect("non-empty matrix");
    let mut between = 0.0;
    for c in 0..k_ids {
        if sizes[c] > 0 {
            let d = euclidean(centroids.row(c), global.view());
            between += sizes[c] as f64 * d * d;
        }
    }
    let mut within = 0.0;
    for (i, &l) in labels.iter().enumerate() {
        let d = euclidean(x.row(i), centroids.row(l));
        within += d * d;
    }
    if within <= 0.0 {
        return Err(Error::validation(
            "CHS undefined: zero within-cluster dispersion",
        ));
    }
    Ok((between / (k - 1) as f64) / (within / (n - k) as f64))
}

type Contingency = (
    HashMap<(usize, usize), usize>,
    HashMap<usize, usize>,
    HashMap<usize, usize>,
);

fn contingency(a: &[usize], b: &[usize]) -> Contingency {
    let mut table = HashMap::new();
    let mut rows = HashMap::new();
    let mut cols = HashMap::new();
    for (&x, &y) in a.iter().zip(b.iter()) {
        *table.entry((x, y)).or_insert(0) += 1;
        *rows.entry(x).or_insert(0) += 1;
        *cols.entry(y).or_insert(0) += 1;
    }
    (table, rows, cols)
}

fn entropy_of_counts(counts: impl Iterator<Item = usize>, n: f64) -> f64 {
    let mut h = 0.0;
    for c in counts {
        if c > 0 {
            let p = c as f64 / n;
            h -= p * p.ln();
        }
    }
    h
}

/// Normalized mutual information with sqrt normalization, in nats.
/// Two zero-entropy partitions (both constant) are identical: returns 1.
/// One zero-entropy side with differing partitions returns 0.
pub fn nmi(labels_true: &[usize], labels_pred: &[usize]) -> Result<f64> {
    if labels_true.len() != labels_pred.len() {
        return Err(Error::validation("label vectors must have equal length"));
    }
    if labels_true.is_empty() {
        return Err(Error::validation("nmi of empty labelings"));
    }
    let n = labels_true.len() as f64;
    let (table, rows, cols) = contingency(labels_true, labels_pred);
    let h_t = entropy_of_counts(rows.values().copied(), n);
    let h_p = entropy_of_counts(cols.values().copied(), n);
    if h_t == 0.0 && h_p == 0.0 {
        return Ok(1.0);
    }
    if h_t == 0.0 || h_p == 0.0 {
        return Ok(0.0);
    }
    let mut mi = 0.0;
    for (&(r, c), &cnt) in &table {
        let p_rc = cnt as f64 / n;
        let p_r = rows[&r] as f64 / n;
        let p_c = cols[&c] as f64 / n;
        mi += p_rc * (p_rc / (p_r * p_c)).ln();
    }
    Ok((mi / (h_t * h_p).sqrt()).clamp(0.0, 1.0))
}

fn comb2(n: usize) -> f64 {
    (n as f64) * (n as f64 - 1.0) / 2.0
}

/// Adjusted Rand index via the pair-counting contingency formula.
/// Returns 1 when the correction denominator vanishes (identical trivial
/// partitions).
pub fn ari(labels_true: &[usize], labels_pred: &[usize]) -> Result<f64> {
    if labels_true.len() != labels_pred.len() {
        return Err(Error::validation("label vectors must have equal length"));
    }
    if labels_true.is_empty() {
        return Err(Error::validation("ari of empty labelings"));
    }
    let (table, rows, cols) = contingency(labels_true, labels_pred);
    let index: f64 = table.values().map(|&c| comb2(c)).sum();
    let sum_a: f64 = rows.values().map(|&c| comb2(c)).sum();
    let sum_b: f64 = cols.values().map(|&c| comb2(c)).sum();
    let total = comb2(labels_true.len());
    if total == 0.0 {
        return Ok(1.0);
    }
    let expected = sum_a * sum_b / total;
    let max_index = (sum_a + sum_b) / 2.0;
    if (max_index - expected).abs() < 1e-15 {
        return Ok(1.0);
    }
    Ok((index - expected) / (max_index - expected))
}

/// Weighted mean entropy of the true-label distribution within each predicted
/// cluster, in nats. Zero means every cluster is pure.
pub fn cluster_entropy(labels_true: &[usize], labels_pred: &[usize]) -> Result<f64> {
    if labels_true.len() != labels_pred.len() {
        return Err(Error::validation("label vectors must have equal length"));
    }
    if labels_true.is_empty() {
        return Ok(0.0);
    }
    let n = labels_true.len() as f64;
    let mut clusters: HashMap<usize, HashMap<usize, usize>> = HashMap::new();
    for (&t, &p) in labels_true.iter().zip(labels_pred.iter()) {
        *clusters.entry(p).or_default().entry(t).or_insert(0) += 1;
    }
    let mut total = 0.0;
    for members in clusters.values() {
        let n_c: usize = members.values().sum();
        let h = entropy_of_counts(members.values().copied(), n_c as f64);
        total += (n_c as f64 / n) * h;
    }
    Ok(total)
}

fn cosine(a: ArrayView1<f64>, b: ArrayView1<f64>) -> f64 {
    let dot: f64 = a.iter().zip(b.iter()).map(|(x, y)| x * y).sum();
    let na: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        dot / (na * nb)
    }
}

/// Mean cosine similarity between each row and its assigned centroid.
/// Zero vectors (row or centroid) contribute 0.
pub fn avg_max_cosine(x: &Array2<f64>, centroids: &Array2<f64>, labels: &[usize]) -> Result<f64> {
    check_labels(x, labels)?;
    if let Some(&bad) = labels.iter().find(|&&l| l >= centroids.nrows()) {
        return Err(Error::validation(format!(
            "label {bad} references a missing centroid"
        )));
    }
    let mut total = 0.0;
    for (i, &l) in labels.iter().enumerate() {
        total += cosine(x.row(i), centroids.row(l));
    }
    Ok(total / labels.len().max(1) as f64)
}

/// Mean over rows of the row maximum of a row-stochastic matrix.
pub fn avg_max_prob(doc_topic: &Array2<f64>) -> Result<f64> {
    if doc_topic.nrows() == 0 {
        return Err(Error::validation("avg_max_prob of empty matrix"));
    }
    let mut total = 0.0;
    for row in doc_topic.rows() {
        let sum: f64 = row.sum();
        if (sum - 1.0).abs() > 1e-6 {
            return Err(Error::validation(format!(
                "row sums to {sum}, expected 1 within 1e-6"
            )));
        }
        total += row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    }
    Ok(total / doc_topic.nrows() as f64)
}

/// Spherical-GMM BIC with shared variance, higher is better:
/// sigma^2 = W / (d (n - k)), ll the hard-assignment mixture log-likelihood,
/// BIC = ll - (params/2) ln n with params = k d + k - 1 + 1.
pub fn kmeans_bic(x: &Array2<f64>, result: &ClusterResult) -> Result<f64> {
    let n = x.nrows();
    let d = x.ncols();
    let k = result.centroids.nrows();
    if n <= k {
        return Err(Error::validation("BIC requires n > k"));
    }
    let w = result.inertia;
    if w <= 0.0 {
        return Err(Error::validation("BIC undefined: zero within-cluster dispersion"));
    }
    let mut sizes = vec![0usize; k];
    for &l in &result.labels {
        sizes[l] += 1;
    }
    let sigma2 = w / (d as f64 * (n - k) as f64);
    let mut ll = 0.0;
    for &n_c in &sizes {
        if n_c > 0 {
            ll += n_c as f64 * ((n_c as f64 / n as f64).ln());
        }
    }
    ll -= (n as f64 * d as f64 / 2.0) * (2.0 * std::f64::consts::PI * sigma2).ln();
    ll -= d as f64 * (n - k) as f64 / 2.0;
    let params = (k * d + k - 1 + 1) as f64;
    Ok(ll - (params / 2.0) * (n as f64).ln())
}

/// Maps arbitrary label values (e.g. gold label strings) to dense usize ids,
/// first-seen order. Returns None if any label is missing.
pub fn encode_labels(labels: &[Option<String>]) -> Option<Vec<usize>> {
    let mut ids: HashMap<&str, usize> = HashMap::new();
    let mut out = Vec::with_capacity(labels.len());
    for l in labels {
        let l = l.as_deref()?;
        let next = ids.len();
        out.push(*ids.entry(l).or_insert(next));
    }
    Some(out)
}
