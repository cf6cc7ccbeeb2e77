//! Joint document/word embeddings and topic discovery.
//!
//! Documents and words are trained into one vector space: each document id
//! predicts its tokens (PV-DBOW style) and words predict their in-window
//! neighbors, sharing the context matrix. Topics are then found by density
//! clustering a manifold-reduced view of the document vectors; noise points
//! are re-attached to the nearest topic centroid by cosine so every document
//! enters the downstream graph.

use ndarray::{Array2, ArrayView1};
use serde::{Deserialize, Serialize};

use crate::corpus::Corpus;
use crate::error::{Error, Result};
use crate::manifold::{self, UmapParams};
use crate::sgns::{self, PairSource, SgnsConfig};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SgnsParams {
    pub dim: usize,
    pub epochs: usize,
    pub window: usize,
    pub negatives: usize,
    pub lr_initial: f64,
    pub seed: u64,
}

impl Default for SgnsParams {
    fn default() -> Self {
        SgnsParams {
            dim: 300,
            epochs: 20,
            window: 5,
            negatives: 5,
            lr_initial: 0.05,
            seed: 0,
        }
    }
}

impl SgnsParams {
    pub fn validate(&self) -> Result<()> {
        if self.dim < 2 {
            return Err(Error::validation("embedding dim must be >= 2"));
        }
        if self.negatives < 1 {
            return Err(Error::validation("negatives must be >= 1"));
        }
        if self.lr_initial <= 0.0 {
            return Err(Error::validation("lr_initial must be positive"));
        }
        Ok(())
    }
}

/// Documents and words in one embedding space.
#[derive(Debug, Clone)]
pub struct JointEmbedding {
    pub doc_vectors: Array2<f64>,
    pub word_vectors: Array2<f64>,
    /// Indices of documents that were empty after vocabulary filtering;
    /// their vectors are zero.
    pub excluded_docs: Vec<usize>,
    pub epoch_losses: Vec<f64>,
}

/// Pair stream over a corpus: (doc, token) pairs for every token occurrence,
/// plus (word, word) pairs within the window. Centers are documents followed
/// by words; contexts are words.
struct CorpusPairs<'a> {
    corpus: &'a Corpus,
    window: usize,
}

impl<'a> CorpusPairs<'a> {
    fn new(corpus: &'a Corpus, window: usize) -> Self {
        CorpusPairs { corpus, window }
    }
}

impl PairSource for CorpusPairs<'_> {
    fn n_centers(&self) -> usize {
        self.corpus.len() + self.corpus.vocab_size()
    }

    fn n_contexts(&self) -> usize {
        self.corpus.vocab_size()
    }

    fn context_counts(&self) -> Vec<f64> {
        let mut counts = vec![0.0; self.corpus.vocab_size()];
        for tokens in &self.corpus.doc_tokens {
            for &t in tokens {
                counts[t] += 1.0;
            }
        }
        counts
    }

    fn total_pairs(&self) -> usize {
        let mut total = 0;
        for tokens in &self.corpus.doc_tokens {
            let len = tokens.len();
            total += len; // doc -> token pairs
            for i in 0..len {
                let lo = i.saturating_sub(self.window);
                let hi = (i + self.window).min(len.saturating_sub(1));
                total += hi - lo; // word -> word pairs, excluding i itself
            }
        }
        total
    }

    fn for_each_pair(&self, visit: &mut dyn FnMut(usize, usize)) {
        let n_docs = self.corpus.len();
        for (doc, tokens) in self.corpus.doc_tokens.iter().enumerate() {
            let len = tokens.len();
            for (i, &t) in tokens.iter().enumerate() {
                visit(doc, t);
                let lo = i.saturating_sub(self.window);
                let hi = (i + self.window).min(len.saturating_sub(1));
                for j in lo..=hi {
                    if j != i {
                        visit(n_docs + t, tokens[j]);
                    }
                }
            }
        }
    }
}

/// Trains the joint space. Deterministic per seed; mean SGNS objective is
/// recorded per epoch. Documents left empty by vocabulary filtering are
/// reported in `excluded_docs` with zero vectors.
pub fn train_joint_embedding(corpus: &Corpus, params: &SgnsParams) -> Result<JointEmbedding> {
    params.validate()?;
    if corpus.vocabulary.is_empty() {
        return Err(Error::validation("vocabulary not built"));
    }
    let excluded_docs: Vec<usize> = corpus
        .doc_tokens
        .iter()
        .enumerate()
        .filter(|(_, t)| t.is_empty())
        .map(|(i, _)| i)
        .collect();
    let source = CorpusPairs::new(corpus, params.window);
    let cfg = SgnsConfig {
        dim: params.dim,
        epochs: params.epochs,
        negatives: params.negatives,
        lr_initial: params.lr_initial,
        seed: params.seed,
    };
    let model = sgns::train(&source, &cfg);
    let n_docs = corpus.len();
    let mut doc_vectors = model.input.slice(ndarray::s![..n_docs, ..]).to_owned();
    let word_vectors = model.input.slice(ndarray::s![n_docs.., ..]).to_owned();
    for &d in &excluded_docs {
        doc_vectors.row_mut(d).fill(0.0);
    }
    Ok(JointEmbedding {
        doc_vectors,
        word_vectors,
        excluded_docs,
        epoch_losses: model.epoch_losses,
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DensityParams {
    pub min_cluster_size: usize,
    /// Quantile of the k-distance distribution (k = min_cluster_size) used
    /// as the DBSCAN radius.
    pub eps_quantile: f64,
}

impl Default for DensityParams {
    fn default() -> Self {
        DensityParams {
            min_cluster_size: 15,
            eps_quantile: 0.9,
        }
    }
}

pub const TOPIC_KEYWORDS_TOP_N: usize = 10;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TopicModel {
    pub num_topics: usize,
    /// Per-document topic id.
    pub assignments: Vec<usize>,
    /// Topic centroids in the joint embedding space: the mean of member
    /// document vectors.
    pub topic_vectors: Array2<f64>,
    /// Per-topic ranked keyword token ids.
    pub topic_keywords: Vec<Vec<usize>>,
    pub warnings: Vec<String>,
}

/// DBSCAN with a data-derived radius: eps is the `eps_quantile` of the
/// distribution of each point's k-th neighbor distance (k =
/// min_cluster_size). Returns per-point cluster ids with usize::MAX as noise.
fn dbscan_kdist(coords: &Array2<f64>, density: &DensityParams) -> Result<(Vec<usize>, f64)> {
    let n = coords.nrows();
    let k = density.min_cluster_size;
    if !(density.eps_quantile > 0.0 && density.eps_quantile < 1.0) {
        return Err(Error::validation("eps_quantile must be in (0,1)"));
    }
    if n < k {
        return Err(Error::validation(format!(
            "density clustering needs n >= min_cluster_size, got n={n}, k={k}"
        )));
    }
    let view = coords.view();
    // k-distance per point: distance to the k-th nearest neighbor.
    let knn = manifold::knn_graph(&view, k.min(n - 1))?;
    let mut kdists: Vec<f64> = knn.distances.iter().map(|row| *row.last().unwrap()).collect();
    kdists.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let idx = ((density.eps_quantile * n as f64).floor() as usize).min(n - 1);
    let eps = kdists[idx];

    // Neighborhoods at radius eps (self included in the count).
    let mut neighborhoods: Vec<Vec<usize>> = vec![Vec::new(); n];
    for i in 0..n {
        for j in 0..n {
            if i != j {
                let mut d2 = 0.0;
                for c in 0..coords.ncols() {
                    let d = coords[[i, c]] - coords[[j, c]];
                    d2 += d * d;
                }
                if d2.sqrt() <= eps {
                    neighborhoods[i].push(j);
                }
            }
        }
    }
    let core: Vec<bool> = neighborhoods.iter().map(|nb| nb.len() + 1 >= k).collect();
    const NOISE: usize = usize::MAX;
    let mut labels = vec![NOISE; n];
    let mut cluster = 0usize;
    for start in 0..n {
        if labels[start] != NOISE || !core[start] {
            continue;
        }
        labels[start] = cluster;
        let mut queue = vec![start];
        while let Some(v) = queue.pop() {
            for &u in &neighborhoods[v] {
                if labels[u] == NOISE {
                    labels[u] = cluster;
                    if core[u] {
                        queue.push(u);
                    }
                }
            }
        }
        cluster += 1;
    }
    Ok((labels, eps))
}

fn cosine(a: ArrayView1<f64>, b: ArrayView1<f64>) -> f64 {
    let dot: f64 = a.iter().zip(b.iter()).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        dot / (na * nb)
    }
}

fn centroids_from_assignments(
    doc_vectors: &Array2<f64>,
    assignments: &[usize],
    num_topics: usize,
) -> Array2<f64> {
    let dim = doc_vectors.ncols();
    let mut centroids = Array2::zeros((num_topics, dim));
    let mut sizes = vec![0usize; num_topics];
    for (i, &t) in assignments.iter().enumerate() {
        sizes[t] += 1;
        for c in 0..dim {
            centroids[[t, c]] += doc_vectors[[i, c]];
        }
    }
    for t in 0..num_topics {
        if sizes[t] > 0 {
            for c in 0..dim {
                centroids[[t, c]] /= sizes[t] as f64;
            }
        }
    }
    centroids
}

/// Discovers topics: the document vectors are projected down with the given
/// manifold parameters, density-clustered, and noise points are attached to
/// the nearest topic centroid by cosine in the original space. The number of
/// topics comes from the data; if everything is noise a single topic is
/// returned with a warning.
pub fn discover_topics(
    embedding: &JointEmbedding,
    reduce_params: &UmapParams,
    density_params: &DensityParams,
) -> Result<TopicModel> {
    let n = embedding.doc_vectors.nrows();
    if n < density_params.min_cluster_size {
        return Err(Error::validation(format!(
            "need at least min_cluster_size={} documents, got {n}",
            density_params.min_cluster_size
        )));
    }
    let view = embedding.doc_vectors.view();
    let run = manifold::umap_project(&view, reduce_params)?;
    let (raw_labels, _eps) = dbscan_kdist(&run.projection.coords, density_params)?;

    let mut warnings = Vec::new();
    const NOISE: usize = usize::MAX;
    let num_raw = raw_labels.iter().filter(|&&l| l != NOISE).max().map_or(0, |&m| m + 1);
    let mut assignments = vec![0usize; n];
    let num_topics;
    if num_raw == 0 {
        warnings.push("all points classified as noise; falling back to a single topic".to_string());
        num_topics = 1;
    } else {
        // Relabel clusters by decreasing size (ties by first member) so topic
        // ids are deterministic and independent of discovery order.
        let mut sizes = vec![0usize; num_raw];
        let mut first = vec![usize::MAX; num_raw];
        for (i, &l) in raw_labels.iter().enumerate() {
            if l != NOISE {
                sizes[l] += 1;
                first[l] = first[l].min(i);
            }
        }
        let mut order: Vec<usize> = (0..num_raw).collect();
        order.sort_by(|&a, &b| sizes[b].cmp(&sizes[a]).then(first[a].cmp(&first[b])));
        let mut relabel = vec![0usize; num_raw];
        for (new, &old) in order.iter().enumerate() {
            relabel[old] = new;
        }
        num_topics = num_raw;
        // Core/border points first, then noise by nearest centroid cosine.
        let mut provisional = vec![NOISE; n];
        for (i, &l) in raw_labels.iter().enumerate() {
            if l != NOISE {
                provisional[i] = relabel[l];
            }
        }
        let seeds: Vec<usize> = (0..n).filter(|&i| provisional[i] != NOISE).collect();
        let seed_labels: Vec<usize> = seeds.iter().map(|&i| provisional[i]).collect();
        let mut seed_vectors = Array2::zeros((seeds.len(), embedding.doc_vectors.ncols()));
        for (row, &i) in seeds.iter().enumerate() {
            seed_vectors.row_mut(row).assign(&embedding.doc_vectors.row(i));
        }
        let centroids = centroids_from_assignments(&seed_vectors, &seed_labels, num_topics);
        let mut n_noise = 0usize;
        for i in 0..n {
            if provisional[i] != NOISE {
                assignments[i] = provisional[i];
                continue;
            }
            n_noise += 1;
            let mut best = 0usize;
            let mut best_cos = f64::NEG_INFINITY;
            for t in 0..num_topics {
                let c = cosine(embedding.doc_vectors.row(i), centroids.row(t));
                if c > best_cos {
                    best_cos = c;
                    best = t;
                }
            }
            assignments[i] = best;
        }
        if n_noise > 0 {
            warnings.push(format!(
                "{n_noise} noise documents re-attached to nearest topic centroid"
            ));
        }
    }
    // Final centroids include re-attached members, so the
    // recomputed-from-assignments invariant holds.
    let topic_vectors = centroids_from_assignments(&embedding.doc_vectors, &assignments, num_topics);
    let topic_keywords = (0..num_topics)
        .map(|t| {
            topic_keywords(
                topic_vectors.row(t),
                &embedding.word_vectors,
                TOPIC_KEYWORDS_TOP_N.min(embedding.word_vectors.nrows()),
            )
        })
        .collect();
    Ok(TopicModel {
        num_topics,
        assignments,
        topic_vectors,
        topic_keywords,
        warnings,
    })
}

/// Token ids ranked by descending cosine similarity to the topic vector,
/// ties broken by token id.
pub fn topic_keywords(
    topic_vector: ArrayView1<f64>,
    word_vectors: &Array2<f64>,
    top_n: usize,
) -> Vec<usize> {
    let mut scored: Vec<(f64, usize)> = (0..word_vectors.nrows())
        .map(|w| (cosine(topic_vector, word_vectors.row(w)), w))
        .collect();
    scored.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap().then(a.1.cmp(&b.1)));
    scored.truncate(top_n);
    scored.into_iter().map(|(_, w)| w).collect()
}

/// Convenience for tests and the topic stage: centroid recomputation check.
pub fn centroid_drift(model: &TopicModel, doc_vectors: &Array2<f64>) -> f64 {
    let recomputed = centroids_from_assignments(doc_vectors, &model.assignments, model.num_topics);
    recomputed
        .iter()
        .zip(model.topic_vectors.iter())
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::Document;
    use crate::sampling::seeded_rng;
    use approx::assert_abs_diff_eq;
    use ndarray::{array, Array1};
    use rand::Rng;

    fn corpus_from_texts(texts: &[String]) -> Corpus {
        let mut corpus = Corpus {
            documents: texts
                .iter()
                .enumerate()
                .map(|(i, t)| Document {
                    id: format!("d{i}"),
                    text: t.clone(),
                    gold_label: None,
                })
                .collect(),
            vocabulary: Vec::new(),
            doc_tokens: Vec::new(),
            doc_freq: Vec::new(),
        };
        corpus.build_vocabulary(1).unwrap();
        corpus
    }

    #[test]
    fn zero_epochs_returns_uniform_init() {
        let corpus = corpus_from_texts(&["alpha beta gamma".to_string(), "delta epsilon".to_string()]);
        let params = SgnsParams {
            dim: 8,
            epochs: 0,
            ..Default::default()
        };
        let emb = train_joint_embedding(&corpus, &params).unwrap();
        let half = 0.5 / 8.0;
        for v in emb.doc_vectors.iter().chain(emb.word_vectors.iter()) {
            assert!(v.abs() <= half, "init value {v} outside uniform bound");
        }
        assert!(emb.epoch_losses.is_empty());
    }

    #[test]
    fn disjoint_documents_separate() {
        // Two "documents" with disjoint vocabularies; repeated tokens give the
        // trainer signal. Cross-document cosine should fall below 0.5.
        let text_a = "red crimson scarlet ruby ".repeat(12);
        let text_b = "blue azure navy cobalt ".repeat(12);
        let corpus = corpus_from_texts(&[text_a, text_b]);
        let params = SgnsParams {
            dim: 8,
            epochs: 50,
            window: 2,
            negatives: 4,
            lr_initial: 0.05,
            seed: 3,
        };
        let emb = train_joint_embedding(&corpus, &params).unwrap();
        let cos = cosine(emb.doc_vectors.row(0), emb.doc_vectors.row(1));
        assert!(cos < 0.5, "cross-document cosine {cos}");
        // Re-running with the same seed reproduces the same vectors exactly.
        let emb2 = train_joint_embedding(&corpus, &params).unwrap();
        assert_eq!(emb.doc_vectors, emb2.doc_vectors);
    }

    #[test]
    fn empty_document_excluded_with_zero_vector() {
        // min_count=2 drops every token of a doc written with singletons.
        let mut corpus = Corpus {
            documents: vec![
                Document {
                    id: "a".into(),
                    text: "alpha alpha beta beta".into(),
                    gold_label: None,
                },
                Document {
                    id: "b".into(),
                    text: "loner".into(),
                    gold_label: None,
                },
            ],
            vocabulary: Vec::new(),
            doc_tokens: Vec::new(),
            doc_freq: Vec::new(),
        };
        corpus.build_vocabulary(2).unwrap();
        let emb = train_joint_embedding(&corpus, &SgnsParams {
            dim: 4,
            epochs: 3,
            ..Default::default()
        })
        .unwrap();
        assert_eq!(emb.excluded_docs, vec![1]);
        assert!(emb.doc_vectors.row(1).iter().all(|&v| v == 0.0));
    }

    #[test]
    fn sgns_loss_non_increasing_with_jitter_window() {
        let text_a = "apple orange pear plum ".repeat(10);
        let text_b = "engine piston valve gear ".repeat(10);
        let text_c = "violin cello flute oboe ".repeat(10);
        let corpus = corpus_from_texts(&[text_a, text_b, text_c]);
        let params = SgnsParams {
            dim: 16,
            epochs: 30,
            window: 3,
            negatives: 4,
            lr_initial: 0.05,
            seed: 8,
        };
        let emb = train_joint_embedding(&corpus, &params).unwrap();
        let losses = &emb.epoch_losses;
        for e in 5..losses.len() {
            assert!(
                losses[e] <= losses[e - 5] * 1.01,
                "loss rose beyond jitter: {} -> {} at epoch {e}",
                losses[e - 5],
                losses[e]
            );
        }
    }

    fn blob_embedding(n_per: usize, dim: usize, centers: &[f64], seed: u64) -> (JointEmbedding, Vec<usize>) {
        let mut rng = seeded_rng(seed, &[0xb0b]);
        let n = n_per * centers.len();
        let mut doc_vectors = Array2::zeros((n, dim));
        let mut labels = Vec::new();
        for (c, &center) in centers.iter().enumerate() {
            for i in 0..n_per {
                for d in 0..dim {
                    let u1: f64 = rng.random::<f64>().max(1e-12);
                    let u2: f64 = rng.random::<f64>();
                    let z = (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos();
                    doc_vectors[[c * n_per + i, d]] = center + 0.4 * z;
                }
                labels.push(c);
            }
        }
        let word_vectors = Array2::zeros((5, dim));
        (
            JointEmbedding {
                doc_vectors,
                word_vectors,
                excluded_docs: vec![],
                epoch_losses: vec![],
            },
            labels,
        )
    }

    fn reduce_params(seed: u64) -> UmapParams {
        UmapParams {
            n_neighbors: 10,
            n_epochs: 120,
            target_dim: 5,
            seed,
            ..Default::default()
        }
    }

    #[test]
    fn three_blobs_found_as_three_topics() {
        // Centers away from the origin: cosine re-attachment is undefined for
        // near-zero vectors.
        let (emb, labels) = blob_embedding(30, 12, &[4.0, 12.0, -8.0], 5);
        let density = DensityParams {
            min_cluster_size: 8,
            eps_quantile: 0.9,
        };
        let model = discover_topics(&emb, &reduce_params(5), &density).unwrap();
        assert_eq!(model.num_topics, 3);
        let score = crate::evaluation::ari(&labels, &model.assignments).unwrap();
        assert!(score > 0.99, "ARI {score}");
        assert!(centroid_drift(&model, &emb.doc_vectors) < 1e-6);
    }

    #[test]
    fn identical_vectors_form_single_topic() {
        let n = 10;
        let mut doc_vectors = Array2::zeros((n, 4));
        doc_vectors.fill(1.0);
        let emb = JointEmbedding {
            doc_vectors,
            word_vectors: Array2::zeros((3, 4)),
            excluded_docs: vec![],
            epoch_losses: vec![],
        };
        // Coincident points break spectral/knn assumptions gently; identical
        // vectors mean every k-distance is ~0 and everything is core.
        let density = DensityParams {
            min_cluster_size: n,
            eps_quantile: 0.5,
        };
        let params = UmapParams {
            n_neighbors: 4,
            n_epochs: 20,
            target_dim: 5,
            seed: 2,
            ..Default::default()
        };
        let model = discover_topics(&emb, &params, &density).unwrap();
        assert_eq!(model.num_topics, 1);
        assert!(model.assignments.iter().all(|&t| t == 0));
    }

    #[test]
    fn outliers_reattach_to_nearest_topic() {
        let (mut emb, _) = blob_embedding(25, 8, &[0.0, 12.0], 9);
        // Two far outliers.
        let n = emb.doc_vectors.nrows();
        let mut with_outliers = Array2::zeros((n + 2, 8));
        for i in 0..n {
            with_outliers.row_mut(i).assign(&emb.doc_vectors.row(i));
        }
        for d in 0..8 {
            with_outliers[[n, d]] = 60.0;
            with_outliers[[n + 1, d]] = -60.0;
        }
        emb.doc_vectors = with_outliers;
        let density = DensityParams {
            min_cluster_size: 8,
            eps_quantile: 0.8,
        };
        let model = discover_topics(&emb, &reduce_params(9), &density).unwrap();
        assert_eq!(model.num_topics, 2, "outliers must not create topics");
        assert!(model.assignments[n] < 2 && model.assignments[n + 1] < 2);
        assert!(model
            .warnings
            .iter()
            .any(|w| w.contains("re-attached")));
    }

    #[test]
    fn keywords_rank_by_cosine_with_ties_by_id() {
        let word_vectors = array![
            [1.0, 0.0],
            [0.0, 1.0],
            [0.7, 0.7],
            [-1.0, 0.0],
        ];
        let topic = array![1.0, 0.0];
        let ranked = topic_keywords(topic.view(), &word_vectors, 4);
        assert_eq!(ranked[0], 0); // identical direction first
        assert_eq!(ranked[1], 2);
        assert_eq!(ranked.last(), Some(&3));
        assert!(topic_keywords(topic.view(), &word_vectors, 0).is_empty());
    }

    #[test]
    fn keywords_match_bruteforce_sort() {
        let mut rng = seeded_rng(4, &[]);
        let v = 60;
        let dim = 6;
        let mut word_vectors = Array2::zeros((v, dim));
        for val in word_vectors.iter_mut() {
            *val = rng.random::<f64>() * 2.0 - 1.0;
        }
        let topic = Array1::from_iter((0..dim).map(|_| rng.random::<f64>() - 0.5));
        let ranked = topic_keywords(topic.view(), &word_vectors, v);
        // Independent oracle: naive cosine + stable sort.
        let mut oracle: Vec<(f64, usize)> = (0..v)
            .map(|w| (cosine(topic.view(), word_vectors.row(w)), w))
            .collect();
        oracle.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap().then(a.1.cmp(&b.1)));
        let expected: Vec<usize> = oracle.into_iter().map(|(_, w)| w).collect();
        assert_eq!(ranked, expected);
    }

    #[test]
    fn discover_topics_order_invariant() {
        let (emb, _) = blob_embedding(15, 6, &[0.0, 9.0], 13);
        let density = DensityParams {
            min_cluster_size: 6,
            eps_quantile: 0.9,
        };
        let model = discover_topics(&emb, &reduce_params(13), &density).unwrap();
        // Permute documents, rediscover, map back.
        let n = emb.doc_vectors.nrows();
        let perm: Vec<usize> = (0..n).rev().collect();
        let mut permuted = Array2::zeros((n, 6));
        for (new, &old) in perm.iter().enumerate() {
            permuted.row_mut(new).assign(&emb.doc_vectors.row(old));
        }
        let emb2 = JointEmbedding {
            doc_vectors: permuted,
            word_vectors: emb.word_vectors.clone(),
            excluded_docs: vec![],
            epoch_losses: vec![],
        };
        let model2 = discover_topics(&emb2, &reduce_params(13), &density).unwrap();
        assert_eq!(model.num_topics, model2.num_topics);
        // Same partition up to permutation of documents and topic ids.
        let mapped: Vec<usize> = (0..n).map(|new| model2.assignments[new]).collect();
        let original_order: Vec<usize> = perm.iter().map(|&old| model.assignments[old]).collect();
        let score = crate::evaluation::ari(&original_order, &mapped).unwrap();
        assert_abs_diff_eq!(score, 1.0, epsilon = 1e-12);
    }
}
