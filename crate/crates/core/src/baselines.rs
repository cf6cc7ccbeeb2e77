//! Topic-model baselines: LDA via collapsed Gibbs sampling and NMF via
//! Lee-Seung multiplicative updates on the Frobenius objective.

use ndarray::Array2;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::Corpus;
use crate::error::{Error, Result};
use crate::sampling::{pick_weighted, seeded_rng};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LdaParams {
    pub k: usize,
    /// Symmetric document-topic prior.
    pub alpha: f64,
    /// Symmetric topic-word prior.
    pub beta: f64,
    /// Total Gibbs sweeps.
    pub iterations: usize,
    /// Sweeps discarded before posterior averaging.
    pub burn_in: usize,
    pub seed: u64,
}

impl Default for LdaParams {
    fn default() -> Self {
        LdaParams {
            k: 10,
            alpha: 0.1,
            beta: 0.01,
            iterations: 200,
            burn_in: 50,
            seed: 0,
        }
    }
}

impl LdaParams {
    pub fn validate(&self) -> Result<()> {
        if self.k == 0 {
            return Err(Error::validation("lda requires k >= 1"));
        }
        if !(self.alpha > 0.0 && self.beta > 0.0) {
            return Err(Error::validation("alpha and beta must be positive"));
        }
        if self.burn_in >= self.iterations {
            return Err(Error::validation("burn_in must be < iterations"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct LdaModel {
    /// Row-stochastic n x k posterior-mean document-topic proportions.
    pub doc_topic: Array2<f64>,
    /// Row-stochastic k x |V| posterior-mean topic-word distributions.
    pub topic_word: Array2<f64>,
}

/// Collapsed Gibbs sampler with inspectable state, so count invariants can be
/// checked from outside after every sweep.
pub struct LdaSampler<'a> {
    corpus: &'a Corpus,
    params: LdaParams,
    rng: rand_chacha::ChaCha8Rng,
    /// Topic assignment per (doc, position).
    z: Vec<Vec<usize>>,
    pub n_dk: Vec<Vec<usize>>,
    pub n_kw: Vec<Vec<usize>>,
    pub n_k: Vec<usize>,
    /// Accumulated posterior means.
    doc_topic_acc: Array2<f64>,
    topic_word_acc: Array2<f64>,
    samples: usize,
    sweeps_done: usize,
}

impl<'a> LdaSampler<'a> {
    pub fn new(corpus: &'a Corpus, params: &LdaParams) -> Result<Self> {
        params.validate()?;
        if corpus.vocabulary.is_empty() {
            return Err(Error::validation("vocabulary not built"));
        }
        if let Some((i, _)) = corpus.doc_tokens.iter().enumerate().find(|(_, t)| t.is_empty()) {
            return Err(Error::validation(format!(
                "document '{}' is empty after vocabulary filtering",
                corpus.documents[i].id
            )));
        }
        let n = corpus.len();
        let v = corpus.vocab_size();
        let k = params.k;
        let mut rng = seeded_rng(params.seed, &[0x1da]);
        let mut z = Vec::with_capacity(n);
        let mut n_dk = vec![vec![0usize; k]; n];
        let mut n_kw = vec![vec![0usize; v]; k];
        let mut n_k = vec![0usize; k];
        for (d, tokens) in corpus.doc_tokens.iter().enumerate() {
            let mut row = Vec::with_capacity(tokens.len());
            for &w in tokens {
                let topic = rng.random_range(0..k);
                row.push(topic);
                n_dk[d][topic] += 1;
                n_kw[topic][w] += 1;
                n_k[topic] += 1;
            }
            z.push(row);
        }
        Ok(LdaSampler {
            corpus,
            params: params.clone(),
            rng,
            z,
            n_dk,
            n_kw,
            n_k,
            doc_topic_acc: Array2::zeros((n, k)),
            topic_word_acc: Array2::zeros((k, v)),
            samples: 0,
            sweeps_done: 0,
        })
    }

    /// One full Gibbs sweep: every token is resampled from the collapsed
    /// conditional (n_dk + alpha)(n_kw + beta)/(n_k + V beta); post-burn-in
    /// sweeps accumulate the smoothed posterior means.
    pub fn sweep(&mut self) {
        let k = self.params.k;
        let v = self.corpus.vocab_size() as f64;
        let beta = self.params.beta;
        let alpha = self.params.alpha;
        let mut weights = vec![0.0f64; k];
        for (d, tokens) in self.corpus.doc_tokens.iter().enumerate() {
            for (pos, &w) in tokens.iter().enumerate() {
                let old = self.z[d][pos];
                self.n_dk[d][old] -= 1;
                self.n_kw[old][w] -= 1;
                self.n_k[old] -= 1;
                for (t, weight) in weights.iter_mut().enumerate() {
                    *weight = (self.n_dk[d][t] as f64 + alpha)
                        * (self.n_kw[t][w] as f64 + beta)
                        / (self.n_k[t] as f64 + v * beta);
                }
                let new = pick_weighted(&mut self.rng, &weights);
                self.z[d][pos] = new;
                self.n_dk[d][new] += 1;
                self.n_kw[new][w] += 1;
                self.n_k[new] += 1;
            }
        }
        self.sweeps_done += 1;
        if self.sweeps_done > self.params.burn_in {
            self.accumulate();
        }
    }

    fn accumulate(&mut self) {
        let k = self.params.k;
        let v = self.corpus.vocab_size() as f64;
        let alpha = self.params.alpha;
        let beta = self.params.beta;
        for (d, tokens) in self.corpus.doc_tokens.iter().enumerate() {
            let len = tokens.len() as f64;
            for t in 0..k {
                self.doc_topic_acc[[d, t]] +=
                    (self.n_dk[d][t] as f64 + alpha) / (len + k as f64 * alpha);
            }
        }
        for t in 0..k {
            let denom = self.n_k[t] as f64 + v * beta;
            for w in 0..self.corpus.vocab_size() {
                self.topic_word_acc[[t, w]] += (self.n_kw[t][w] as f64 + beta) / denom;
            }
        }
        self.samples += 1;
    }

    /// Recomputes the count arrays from assignments; used by invariant tests.
    pub fn recount(&self) -> (Vec<Vec<usize>>, Vec<Vec<usize>>, Vec<usize>) {
        let k = self.params.k;
        let n = self.corpus.len();
        let v = self.corpus.vocab_size();
        let mut n_dk = vec![vec![0usize; k]; n];
        let mut n_kw = vec![vec![0usize; v]; k];
        let mut n_k = vec![0usize; k];
        for (d, tokens) in self.corpus.doc_tokens.iter().enumerate() {
            for (pos, &w) in tokens.iter().enumerate() {
                let t = self.z[d][pos];
                n_dk[d][t] += 1;
                n_kw[t][w] += 1;
                n_k[t] += 1;
            }
        }
        (n_dk, n_kw, n_k)
    }

    pub fn doc_lengths(&self) -> Vec<usize> {
        self.corpus.doc_tokens.iter().map(|t| t.len()).collect()
    }

    pub fn finalize(self) -> LdaModel {
        let samples = self.samples.max(1) as f64;
        LdaModel {
            doc_topic: self.doc_topic_acc / samples,
            topic_word: self.topic_word_acc / samples,
        }
    }
}

/// Fits LDA by collapsed Gibbs; posterior means are averaged over
/// post-burn-in sweeps. Deterministic per seed.
pub fn lda_fit_gibbs(corpus: &Corpus, params: &LdaParams) -> Result<LdaModel> {
    let mut sampler = LdaSampler::new(corpus, params)?;
    for _ in 0..params.iterations {
        sampler.sweep();
    }
    Ok(sampler.finalize())
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NmfParams {
    pub k: usize,
    pub max_iter: usize,
    /// Relative Frobenius-objective change below which iteration stops.
    pub tol: f64,
    pub seed: u64,
}

impl Default for NmfParams {
    fn default() -> Self {
        NmfParams {
            k: 10,
            max_iter: 200,
            tol: 1e-6,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct NmfModel {
    /// Non-negative n x k document factors.
    pub w: Array2<f64>,
    /// Non-negative k x |V| topic factors.
    pub h: Array2<f64>,
    /// Frobenius residual ||X - WH||_F per iteration, non-increasing.
    pub objective_trace: Vec<f64>,
}

const NMF_DENOM_FLOOR: f64 = 1e-12;

/// Frobenius-objective NMF by Lee-Seung multiplicative updates. The seeded
/// uniform init is scaled by sqrt(mean(X)/k), so scaling X rescales the whole
/// trajectory and leaves argmax assignments unchanged for paired seeds.
pub fn nmf_fit(x: &Array2<f64>, params: &NmfParams) -> Result<NmfModel> {
    if params.k == 0 {
        return Err(Error::validation("nmf requires k >= 1"));
    }
    if x.iter().any(|&v| v < 0.0 || !v.is_finite()) {
        return Err(Error::validation("nmf input must be non-negative and finite"));
    }
    let (n, m) = x.dim();
    if n == 0 || m == 0 {
        return Err(Error::validation("nmf input is empty"));
    }
    let k = params.k;
    let mean = x.sum() / (n * m) as f64;
    let scale = (mean / k as f64).max(1e-12).sqrt();
    let mut rng = seeded_rng(params.seed, &[0x4e4d_46]);
    let mut w = Array2::zeros((n, k));
    for v in w.iter_mut() {
        *v = rng.random::<f64>() * scale;
    }
    let mut h = Array2::zeros((k, m));
    for v in h.iter_mut() {
        *v = rng.random::<f64>() * scale;
    }
    let objective = |w: &Array2<f64>, h: &Array2<f64>| -> f64 {
        let residual = x - &w.dot(h);
        residual.iter().map(|v| v * v).sum::<f64>().sqrt()
    };
    let mut trace = vec![objective(&w, &h)];
    for _ in 0..params.max_iter {
        // H <- H .* (W^T X) ./ max(W^T W H, floor)
        let wtx = w.t().dot(x);
        let wtwh = w.t().dot(&w).dot(&h);
        ndarray::Zip::from(&mut h).and(&wtx).and(&wtwh).for_each(|hv, &num, &den| {
            *hv *= num / den.max(NMF_DENOM_FLOOR);
        });
        // W <- W .* (X H^T) ./ max(W H H^T, floor)
        let xht = x.dot(&h.t());
        let whht = w.dot(&h.dot(&h.t()));
        ndarray::Zip::from(&mut w).and(&xht).and(&whht).for_each(|wv, &num, &den| {
            *wv *= num / den.max(NMF_DENOM_FLOOR);
        });
        let obj = objective(&w, &h);
        let prev = *trace.last().unwrap();
        trace.push(obj);
        if prev > 0.0 && ((prev - obj) / prev).abs() < params.tol {
            break;
        }
    }
    Ok(NmfModel {
        w,
        h,
        objective_trace: trace,
    })
}

/// Hard labels from a row-nonnegative doc-topic matrix: argmax per row with
/// ties to the lowest topic id. Zero rows get topic 0 and are reported.
pub fn baseline_assignments(doc_topic: &Array2<f64>) -> (Vec<usize>, Vec<usize>) {
    let mut labels = Vec::with_capacity(doc_topic.nrows());
    let mut zero_rows = Vec::new();
    for (i, row) in doc_topic.rows().into_iter().enumerate() {
        let sum: f64 = row.sum();
        if sum <= 0.0 {
            zero_rows.push(i);
            labels.push(0);
            continue;
        }
        let mut best = 0usize;
        let mut best_v = f64::NEG_INFINITY;
        for (t, &v) in row.iter().enumerate() {
            if v > best_v {
                best_v = v;
                best = t;
            }
        }
        labels.push(best);
    }
    (labels, zero_rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::Document;
    use approx::assert_abs_diff_eq;
    use ndarray::array;

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

    fn two_group_corpus() -> Corpus {
        let mut texts = Vec::new();
        for i in 0..8 {
            texts.push(format!("apple banana cherry date apple banana g{i}a"));
        }
        for i in 0..8 {
            texts.push(format!("stone iron copper zinc stone iron g{i}b"));
        }
        corpus_from_texts(&texts)
    }

    #[test]
    fn lda_count_conservation_every_sweep() {
        let corpus = two_group_corpus();
        let params = LdaParams {
            k: 3,
            iterations: 10,
            burn_in: 2,
            seed: 5,
            ..Default::default()
        };
        let mut sampler = LdaSampler::new(&corpus, &params).unwrap();
        let lengths = sampler.doc_lengths();
        for _ in 0..10 {
            sampler.sweep();
            let (n_dk, n_kw, n_k) = sampler.recount();
            assert_eq!(n_dk, sampler.n_dk);
            assert_eq!(n_kw, sampler.n_kw);
            assert_eq!(n_k, sampler.n_k);
            for (d, &len) in lengths.iter().enumerate() {
                let total: usize = sampler.n_dk[d].iter().sum();
                assert_eq!(total, len, "doc {d} count drift");
            }
        }
    }

    #[test]
    fn lda_rows_stochastic() {
        let corpus = two_group_corpus();
        let params = LdaParams {
            k: 4,
            iterations: 30,
            burn_in: 10,
            seed: 2,
            ..Default::default()
        };
        let model = lda_fit_gibbs(&corpus, &params).unwrap();
        for row in model.doc_topic.rows() {
            assert_abs_diff_eq!(row.sum(), 1.0, epsilon = 1e-9);
            assert!(row.iter().all(|&v| v >= 0.0));
        }
        for row in model.topic_word.rows() {
            assert_abs_diff_eq!(row.sum(), 1.0, epsilon = 1e-9);
        }
    }

    #[test]
    fn lda_separates_disjoint_vocabulary_groups() {
        let corpus = two_group_corpus();
        let params = LdaParams {
            k: 2,
            iterations: 120,
            burn_in: 40,
            seed: 7,
            ..Default::default()
        };
        let model = lda_fit_gibbs(&corpus, &params).unwrap();
        // Vocabulary half owned by group A: tokens appearing in docs 0..8.
        let mut in_a = vec![false; corpus.vocab_size()];
        for tokens in corpus.doc_tokens.iter().take(8) {
            for &t in tokens {
                in_a[t] = true;
            }
        }
        for t in 0..2 {
            let mass_a: f64 = (0..corpus.vocab_size())
                .filter(|&w| in_a[w])
                .map(|w| model.topic_word[[t, w]])
                .sum();
            let purity = mass_a.max(1.0 - mass_a);
            assert!(purity >= 0.9, "topic {t} purity {purity}");
        }
        let (labels, _) = baseline_assignments(&model.doc_topic);
        let gold: Vec<usize> = (0..16).map(|i| usize::from(i >= 8)).collect();
        let score = crate::evaluation::ari(&gold, &labels).unwrap();
        assert!(score > 0.9, "ARI {score}");
    }

    #[test]
    fn lda_k1_closed_form() {
        let corpus = corpus_from_texts(&["alpha beta beta".to_string(), "alpha gamma".to_string()]);
        let params = LdaParams {
            k: 1,
            iterations: 5,
            burn_in: 1,
            seed: 0,
            ..Default::default()
        };
        let model = lda_fit_gibbs(&corpus, &params).unwrap();
        for row in model.doc_topic.rows() {
            assert_abs_diff_eq!(row[0], 1.0, epsilon = 1e-12);
        }
        // topic_word equals the smoothed corpus unigram distribution.
        let beta = params.beta;
        let v = corpus.vocab_size() as f64;
        let total_tokens: usize = corpus.doc_tokens.iter().map(|t| t.len()).sum();
        let mut counts = vec![0usize; corpus.vocab_size()];
        for tokens in &corpus.doc_tokens {
            for &t in tokens {
                counts[t] += 1;
            }
        }
        for (w, &c) in counts.iter().enumerate() {
            let expected = (c as f64 + beta) / (total_tokens as f64 + v * beta);
            assert_abs_diff_eq!(model.topic_word[[0, w]], expected, epsilon = 1e-12);
        }
    }

    #[test]
    fn lda_rejects_empty_doc_and_bad_params() {
        let mut corpus = corpus_from_texts(&["aaa aaa bbb".to_string(), "zzz".to_string()]);
        corpus.build_vocabulary(2).unwrap(); // drops zzz, doc 1 empty
        assert!(lda_fit_gibbs(&corpus, &LdaParams::default()).is_err());
        let good = two_group_corpus();
        let bad = LdaParams {
            burn_in: 10,
            iterations: 10,
            ..Default::default()
        };
        assert!(lda_fit_gibbs(&good, &bad).is_err());
    }

    #[test]
    fn nmf_rank1_recovery() {
        let u = array![1.0, 2.0, 0.5, 3.0];
        let v = array![0.2, 1.0, 0.8];
        let mut x = Array2::zeros((4, 3));
        for i in 0..4 {
            for j in 0..3 {
                x[[i, j]] = u[i] * v[j];
            }
        }
        let model = nmf_fit(&x, &NmfParams {
            k: 1,
            max_iter: 500,
            tol: 1e-12,
            seed: 3,
        })
        .unwrap();
        let x_norm = x.iter().map(|v| v * v).sum::<f64>().sqrt();
        let rel = model.objective_trace.last().unwrap() / x_norm;
        assert!(rel < 1e-3, "relative residual {rel}");
    }

    #[test]
    fn nmf_objective_non_increasing() {
        let mut rng = seeded_rng(9, &[]);
        let mut x = Array2::zeros((12, 9));
        for v in x.iter_mut() {
            *v = rng.random::<f64>();
        }
        let model = nmf_fit(&x, &NmfParams {
            k: 4,
            max_iter: 100,
            tol: 0.0,
            seed: 1,
        })
        .unwrap();
        for w in model.objective_trace.windows(2) {
            assert!(w[1] <= w[0] + 1e-10, "objective rose: {} -> {}", w[0], w[1]);
        }
        assert!(model.w.iter().all(|&v| v >= 0.0));
        assert!(model.h.iter().all(|&v| v >= 0.0));
    }

    #[test]
    fn nmf_full_rank_small_residual() {
        let mut rng = seeded_rng(13, &[]);
        let mut x = Array2::zeros((6, 5));
        for v in x.iter_mut() {
            *v = rng.random::<f64>() + 0.05;
        }
        let model = nmf_fit(&x, &NmfParams {
            k: 5,
            max_iter: 2000,
            tol: 1e-14,
            seed: 4,
        })
        .unwrap();
        let x_norm = x.iter().map(|v| v * v).sum::<f64>().sqrt();
        let rel = model.objective_trace.last().unwrap() / x_norm;
        assert!(rel < 1e-2, "relative residual {rel}");
    }

    #[test]
    fn nmf_scaling_invariance_of_assignments() {
        let mut rng = seeded_rng(21, &[]);
        let mut x = Array2::zeros((10, 8));
        for v in x.iter_mut() {
            *v = rng.random::<f64>();
        }
        let params = NmfParams {
            k: 3,
            max_iter: 150,
            tol: 0.0,
            seed: 11,
        };
        let a = nmf_fit(&x, &params).unwrap();
        let scaled = x.mapv(|v| v * 7.5);
        let b = nmf_fit(&scaled, &params).unwrap();
        let (la, _) = baseline_assignments(&a.w);
        let (lb, _) = baseline_assignments(&b.w);
        assert_eq!(la, lb);
    }

    #[test]
    fn nmf_rejects_negative_input() {
        let x = array![[0.5, -0.1], [0.2, 0.3]];
        assert!(nmf_fit(&x, &NmfParams::default()).is_err());
    }

    #[test]
    fn assignments_argmax_and_ties() {
        let m = array![[0.1, 0.7, 0.2], [0.5, 0.5, 0.0], [0.0, 0.0, 0.0]];
        let (labels, zero_rows) = baseline_assignments(&m);
        assert_eq!(labels, vec![1, 0, 0]);
        assert_eq!(zero_rows, vec![2]);
    }

    #[test]
    fn assignments_match_bruteforce_argmax() {
        let mut rng = seeded_rng(30, &[]);
        let mut m = Array2::zeros((25, 6));
        for v in m.iter_mut() {
            *v = rng.random::<f64>();
        }
        // Row-normalize.
        for mut row in m.rows_mut() {
            let s = row.sum();
            row.mapv_inplace(|v| v / s);
        }
        let (labels, _) = baseline_assignments(&m);
        for (i, row) in m.rows().into_iter().enumerate() {
            let mut best = 0;
            for t in 0..6 {
                if row[t] > row[best] {
                    best = t;
                }
            }
            assert_eq!(labels[i], best);
        }
    }
}
