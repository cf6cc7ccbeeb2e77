//! Corpus ingestion, tokenization, vocabulary, TF-IDF, stratified sampling.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sampling::seeded_rng;
use rand::seq::SliceRandom;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Document {
    pub id: String,
    pub text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gold_label: Option<String>,
}

/// A tokenized corpus with a dense vocabulary.
///
/// `vocabulary[id]` is the token string for id; ids are assigned densely in
/// descending total-count order with lexicographic tie-breaks, so they are
/// reproducible for a given corpus and `min_count`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Corpus {
    pub documents: Vec<Document>,
    pub vocabulary: Vec<String>,
    pub doc_tokens: Vec<Vec<usize>>,
    pub doc_freq: Vec<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CorpusFormat {
    Jsonl,
    Csv,
    TxtDir,
}

impl std::str::FromStr for CorpusFormat {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "jsonl" => Ok(CorpusFormat::Jsonl),
            "csv" => Ok(CorpusFormat::Csv),
            "txt-dir" | "txt_dir" | "dir" => Ok(CorpusFormat::TxtDir),
            other => Err(Error::config(format!("unknown corpus format '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
struct JsonlRecord {
    id: String,
    text: String,
    #[serde(default)]
    label: Option<String>,
}

/// Lowercase alphanumeric-run tokenizer. No stop-word removal, no stemming:
/// tokens are maximal runs of letters/digits, lowercased, in input order.
pub fn tokenize(text: &str) -> Vec<String> {
    let mut tokens = Vec::new();
    let mut current = String::new();
    for ch in text.chars() {
        if ch.is_alphanumeric() {
            for lc in ch.to_lowercase() {
                current.push(lc);
            }
        } else if !current.is_empty() {
            tokens.push(std::mem::take(&mut current));
        }
    }
    if !current.is_empty() {
        tokens.push(current);
    }
    tokens
}

/// Reads documents from JSONL ({"id","text","label"?} per line), CSV
/// (id,text,label header), or a directory of .txt files (ids from file stems,
/// lexicographic filename order). The vocabulary is left empty; call
/// [`Corpus::build_vocabulary`] next.
pub fn ingest_corpus(path: &Path, format: CorpusFormat) -> Result<Corpus> {
    ingest_corpus_with(path, format, false)
}

/// Like [`ingest_corpus`] with optional exact-text deduplication: when two
/// records have byte-identical text, only the first is kept.
pub fn ingest_corpus_with(path: &Path, format: CorpusFormat, dedup_exact_text: bool) -> Result<Corpus> {
    let mut documents = match format {
        CorpusFormat::Jsonl => ingest_jsonl(path)?,
        CorpusFormat::Csv => ingest_csv(path)?,
        CorpusFormat::TxtDir => ingest_txt_dir(path)?,
    };
    if dedup_exact_text {
        let mut seen: HashMap<String, ()> = HashMap::new();
        documents.retain(|d| seen.insert(d.text.clone(), ()).is_none());
    }
    if documents.is_empty() {
        return Err(Error::validation("empty corpus"));
    }
    let mut ids: HashMap<&str, ()> = HashMap::new();
    for doc in &documents {
        if doc.text.trim().is_empty() {
            return Err(Error::validation(format!(
                "document '{}' has empty text",
                doc.id
            )));
        }
        if ids.insert(doc.id.as_str(), ()).is_some() {
            return Err(Error::validation(format!("duplicate document id '{}'", doc.id)));
        }
    }
    Ok(Corpus {
        documents,
        vocabulary: Vec::new(),
        doc_tokens: Vec::new(),
        doc_freq: Vec::new(),
    })
}

fn ingest_jsonl(path: &Path) -> Result<Vec<Document>> {
    let reader = BufReader::new(File::open(path)?);
    let mut docs = Vec::new();
    for (lineno, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: JsonlRecord = serde_json::from_str(&line).map_err(|e| {
            Error::validation(format!("{}:{}: invalid json record: {e}", path.display(), lineno + 1))
        })?;
        docs.push(Document {
            id: rec.id,
            text: rec.text,
            gold_label: rec.label,
        });
    }
    Ok(docs)
}

fn ingest_csv(path: &Path) -> Result<Vec<Document>> {
    let mut reader = csv::Reader::from_path(path)?;
    let headers = reader.headers()?.clone();
    let col = |name: &str| headers.iter().position(|h| h == name);
    let id_col = col("id").ok_or_else(|| Error::validation("csv missing 'id' column"))?;
    let text_col = col("text").ok_or_else(|| Error::validation("csv missing 'text' column"))?;
    let label_col = col("label");
    let mut docs = Vec::new();
    for record in reader.records() {
        let record = record?;
        let label = label_col
            .and_then(|c| record.get(c))
            .filter(|s| !s.is_empty())
            .map(|s| s.to_string());
        docs.push(Document {
            id: record
                .get(id_col)
                .ok_or_else(|| Error::validation("csv row missing id"))?
                .to_string(),
            text: record
                .get(text_col)
                .ok_or_else(|| Error::validation("csv row missing text"))?
                .to_string(),
            gold_label: label,
        });
    }
    Ok(docs)
}

fn ingest_txt_dir(path: &Path) -> Result<Vec<Document>> {
    let mut paths: Vec<_> = std::fs::read_dir(path)?
        .collect::<std::io::Result<Vec<_>>>()?
        .into_iter()
        .map(|e| e.path())
        .filter(|p| p.extension().is_some_and(|ext| ext == "txt"))
        .collect();
    paths.sort_by_key(|p| p.file_name().map(|n| n.to_os_string()));
    let mut docs = Vec::new();
    for p in paths {
        let id = p
            .file_stem()
            .and_then(|s| s.to_str())
            .ok_or_else(|| Error::validation(format!("bad filename {}", p.display())))?
            .to_string();
        docs.push(Document {
            id,
            text: std::fs::read_to_string(&p)?,
            gold_label: None,
        });
    }
    Ok(docs)
}

impl Corpus {
    pub fn len(&self) -> usize {
        self.documents.len()
    }

    pub fn is_empty(&self) -> bool {
        self.documents.is_empty()
    }

    pub fn vocab_size(&self) -> usize {
        self.vocabulary.len()
    }

    pub fn doc_ids(&self) -> Vec<String> {
        self.documents.iter().map(|d| d.id.clone()).collect()
    }

    pub fn gold_labels(&self) -> Vec<Option<String>> {
        self.documents.iter().map(|d| d.gold_label.clone()).collect()
    }

    /// Content hash over document ids and texts, independent of derived state.
    pub fn content_hash(&self) -> String {
        let mut bytes = Vec::new();
        for d in &self.documents {
            bytes.extend_from_slice(d.id.as_bytes());
            bytes.push(0);
            bytes.extend_from_slice(d.text.as_bytes());
            bytes.push(0);
        }
        format!("{:016x}", crate::sampling::fnv1a(&bytes))
    }

    /// Tokenizes every document and keeps tokens whose total count is at
    /// least `min_count`. Ids are dense `0..V`, assigned in descending-count
    /// then lexicographic order; out-of-vocabulary tokens are dropped from
    /// `doc_tokens`.
    pub fn build_vocabulary(&mut self, min_count: usize) -> Result<()> {
        let tokenized: Vec<Vec<String>> = self.documents.iter().map(|d| tokenize(&d.text)).collect();
        let mut counts: HashMap<&str, usize> = HashMap::new();
        for tokens in &tokenized {
            for t in tokens {
                *counts.entry(t.as_str()).or_insert(0) += 1;
            }
        }
        let mut kept: Vec<(&str, usize)> = counts
            .iter()
            .filter(|(_, &c)| c >= min_count)
            .map(|(&t, &c)| (t, c))
            .collect();
        if kept.is_empty() {
            return Err(Error::validation("empty vocabulary after min_count filtering"));
        }
        kept.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
        let vocabulary: Vec<String> = kept.iter().map(|(t, _)| t.to_string()).collect();
        let ids: HashMap<&str, usize> = kept.iter().enumerate().map(|(i, (t, _))| (*t, i)).collect();

        let mut doc_tokens = Vec::with_capacity(tokenized.len());
        let mut doc_freq = vec![0usize; vocabulary.len()];
        for tokens in &tokenized {
            let row: Vec<usize> = tokens.iter().filter_map(|t| ids.get(t.as_str()).copied()).collect();
            let mut seen: Vec<usize> = row.clone();
            seen.sort_unstable();
            seen.dedup();
            for id in seen {
                doc_freq[id] += 1;
            }
            doc_tokens.push(row);
        }
        self.vocabulary = vocabulary;
        self.doc_tokens = doc_tokens;
        self.doc_freq = doc_freq;
        Ok(())
    }

    /// Per-label subsample preserving class proportions to within one
    /// document; unlabeled documents form their own stratum. Document order
    /// is preserved and the vocabulary is kept; document frequencies are
    /// recomputed for the sampled subset.
    pub fn stratified_sample(&self, fraction: f64, seed: u64) -> Result<Corpus> {
        if !(fraction > 0.0 && fraction <= 1.0) {
            return Err(Error::validation(format!(
                "sample fraction must be in (0,1], got {fraction}"
            )));
        }
        if (fraction - 1.0).abs() < f64::EPSILON {
            return Ok(self.clone());
        }
        let mut strata: HashMap<Option<&str>, Vec<usize>> = HashMap::new();
        for (i, d) in self.documents.iter().enumerate() {
            strata.entry(d.gold_label.as_deref()).or_default().push(i);
        }
        // Deterministic stratum order regardless of hash-map iteration.
        let mut keys: Vec<Option<&str>> = strata.keys().copied().collect();
        keys.sort();
        let mut selected: Vec<usize> = Vec::new();
        for (stratum_idx, key) in keys.iter().enumerate() {
            let members = &strata[key];
            let take = ((fraction * members.len() as f64).round() as usize).min(members.len());
            let mut shuffled = members.clone();
            let mut rng = seeded_rng(seed, &[0x57_7261, stratum_idx as u64]);
            shuffled.shuffle(&mut rng);
            selected.extend_from_slice(&shuffled[..take]);
        }
        selected.sort_unstable();
        let documents: Vec<Document> = selected.iter().map(|&i| self.documents[i].clone()).collect();
        let doc_tokens: Vec<Vec<usize>> = selected.iter().map(|&i| self.doc_tokens[i].clone()).collect();
        let mut doc_freq = vec![0usize; self.vocabulary.len()];
        for row in &doc_tokens {
            let mut seen = row.clone();
            seen.sort_unstable();
            seen.dedup();
            for id in seen {
                doc_freq[id] += 1;
            }
        }
        Ok(Corpus {
            documents,
            vocabulary: self.vocabulary.clone(),
            doc_tokens,
            doc_freq,
        })
    }
}

/// Sparse TF-IDF matrix with L2-normalized rows.
///
/// tf is the raw in-document count; idf is the smoothed
/// `ln((1+N)/(1+df)) + 1`, so no term gets weight zero. Documents with no
/// in-vocabulary tokens produce zero rows and are listed in `zero_rows`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TfidfMatrix {
    pub rows: Vec<Vec<(usize, f64)>>,
    pub n_cols: usize,
    pub zero_rows: Vec<usize>,
}

impl TfidfMatrix {
    pub fn n_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn to_dense(&self) -> Array2<f64> {
        let mut dense = Array2::zeros((self.rows.len(), self.n_cols));
        for (i, row) in self.rows.iter().enumerate() {
            for &(j, v) in row {
                dense[[i, j]] = v;
            }
        }
        dense
    }
}

pub fn tfidf_vectorize(corpus: &Corpus) -> Result<TfidfMatrix> {
    if corpus.vocabulary.is_empty() {
        return Err(Error::validation("vocabulary not built"));
    }
    let n = corpus.len() as f64;
    let idf: Vec<f64> = corpus
        .doc_freq
        .iter()
        .map(|&df| ((1.0 + n) / (1.0 + df as f64)).ln() + 1.0)
        .collect();
    let mut rows = Vec::with_capacity(corpus.len());
    let mut zero_rows = Vec::new();
    for (i, tokens) in corpus.doc_tokens.iter().enumerate() {
        let mut counts: HashMap<usize, usize> = HashMap::new();
        for &t in tokens {
            *counts.entry(t).or_insert(0) += 1;
        }
        let mut row: Vec<(usize, f64)> = counts
            .into_iter()
            .map(|(t, c)| (t, c as f64 * idf[t]))
            .collect();
        row.sort_unstable_by_key(|&(t, _)| t);
        let norm = row.iter().map(|&(_, v)| v * v).sum::<f64>().sqrt();
        if norm > 0.0 {
            for entry in &mut row {
                entry.1 /= norm;
            }
        } else {
            zero_rows.push(i);
        }
        rows.push(row);
    }
    Ok(TfidfMatrix {
        rows,
        n_cols: corpus.vocabulary.len(),
        zero_rows,
    })
}
