//! Synthetic labeled corpus generator, the desk-scale stand-in for real
//! document collections.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{Corpus, Document};
use crate::error::{Error, Result};
use crate::sampling::seeded_rng;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SynthParams {
    pub num_classes: usize,
    pub docs_per_class: usize,
    /// Tokens in each class's private vocabulary block; the shared block has
    /// the same size.
    pub vocab_per_class: usize,
    /// Probability that a token is drawn from the shared block instead of the
    /// class block.
    pub overlap: f64,
    pub seed: u64,
}

impl Default for SynthParams {
    fn default() -> Self {
        SynthParams {
            num_classes: 3,
            docs_per_class: 50,
            vocab_per_class: 50,
            overlap: 0.2,
            seed: 0,
        }
    }
}

pub const DOC_LEN_MIN: usize = 40;
pub const DOC_LEN_MAX: usize = 120;

/// Generates a gold-labeled corpus: each class draws tokens from its own
/// vocabulary block, mixed with a shared block at the `overlap` rate.
/// Document lengths are uniform in [40, 120]. The returned corpus has its
/// vocabulary built (min_count 1). Deterministic per seed.
pub fn generate_synthetic_corpus(params: &SynthParams) -> Result<Corpus> {
    if params.num_classes == 0 {
        return Err(Error::validation("num_classes must be >= 1"));
    }
    if params.docs_per_class == 0 || params.vocab_per_class == 0 {
        return Err(Error::validation("docs_per_class and vocab_per_class must be >= 1"));
    }
    if !(0.0..1.0).contains(&params.overlap) {
        return Err(Error::validation("overlap must be in [0,1)"));
    }
    let mut rng = seeded_rng(params.seed, &[0x5e_ed]);
    let total = params.num_classes * params.docs_per_class;
    let width = total.to_string().len().max(4);
    let mut documents = Vec::with_capacity(total);
    for class in 0..params.num_classes {
        for d in 0..params.docs_per_class {
            let doc_index = class * params.docs_per_class + d;
            let len = rng.random_range(DOC_LEN_MIN..=DOC_LEN_MAX);
            let mut words = Vec::with_capacity(len);
            for _ in 0..len {
                let shared = params.overlap > 0.0 && rng.random::<f64>() < params.overlap;
                let t = rng.random_range(0..params.vocab_per_class);
                if shared {
                    words.push(format!("sh{t}"));
                } else {
                    words.push(format!("c{class}t{t}"));
                }
            }
            documents.push(Document {
                id: format!("doc{doc_index:0width$}"),
                text: words.join(" "),
                gold_label: Some(format!("class{class}")),
            });
        }
    }
    let mut corpus = Corpus {
        documents,
        vocabulary: Vec::new(),
        doc_tokens: Vec::new(),
        doc_freq: Vec::new(),
    };
    corpus.build_vocabulary(1)?;
    Ok(corpus)
}

/// Serializes a corpus back to the JSONL input format, so the generator can
/// feed the ingestion path.
pub fn corpus_to_jsonl(corpus: &Corpus) -> String {
    let mut out = String::new();
    for doc in &corpus.documents {
        let mut record = serde_json::Map::new();
        record.insert("id".into(), serde_json::Value::String(doc.id.clone()));
        record.insert("text".into(), serde_json::Value::String(doc.text.clone()));
        if let Some(label) = &doc.gold_label {
            record.insert("label".into(), serde_json::Value::String(label.clone()));
        }
        out.push_str(&serde_json::Value::Object(record).to_string());
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_overlap_disjoint_vocabularies() {
        let corpus = generate_synthetic_corpus(&SynthParams {
            num_classes: 3,
            docs_per_class: 5,
            vocab_per_class: 20,
            overlap: 0.0,
            seed: 1,
        })
        .unwrap();
        for token in &corpus.vocabulary {
            assert!(token.starts_with('c'), "unexpected shared token {token}");
        }
        // Classes use disjoint prefixes.
        for (i, doc) in corpus.documents.iter().enumerate() {
            let class = i / 5;
            for word in doc.text.split(' ') {
                assert!(word.starts_with(&format!("c{class}t")));
            }
        }
    }

    #[test]
    fn deterministic_per_seed() {
        let params = SynthParams {
            seed: 9,
            ..Default::default()
        };
        let a = generate_synthetic_corpus(&params).unwrap();
        let b = generate_synthetic_corpus(&params).unwrap();
        assert_eq!(a.content_hash(), b.content_hash());
        assert_eq!(a.vocabulary, b.vocabulary);
    }

    #[test]
    fn document_lengths_in_range_and_labels_present() {
        let corpus = generate_synthetic_corpus(&SynthParams::default()).unwrap();
        for doc in &corpus.documents {
            let len = doc.text.split(' ').count();
            assert!((DOC_LEN_MIN..=DOC_LEN_MAX).contains(&len));
            assert!(doc.gold_label.is_some());
        }
    }

    #[test]
    fn jsonl_roundtrip() {
        let corpus = generate_synthetic_corpus(&SynthParams {
            num_classes: 2,
            docs_per_class: 3,
            vocab_per_class: 10,
            overlap: 0.3,
            seed: 4,
        })
        .unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("synth.jsonl");
        std::fs::write(&path, corpus_to_jsonl(&corpus)).unwrap();
        let back = crate::corpus::ingest_corpus(&path, crate::corpus::CorpusFormat::Jsonl).unwrap();
        assert_eq!(back.doc_ids(), corpus.doc_ids());
        assert_eq!(back.gold_labels(), corpus.gold_labels());
    }
}
