//! Hybrid document clustering.
//!
//! The pipeline learns joint document/word embeddings with skip-gram negative
//! sampling, discovers topics by density clustering on a manifold-reduced view
//! of the document vectors, links documents to their topics in a bipartite
//! graph, embeds that graph with biased random walks, fuses the semantic and
//! structural document vectors, and clusters the result with KMeans. TF-IDF,
//! LDA and NMF baselines plus a metric/sweep harness make the arms comparable.

pub mod baselines;
pub mod clustering;
pub mod corpus;
pub mod error;
pub mod evaluation;
pub mod graph;
pub mod io;
pub mod manifold;
pub mod pipeline;
pub mod sampling;
pub mod semantic;
pub mod sgns;
pub mod synth;

pub use baselines::{LdaModel, LdaParams, NmfModel, NmfParams};
pub use clustering::{ClusterParams, ClusterResult};
pub use corpus::{Corpus, CorpusFormat, Document, TfidfMatrix};
pub use error::{Error, Result};
pub use evaluation::MetricReport;
pub use graph::{
    BipartiteGraph, CombineMode, CombinedEmbedding, Node, Node2VecParams, NodeEmbedding,
    WalkCorpus,
};
pub use manifold::{FuzzyGraph, KnnGraph, Projection, UmapParams};
pub use pipeline::{PipelineConfig, RunManifest};
pub use semantic::{DensityParams, JointEmbedding, SgnsParams, TopicModel};
pub use synth::SynthParams;
