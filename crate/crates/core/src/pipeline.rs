//! Configuration-driven orchestration: the full hybrid pipeline, baseline
//! arms, sensitivity sweeps, the ablation study, and all file exports.

use std::path::{Path, PathBuf};
use std::time::Instant;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::baselines::{self, LdaParams, NmfParams};
use crate::clustering::{self, ClusterParams, ClusterResult};
use crate::corpus::{self, Corpus, CorpusFormat, TfidfMatrix};
use crate::error::{Error, Result};
use crate::evaluation::{self, MetricReport};
use crate::graph::{self, BipartiteGraph, CombineMode, CombinedEmbedding, NodeEmbedding};
use crate::io;
use crate::manifold::{self, UmapParams};
use crate::sampling::{derive_seed, fnv1a};
use crate::semantic::{self, DensityParams, JointEmbedding, SgnsParams, TopicModel};

// Artifact file names within the output directory.
pub const CORPUS_FILE: &str = "corpus.json";
pub const INGEST_WARNINGS_FILE: &str = "ingest_warnings.json";
pub const DOC_VECTORS_FILE: &str = "doc_vectors.bin";
pub const WORD_VECTORS_FILE: &str = "word_vectors.bin";
pub const SGNS_LOSS_FILE: &str = "sgns_loss.json";
pub const TOPIC_MODEL_FILE: &str = "topic_model.json";
pub const TOPIC_CENTROIDS_FILE: &str = "topic_centroids.bin";
pub const TOPIC_HISTOGRAM_FILE: &str = "topic_histogram.csv";
pub const GRAPH_EDGES_FILE: &str = "graph_edges.txt";
pub const GRAPH_JSON_FILE: &str = "graph.json";
pub const WALKS_FILE: &str = "walks.txt";
pub const NODE_VECTORS_FILE: &str = "node_vectors.bin";
pub const NODE_INDEX_FILE: &str = "node_index.json";
pub const COMBINED_VECTORS_FILE: &str = "combined_vectors.bin";
pub const LABELS_FILE: &str = "labels.csv";
pub const CENTROIDS_FILE: &str = "centroids.bin";
pub const PROJECTION_2D_FILE: &str = "projection_2d.csv";
pub const PROJECTION_3D_FILE: &str = "projection_3d.csv";
pub const UMAP_LOSS_FILE: &str = "umap_loss.json";
pub const METRICS_FILE: &str = "metrics.json";
pub const MANIFEST_FILE: &str = "manifest.json";

fn default_min_count() -> usize {
    2
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CorpusConfig {
    pub input: PathBuf,
    pub format: CorpusFormat,
    #[serde(default = "default_min_count")]
    pub min_count: usize,
    #[serde(default)]
    pub dedup: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct SgnsSection {
    pub dim: usize,
    pub epochs: usize,
    pub window: usize,
    pub negatives: usize,
    pub lr_initial: f64,
}

impl Default for SgnsSection {
    fn default() -> Self {
        SgnsSection {
            dim: 300,
            epochs: 20,
            window: 5,
            negatives: 5,
            lr_initial: 0.05,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct TopicsSection {
    /// Manifold dimensionality used before density clustering.
    pub reduce_dim: usize,
    pub reduce_neighbors: usize,
    pub reduce_epochs: usize,
    pub min_cluster_size: usize,
    pub eps_quantile: f64,
}

impl Default for TopicsSection {
    fn default() -> Self {
        TopicsSection {
            reduce_dim: 5,
            reduce_neighbors: 15,
            reduce_epochs: 150,
            min_cluster_size: 15,
            eps_quantile: 0.9,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct UmapSection {
    pub n_neighbors: usize,
    pub min_dist: f64,
    pub spread: f64,
    pub n_epochs: usize,
    pub negatives_per_edge: usize,
    pub lr_initial: f64,
    /// Optional fixed kernel parameters; when absent they are fitted.
    pub a: Option<f64>,
    pub b: Option<f64>,
}

impl Default for UmapSection {
    fn default() -> Self {
        UmapSection {
            n_neighbors: 30,
            min_dist: 0.1,
            spread: 1.0,
            n_epochs: 200,
            negatives_per_edge: 5,
            lr_initial: 1.0,
            a: None,
            b: None,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct Node2VecSection {
    pub dim: usize,
    pub walk_length: usize,
    pub num_walks: usize,
    pub window: usize,
    pub p: f64,
    pub q: f64,
    pub negatives: usize,
    pub epochs: usize,
    pub lr_initial: f64,
}

impl Default for Node2VecSection {
    fn default() -> Self {
        Node2VecSection {
            dim: 64,
            walk_length: 30,
            num_walks: 200,
            window: 10,
            p: 1.0,
            q: 1.0,
            negatives: 5,
            epochs: 3,
            lr_initial: 0.025,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct ClusterSection {
    /// 0 means "use the discovered topic count".
    pub k: usize,
    pub restarts: usize,
    pub max_iter: usize,
    pub tol: f64,
}

impl Default for ClusterSection {
    fn default() -> Self {
        ClusterSection {
            k: 0,
            restarts: 10,
            max_iter: 300,
            tol: 1e-6,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct LdaSection {
    pub alpha: f64,
    pub beta: f64,
    pub iterations: usize,
    pub burn_in: usize,
}

impl Default for LdaSection {
    fn default() -> Self {
        LdaSection {
            alpha: 0.1,
            beta: 0.01,
            iterations: 200,
            burn_in: 50,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct NmfSection {
    pub max_iter: usize,
    pub tol: f64,
}

impl Default for NmfSection {
    fn default() -> Self {
        NmfSection {
            max_iter: 200,
            tol: 1e-6,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct SweepSection {
    pub k_min: usize,
    pub k_max: usize,
    pub k_step: usize,
    pub fractions: Vec<f64>,
    pub node2vec_dims: Vec<usize>,
    pub node2vec_walk_lengths: Vec<usize>,
    pub node2vec_num_walks: Vec<usize>,
}

impl Default for SweepSection {
    fn default() -> Self {
        SweepSection {
            k_min: 2,
            k_max: 8,
            k_step: 1,
            fractions: vec![0.5, 0.7, 1.0],
            node2vec_dims: vec![32, 64, 128],
            node2vec_walk_lengths: vec![10, 20, 40],
            node2vec_num_walks: vec![10, 20, 50],
        }
    }
}

impl SweepSection {
    pub fn k_values(&self) -> Vec<usize> {
        let step = self.k_step.max(1);
        (self.k_min..=self.k_max).step_by(step).collect()
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub corpus: CorpusConfig,
    #[serde(default)]
    pub sgns: SgnsSection,
    #[serde(default)]
    pub topics: TopicsSection,
    #[serde(default)]
    pub umap: UmapSection,
    #[serde(default)]
    pub node2vec: Node2VecSection,
    #[serde(default)]
    pub cluster: ClusterSection,
    #[serde(default)]
    pub lda: LdaSection,
    #[serde(default)]
    pub nmf: NmfSection,
    #[serde(default)]
    pub sweep: SweepSection,
    #[serde(default = "default_mode")]
    pub mode: CombineMode,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub deterministic: bool,
    pub output_dir: PathBuf,
}

fn default_mode() -> CombineMode {
    CombineMode::Concat
}

// Stage tags for seed derivation, so every stage gets an independent stream
// from the one configured seed.
const SEED_SAMPLE: u64 = 1;
const SEED_SGNS: u64 = 2;
const SEED_TOPICS: u64 = 3;
const SEED_NODE2VEC: u64 = 4;
const SEED_KMEANS: u64 = 5;
const SEED_UMAP: u64 = 6;
const SEED_LDA: u64 = 7;
const SEED_NMF: u64 = 8;

impl PipelineConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_toml_str(&text)
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::config(format!("invalid config: {e}")))
    }

    pub fn default_for(input: &Path, format: CorpusFormat, output_dir: &Path, seed: u64) -> Self {
        PipelineConfig {
            corpus: CorpusConfig {
                input: input.to_path_buf(),
                format,
                min_count: default_min_count(),
                dedup: false,
            },
            sgns: SgnsSection::default(),
            topics: TopicsSection::default(),
            umap: UmapSection::default(),
            node2vec: Node2VecSection::default(),
            cluster: ClusterSection::default(),
            lda: LdaSection::default(),
            nmf: NmfSection::default(),
            sweep: SweepSection::default(),
            mode: CombineMode::Concat,
            seed,
            deterministic: false,
            output_dir: output_dir.to_path_buf(),
        }
    }

    /// Stable hash of the serialized config snapshot.
    pub fn hash(&self) -> String {
        let json = serde_json::to_string(self).expect("config serializes");
        format!("{:016x}", fnv1a(json.as_bytes()))
    }

    pub fn sgns_params(&self) -> SgnsParams {
        SgnsParams {
            dim: self.sgns.dim,
            epochs: self.sgns.epochs,
            window: self.sgns.window,
            negatives: self.sgns.negatives,
            lr_initial: self.sgns.lr_initial,
            seed: derive_seed(self.seed, &[SEED_SGNS]),
        }
    }

    /// Manifold parameters for the intermediate reduction inside topic
    /// discovery.
    pub fn reduce_params(&self) -> UmapParams {
        UmapParams {
            n_neighbors: self.topics.reduce_neighbors,
            min_dist: self.umap.min_dist,
            spread: self.umap.spread,
            ab_override: None,
            n_epochs: self.topics.reduce_epochs,
            negatives_per_edge: self.umap.negatives_per_edge,
            lr_initial: self.umap.lr_initial,
            target_dim: self.topics.reduce_dim,
            seed: derive_seed(self.seed, &[SEED_TOPICS]),
        }
    }

    pub fn density_params(&self) -> DensityParams {
        DensityParams {
            min_cluster_size: self.topics.min_cluster_size,
            eps_quantile: self.topics.eps_quantile,
        }
    }

    /// Manifold parameters for the final visualization projection.
    pub fn umap_params(&self, target_dim: usize) -> UmapParams {
        UmapParams {
            n_neighbors: self.umap.n_neighbors,
            min_dist: self.umap.min_dist,
            spread: self.umap.spread,
            ab_override: match (self.umap.a, self.umap.b) {
                (Some(a), Some(b)) => Some((a, b)),
                _ => None,
            },
            n_epochs: self.umap.n_epochs,
            negatives_per_edge: self.umap.negatives_per_edge,
            lr_initial: self.umap.lr_initial,
            target_dim,
            seed: derive_seed(self.seed, &[SEED_UMAP, target_dim as u64]),
        }
    }

    pub fn node2vec_params(&self) -> graph::Node2VecParams {
        graph::Node2VecParams {
            dim: self.node2vec.dim,
            walk_length: self.node2vec.walk_length,
            num_walks: self.node2vec.num_walks,
            window: self.node2vec.window,
            p: self.node2vec.p,
            q: self.node2vec.q,
            negatives: self.node2vec.negatives,
            epochs: self.node2vec.epochs,
            lr_initial: self.node2vec.lr_initial,
            seed: derive_seed(self.seed, &[SEED_NODE2VEC]),
        }
    }

    pub fn cluster_params(&self, k: usize) -> ClusterParams {
        ClusterParams {
            k,
            restarts: self.cluster.restarts,
            max_iter: self.cluster.max_iter,
            tol: self.cluster.tol,
            seed: derive_seed(self.seed, &[SEED_KMEANS, k as u64]),
        }
    }

    pub fn lda_params(&self, k: usize) -> LdaParams {
        LdaParams {
            k,
            alpha: self.lda.alpha,
            beta: self.lda.beta,
            iterations: self.lda.iterations,
            burn_in: self.lda.burn_in,
            seed: derive_seed(self.seed, &[SEED_LDA, k as u64]),
        }
    }

    pub fn nmf_params(&self, k: usize) -> NmfParams {
        NmfParams {
            k,
            max_iter: self.nmf.max_iter,
            tol: self.nmf.tol,
            seed: derive_seed(self.seed, &[SEED_NMF, k as u64]),
        }
    }

    pub fn sample_seed(&self) -> u64 {
        derive_seed(self.seed, &[SEED_SAMPLE])
    }

    /// Effective KMeans k: the configured value, or the discovered topic
    /// count when set to 0.
    pub fn effective_k(&self, discovered_topics: usize) -> usize {
        if self.cluster.k == 0 {
            discovered_topics.max(1)
        } else {
            self.cluster.k
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StageTiming {
    pub stage: String,
    pub seconds: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunManifest {
    pub config: PipelineConfig,
    pub config_hash: String,
    pub corpus_hash: Option<String>,
    pub stages: Vec<StageTiming>,
    pub artifacts: Vec<String>,
    pub metrics: Vec<MetricReport>,
    pub warnings: Vec<String>,
}

impl RunManifest {
    fn new(config: &PipelineConfig) -> Self {
        RunManifest {
            config: config.clone(),
            config_hash: config.hash(),
            corpus_hash: None,
            stages: Vec::new(),
            artifacts: Vec::new(),
            metrics: Vec::new(),
            warnings: Vec::new(),
        }
    }

    fn record_artifact(&mut self, name: &str) {
        self.artifacts.push(name.to_string());
    }
}

/// Loads and prepares the corpus per the config (ingest, optional dedup,
/// vocabulary build).
pub fn load_corpus(config: &CorpusConfig) -> Result<Corpus> {
    let mut corpus = corpus::ingest_corpus_with(&config.input, config.format, config.dedup)?;
    corpus.build_vocabulary(config.min_count)?;
    Ok(corpus)
}

/// In-memory results of the hybrid stages, reused across sweep points so k
/// only varies at the KMeans stage.
pub struct HybridStages {
    pub corpus: Corpus,
    pub tfidf: TfidfMatrix,
    pub embedding: JointEmbedding,
    pub topics: TopicModel,
    pub graph: BipartiteGraph,
    pub node_embedding: NodeEmbedding,
    pub combined: CombinedEmbedding,
    /// Wall-clock seconds of the node2vec stage (walks + training); zero in
    /// deterministic mode.
    pub node2vec_seconds: f64,
}

/// Runs corpus-to-combined-embedding on an already loaded corpus.
pub fn build_hybrid_stages(config: &PipelineConfig, corpus: Corpus) -> Result<HybridStages> {
    let tfidf = corpus::tfidf_vectorize(&corpus)?;
    let embedding = semantic::train_joint_embedding(&corpus, &config.sgns_params())?;
    let topics = semantic::discover_topics(&embedding, &config.reduce_params(), &config.density_params())?;
    let graph = graph::build_bipartite_graph(&topics, &corpus.doc_ids())?;
    let n2v = config.node2vec_params();
    let t0 = Instant::now();
    let walks = graph::generate_walks(&graph, &n2v)?;
    let node_embedding = graph::train_node_embeddings(&graph, &walks, &n2v)?;
    let node2vec_seconds = if config.deterministic {
        0.0
    } else {
        t0.elapsed().as_secs_f64()
    };
    let combined = graph::combine_embeddings(&embedding, &node_embedding, config.mode)?;
    Ok(HybridStages {
        corpus,
        tfidf,
        embedding,
        topics,
        graph,
        node_embedding,
        combined,
        node2vec_seconds,
    })
}

fn fill_internal_metrics(
    x: &Array2<f64>,
    result: &ClusterResult,
    report: &mut MetricReport,
    warnings: &mut Vec<String>,
) {
    match evaluation::silhouette(x, &result.labels) {
        Ok(v) => report.silhouette = Some(v),
        Err(e) => warnings.push(format!("{}: silhouette skipped: {e}", report.model_tag)),
    }
    match evaluation::davies_bouldin(x, &result.labels) {
        Ok(v) => report.dbi = Some(v),
        Err(e) => warnings.push(format!("{}: dbi skipped: {e}", report.model_tag)),
    }
    match evaluation::calinski_harabasz(x, &result.labels) {
        Ok(v) => report.chs = Some(v),
        Err(e) => warnings.push(format!("{}: chs skipped: {e}", report.model_tag)),
    }
    match evaluation::kmeans_bic(x, result) {
        Ok(v) => report.bic = Some(v),
        Err(e) => warnings.push(format!("{}: bic skipped: {e}", report.model_tag)),
    }
}

fn fill_external_metrics(gold: Option<&[usize]>, labels: &[usize], report: &mut MetricReport) {
    if let Some(gold) = gold {
        report.nmi = evaluation::nmi(gold, labels).ok();
        report.ari = evaluation::ari(gold, labels).ok();
        report.cluster_entropy = evaluation::cluster_entropy(gold, labels).ok();
    }
}

/// Topic histogram CSV: one row per topic with document count and keywords.
/// Counts sum to the corpus size.
pub fn export_topic_histogram(topics: &TopicModel, corpus: &Corpus) -> String {
    let mut counts = vec![0usize; topics.num_topics];
    for &t in &topics.assignments {
        counts[t] += 1;
    }
    let mut out = String::from("topic_id,doc_count,top_keywords\n");
    for (t, &count) in counts.iter().enumerate() {
        let words: Vec<&str> = topics.topic_keywords[t]
            .iter()
            .map(|&w| corpus.vocabulary[w].as_str())
            .collect();
        out.push_str(&format!("{t},{count},{}\n", words.join(" ")));
    }
    out
}

/// Serializable topic model artifact: keyword ids resolved to tokens, with a
/// reference to the binary centroid file.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TopicModelFile {
    pub num_topics: usize,
    pub assignments: Vec<usize>,
    pub keywords: Vec<Vec<String>>,
    pub centroid_file: String,
    pub warnings: Vec<String>,
}

pub fn topic_model_file(topics: &TopicModel, corpus: &Corpus) -> TopicModelFile {
    TopicModelFile {
        num_topics: topics.num_topics,
        assignments: topics.assignments.clone(),
        keywords: topics
            .topic_keywords
            .iter()
            .map(|ids| ids.iter().map(|&w| corpus.vocabulary[w].clone()).collect())
            .collect(),
        centroid_file: TOPIC_CENTROIDS_FILE.to_string(),
        warnings: topics.warnings.clone(),
    }
}

pub fn labels_csv(doc_ids: &[String], labels: &[usize]) -> String {
    let mut out = String::from("doc_id,cluster\n");
    for (id, &l) in doc_ids.iter().zip(labels.iter()) {
        out.push_str(&format!("{id},{l}\n"));
    }
    out
}

fn stage<T>(
    manifest: &mut RunManifest,
    out_dir: &Path,
    deterministic: bool,
    name: &str,
    f: impl FnOnce(&mut RunManifest) -> Result<T>,
) -> Result<T> {
    let start = Instant::now();
    let result = f(manifest);
    let seconds = if deterministic {
        0.0
    } else {
        start.elapsed().as_secs_f64()
    };
    manifest.stages.push(StageTiming {
        stage: name.to_string(),
        seconds,
    });
    match result {
        Ok(v) => Ok(v),
        Err(e) => {
            // Persist the partial manifest so failed runs stay inspectable.
            let _ = io::write_json(&out_dir.join(MANIFEST_FILE), manifest);
            Err(e.in_stage(name))
        }
    }
}

/// Executes the full pipeline: corpus, semantic embedding, topics, graph,
/// node2vec, combine, kmeans, 2D/3D projections, metrics. Every artifact and
/// the manifest are written into the configured output directory; a stage
/// error aborts with the stage name after persisting the partial manifest.
pub fn run_pipeline(config: &PipelineConfig) -> Result<RunManifest> {
    std::fs::create_dir_all(&config.output_dir)?;
    let out = config.output_dir.clone();
    let det = config.deterministic;
    let mut manifest = RunManifest::new(config);

    let corpus = stage(&mut manifest, &out, det, "corpus", |m| {
        let corpus = load_corpus(&config.corpus)?;
        m.corpus_hash = Some(corpus.content_hash());
        io::write_json(&out.join(CORPUS_FILE), &corpus)?;
        m.record_artifact(CORPUS_FILE);
        Ok(corpus)
    })?;

    let stages = {
        let tfidf = stage(&mut manifest, &out, det, "tfidf", |m| {
            let tfidf = corpus::tfidf_vectorize(&corpus)?;
            if !tfidf.zero_rows.is_empty() {
                m.warnings.push(format!(
                    "{} documents have empty tf-idf rows: {:?}",
                    tfidf.zero_rows.len(),
                    tfidf.zero_rows
                ));
            }
            Ok(tfidf)
        })?;

        let embedding = stage(&mut manifest, &out, det, "semantic", |m| {
            let embedding = semantic::train_joint_embedding(&corpus, &config.sgns_params())?;
            if !embedding.excluded_docs.is_empty() {
                m.warnings.push(format!(
                    "{} documents empty after vocabulary filtering: {:?}",
                    embedding.excluded_docs.len(),
                    embedding.excluded_docs
                ));
            }
            io::write_matrix(&out.join(DOC_VECTORS_FILE), &embedding.doc_vectors)?;
            m.record_artifact(DOC_VECTORS_FILE);
            io::write_matrix(&out.join(WORD_VECTORS_FILE), &embedding.word_vectors)?;
            m.record_artifact(WORD_VECTORS_FILE);
            io::write_json(&out.join(SGNS_LOSS_FILE), &embedding.epoch_losses)?;
            m.record_artifact(SGNS_LOSS_FILE);
            Ok(embedding)
        })?;

        let topics = stage(&mut manifest, &out, det, "topics", |m| {
            let topics =
                semantic::discover_topics(&embedding, &config.reduce_params(), &config.density_params())?;
            m.warnings.extend(topics.warnings.iter().cloned());
            io::write_json(&out.join(TOPIC_MODEL_FILE), &topic_model_file(&topics, &corpus))?;
            m.record_artifact(TOPIC_MODEL_FILE);
            io::write_matrix(&out.join(TOPIC_CENTROIDS_FILE), &topics.topic_vectors)?;
            m.record_artifact(TOPIC_CENTROIDS_FILE);
            io::write_text(&out.join(TOPIC_HISTOGRAM_FILE), &export_topic_histogram(&topics, &corpus))?;
            m.record_artifact(TOPIC_HISTOGRAM_FILE);
            Ok(topics)
        })?;

        let bipartite = stage(&mut manifest, &out, det, "graph", |m| {
            let bipartite = graph::build_bipartite_graph(&topics, &corpus.doc_ids())?;
            io::write_text(&out.join(GRAPH_EDGES_FILE), &bipartite.edge_list_text())?;
            m.record_artifact(GRAPH_EDGES_FILE);
            io::write_json(&out.join(GRAPH_JSON_FILE), &graph::graph_export(&bipartite))?;
            m.record_artifact(GRAPH_JSON_FILE);
            Ok(bipartite)
        })?;

        let n2v = config.node2vec_params();
        let t_n2v = Instant::now();
        let node_embedding = stage(&mut manifest, &out, det, "node2vec", |m| {
            let walks = graph::generate_walks(&bipartite, &n2v)?;
            let node_embedding = graph::train_node_embeddings(&bipartite, &walks, &n2v)?;
            io::write_matrix(&out.join(NODE_VECTORS_FILE), &node_embedding.vectors)?;
            m.record_artifact(NODE_VECTORS_FILE);
            let names: Vec<String> = (0..bipartite.n_nodes())
                .map(|i| bipartite.node_name(bipartite.node_at(i)))
                .collect();
            io::write_json(&out.join(NODE_INDEX_FILE), &names)?;
            m.record_artifact(NODE_INDEX_FILE);
            Ok(node_embedding)
        })?;
        let node2vec_seconds = if det { 0.0 } else { t_n2v.elapsed().as_secs_f64() };

        let combined = stage(&mut manifest, &out, det, "combine", |m| {
            let combined = graph::combine_embeddings(&embedding, &node_embedding, config.mode)?;
            io::write_matrix(&out.join(COMBINED_VECTORS_FILE), &combined.doc_vectors)?;
            m.record_artifact(COMBINED_VECTORS_FILE);
            Ok(combined)
        })?;

        HybridStages {
            corpus,
            tfidf,
            embedding,
            topics,
            graph: bipartite,
            node_embedding,
            combined,
            node2vec_seconds,
        }
    };

    let k = config.effective_k(stages.topics.num_topics);
    let cluster_result = stage(&mut manifest, &out, det, "kmeans", |m| {
        let result = clustering::kmeans_fit(&stages.combined.doc_vectors.view(), &config.cluster_params(k))?;
        io::write_text(&out.join(LABELS_FILE), &labels_csv(&stages.corpus.doc_ids(), &result.labels))?;
        m.record_artifact(LABELS_FILE);
        io::write_matrix(&out.join(CENTROIDS_FILE), &result.centroids)?;
        m.record_artifact(CENTROIDS_FILE);
        Ok(result)
    })?;

    stage(&mut manifest, &out, det, "umap", |m| {
        let mut losses = Vec::new();
        for (target_dim, file) in [(2usize, PROJECTION_2D_FILE), (3usize, PROJECTION_3D_FILE)] {
            let run = manifold::umap_project(
                &stages.combined.doc_vectors.view(),
                &config.umap_params(target_dim),
            )?;
            io::write_text(
                &out.join(file),
                &manifold::projection_to_csv(&run.projection, &stages.corpus.doc_ids()),
            )?;
            m.record_artifact(file);
            losses.push(serde_json::json!({
                "target_dim": target_dim,
                "loss_initial": run.loss_initial,
                "loss_final": run.loss_final,
            }));
        }
        io::write_json(&out.join(UMAP_LOSS_FILE), &losses)?;
        m.record_artifact(UMAP_LOSS_FILE);
        Ok(())
    })?;

    stage(&mut manifest, &out, det, "metrics", |m| {
        let mut report = MetricReport::new("hybrid", k);
        let mut warnings = Vec::new();
        fill_internal_metrics(&stages.combined.doc_vectors, &cluster_result, &mut report, &mut warnings);
        match evaluation::avg_max_cosine(
            &stages.combined.doc_vectors,
            &cluster_result.centroids,
            &cluster_result.labels,
        ) {
            Ok(v) => report.avg_max_cosine = Some(v),
            Err(e) => warnings.push(format!("hybrid: avg_max_cosine skipped: {e}")),
        }
        let gold = evaluation::encode_labels(&stages.corpus.gold_labels());
        fill_external_metrics(gold.as_deref(), &cluster_result.labels, &mut report);
        if gold.is_none() {
            warnings.push("gold labels absent; external metrics skipped".to_string());
        }
        m.warnings.extend(warnings);
        m.metrics.push(report);
        io::write_json(&out.join(METRICS_FILE), &m.metrics)?;
        m.record_artifact(METRICS_FILE);
        Ok(())
    })?;

    io::write_json(&out.join(MANIFEST_FILE), &manifest)?;
    Ok(manifest)
}

/// One row of the k sweep: hybrid | lda | nmf evaluated at each k.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SweepKReport {
    pub k_values: Vec<usize>,
    pub rows: Vec<MetricReport>,
    pub best: Vec<BestK>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BestK {
    pub model_tag: String,
    pub metric: String,
    pub k: usize,
    pub value: f64,
}

/// Whether larger is better for a metric in best-k selection.
fn metric_higher_is_better(name: &str) -> Option<bool> {
    match name {
        "silhouette" | "chs" | "nmi" | "ari" | "bic" | "avg_max_cosine" | "avg_max_prob" => Some(true),
        "dbi" | "cluster_entropy" => Some(false),
        _ => None,
    }
}

fn best_k_rows(rows: &[MetricReport]) -> Vec<BestK> {
    let mut best = Vec::new();
    let mut models: Vec<String> = rows.iter().map(|r| r.model_tag.clone()).collect();
    models.sort();
    models.dedup();
    for model in &models {
        for &metric in MetricReport::metric_names() {
            let Some(higher) = metric_higher_is_better(metric) else {
                continue;
            };
            let mut current: Option<(usize, f64)> = None;
            for row in rows.iter().filter(|r| &r.model_tag == model) {
                if let Some(v) = row.metric_value(metric) {
                    if v.is_finite() {
                        let better = match current {
                            None => true,
                            Some((_, cv)) => {
                                if higher {
                                    v > cv
                                } else {
                                    v < cv
                                }
                            }
                        };
                        if better {
                            current = Some((row.k, v));
                        }
                    }
                }
            }
            if let Some((k, value)) = current {
                best.push(BestK {
                    model_tag: model.clone(),
                    metric: metric.to_string(),
                    k,
                    value,
                });
            }
        }
    }
    best
}

/// Row-normalizes a non-negative matrix; zero rows stay zero.
fn row_normalized(m: &Array2<f64>) -> Array2<f64> {
    let mut out = m.clone();
    for mut row in out.rows_mut() {
        let s: f64 = row.sum();
        if s > 0.0 {
            row.mapv_inplace(|v| v / s);
        }
    }
    out
}

fn evaluate_partition(
    model_tag: &str,
    k: usize,
    x: &Array2<f64>,
    result: &ClusterResult,
    gold: Option<&[usize]>,
    warnings: &mut Vec<String>,
) -> MetricReport {
    let mut report = MetricReport::new(model_tag, k);
    fill_internal_metrics(x, result, &mut report, warnings);
    fill_external_metrics(gold, &result.labels, &mut report);
    report
}

/// Sweeps KMeans k for the hybrid embedding and model rank k for LDA/NMF.
/// Hybrid embeddings are computed once and reused across sweep points.
pub fn sweep_k(config: &PipelineConfig, k_values: &[usize]) -> Result<SweepKReport> {
    if k_values.is_empty() {
        return Err(Error::validation("k sweep needs at least one k"));
    }
    let corpus = load_corpus(&config.corpus)?;
    let stages = build_hybrid_stages(config, corpus)?;
    let gold = evaluation::encode_labels(&stages.corpus.gold_labels());
    let tfidf_dense = stages.tfidf.to_dense();
    let mut rows = Vec::new();
    let mut warnings = Vec::new();
    for &k in k_values {
        if k > stages.corpus.len() {
            warnings.push(format!("k={k} exceeds corpus size; skipped"));
            continue;
        }
        // Hybrid arm: k varies only at the KMeans stage.
        let result = clustering::kmeans_fit(&stages.combined.doc_vectors.view(), &config.cluster_params(k))?;
        let mut report = evaluate_partition(
            "hybrid",
            k,
            &stages.combined.doc_vectors,
            &result,
            gold.as_deref(),
            &mut warnings,
        );
        report.avg_max_cosine = evaluation::avg_max_cosine(
            &stages.combined.doc_vectors,
            &result.centroids,
            &result.labels,
        )
        .ok();
        rows.push(report);

        // LDA arm: k is the model rank; features are doc-topic proportions.
        let lda = baselines::lda_fit_gibbs(&stages.corpus, &config.lda_params(k))?;
        let (labels, _) = baselines::baseline_assignments(&lda.doc_topic);
        let result = clustering::cluster_result_from_labels(&lda.doc_topic, &labels, k)?;
        let mut report =
            evaluate_partition("lda", k, &lda.doc_topic, &result, gold.as_deref(), &mut warnings);
        report.avg_max_prob = evaluation::avg_max_prob(&lda.doc_topic).ok();
        rows.push(report);

        // NMF arm: row-normalized W is the feature space.
        let nmf = baselines::nmf_fit(&tfidf_dense, &config.nmf_params(k))?;
        let w_norm = row_normalized(&nmf.w);
        let (labels, zero_rows) = baselines::baseline_assignments(&nmf.w);
        if !zero_rows.is_empty() {
            warnings.push(format!("nmf k={k}: {} zero doc rows", zero_rows.len()));
        }
        let result = clustering::cluster_result_from_labels(&w_norm, &labels, k)?;
        let mut report = evaluate_partition("nmf", k, &w_norm, &result, gold.as_deref(), &mut warnings);
        report.avg_max_prob = evaluation::avg_max_prob(&row_normalized(&nmf.w)).ok();
        rows.push(report);
    }
    let best = best_k_rows(&rows);
    Ok(SweepKReport {
        k_values: k_values.to_vec(),
        rows,
        best,
    })
}

/// Sweep CSV with the header naming metrics identically to MetricReport
/// fields; absent values are empty cells.
pub fn sweep_rows_csv(rows: &[MetricReport]) -> String {
    let mut out = String::from("model_tag,k");
    for name in MetricReport::metric_names() {
        out.push(',');
        out.push_str(name);
    }
    out.push('\n');
    for row in rows {
        out.push_str(&format!("{},{}", row.model_tag, row.k));
        for name in MetricReport::metric_names() {
            out.push(',');
            if let Some(v) = row.metric_value(name) {
                out.push_str(&format!("{v}"));
            }
        }
        out.push('\n');
    }
    out
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FractionCurve {
    pub fraction: f64,
    pub k_values: Vec<usize>,
    pub silhouette: Vec<f64>,
    pub dbi: Vec<f64>,
    pub num_topics: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SweepFractionReport {
    pub curves: Vec<FractionCurve>,
    /// Smallest listed fraction whose silhouette curve stays within epsilon
    /// of the full-data curve at every k.
    pub saturation_fraction: Option<f64>,
    pub epsilon: f64,
    pub max_abs_deviation: Vec<(f64, f64)>,
}

pub const SATURATION_EPSILON: f64 = 0.02;

fn fraction_curve(config: &PipelineConfig, corpus: Corpus, fraction: f64, k_values: &[usize]) -> Result<FractionCurve> {
    let stages = build_hybrid_stages(config, corpus)?;
    let mut silhouette = Vec::new();
    let mut dbi = Vec::new();
    let mut ks = Vec::new();
    for &k in k_values {
        if k >= stages.corpus.len() {
            continue;
        }
        let result = clustering::kmeans_fit(&stages.combined.doc_vectors.view(), &config.cluster_params(k))?;
        let sil = evaluation::silhouette(&stages.combined.doc_vectors, &result.labels)?;
        let db = evaluation::davies_bouldin(&stages.combined.doc_vectors, &result.labels)?;
        ks.push(k);
        silhouette.push(sil);
        dbi.push(db);
    }
    Ok(FractionCurve {
        fraction,
        k_values: ks,
        silhouette,
        dbi,
        num_topics: stages.topics.num_topics,
    })
}

/// Silhouette/DBI-vs-k curves per data fraction, with the representational
/// saturation point: the smallest fraction whose silhouette curve stays
/// within 0.02 of the full-data curve.
pub fn sweep_data_fraction(config: &PipelineConfig, fractions: &[f64]) -> Result<SweepFractionReport> {
    if fractions.is_empty() {
        return Err(Error::validation("fraction sweep needs at least one fraction"));
    }
    for &f in fractions {
        if !(f > 0.0 && f <= 1.0) {
            return Err(Error::validation(format!("fraction {f} outside (0,1]")));
        }
    }
    let corpus = load_corpus(&config.corpus)?;
    if corpus.documents.iter().any(|d| d.gold_label.is_none()) {
        return Err(Error::validation(
            "fraction sweep requires gold labels for stratification",
        ));
    }
    let k_values = config.sweep.k_values();
    // Reference curve is always the full corpus.
    let reference = fraction_curve(config, corpus.clone(), 1.0, &k_values)?;
    let mut fractions_sorted: Vec<f64> = fractions.to_vec();
    fractions_sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    fractions_sorted.dedup();
    let mut curves = Vec::new();
    let mut deviations = Vec::new();
    let mut saturation: Option<f64> = None;
    for &f in &fractions_sorted {
        let curve = if (f - 1.0).abs() < f64::EPSILON {
            reference.clone()
        } else {
            let sample = corpus.stratified_sample(f, config.sample_seed())?;
            let mut c = fraction_curve(config, sample, f, &k_values)?;
            c.fraction = f;
            c
        };
        let max_dev = curve
            .silhouette
            .iter()
            .zip(reference.silhouette.iter())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0f64, f64::max);
        deviations.push((f, max_dev));
        if saturation.is_none() && max_dev <= SATURATION_EPSILON && curve.k_values == reference.k_values
        {
            saturation = Some(f);
        }
        curves.push(curve);
    }
    Ok(SweepFractionReport {
        curves,
        saturation_fraction: saturation,
        epsilon: SATURATION_EPSILON,
        max_abs_deviation: deviations,
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Node2VecSweepRow {
    pub parameter: String,
    pub value: usize,
    pub chs: Option<f64>,
    pub nmi: Option<f64>,
    pub runtime_seconds: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SweepNode2VecReport {
    pub rows: Vec<Node2VecSweepRow>,
}

#[derive(Debug, Clone)]
pub struct Node2VecGrid {
    pub dims: Vec<usize>,
    pub walk_lengths: Vec<usize>,
    pub num_walks: Vec<usize>,
}

impl Node2VecGrid {
    pub fn from_config(config: &PipelineConfig) -> Self {
        Node2VecGrid {
            dims: config.sweep.node2vec_dims.clone(),
            walk_lengths: config.sweep.node2vec_walk_lengths.clone(),
            num_walks: config.sweep.node2vec_num_walks.clone(),
        }
    }
}

/// One-at-a-time sensitivity rows around the configured node2vec settings:
/// each row rebuilds only the node2vec stage, then clusters and reports CHS,
/// NMI and the stage's wall-clock runtime.
pub fn sweep_node2vec(config: &PipelineConfig, grid: &Node2VecGrid) -> Result<SweepNode2VecReport> {
    let corpus = load_corpus(&config.corpus)?;
    let tfidf = corpus::tfidf_vectorize(&corpus)?;
    let _ = tfidf;
    let embedding = semantic::train_joint_embedding(&corpus, &config.sgns_params())?;
    let topics = semantic::discover_topics(&embedding, &config.reduce_params(), &config.density_params())?;
    let bipartite = graph::build_bipartite_graph(&topics, &corpus.doc_ids())?;
    let gold = evaluation::encode_labels(&corpus.gold_labels());
    let k = config.effective_k(topics.num_topics);
    let base = config.node2vec_params();
    let mut rows = Vec::new();
    let run_point = |parameter: &str, value: usize| -> Result<Node2VecSweepRow> {
        let mut params = base.clone();
        match parameter {
            "dimensionality" => params.dim = value,
            "walk_length" => params.walk_length = value,
            "num_walks" => params.num_walks = value,
            other => return Err(Error::validation(format!("unknown sweep parameter {other}"))),
        }
        let t0 = Instant::now();
        let walks = graph::generate_walks(&bipartite, &params)?;
        let node_embedding = graph::train_node_embeddings(&bipartite, &walks, &params)?;
        let runtime_seconds = if config.deterministic {
            0.0
        } else {
            t0.elapsed().as_secs_f64()
        };
        let combined = graph::combine_embeddings(&embedding, &node_embedding, config.mode)?;
        let result = clustering::kmeans_fit(&combined.doc_vectors.view(), &config.cluster_params(k))?;
        let chs = evaluation::calinski_harabasz(&combined.doc_vectors, &result.labels).ok();
        let nmi = gold
            .as_deref()
            .and_then(|g| evaluation::nmi(g, &result.labels).ok());
        Ok(Node2VecSweepRow {
            parameter: parameter.to_string(),
            value,
            chs,
            nmi,
            runtime_seconds,
        })
    };
    for &dim in &grid.dims {
        rows.push(run_point("dimensionality", dim)?);
    }
    for &wl in &grid.walk_lengths {
        rows.push(run_point("walk_length", wl)?);
    }
    for &nw in &grid.num_walks {
        rows.push(run_point("num_walks", nw)?);
    }
    Ok(SweepNode2VecReport { rows })
}

pub fn node2vec_sweep_csv(report: &SweepNode2VecReport) -> String {
    let mut out = String::from("parameter,value,chs,nmi,runtime_seconds\n");
    for row in &report.rows {
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            row.parameter,
            row.value,
            row.chs.map_or(String::new(), |v| format!("{v}")),
            row.nmi.map_or(String::new(), |v| format!("{v}")),
            row.runtime_seconds
        ));
    }
    out
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AblationArm {
    pub metrics: MetricReport,
    pub corpus_hash: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AblationReport {
    pub arms: Vec<AblationArm>,
    pub k: usize,
    pub warnings: Vec<String>,
}

/// Three arms on identical data and seeds: TF-IDF + KMeans, semantic-only
/// (joint embedding + KMeans), and the full hybrid.
pub fn run_ablation(config: &PipelineConfig) -> Result<AblationReport> {
    let corpus = load_corpus(&config.corpus)?;
    let corpus_hash = corpus.content_hash();
    let stages = build_hybrid_stages(config, corpus)?;
    let gold = evaluation::encode_labels(&stages.corpus.gold_labels());
    let k = config.effective_k(stages.topics.num_topics);
    let mut warnings = Vec::new();
    let mut arms = Vec::new();
    let spaces: [(&str, Array2<f64>); 3] = [
        ("tfidf_kmeans", stages.tfidf.to_dense()),
        ("semantic_only", stages.embedding.doc_vectors.clone()),
        ("hybrid", stages.combined.doc_vectors.clone()),
    ];
    for (tag, x) in spaces {
        let result = clustering::kmeans_fit(&x.view(), &config.cluster_params(k))?;
        let mut report = evaluate_partition(tag, k, &x, &result, gold.as_deref(), &mut warnings);
        report.avg_max_cosine = evaluation::avg_max_cosine(&x, &result.centroids, &result.labels).ok();
        arms.push(AblationArm {
            metrics: report,
            corpus_hash: corpus_hash.clone(),
        });
    }
    Ok(AblationReport { arms, k, warnings })
}

pub fn ablation_csv(report: &AblationReport) -> String {
    let rows: Vec<MetricReport> = report.arms.iter().map(|a| a.metrics.clone()).collect();
    sweep_rows_csv(&rows)
}

/// Renders metric reports as an aligned text table (and CSV via
/// [`sweep_rows_csv`]), one row per model tag.
pub fn render_comparison(reports: &[MetricReport]) -> String {
    let mut out = String::new();
    let headers: Vec<&str> = std::iter::once("model")
        .chain(std::iter::once("k"))
        .chain(MetricReport::metric_names().iter().copied())
        .collect();
    let mut rows: Vec<Vec<String>> = vec![headers.iter().map(|s| s.to_string()).collect()];
    for r in reports {
        let mut row = vec![r.model_tag.clone(), r.k.to_string()];
        for name in MetricReport::metric_names() {
            row.push(match r.metric_value(name) {
                Some(v) => format!("{v:.4}"),
                None => "--".to_string(),
            });
        }
        rows.push(row);
    }
    let widths: Vec<usize> = (0..rows[0].len())
        .map(|c| rows.iter().map(|r| r[c].len()).max().unwrap_or(0))
        .collect();
    for row in &rows {
        let line: Vec<String> = row
            .iter()
            .enumerate()
            .map(|(c, cell)| format!("{cell:>width$}", width = widths[c]))
            .collect();
        out.push_str(&line.join("  "));
        out.push('\n');
    }
    out
}
