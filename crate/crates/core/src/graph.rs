//! Bipartite document-topic graph, p/q-biased second-order random walks,
//! node embeddings via skip-gram, and semantic/structural fusion.

use std::collections::HashMap;

use ndarray::Array2;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sampling::{seeded_rng, AliasTable};
use crate::semantic::{JointEmbedding, TopicModel};
use crate::sgns::{self, PairSource, SgnsConfig};

/// Node handle: documents and topics index into their own id lists.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Node {
    Doc(usize),
    Topic(usize),
}

impl Node {
    pub fn is_doc(&self) -> bool {
        matches!(self, Node::Doc(_))
    }
}

/// Unweighted bipartite graph: every document has exactly one edge to its
/// assigned topic, every topic has at least one document.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BipartiteGraph {
    pub doc_ids: Vec<String>,
    /// Per-document topic index (into `topic_ids`).
    pub topic_of_doc: Vec<usize>,
    /// Observed topic ids, ascending.
    pub topic_ids: Vec<usize>,
    /// Per-topic member document indices, ascending.
    pub docs_of_topic: Vec<Vec<usize>>,
}

impl BipartiteGraph {
    pub fn n_docs(&self) -> usize {
        self.doc_ids.len()
    }

    pub fn n_topics(&self) -> usize {
        self.topic_ids.len()
    }

    pub fn n_nodes(&self) -> usize {
        self.n_docs() + self.n_topics()
    }

    pub fn n_edges(&self) -> usize {
        self.n_docs()
    }

    pub fn degree(&self, node: Node) -> usize {
        match node {
            Node::Doc(_) => 1,
            Node::Topic(t) => self.docs_of_topic[t].len(),
        }
    }

    pub fn neighbors(&self, node: Node) -> Vec<Node> {
        match node {
            Node::Doc(d) => vec![Node::Topic(self.topic_of_doc[d])],
            Node::Topic(t) => self.docs_of_topic[t].iter().map(|&d| Node::Doc(d)).collect(),
        }
    }

    pub fn adjacent(&self, a: Node, b: Node) -> bool {
        match (a, b) {
            (Node::Doc(d), Node::Topic(t)) | (Node::Topic(t), Node::Doc(d)) => {
                self.topic_of_doc[d] == t
            }
            _ => false,
        }
    }

    /// Namespaced node name for exports: "doc:<id>" or "topic:<topic id>".
    pub fn node_name(&self, node: Node) -> String {
        match node {
            Node::Doc(d) => format!("doc:{}", self.doc_ids[d]),
            Node::Topic(t) => format!("topic:{}", self.topic_ids[t]),
        }
    }

    /// Flat node index: documents first, then topics. Used as the SGNS
    /// vocabulary.
    pub fn node_index(&self, node: Node) -> usize {
        match node {
            Node::Doc(d) => d,
            Node::Topic(t) => self.n_docs() + t,
        }
    }

    pub fn node_at(&self, index: usize) -> Node {
        if index < self.n_docs() {
            Node::Doc(index)
        } else {
            Node::Topic(index - self.n_docs())
        }
    }

    /// Edge list in export form, one "doc:ID topic:ID" line per edge.
    pub fn edge_list_text(&self) -> String {
        let mut out = String::new();
        for d in 0..self.n_docs() {
            out.push_str(&format!(
                "{} {}\n",
                self.node_name(Node::Doc(d)),
                self.node_name(Node::Topic(self.topic_of_doc[d]))
            ));
        }
        out
    }
}

/// Builds the graph from topic assignments. Topic node ids are the observed
/// topic ids; document node order follows `doc_ids`.
pub fn build_bipartite_graph(topics: &TopicModel, doc_ids: &[String]) -> Result<BipartiteGraph> {
    if topics.assignments.len() != doc_ids.len() {
        return Err(Error::validation(format!(
            "assignments cover {} documents but {} ids given",
            topics.assignments.len(),
            doc_ids.len()
        )));
    }
    if let Some((i, _)) = topics
        .assignments
        .iter()
        .enumerate()
        .find(|(_, &t)| t >= topics.num_topics)
    {
        return Err(Error::validation(format!(
            "document '{}' has out-of-range topic assignment",
            doc_ids[i]
        )));
    }
    let mut observed: Vec<usize> = topics.assignments.to_vec();
    observed.sort_unstable();
    observed.dedup();
    let topic_pos: HashMap<usize, usize> = observed.iter().enumerate().map(|(i, &t)| (t, i)).collect();
    let mut topic_of_doc = Vec::with_capacity(doc_ids.len());
    let mut docs_of_topic = vec![Vec::new(); observed.len()];
    for (d, &t) in topics.assignments.iter().enumerate() {
        let pos = topic_pos[&t];
        topic_of_doc.push(pos);
        docs_of_topic[pos].push(d);
    }
    Ok(BipartiteGraph {
        doc_ids: doc_ids.to_vec(),
        topic_of_doc,
        topic_ids: observed,
        docs_of_topic,
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Node2VecParams {
    pub dim: usize,
    pub walk_length: usize,
    pub num_walks: usize,
    pub window: usize,
    /// Return parameter: weight 1/p for stepping back to the previous node.
    pub p: f64,
    /// In-out parameter: weight 1/q for nodes not adjacent to the previous
    /// node.
    pub q: f64,
    pub negatives: usize,
    pub epochs: usize,
    pub lr_initial: f64,
    pub seed: u64,
}

impl Default for Node2VecParams {
    fn default() -> Self {
        Node2VecParams {
            dim: 64,
            walk_length: 30,
            num_walks: 200,
            window: 10,
            p: 1.0,
            q: 1.0,
            negatives: 5,
            epochs: 3,
            lr_initial: 0.025,
            seed: 0,
        }
    }
}

impl Node2VecParams {
    pub fn validate(&self) -> Result<()> {
        if self.dim < 2
            || self.walk_length < 1
            || self.num_walks < 1
            || self.window < 1
            || self.negatives < 1
        {
            return Err(Error::validation("node2vec integer parameters must be positive"));
        }
        if !(self.p > 0.0) || !(self.q > 0.0) {
            return Err(Error::validation("p and q must be positive"));
        }
        if !(self.lr_initial > 0.0) {
            return Err(Error::validation("lr_initial must be positive"));
        }
        Ok(())
    }
}

/// Second-order transition distribution over the neighbors of `cur` given
/// the previous node: unnormalized weight 1/p to return to `prev`, 1 for
/// neighbors adjacent to `prev`, 1/q otherwise. With no previous node the
/// distribution is uniform.
pub fn transition_probs(
    graph: &BipartiteGraph,
    prev: Option<Node>,
    cur: Node,
    p: f64,
    q: f64,
) -> Result<Vec<(Node, f64)>> {
    let neighbors = graph.neighbors(cur);
    if neighbors.is_empty() {
        return Err(Error::validation("node has no neighbors"));
    }
    if let Some(prev) = prev {
        if !graph.adjacent(prev, cur) {
            return Err(Error::validation("prev is not adjacent to cur"));
        }
        let weights: Vec<f64> = neighbors
            .iter()
            .map(|&x| {
                if x == prev {
                    1.0 / p
                } else if graph.adjacent(x, prev) {
                    1.0
                } else {
                    1.0 / q
                }
            })
            .collect();
        let total: f64 = weights.iter().sum();
        Ok(neighbors
            .into_iter()
            .zip(weights)
            .map(|(n, w)| (n, w / total))
            .collect())
    } else {
        let w = 1.0 / neighbors.len() as f64;
        Ok(neighbors.into_iter().map(|n| (n, w)).collect())
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct WalkCorpus {
    /// Walks as flat node indices (documents first, then topics).
    pub walks: Vec<Vec<usize>>,
}

/// Precomputed alias tables for every (prev -> cur) step. On the bipartite
/// graph only topic-side transitions need tables: a document has a single
/// neighbor. Tables are built from [`transition_probs`], which stays the
/// normative definition.
struct TransitionTables {
    /// For topic t and the position of the previous document in t's member
    /// list: alias table over t's members.
    per_topic: Vec<Vec<AliasTable>>,
    /// First-step uniform tables per topic.
    first_step: Vec<AliasTable>,
}

impl TransitionTables {
    fn build(graph: &BipartiteGraph, p: f64, q: f64) -> Result<Self> {
        let mut per_topic = Vec::with_capacity(graph.n_topics());
        let mut first_step = Vec::with_capacity(graph.n_topics());
        for t in 0..graph.n_topics() {
            let members = &graph.docs_of_topic[t];
            let mut tables = Vec::with_capacity(members.len());
            for &prev_doc in members {
                let probs = transition_probs(graph, Some(Node::Doc(prev_doc)), Node::Topic(t), p, q)?;
                let weights: Vec<f64> = probs.iter().map(|&(_, w)| w).collect();
                tables.push(AliasTable::new(&weights)?);
            }
            per_topic.push(tables);
            let uniform = vec![1.0; members.len()];
            first_step.push(AliasTable::new(&uniform)?);
        }
        Ok(TransitionTables { per_topic, first_step })
    }
}

/// Simulates `num_walks` biased walks of `walk_length` nodes from every node
/// (documents and topics). Each (start, walk) pair owns an RNG stream derived
/// from the seed, so generation is deterministic and parallelizes by start
/// node.
pub fn generate_walks(graph: &BipartiteGraph, params: &Node2VecParams) -> Result<WalkCorpus> {
    params.validate()?;
    let tables = TransitionTables::build(graph, params.p, params.q)?;
    let starts: Vec<Node> = (0..graph.n_docs())
        .map(Node::Doc)
        .chain((0..graph.n_topics()).map(Node::Topic))
        .collect();
    let walks: Vec<Vec<usize>> = starts
        .par_iter()
        .flat_map_iter(|&start| {
            let start_index = graph.node_index(start);
            (0..params.num_walks).map(move |w| (start, start_index, w))
        })
        .map(|(start, start_index, w)| {
            let mut rng = seeded_rng(params.seed, &[0x3a1c, start_index as u64, w as u64]);
            let mut walk = Vec::with_capacity(params.walk_length);
            walk.push(graph.node_index(start));
            let mut prev: Option<Node> = None;
            let mut cur = start;
            while walk.len() < params.walk_length {
                let next = match cur {
                    // A document's only neighbor is its topic.
                    Node::Doc(d) => Node::Topic(graph.topic_of_doc[d]),
                    Node::Topic(t) => {
                        let members = &graph.docs_of_topic[t];
                        let idx = match prev {
                            None => tables.first_step[t].sample(&mut rng),
                            Some(Node::Doc(prev_doc)) => {
                                let pos = members
                                    .binary_search(&prev_doc)
                                    .expect("prev doc must be a member of the topic");
                                tables.per_topic[t][pos].sample(&mut rng)
                            }
                            Some(Node::Topic(_)) => unreachable!("topic adjacent to topic"),
                        };
                        Node::Doc(members[idx])
                    }
                };
                walk.push(graph.node_index(next));
                prev = Some(cur);
                cur = next;
            }
            walk
        })
        .collect();
    // par_iter + collect preserves start/walk order, so output is stable.
    Ok(WalkCorpus { walks })
}

#[derive(Debug, Clone)]
pub struct NodeEmbedding {
    /// One row per node, documents first then topics (flat node index).
    pub vectors: Array2<f64>,
    pub n_docs: usize,
    pub epoch_losses: Vec<f64>,
}

impl NodeEmbedding {
    pub fn doc_vectors(&self) -> Array2<f64> {
        self.vectors.slice(ndarray::s![..self.n_docs, ..]).to_owned()
    }

    pub fn topic_vectors(&self) -> Array2<f64> {
        self.vectors.slice(ndarray::s![self.n_docs.., ..]).to_owned()
    }
}

struct WalkPairs<'a> {
    walks: &'a [Vec<usize>],
    n_nodes: usize,
    window: usize,
}

impl PairSource for WalkPairs<'_> {
    fn n_centers(&self) -> usize {
        self.n_nodes
    }
    fn n_contexts(&self) -> usize {
        self.n_nodes
    }
    fn context_counts(&self) -> Vec<f64> {
        let mut counts = vec![0.0; self.n_nodes];
        for walk in self.walks {
            for &node in walk {
                counts[node] += 1.0;
            }
        }
        counts
    }
    fn total_pairs(&self) -> usize {
        let mut total = 0;
        for walk in self.walks {
            let len = walk.len();
            for i in 0..len {
                let lo = i.saturating_sub(self.window);
                let hi = (i + self.window).min(len.saturating_sub(1));
                total += hi - lo;
            }
        }
        total
    }
    fn for_each_pair(&self, visit: &mut dyn FnMut(usize, usize)) {
        for walk in self.walks {
            let len = walk.len();
            for i in 0..len {
                let lo = i.saturating_sub(self.window);
                let hi = (i + self.window).min(len.saturating_sub(1));
                for j in lo..=hi {
                    if j != i {
                        visit(walk[i], walk[j]);
                    }
                }
            }
        }
    }
}

/// Trains node embeddings by skip-gram over walk windows. Negatives are
/// drawn proportional to node frequency^0.75 in the walks.
pub fn train_node_embeddings(
    graph: &BipartiteGraph,
    walks: &WalkCorpus,
    params: &Node2VecParams,
) -> Result<NodeEmbedding> {
    params.validate()?;
    if walks.walks.is_empty() {
        return Err(Error::validation("walk corpus is empty"));
    }
    let n_nodes = graph.n_nodes();
    let mut seen = vec![false; n_nodes];
    for walk in &walks.walks {
        for &node in walk {
            if node >= n_nodes {
                return Err(Error::validation(format!("walk references unknown node {node}")));
            }
            seen[node] = true;
        }
    }
    if let Some(missing) = seen.iter().position(|&s| !s) {
        return Err(Error::validation(format!(
            "node {} absent from all walks",
            graph.node_name(graph.node_at(missing))
        )));
    }
    let source = WalkPairs {
        walks: &walks.walks,
        n_nodes,
        window: params.window,
    };
    let cfg = SgnsConfig {
        dim: params.dim,
        epochs: params.epochs,
        negatives: params.negatives,
        lr_initial: params.lr_initial,
        seed: params.seed,
    };
    let model = sgns::train(&source, &cfg);
    Ok(NodeEmbedding {
        vectors: model.input,
        n_docs: graph.n_docs(),
        epoch_losses: model.epoch_losses,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CombineMode {
    Concat,
    StructuralOnly,
}

impl std::str::FromStr for CombineMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "concat" => Ok(CombineMode::Concat),
            "structural_only" | "structural-only" => Ok(CombineMode::StructuralOnly),
            other => Err(Error::config(format!("unknown combine mode '{other}'"))),
        }
    }
}

#[derive(Debug, Clone)]
pub struct CombinedEmbedding {
    pub doc_vectors: Array2<f64>,
    pub mode: CombineMode,
}

fn l2_normalize_rows(m: &Array2<f64>) -> Array2<f64> {
    let mut out = m.clone();
    for mut row in out.rows_mut() {
        let norm = row.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm > 0.0 {
            row.mapv_inplace(|v| v / norm);
        }
    }
    out
}

/// Fuses semantic and structural document vectors. In concat mode each block
/// is L2-normalized per row before concatenation so neither view dominates
/// Euclidean distances; structural-only returns the node embedding's
/// document rows.
pub fn combine_embeddings(
    semantic: &JointEmbedding,
    structural: &NodeEmbedding,
    mode: CombineMode,
) -> Result<CombinedEmbedding> {
    let n = semantic.doc_vectors.nrows();
    if structural.n_docs != n {
        return Err(Error::validation(format!(
            "semantic covers {n} documents, structural covers {}",
            structural.n_docs
        )));
    }
    let doc_vectors = match mode {
        CombineMode::StructuralOnly => structural.doc_vectors(),
        CombineMode::Concat => {
            let sem = l2_normalize_rows(&semantic.doc_vectors);
            let str_block = l2_normalize_rows(&structural.doc_vectors());
            let mut fused = Array2::zeros((n, sem.ncols() + str_block.ncols()));
            for i in 0..n {
                for j in 0..sem.ncols() {
                    fused[[i, j]] = sem[[i, j]];
                }
                for j in 0..str_block.ncols() {
                    fused[[i, sem.ncols() + j]] = str_block[[i, j]];
                }
            }
            fused
        }
    };
    Ok(CombinedEmbedding { doc_vectors, mode })
}

/// Adjacency export with node metadata for the bipartite diagram.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GraphExport {
    pub nodes: Vec<GraphNodeMeta>,
    pub edges: Vec<(String, String)>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GraphNodeMeta {
    pub name: String,
    pub kind: String,
    pub degree: usize,
}

pub fn graph_export(graph: &BipartiteGraph) -> GraphExport {
    let mut nodes = Vec::with_capacity(graph.n_nodes());
    for d in 0..graph.n_docs() {
        nodes.push(GraphNodeMeta {
            name: graph.node_name(Node::Doc(d)),
            kind: "doc".to_string(),
            degree: 1,
        });
    }
    for t in 0..graph.n_topics() {
        nodes.push(GraphNodeMeta {
            name: graph.node_name(Node::Topic(t)),
            kind: "topic".to_string(),
            degree: graph.docs_of_topic[t].len(),
        });
    }
    let edges = (0..graph.n_docs())
        .map(|d| {
            (
                graph.node_name(Node::Doc(d)),
                graph.node_name(Node::Topic(graph.topic_of_doc[d])),
            )
        })
        .collect();
    GraphExport { nodes, edges }
}
