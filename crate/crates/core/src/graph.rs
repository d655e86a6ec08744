//! Scene graphs built from (subject, predicate, object) triplets and their
//! single-layer GCN encoding.
//!
//! A frame's graph is encoded as `mean_rows(tanh(Â · X · W))`, where `Â` is
//! the renormalized adjacency `D̃^{-1/2} (A + I) D̃^{-1/2}` of the
//! symmetrized edge set, `X` holds learned label embeddings and `W` is the
//! layer weight. The empty graph encodes to zeros.

use alloc::collections::BTreeMap;
use alloc::collections::BTreeSet;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::linalg::{gemm, matmul, Matrix, Op};

/// Default width of the label embeddings fed to the GCN.
pub const DEFAULT_INPUT_DIM: usize = 64;
/// Default width of the graph encoding.
pub const DEFAULT_ENCODING_DIM: usize = 128;
/// Half-width of the uniform init range of the embedding table.
pub const EMBEDDING_INIT_LIMIT: f64 = 0.1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Triplet {
    pub subject: String,
    pub predicate: String,
    pub object: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub score: Option<f64>,
}

impl Triplet {
    pub fn new(subject: &str, predicate: &str, object: &str) -> Self {
        Self { subject: subject.into(), predicate: predicate.into(), object: object.into(), score: None }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum GraphError {
    EmptyGraph,
    EdgeOutOfRange { src: usize, dst: usize, nodes: usize },
}

impl fmt::Display for GraphError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            GraphError::EmptyGraph => f.write_str("scene graph has no nodes"),
            GraphError::EdgeOutOfRange { src, dst, nodes } => {
                write!(f, "edge ({src}, {dst}) out of range for {nodes} nodes")
            }
        }
    }
}

#[cfg(feature = "std")]
impl std::error::Error for GraphError {}

/// Object labels (one node per distinct label) and directed subject→object edges.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SceneGraph {
    node_labels: Vec<String>,
    edges: Vec<(usize, usize)>,
}

impl SceneGraph {
    /// Builds a graph from explicit nodes and edges. Duplicate edges are dropped.
    pub fn new(node_labels: Vec<String>, edges: Vec<(usize, usize)>) -> Result<Self, GraphError> {
        let nodes = node_labels.len();
        let mut seen = BTreeSet::new();
        let mut unique = Vec::with_capacity(edges.len());
        for (src, dst) in edges {
            if src >= nodes || dst >= nodes {
                return Err(GraphError::EdgeOutOfRange { src, dst, nodes });
            }
            if seen.insert((src, dst)) {
                unique.push((src, dst));
            }
        }
        Ok(Self { node_labels, edges: unique })
    }

    /// Nodes are distinct trimmed labels in order of first appearance;
    /// each triplet contributes a subject→object edge and its predicate is
    /// discarded. Triplets with a blank subject or object are skipped.
    pub fn from_triplets(triplets: &[Triplet]) -> Self {
        Self::from_triplets_min_score(triplets, None)
    }

    /// Like [`SceneGraph::from_triplets`], dropping triplets whose score is
    /// below `min_score`. Triplets without a score are always kept.
    pub fn from_triplets_min_score(triplets: &[Triplet], min_score: Option<f64>) -> Self {
        let mut index: BTreeMap<String, usize> = BTreeMap::new();
        let mut node_labels = Vec::new();
        let mut edges = Vec::new();
        let mut seen = BTreeSet::new();
        let mut node = |label: &str, node_labels: &mut Vec<String>| -> usize {
            *index.entry(label.into()).or_insert_with(|| {
                node_labels.push(label.into());
                node_labels.len() - 1
            })
        };
        for t in triplets {
            if let (Some(threshold), Some(score)) = (min_score, t.score) {
                if score < threshold {
                    continue;
                }
            }
            let (subject, object) = (t.subject.trim(), t.object.trim());
            if subject.is_empty() || object.is_empty() {
                continue;
            }
            let src = node(subject, &mut node_labels);
            let dst = node(object, &mut node_labels);
            if seen.insert((src, dst)) {
                edges.push((src, dst));
            }
        }
        Self { node_labels, edges }
    }

    pub fn node_labels(&self) -> &[String] {
        &self.node_labels
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn node_count(&self) -> usize {
        self.node_labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.node_labels.is_empty()
    }
}

/// `D̃^{-1/2} (A + I) D̃^{-1/2}` over the undirected version of the edge set.
///
/// Self-edges coincide with the added identity and are not counted twice.
pub fn normalized_adjacency(graph: &SceneGraph) -> Result<Matrix, GraphError> {
    let n = graph.node_count();
    if n == 0 {
        return Err(GraphError::EmptyGraph);
    }
    let mut a = Matrix::identity(n);
    for &(src, dst) in graph.edges() {
        a[(src, dst)] = 1.0;
        a[(dst, src)] = 1.0;
    }
    let degree: Vec<f64> = (0..n).map(|i| a.row(i).iter().sum::<f64>()).collect();
    for i in 0..n {
        for j in 0..n {
            if a[(i, j)] != 0.0 {
                a[(i, j)] /= libm::sqrt(degree[i] * degree[j]);
            }
        }
    }
    Ok(a)
}

/// Object-label vocabulary. Index 0 is reserved for unknown labels.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Vocabulary {
    labels: Vec<String>,
    index: BTreeMap<String, usize>,
}

impl Vocabulary {
    pub const UNK_INDEX: usize = 0;

    /// Collects the distinct trimmed labels, sorted, at indices `1..`.
    pub fn build<'a>(labels: impl IntoIterator<Item = &'a str>) -> Self {
        let distinct: BTreeSet<&str> =
            labels.into_iter().map(str::trim).filter(|l| !l.is_empty()).collect();
        Self::from_ordered(distinct.into_iter().map(String::from).collect())
            .expect("distinct labels")
    }

    /// Vocabulary of every node label of `graphs`.
    pub fn from_graphs<'a>(graphs: impl IntoIterator<Item = &'a SceneGraph>) -> Self {
        Self::build(graphs.into_iter().flat_map(|g| g.node_labels().iter().map(String::as_str)))
    }

    /// `labels[i]` gets index `i + 1`. Returns the first repeated label on error.
    pub fn from_ordered(labels: Vec<String>) -> Result<Self, String> {
        let mut index = BTreeMap::new();
        for (i, label) in labels.iter().enumerate() {
            if index.insert(label.clone(), i + 1).is_some() {
                return Err(label.clone());
            }
        }
        Ok(Self { labels, index })
    }

    /// Number of rows the embedding table needs, UNK included.
    pub fn len(&self) -> usize {
        self.labels.len() + 1
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn lookup(&self, label: &str) -> usize {
        self.index.get(label.trim()).copied().unwrap_or(Self::UNK_INDEX)
    }

    /// Known labels with their indices, in index order.
    pub fn entries(&self) -> impl Iterator<Item = (&str, usize)> {
        self.labels.iter().enumerate().map(|(i, l)| (l.as_str(), i + 1))
    }
}

/// Trainable state of the graph encoder.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GraphEncoderParams {
    /// `|vocab| × d_in`, one row per label index.
    pub embedding: Matrix,
    /// `d_in × d_g`.
    pub weight: Matrix,
}

impl GraphEncoderParams {
    pub fn init<R: Rng + ?Sized>(vocab_len: usize, input_dim: usize, encoding_dim: usize, rng: &mut R) -> Self {
        let embedding = Matrix::uniform(vocab_len, input_dim, EMBEDDING_INIT_LIMIT, rng);
        let weight = Matrix::uniform(input_dim, encoding_dim, 1.0 / libm::sqrt(input_dim as f64), rng);
        Self { embedding, weight }
    }

    pub fn zeros_like(&self) -> Self {
        Self {
            embedding: Matrix::zeros(self.embedding.rows(), self.embedding.cols()),
            weight: Matrix::zeros(self.weight.rows(), self.weight.cols()),
        }
    }

    pub fn input_dim(&self) -> usize {
        self.weight.rows()
    }

    pub fn encoding_dim(&self) -> usize {
        self.weight.cols()
    }
}

/// A scene graph with labels resolved against a vocabulary and its
/// normalized adjacency precomputed.
#[derive(Clone, Debug, PartialEq)]
pub struct IndexedGraph {
    node_ids: Vec<usize>,
    adjacency: Matrix,
}

/// Intermediate values of one forward pass, kept for the backward pass.
#[derive(Clone, Debug)]
pub struct GraphActivations {
    /// `Â · X`
    propagated: Matrix,
    /// `tanh(Â · X · W)`
    nodes: Matrix,
}

impl GraphActivations {
    pub fn node_embeddings(&self) -> &Matrix {
        &self.nodes
    }
}

impl IndexedGraph {
    pub fn new(graph: &SceneGraph, vocab: &Vocabulary) -> Self {
        let node_ids = graph.node_labels().iter().map(|l| vocab.lookup(l)).collect();
        let adjacency = normalized_adjacency(graph).unwrap_or_else(|_| Matrix::zeros(0, 0));
        Self { node_ids, adjacency }
    }

    pub fn node_count(&self) -> usize {
        self.node_ids.len()
    }

    pub fn node_ids(&self) -> &[usize] {
        &self.node_ids
    }

    pub fn adjacency(&self) -> &Matrix {
        &self.adjacency
    }

    fn features(&self, params: &GraphEncoderParams) -> Matrix {
        let d_in = params.input_dim();
        let mut x = Matrix::zeros(self.node_count(), d_in);
        for (row, &id) in self.node_ids.iter().enumerate() {
            x.row_mut(row).copy_from_slice(params.embedding.row(id));
        }
        x
    }

    /// Per-node outputs `tanh(Â X W)`.
    pub fn forward(&self, params: &GraphEncoderParams) -> Result<GraphActivations, GraphError> {
        if self.node_ids.is_empty() {
            return Err(GraphError::EmptyGraph);
        }
        let propagated = matmul(&self.adjacency, Op::N, &self.features(params), Op::N);
        let mut nodes = matmul(&propagated, Op::N, &params.weight, Op::N);
        nodes.map_in_place(libm::tanh);
        Ok(GraphActivations { propagated, nodes })
    }

    /// Mean-pooled graph encoding, zeros for an empty graph.
    pub fn encode(&self, params: &GraphEncoderParams) -> Vec<f64> {
        match self.forward(params) {
            Ok(act) => mean_rows(&act.nodes),
            Err(_) => vec![0.0; params.encoding_dim()],
        }
    }

    /// Encoding plus the activations needed by [`IndexedGraph::accumulate_backward`].
    pub fn encode_with_activations(&self, params: &GraphEncoderParams) -> (Vec<f64>, Option<GraphActivations>) {
        match self.forward(params) {
            Ok(act) => (mean_rows(&act.nodes), Some(act)),
            Err(_) => (vec![0.0; params.encoding_dim()], None),
        }
    }

    /// Adds `d(upstream · encode) / d params` into `grads`.
    pub fn accumulate_backward(
        &self,
        params: &GraphEncoderParams,
        activations: Option<&GraphActivations>,
        upstream: &[f64],
        grads: &mut GraphEncoderParams,
    ) {
        let Some(act) = activations else { return };
        let n = self.node_count();
        let d_g = params.encoding_dim();
        assert_eq!(upstream.len(), d_g, "upstream gradient width");
        let scale = 1.0 / n as f64;
        let mut d_pre = Matrix::zeros(n, d_g);
        for i in 0..n {
            let h = act.nodes.row(i);
            for (j, d) in d_pre.row_mut(i).iter_mut().enumerate() {
                *d = upstream[j] * scale * (1.0 - h[j] * h[j]);
            }
        }
        gemm(&act.propagated, Op::T, &d_pre, Op::N, 1.0, &mut grads.weight);
        let d_propagated = matmul(&d_pre, Op::N, &params.weight, Op::T);
        // Â is symmetric, so Âᵀ · dP = Â · dP.
        let d_features = matmul(&self.adjacency, Op::N, &d_propagated, Op::N);
        for (row, &id) in self.node_ids.iter().enumerate() {
            for (g, d) in grads.embedding.row_mut(id).iter_mut().zip(d_features.row(row)) {
                *g += d;
            }
        }
    }
}

fn mean_rows(m: &Matrix) -> Vec<f64> {
    let mut out = vec![0.0; m.cols()];
    for r in 0..m.rows() {
        for (o, v) in out.iter_mut().zip(m.row(r)) {
            *o += v;
        }
    }
    let n = m.rows() as f64;
    out.iter_mut().for_each(|v| *v /= n);
    out
}

/// Node-level GCN outputs, `N × d_g`.
pub fn gcn_forward(
    graph: &SceneGraph,
    vocab: &Vocabulary,
    params: &GraphEncoderParams,
) -> Result<Matrix, GraphError> {
    IndexedGraph::new(graph, vocab).forward(params).map(|a| a.nodes)
}

/// Graph-level encoding of length `d_g`.
pub fn graph_encode(graph: &SceneGraph, vocab: &Vocabulary, params: &GraphEncoderParams) -> Vec<f64> {
    IndexedGraph::new(graph, vocab).encode(params)
}

/// Gradients of `upstream · graph_encode(graph)` with respect to both
/// parameter tensors.
pub fn graph_encode_backward(
    graph: &SceneGraph,
    vocab: &Vocabulary,
    params: &GraphEncoderParams,
    upstream: &[f64],
) -> GraphEncoderParams {
    let indexed = IndexedGraph::new(graph, vocab);
    let mut grads = params.zeros_like();
    let (_, act) = indexed.encode_with_activations(params);
    indexed.accumulate_backward(params, act.as_ref(), upstream, &mut grads);
    grads
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;
    use alloc::string::ToString;

    fn labels(graph: &SceneGraph) -> Vec<&str> {
        graph.node_labels().iter().map(String::as_str).collect()
    }

    #[test]
    fn man_holding_phone() {
        let g = SceneGraph::from_triplets(&[Triplet::new("man", "holding", "phone")]);
        assert_eq!(labels(&g), ["man", "phone"]);
        assert_eq!(g.edges(), &[(0, 1)]);
    }

    #[test]
    fn empty_and_duplicate_triplets() {
        assert!(SceneGraph::from_triplets(&[]).is_empty());
        let t = Triplet::new("a", "r", "b");
        let g = SceneGraph::from_triplets(&[t.clone(), t]);
        assert_eq!(g.edges(), &[(0, 1)]);
        let g = SceneGraph::from_triplets(&[Triplet::new("a", "r", "b"), Triplet::new("a", "other", "b")]);
        assert_eq!(g.edges().len(), 1);
    }

    #[test]
    fn repeated_labels_share_a_node() {
        let g = SceneGraph::from_triplets(&[
            Triplet::new("man", "holding", "phone"),
            Triplet::new("phone", "near", "face"),
            Triplet::new(" man ", "has", "face"),
        ]);
        assert_eq!(labels(&g), ["man", "phone", "face"]);
        assert_eq!(g.edges(), &[(0, 1), (1, 2), (0, 2)]);
    }

    #[test]
    fn min_score_filter() {
        let mut low = Triplet::new("a", "r", "b");
        low.score = Some(0.2);
        let mut high = Triplet::new("c", "r", "d");
        high.score = Some(0.9);
        let unscored = Triplet::new("e", "r", "f");
        let g = SceneGraph::from_triplets_min_score(&[low.clone(), high.clone(), unscored.clone()], Some(0.5));
        assert_eq!(labels(&g), ["c", "d", "e", "f"]);
        assert_eq!(SceneGraph::from_triplets(&[low, high, unscored]).node_count(), 6);
    }

    #[test]
    fn adjacency_closed_forms() {
        let single = SceneGraph::new(vec!["a".to_string()], vec![]).unwrap();
        assert_eq!(normalized_adjacency(&single).unwrap().as_slice(), &[1.0]);
        let pair = SceneGraph::from_triplets(&[Triplet::new("a", "r", "b")]);
        assert_eq!(normalized_adjacency(&pair).unwrap().as_slice(), &[0.5; 4]);
        assert_eq!(normalized_adjacency(&SceneGraph::default()), Err(GraphError::EmptyGraph));
    }

    #[test]
    fn self_loop_is_the_identity() {
        let g = SceneGraph::new(vec!["a".to_string()], vec![(0, 0)]).unwrap();
        assert_eq!(normalized_adjacency(&g).unwrap().as_slice(), &[1.0]);
    }

    #[test]
    fn edge_validation() {
        assert!(SceneGraph::new(vec!["a".to_string()], vec![(0, 1)]).is_err());
    }

    #[test]
    fn identity_weight_single_node() {
        let vocab = Vocabulary::build(["x"]);
        let mut rng = seeded(1);
        let mut params = GraphEncoderParams::init(vocab.len(), 3, 3, &mut rng);
        params.weight = Matrix::identity(3);
        let g = SceneGraph::new(vec!["x".to_string()], vec![]).unwrap();
        let out = gcn_forward(&g, &vocab, &params).unwrap();
        let row = params.embedding.row(vocab.lookup("x"));
        for j in 0..3 {
            assert_eq!(out[(0, j)], libm::tanh(row[j]));
        }
        assert_eq!(graph_encode(&g, &vocab, &params), out.row(0));
    }

    #[test]
    fn zero_table_gives_zero_output() {
        let vocab = Vocabulary::build(["a", "b"]);
        let mut params = GraphEncoderParams::init(vocab.len(), 4, 5, &mut seeded(2));
        params.embedding.fill(0.0);
        let g = SceneGraph::from_triplets(&[Triplet::new("a", "r", "b")]);
        assert!(gcn_forward(&g, &vocab, &params).unwrap().as_slice().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn empty_graph_encodes_to_zeros() {
        let vocab = Vocabulary::build(["a"]);
        let params = GraphEncoderParams::init(vocab.len(), 4, 6, &mut seeded(2));
        assert_eq!(graph_encode(&SceneGraph::default(), &vocab, &params), vec![0.0; 6]);
        let grads = graph_encode_backward(&SceneGraph::default(), &vocab, &params, &[1.0; 6]);
        assert_eq!(grads, params.zeros_like());
    }

    #[test]
    fn zero_upstream_zero_gradient() {
        let vocab = Vocabulary::build(["a", "b"]);
        let params = GraphEncoderParams::init(vocab.len(), 4, 5, &mut seeded(9));
        let g = SceneGraph::from_triplets(&[Triplet::new("a", "r", "b")]);
        assert_eq!(graph_encode_backward(&g, &vocab, &params, &[0.0; 5]), params.zeros_like());
    }

    #[test]
    fn unknown_labels_share_the_unk_row() {
        let vocab = Vocabulary::build(["man", "phone"]);
        let params = GraphEncoderParams::init(vocab.len(), 8, 8, &mut seeded(4));
        let a = SceneGraph::from_triplets(&[Triplet::new("man", "holding", "kazoo")]);
        let b = SceneGraph::from_triplets(&[Triplet::new("man", "holding", "ocarina")]);
        assert_eq!(graph_encode(&a, &vocab, &params), graph_encode(&b, &vocab, &params));
        assert_eq!(vocab.lookup("kazoo"), Vocabulary::UNK_INDEX);
        assert_eq!(vocab.lookup("man"), 1);
    }
}
