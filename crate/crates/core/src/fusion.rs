//! Late fusion of the image, graph and pose branches and the softmax MLP
//! classifier head.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;
use core::ops::Range;
use core::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::graph::{GraphEncoderParams, Vocabulary, DEFAULT_ENCODING_DIM, DEFAULT_INPUT_DIM};
use crate::linalg::{gemm, gemm_ref, Matrix, Op};
use crate::pose::{PoseFeatureVector, POSE_FEATURE_LEN};
use crate::rng;
use crate::taxonomy::{ActivityClass, NUM_CLASSES};
use crate::EMBEDDING_DIM;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Branch {
    Image,
    Graph,
    Pose,
}

impl Branch {
    pub fn name(self) -> &'static str {
        match self {
            Branch::Image => "image",
            Branch::Graph => "graph",
            Branch::Pose => "pose",
        }
    }
}

/// The three ablation rungs: vision only, plus scene graphs, plus pose.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum MethodVariant {
    M1,
    M2,
    M3,
}

impl MethodVariant {
    pub const ALL: [MethodVariant; 3] = [MethodVariant::M1, MethodVariant::M2, MethodVariant::M3];

    /// Active branches in concatenation order.
    pub fn branches(self) -> &'static [Branch] {
        match self {
            MethodVariant::M1 => &[Branch::Image],
            MethodVariant::M2 => &[Branch::Image, Branch::Graph],
            MethodVariant::M3 => &[Branch::Image, Branch::Graph, Branch::Pose],
        }
    }

    pub fn includes(self, branch: Branch) -> bool {
        self.branches().contains(&branch)
    }

    pub fn id(self) -> &'static str {
        match self {
            MethodVariant::M1 => "M1",
            MethodVariant::M2 => "M2",
            MethodVariant::M3 => "M3",
        }
    }

    pub fn description(self) -> &'static str {
        match self {
            MethodVariant::M1 => "Vision only",
            MethodVariant::M2 => "Vision + scene graphs",
            MethodVariant::M3 => "Vision + scene graphs + pose",
        }
    }
}

impl fmt::Display for MethodVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.id())
    }
}

impl FromStr for MethodVariant {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s.trim().to_ascii_uppercase().as_str() {
            "M1" | "1" => Ok(MethodVariant::M1),
            "M2" | "2" => Ok(MethodVariant::M2),
            "M3" | "3" => Ok(MethodVariant::M3),
            other => Err(format!("unknown method {other:?}, expected M1, M2 or M3")),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum FusionError {
    BranchMismatch { variant: MethodVariant, branch: Branch, provided: bool },
    DimensionMismatch { expected: usize, actual: usize },
}

impl fmt::Display for FusionError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FusionError::BranchMismatch { variant, branch, provided: true } => {
                write!(f, "{variant} does not use the {} branch, but it was provided", branch.name())
            }
            FusionError::BranchMismatch { variant, branch, provided: false } => {
                write!(f, "{variant} requires the {} branch, but it is missing", branch.name())
            }
            FusionError::DimensionMismatch { expected, actual } => {
                write!(f, "input width {actual} does not match classifier width {expected}")
            }
        }
    }
}

#[cfg(feature = "std")]
impl std::error::Error for FusionError {}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct BranchSlice {
    pub branch: Branch,
    pub offset: usize,
    pub len: usize,
}

/// Concatenated branch features `image ‖ graph ‖ pose` (inactive branches omitted).
#[derive(Clone, Debug, PartialEq)]
pub struct FusedRepresentation {
    pub vector: Vec<f64>,
    pub slices: Vec<BranchSlice>,
}

impl FusedRepresentation {
    pub fn range(&self, branch: Branch) -> Option<Range<usize>> {
        self.slices.iter().find(|s| s.branch == branch).map(|s| s.offset..s.offset + s.len)
    }

    pub fn len(&self) -> usize {
        self.vector.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vector.is_empty()
    }
}

/// Concatenates exactly the branches `variant` uses.
pub fn fuse(
    image: Option<&[f32]>,
    graph: Option<&[f64]>,
    pose: Option<&PoseFeatureVector>,
    variant: MethodVariant,
) -> Result<FusedRepresentation, FusionError> {
    let provided = [(Branch::Image, image.is_some()), (Branch::Graph, graph.is_some()), (Branch::Pose, pose.is_some())];
    for (branch, is_some) in provided {
        if is_some != variant.includes(branch) {
            return Err(FusionError::BranchMismatch { variant, branch, provided: is_some });
        }
    }
    let mut vector = Vec::new();
    let mut slices = Vec::new();
    let mut push = |branch, values: &mut dyn Iterator<Item = f64>| {
        let offset = vector.len();
        vector.extend(values);
        slices.push(BranchSlice { branch, offset, len: vector.len() - offset });
    };
    if let Some(image) = image {
        push(Branch::Image, &mut image.iter().map(|&v| v as f64));
    }
    if let Some(graph) = graph {
        push(Branch::Graph, &mut graph.iter().copied());
    }
    if let Some(pose) = pose {
        push(Branch::Pose, &mut pose.values.iter().copied());
    }
    Ok(FusedRepresentation { vector, slices })
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    #[default]
    Tanh,
    /// No nonlinearity: the head is a stack of linear layers.
    Identity,
}

impl Activation {
    fn apply(self, m: &mut Matrix) {
        if self == Activation::Tanh {
            m.map_in_place(libm::tanh);
        }
    }
}

impl FromStr for Activation {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "tanh" => Ok(Activation::Tanh),
            "identity" | "linear" => Ok(Activation::Identity),
            other => Err(format!("unknown activation {other:?}")),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MlpConfig {
    pub hidden: Vec<usize>,
    pub activation: Activation,
}

impl Default for MlpConfig {
    fn default() -> Self {
        Self { hidden: vec![512], activation: Activation::Tanh }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DenseLayer {
    /// `inputs × outputs`
    pub weight: Matrix,
    /// `1 × outputs`
    pub bias: Matrix,
}

/// Feed-forward head ending in an 18-unit layer.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassifierParams {
    pub layers: Vec<DenseLayer>,
    pub activation: Activation,
}

/// Layer inputs of a batched forward pass, kept for the backward pass.
pub struct MlpTrace {
    /// `inputs[l]` is the input of layer `l`; the last entry holds the logits.
    inputs: Vec<Matrix>,
}

impl MlpTrace {
    pub fn logits(&self) -> &Matrix {
        self.inputs.last().expect("trace holds logits")
    }
}

impl ClassifierParams {
    /// Uniform fan-in init in `±1/√fan_in`, zero biases.
    pub fn init<R: Rng + ?Sized>(input_dim: usize, config: &MlpConfig, rng: &mut R) -> Self {
        let mut widths = vec![input_dim];
        widths.extend(&config.hidden);
        widths.push(NUM_CLASSES);
        let layers = widths
            .windows(2)
            .map(|w| DenseLayer {
                weight: Matrix::uniform(w[0], w[1], 1.0 / libm::sqrt(w[0] as f64), rng),
                bias: Matrix::zeros(1, w[1]),
            })
            .collect();
        Self { layers, activation: config.activation }
    }

    pub fn zeros_like(&self) -> Self {
        let layers = self
            .layers
            .iter()
            .map(|l| DenseLayer {
                weight: Matrix::zeros(l.weight.rows(), l.weight.cols()),
                bias: Matrix::zeros(1, l.bias.cols()),
            })
            .collect();
        Self { layers, activation: self.activation }
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].weight.rows()
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().map_or(0, |l| l.weight.cols())
    }

    /// Batched forward pass over the rows of `x`.
    pub fn forward_batch(&self, x: Matrix) -> Result<MlpTrace, FusionError> {
        if x.cols() != self.input_dim() {
            return Err(FusionError::DimensionMismatch { expected: self.input_dim(), actual: x.cols() });
        }
        let batch = x.rows();
        let mut inputs = vec![x];
        for (l, layer) in self.layers.iter().enumerate() {
            let mut z = Matrix::zeros(batch, layer.weight.cols());
            for r in 0..batch {
                z.row_mut(r).copy_from_slice(layer.bias.row(0));
            }
            gemm(inputs.last().unwrap(), Op::N, &layer.weight, Op::N, 1.0, &mut z);
            if l + 1 < self.layers.len() {
                self.activation.apply(&mut z);
            }
            inputs.push(z);
        }
        Ok(MlpTrace { inputs })
    }

    /// Gradients of `Σ_rows d_logits · logits` with respect to every
    /// parameter, and with respect to input columns `input_columns`.
    pub fn backward_batch(
        &self,
        trace: &MlpTrace,
        d_logits: Matrix,
        input_columns: Range<usize>,
    ) -> (ClassifierParams, Matrix) {
        let mut grads = self.zeros_like();
        let d_input = self.backward_batch_into(trace, d_logits, input_columns, &mut grads);
        (grads, d_input)
    }

    /// [`backward_batch`](Self::backward_batch) writing into `grads`, whose
    /// previous contents are overwritten.
    pub fn backward_batch_into(
        &self,
        trace: &MlpTrace,
        d_logits: Matrix,
        input_columns: Range<usize>,
        grads: &mut ClassifierParams,
    ) -> Matrix {
        let mut delta = d_logits;
        for l in (0..self.layers.len()).rev() {
            let input = &trace.inputs[l];
            gemm(input, Op::T, &delta, Op::N, 0.0, &mut grads.layers[l].weight);
            let bias = grads.layers[l].bias.row_mut(0);
            bias.fill(0.0);
            for r in 0..delta.rows() {
                for (b, d) in bias.iter_mut().zip(delta.row(r)) {
                    *b += d;
                }
            }
            let weight = &self.layers[l].weight;
            let rows = if l == 0 { input_columns.clone() } else { 0..weight.rows() };
            let mut d_input = Matrix::zeros(delta.rows(), rows.len());
            gemm_ref(delta.view(), Op::N, weight.row_block(rows), Op::T, 0.0, &mut d_input);
            if l > 0 && self.activation == Activation::Tanh {
                // input of layer l is tanh(z) of layer l-1
                for (d, h) in d_input.as_mut_slice().iter_mut().zip(input.as_slice()) {
                    *d *= 1.0 - h * h;
                }
            }
            delta = d_input;
        }
        delta
    }

    /// `self += alpha * other`
    pub fn add_scaled(&mut self, alpha: f64, other: &ClassifierParams) {
        for (a, b) in self.layers.iter_mut().zip(&other.layers) {
            a.weight.add_scaled(alpha, &b.weight);
            a.bias.add_scaled(alpha, &b.bias);
        }
    }
}

/// Output distribution over the 18 classes, indexed by model row.
#[derive(Clone, Debug, PartialEq)]
pub struct ProbabilityVector(Vec<f64>);

impl ProbabilityVector {
    /// Max-subtracted softmax.
    pub fn from_logits(logits: &[f64]) -> Self {
        let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut p: Vec<f64> = logits.iter().map(|&z| libm::exp(z - max)).collect();
        let sum: f64 = p.iter().sum();
        p.iter_mut().for_each(|v| *v /= sum);
        Self(p)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn of(&self, class: ActivityClass) -> f64 {
        self.0[class.model_index()]
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Prediction {
    pub class_index: ActivityClass,
    pub probabilities: ProbabilityVector,
}

/// Argmax with ties going to the lowest class index.
pub fn predict(p: &ProbabilityVector) -> Prediction {
    Prediction { class_index: argmax_class(p.as_slice()), probabilities: p.clone() }
}

pub(crate) fn argmax_class(scores: &[f64]) -> ActivityClass {
    let mut best = 0;
    for (i, &v) in scores.iter().enumerate() {
        if v > scores[best] {
            best = i;
        }
    }
    ActivityClass::from_model_index(best).expect("18 scores")
}

pub fn log_sum_exp(logits: &[f64]) -> f64 {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    max + libm::log(logits.iter().map(|&z| libm::exp(z - max)).sum::<f64>())
}

/// `-ln p_true`, via log-sum-exp.
pub fn cross_entropy_from_logits(logits: &[f64], true_class: ActivityClass) -> f64 {
    (log_sum_exp(logits) - logits[true_class.model_index()]).max(0.0)
}

/// `-ln p_true` for an already-normalized distribution.
pub fn cross_entropy(p: &ProbabilityVector, true_class: ActivityClass) -> f64 {
    -libm::log(p.of(true_class))
}

/// Softmax of the head's logits for one fused input.
pub fn forward(x: &FusedRepresentation, params: &ClassifierParams) -> Result<ProbabilityVector, FusionError> {
    let logits = logits(x, params)?;
    Ok(ProbabilityVector::from_logits(&logits))
}

pub fn logits(x: &FusedRepresentation, params: &ClassifierParams) -> Result<Vec<f64>, FusionError> {
    let trace = params.forward_batch(Matrix::from_vec(1, x.len(), x.vector.clone()))?;
    Ok(trace.logits().row(0).to_vec())
}

/// Gradients of the cross-entropy of one sample.
#[derive(Clone, Debug)]
pub struct ClassifierGradients {
    pub params: ClassifierParams,
    /// Gradient with respect to the whole fused input.
    pub input: Vec<f64>,
    /// `p - onehot(true_class)`
    pub logits: Vec<f64>,
    pub loss: f64,
}

impl ClassifierGradients {
    /// The part of the input gradient that flows back into `branch`.
    pub fn branch<'a>(&'a self, x: &FusedRepresentation, branch: Branch) -> Option<&'a [f64]> {
        x.range(branch).map(|r| &self.input[r])
    }
}

/// Cross-entropy and its exact gradients for one sample.
pub fn backward(
    x: &FusedRepresentation,
    params: &ClassifierParams,
    true_class: ActivityClass,
) -> Result<ClassifierGradients, FusionError> {
    let trace = params.forward_batch(Matrix::from_vec(1, x.len(), x.vector.clone()))?;
    let logits = trace.logits().row(0).to_vec();
    let loss = cross_entropy_from_logits(&logits, true_class);
    let mut d_logits = ProbabilityVector::from_logits(&logits).0;
    d_logits[true_class.model_index()] -= 1.0;
    let (grads, d_input) =
        params.backward_batch(&trace, Matrix::from_vec(1, NUM_CLASSES, d_logits.clone()), 0..x.len());
    Ok(ClassifierGradients { params: grads, input: d_input.into_vec(), logits: d_logits, loss })
}

/// Widths of the model and its branches.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub image_dim: usize,
    pub graph_input_dim: usize,
    pub graph_encoding_dim: usize,
    pub mlp: MlpConfig,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            image_dim: EMBEDDING_DIM,
            graph_input_dim: DEFAULT_INPUT_DIM,
            graph_encoding_dim: DEFAULT_ENCODING_DIM,
            mlp: MlpConfig::default(),
        }
    }
}

impl ModelConfig {
    pub fn fused_dim(&self, variant: MethodVariant) -> usize {
        variant
            .branches()
            .iter()
            .map(|b| match b {
                Branch::Image => self.image_dim,
                Branch::Graph => self.graph_encoding_dim,
                Branch::Pose => POSE_FEATURE_LEN,
            })
            .sum()
    }
}

/// Everything that receives gradient updates for one method variant, plus
/// the frozen vocabulary the graph encoder indexes into.
#[derive(Clone, Debug, PartialEq)]
pub struct Kid3Model {
    pub variant: MethodVariant,
    pub config: ModelConfig,
    pub seed: u64,
    pub vocabulary: Vocabulary,
    pub classifier: ClassifierParams,
    /// Present exactly when the variant uses the graph branch.
    pub graph_encoder: Option<GraphEncoderParams>,
}

/// A named view of one parameter tensor.
pub struct NamedTensor<'a> {
    pub name: String,
    pub tensor: &'a Matrix,
}

impl Kid3Model {
    pub fn new(variant: MethodVariant, config: ModelConfig, vocabulary: Vocabulary, seed: u64) -> Self {
        let mut rng = rng::seeded(seed);
        let graph_encoder = variant.includes(Branch::Graph).then(|| {
            GraphEncoderParams::init(vocabulary.len(), config.graph_input_dim, config.graph_encoding_dim, &mut rng)
        });
        let classifier = ClassifierParams::init(config.fused_dim(variant), &config.mlp, &mut rng);
        Self { variant, config, seed, vocabulary, classifier, graph_encoder }
    }

    /// The classifier head and, for variants with a graph branch, the GCN.
    /// The image backbone and pose extractor own no parameters here.
    pub fn trainable_parameters(&self) -> Vec<NamedTensor<'_>> {
        named_tensors(&self.classifier, self.graph_encoder.as_ref())
    }

    /// Mutable access in the same order and naming as [`Kid3Model::trainable_parameters`].
    pub fn trainable_parameters_mut(&mut self) -> Vec<(String, &mut Matrix)> {
        let mut out = Vec::new();
        for (i, layer) in self.classifier.layers.iter_mut().enumerate() {
            out.push((format!("classifier.{i}.weight"), &mut layer.weight));
            out.push((format!("classifier.{i}.bias"), &mut layer.bias));
        }
        if let Some(g) = &mut self.graph_encoder {
            out.push(("graph.embedding".into(), &mut g.embedding));
            out.push(("graph.weight".into(), &mut g.weight));
        }
        out
    }

    /// Copy with every parameter rounded through `f32`, matching what a
    /// checkpoint stores.
    pub fn rounded_to_f32(&self) -> Self {
        let mut out = self.clone();
        for (_, tensor) in out.trainable_parameters_mut() {
            tensor.map_in_place(|v| v as f32 as f64);
        }
        out
    }
}

/// Parameter tensors under their checkpoint names, classifier layers first.
pub fn named_tensors<'a>(
    classifier: &'a ClassifierParams,
    graph_encoder: Option<&'a GraphEncoderParams>,
) -> Vec<NamedTensor<'a>> {
    let mut out = Vec::new();
    for (i, layer) in classifier.layers.iter().enumerate() {
        out.push(NamedTensor { name: format!("classifier.{i}.weight"), tensor: &layer.weight });
        out.push(NamedTensor { name: format!("classifier.{i}.bias"), tensor: &layer.bias });
    }
    if let Some(g) = graph_encoder {
        out.push(NamedTensor { name: "graph.embedding".into(), tensor: &g.embedding });
        out.push(NamedTensor { name: "graph.weight".into(), tensor: &g.weight });
    }
    out
}
