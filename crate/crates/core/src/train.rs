//! Mini-batch gradient descent on the trainable parameters.
//!
//! Branch features are precomputed: image embeddings and pose features are
//! plain inputs, so only the classifier head and (when active) the GCN
//! encoder change during training.

use alloc::string::String;
use alloc::sync::Arc;
use alloc::vec::Vec;
use core::fmt;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::fusion::{
    argmax_class, cross_entropy_from_logits, named_tensors, Branch, ClassifierParams, Kid3Model, NamedTensor,
    ProbabilityVector,
};
use crate::graph::{GraphActivations, GraphEncoderParams, IndexedGraph};
use crate::linalg::Matrix;
use crate::optim::{Optimizer, OptimizerKind};
use crate::pose::PoseFeatureVector;
use crate::rng;
use crate::taxonomy::{ActivityClass, NUM_CLASSES};

/// One frame's branch inputs and label.
#[derive(Clone, Debug)]
pub struct Example {
    pub frame_id: String,
    pub image: Option<Arc<[f32]>>,
    pub graph: Option<IndexedGraph>,
    pub pose: Option<PoseFeatureVector>,
    pub label: ActivityClass,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum TrainError {
    /// An example lacks a branch the model uses, or carries one it does not.
    BranchMismatch { frame_id: String, branch: Branch },
    DimensionMismatch { frame_id: String, branch: Branch, expected: usize, actual: usize },
    InvalidConfig(&'static str),
}

impl fmt::Display for TrainError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TrainError::BranchMismatch { frame_id, branch } => {
                write!(f, "frame {frame_id}: {} branch does not match the model variant", branch.name())
            }
            TrainError::DimensionMismatch { frame_id, branch, expected, actual } => write!(
                f,
                "frame {frame_id}: {} features have width {actual}, expected {expected}",
                branch.name()
            ),
            TrainError::InvalidConfig(msg) => f.write_str(msg),
        }
    }
}

#[cfg(feature = "std")]
impl std::error::Error for TrainError {}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    #[serde(default)]
    pub optimizer: OptimizerKind,
    /// Heavy-ball momentum for [`OptimizerKind::Sgd`].
    #[serde(default)]
    pub momentum: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self { epochs: 30, batch_size: 32, learning_rate: 1e-3, optimizer: OptimizerKind::Adam, momentum: 0.0 }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainingLog {
    /// Mean cross-entropy over the training set before the first update.
    pub initial_loss: f64,
    /// Mean of the per-batch losses seen during each epoch.
    pub epoch_losses: Vec<f64>,
    pub steps: usize,
}

/// Checks that every example carries exactly the branches of `model`.
pub fn check_examples(model: &Kid3Model, examples: &[Example]) -> Result<(), TrainError> {
    let config = &model.config;
    for ex in examples {
        let present = [
            (Branch::Image, ex.image.is_some()),
            (Branch::Graph, ex.graph.is_some()),
            (Branch::Pose, ex.pose.is_some()),
        ];
        for (branch, is_some) in present {
            if is_some != model.variant.includes(branch) {
                return Err(TrainError::BranchMismatch { frame_id: ex.frame_id.clone(), branch });
            }
        }
        if let Some(image) = &ex.image {
            if image.len() != config.image_dim {
                return Err(TrainError::DimensionMismatch {
                    frame_id: ex.frame_id.clone(),
                    branch: Branch::Image,
                    expected: config.image_dim,
                    actual: image.len(),
                });
            }
        }
    }
    Ok(())
}

struct BatchForward {
    inputs: Matrix,
    graph_activations: Vec<Option<GraphActivations>>,
}

fn assemble(model: &Kid3Model, batch: &[&Example]) -> BatchForward {
    let width = model.classifier.input_dim();
    let mut inputs = Matrix::zeros(batch.len(), width);
    let mut graph_activations = Vec::with_capacity(batch.len());
    for (r, ex) in batch.iter().enumerate() {
        let row = inputs.row_mut(r);
        let mut at = 0;
        if let Some(image) = &ex.image {
            for (dst, &v) in row[..image.len()].iter_mut().zip(image.iter()) {
                *dst = v as f64;
            }
            at += image.len();
        }
        if let (Some(graph), Some(params)) = (&ex.graph, &model.graph_encoder) {
            let (encoding, act) = graph.encode_with_activations(params);
            row[at..at + encoding.len()].copy_from_slice(&encoding);
            at += encoding.len();
            graph_activations.push(act);
        } else {
            graph_activations.push(None);
        }
        if let Some(pose) = &ex.pose {
            row[at..at + pose.values.len()].copy_from_slice(&pose.values);
        }
    }
    BatchForward { inputs, graph_activations }
}

fn graph_columns(model: &Kid3Model) -> core::ops::Range<usize> {
    if model.variant.includes(Branch::Graph) {
        let start = model.config.image_dim;
        start..start + model.config.graph_encoding_dim
    } else {
        0..0
    }
}

/// Gradient buffers shaped like a model's trainable parameters.
#[derive(Clone, Debug, PartialEq)]
pub struct Gradients {
    pub classifier: ClassifierParams,
    pub graph_encoder: Option<GraphEncoderParams>,
}

impl Gradients {
    pub fn zeros_like(model: &Kid3Model) -> Self {
        Self {
            classifier: model.classifier.zeros_like(),
            graph_encoder: model.graph_encoder.as_ref().map(GraphEncoderParams::zeros_like),
        }
    }

    /// Named like [`Kid3Model::trainable_parameters`].
    pub fn named(&self) -> Vec<NamedTensor<'_>> {
        named_tensors(&self.classifier, self.graph_encoder.as_ref())
    }
}

/// Writes the gradients of the mean batch loss into `grads` and returns
/// that loss.
pub fn batch_gradients_into(model: &Kid3Model, batch: &[&Example], grads: &mut Gradients) -> f64 {
    let fwd = assemble(model, batch);
    let trace = model.classifier.forward_batch(fwd.inputs).expect("examples checked against model");
    let logits = trace.logits();
    let scale = 1.0 / batch.len() as f64;
    let mut loss = 0.0;
    let mut d_logits = Matrix::zeros(batch.len(), NUM_CLASSES);
    for (r, ex) in batch.iter().enumerate() {
        loss += cross_entropy_from_logits(logits.row(r), ex.label);
        let p = ProbabilityVector::from_logits(logits.row(r));
        let d = d_logits.row_mut(r);
        for (k, (dk, pk)) in d.iter_mut().zip(p.as_slice()).enumerate() {
            *dk = scale * (pk - if k == ex.label.model_index() { 1.0 } else { 0.0 });
        }
    }
    let columns = graph_columns(model);
    let d_graph = model.classifier.backward_batch_into(&trace, d_logits, columns, &mut grads.classifier);

    if let (Some(params), Some(g)) = (&model.graph_encoder, &mut grads.graph_encoder) {
        g.embedding.fill(0.0);
        g.weight.fill(0.0);
        // sequential accumulation in sample order
        for (r, ex) in batch.iter().enumerate() {
            if let Some(graph) = &ex.graph {
                graph.accumulate_backward(params, fwd.graph_activations[r].as_ref(), d_graph.row(r), g);
            }
        }
    }
    loss * scale
}

/// Mean batch loss and the gradients of that mean, without applying them.
pub fn batch_gradients(model: &Kid3Model, batch: &[&Example]) -> (f64, Gradients) {
    let mut grads = Gradients::zeros_like(model);
    let loss = batch_gradients_into(model, batch, &mut grads);
    (loss, grads)
}

fn apply(model: &mut Kid3Model, grads: &Gradients, learning_rate: f64) {
    model.classifier.add_scaled(-learning_rate, &grads.classifier);
    if let (Some(params), Some(g)) = (&mut model.graph_encoder, &grads.graph_encoder) {
        params.embedding.add_scaled(-learning_rate, &g.embedding);
        params.weight.add_scaled(-learning_rate, &g.weight);
    }
}

/// One gradient-descent update on `batch`. Returns the batch's mean loss
/// before the update.
pub fn step(model: &mut Kid3Model, batch: &[&Example], learning_rate: f64) -> f64 {
    let (loss, grads) = batch_gradients(model, batch);
    apply(model, &grads, learning_rate);
    loss
}

/// Mean cross-entropy over `examples`.
pub fn mean_loss(model: &Kid3Model, examples: &[Example]) -> f64 {
    if examples.is_empty() {
        return 0.0;
    }
    let mut total = 0.0;
    for chunk in examples.chunks(256) {
        let batch: Vec<&Example> = chunk.iter().collect();
        let trace = model.classifier.forward_batch(assemble(model, &batch).inputs).expect("checked");
        for (r, ex) in chunk.iter().enumerate() {
            total += cross_entropy_from_logits(trace.logits().row(r), ex.label);
        }
    }
    total / examples.len() as f64
}

/// Predicted class of every example, in order.
pub fn predict_all(model: &Kid3Model, examples: &[Example]) -> Vec<ActivityClass> {
    let mut out = Vec::with_capacity(examples.len());
    for chunk in examples.chunks(256) {
        let batch: Vec<&Example> = chunk.iter().collect();
        let trace = model.classifier.forward_batch(assemble(model, &batch).inputs).expect("checked");
        for r in 0..chunk.len() {
            out.push(argmax_class(trace.logits().row(r)));
        }
    }
    out
}

/// Runs `config.epochs` epochs of shuffled mini-batch training.
///
/// The shuffle order is drawn from `model.seed`, so identical inputs give
/// identical parameter trajectories.
pub fn fit(model: &mut Kid3Model, examples: &[Example], config: &TrainConfig) -> Result<TrainingLog, TrainError> {
    if config.epochs == 0 {
        return Err(TrainError::InvalidConfig("epochs must be at least 1"));
    }
    if config.batch_size == 0 {
        return Err(TrainError::InvalidConfig("batch_size must be at least 1"));
    }
    if !(config.learning_rate.is_finite() && config.learning_rate > 0.0) {
        return Err(TrainError::InvalidConfig("learning_rate must be positive"));
    }
    if !(0.0..1.0).contains(&config.momentum) {
        return Err(TrainError::InvalidConfig("momentum must be in [0, 1)"));
    }
    check_examples(model, examples)?;
    let mut log = TrainingLog { initial_loss: mean_loss(model, examples), ..Default::default() };
    let mut rng = rng::seeded(rng::mix(model.seed ^ 0x0053_4855_4646_4c45));
    let mut order: Vec<usize> = (0..examples.len()).collect();
    let mut grads = Gradients::zeros_like(model);
    let mut optimizer = Optimizer::new(config.optimizer, config.learning_rate, config.momentum, model);
    for _ in 0..config.epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        let mut batches = 0usize;
        for chunk in order.chunks(config.batch_size) {
            let batch: Vec<&Example> = chunk.iter().map(|&i| &examples[i]).collect();
            let loss = batch_gradients_into(model, &batch, &mut grads);
            optimizer.apply(model, &grads);
            epoch_loss += loss;
            batches += 1;
            log.steps += 1;
        }
        log.epoch_losses.push(if batches > 0 { epoch_loss / batches as f64 } else { 0.0 });
    }
    Ok(log)
}
