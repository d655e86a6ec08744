//! Pure algorithmic core of the KiD3 distracted-driver frame classifier.
//!
//! Everything here is `no_std` + `alloc`: the activity taxonomy and label
//! normalization, frame sampling over annotation intervals, the scene-graph
//! GCN encoder, engineered pose features, the late-fusion MLP with softmax
//! cross-entropy, mini-batch training and classification metrics. File
//! formats, configuration and the command line live in the `kid3` crate.
//!
//! Enable the `std` feature to get `std::error::Error` impls and runtime
//! SIMD dispatch in the matrix kernels.

#![cfg_attr(not(feature = "std"), no_std)]

extern crate alloc;

pub mod annotation;
pub mod fusion;
pub mod graph;
pub mod linalg;
pub mod metrics;
pub mod optim;
pub mod pose;
pub mod rng;
pub mod embedding;
pub mod taxonomy;
pub mod train;

pub use annotation::{sample_frames, AnnotationRecord, DatasetManifest, FrameSample, Split, VideoMeta};
pub use fusion::{
    Branch, ClassifierParams, FusedRepresentation, Kid3Model, MethodVariant, MlpConfig, Prediction,
    ProbabilityVector,
};
pub use graph::{GraphEncoderParams, IndexedGraph, SceneGraph, Triplet, Vocabulary};
pub use metrics::{ClassificationMetrics, ConfusionMatrix, MetricsReport};
pub use pose::{DetectionBox, Joint, Keypoint, PoseConfig, PoseFeatureVector, PoseSkeleton};
pub use taxonomy::{normalize_label, ActivityClass, NUM_CLASSES};

/// Width of the image-branch embedding produced by the truncated backbone.
pub const EMBEDDING_DIM: usize = 4096;
