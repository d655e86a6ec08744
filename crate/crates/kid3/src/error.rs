use std::io;
use std::path::{Path, PathBuf};

use kid3_core::annotation::{AnnotationError, ManifestError};
use kid3_core::fusion::Branch;
use kid3_core::metrics::AggregateError;
use kid3_core::train::TrainError;

/// A rejected annotation row. `line` is the 1-based line in the CSV file.
#[derive(Debug, Clone, PartialEq)]
pub struct RowError {
    pub line: u64,
    pub kind: RowErrorKind,
}

#[derive(Debug, Clone, PartialEq)]
pub enum RowErrorKind {
    MalformedRow(String),
    UnknownLabel(String),
}

impl std::fmt::Display for RowError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match &self.kind {
            RowErrorKind::MalformedRow(why) => write!(f, "line {}: malformed row: {why}", self.line),
            RowErrorKind::UnknownLabel(raw) => write!(f, "line {}: unknown activity label {raw:?}", self.line),
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("{path}:{line}: {message}")]
    Parse { path: PathBuf, line: usize, message: String },
    #[error("{} rejected annotation row(s):\n{}", .0.len(), join_rows(.0))]
    Annotations(Vec<RowError>),
    #[error(transparent)]
    Annotation(#[from] AnnotationError),
    #[error(transparent)]
    Manifest(#[from] ManifestError),
    #[error("no embedding recorded for frame {0}")]
    MissingEmbedding(String),
    #[error("frame {0} appears more than once")]
    DuplicateFrameId(String),
    #[error("embedding for frame {frame_id} has {actual} values, expected {expected}")]
    EmbeddingWidth { frame_id: String, expected: usize, actual: usize },
    #[error("image backbone plugin failed on frame {frame_id}: {message}")]
    PluginFailure { frame_id: String, message: String },
    #[error("frame {frame_id} has no {} features", .branch.name())]
    MissingFeature { frame_id: String, branch: Branch },
    #[error("configuration: {0}")]
    Config(String),
    #[error("checkpoint {path}: {message}")]
    Checkpoint { path: PathBuf, message: String },
    #[error(transparent)]
    Aggregate(#[from] AggregateError),
    #[error(transparent)]
    Train(#[from] TrainError),
    #[error("report has no per-class entries")]
    EmptyReport,
    #[error("cannot write {path}: {source}")]
    UnwritablePath { path: PathBuf, source: io::Error },
}

fn join_rows(rows: &[RowError]) -> String {
    rows.iter().map(ToString::to_string).collect::<Vec<_>>().join("\n")
}

impl Error {
    pub fn io(path: impl AsRef<Path>) -> impl FnOnce(io::Error) -> Error {
        let path = path.as_ref().to_path_buf();
        move |source| Error::Io { path, source }
    }

    pub fn unwritable(path: impl AsRef<Path>) -> impl FnOnce(io::Error) -> Error {
        let path = path.as_ref().to_path_buf();
        move |source| Error::UnwritablePath { path, source }
    }

    /// 2 for bad input data or configuration, 1 for everything else.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Annotations(_) | Error::Annotation(_) | Error::Config(_) => 2,
            _ => 1,
        }
    }

    /// Short machine-readable category.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Io { .. } | Error::UnwritablePath { .. } => "io",
            Error::Parse { .. } => "parse",
            Error::Annotations(_) | Error::Annotation(_) => "annotations",
            Error::Manifest(_) => "manifest",
            Error::MissingEmbedding(_) | Error::EmbeddingWidth { .. } | Error::DuplicateFrameId(_) => "embedding",
            Error::PluginFailure { .. } => "plugin",
            Error::MissingFeature { .. } => "missing_feature",
            Error::Config(_) => "config",
            Error::Checkpoint { .. } => "checkpoint",
            Error::Aggregate(_) => "aggregate",
            Error::Train(_) => "train",
            Error::EmptyReport => "report",
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
