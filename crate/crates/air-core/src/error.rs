//! Error types shared across the crate.

use thiserror::Error;

/// Errors raised by tensor construction and graph operations.
#[derive(Debug, Error)]
pub enum TensorError {
    #[error("{op}: shape mismatch, {lhs:?} vs {rhs:?}")]
    ShapeMismatch {
        op: &'static str,
        lhs: Vec<usize>,
        rhs: Vec<usize>,
    },

    #[error("{op}: data length {len} does not match shape {shape:?}")]
    DataLength {
        op: &'static str,
        len: usize,
        shape: Vec<usize>,
    },

    #[error("{op}: shape {shape:?} contains a zero dimension")]
    ZeroDim { op: &'static str, shape: Vec<usize> },

    #[error("{op}: axis {axis} out of range for rank-{rank} tensor")]
    InvalidAxis {
        op: &'static str,
        axis: usize,
        rank: usize,
    },

    #[error("{op}: {msg}")]
    InvalidParam { op: &'static str, msg: String },

    #[error("{op}: label {label} out of range for {classes} classes")]
    LabelOutOfRange {
        op: &'static str,
        label: usize,
        classes: usize,
    },

    #[error("{op}: produced non-finite values")]
    NonFinite { op: &'static str },
}

/// Errors raised while assembling or running a relation model.
#[derive(Debug, Error)]
pub enum ModelError {
    #[error(transparent)]
    Tensor(#[from] TensorError),

    #[error("invalid model config: {0}")]
    InvalidConfig(String),

    #[error("scene features supplied but the model has no scene head")]
    SceneHeadMissing,

    #[error("model has a scene head but no scene features were supplied")]
    SceneInputMissing,

    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

/// Errors raised by the synthetic dataset generator and its on-disk format.
#[derive(Debug, Error)]
pub enum DataError {
    #[error("invalid generator spec: {0}")]
    InvalidSpec(String),

    #[error("degenerate split: {0}")]
    DegenerateSplit(String),

    #[error("dataset format version {found} unsupported (expected {expected})")]
    VersionMismatch { found: u32, expected: u32 },

    #[error("manifest/blob disagreement: {0}")]
    BlobMismatch(String),

    #[error("manifest parse error: {0}")]
    ManifestParse(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

/// Errors raised by the training and evaluation engine.
#[derive(Debug, Error)]
pub enum TrainError {
    #[error(transparent)]
    Tensor(#[from] TensorError),

    #[error(transparent)]
    Model(#[from] ModelError),

    #[error("non-finite loss at epoch {epoch}: training diverged")]
    Diverged { epoch: usize },

    #[error("non-finite gradient for parameter `{name}`: step aborted")]
    NonFiniteGradient { name: String },

    #[error("epoch {epoch} out of range (total {total})")]
    EpochOutOfRange { epoch: usize, total: usize },

    #[error("cannot evaluate on an empty dataset")]
    EmptyDataset,

    #[error("invalid train config: {0}")]
    InvalidConfig(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}
