//! Relation-learning framework for group activity recognition on actor
//! feature tensors `[T frames × N actors × D channels]`.
//!
//! The crate bundles:
//! - a minimal f64 reverse-mode tensor engine ([`tensor`]),
//! - the MLP token/channel-mixing relation architecture plus GCN and
//!   Transformer baselines under one dual-path scaffold ([`model`]),
//! - analytic parameter/MAC accounting and latency measurement
//!   ([`accounting`]),
//! - a seeded synthetic benchmark with planted cross-actor/cross-time
//!   structure ([`data`]),
//! - the training/evaluation engine: joint loss, AdamW with warmup,
//!   MCA/MPCA metrics ([`train`]).

pub mod accounting;
pub mod data;
pub mod error;
pub mod model;
pub mod tensor;
pub mod train;
pub mod verify;

pub use error::{DataError, ModelError, TensorError, TrainError};
pub use tensor::{Graph, Mode, Tensor, VarId};
