//! Tri-modal outcome classifier: a small patch-attention image encoder, MLP
//! encoders for the clinical and values vectors, cross-attention fusion and a
//! two-logit head, trained with exact reverse-mode gradients.

pub mod checkpoint;
pub mod dataset;
pub mod harness;
pub mod model;
pub mod tape;
pub mod tensor;
pub mod train;

use thiserror::Error;

use crate::data::DataError;
use crate::stats::StatsError;

pub use dataset::{synthetic, FusionDataset, FusionRecord, SyntheticSpec};
pub use harness::{evaluate_harness, AblationRow, HarnessOptions, HarnessReport, TestMetrics, TrainedModel};
pub use model::{AttentionDirection, CrossAttention, FusionConfig, FusionModel, Modality, Sample, VectorKind};
pub use tensor::Mat;
pub use train::{accuracy, train, train_with_snapshots, InputScaling, Standardizer, TrainOptions, TrainOutcome};

#[derive(Debug, Error)]
pub enum FusionError {
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("non-finite gradient for parameter {0}")]
    NonFinite(String),
    #[error("training diverged at epoch {epoch}")]
    Diverged { epoch: usize },
    #[error("insufficient data: {0}")]
    InsufficientData(String),
    #[error("empty batch")]
    EmptyBatch,
    #[error("dataset: {0}")]
    Dataset(String),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Stats(#[from] StatsError),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}
