//! Optimization, evaluation, checkpoints, transfer between label sets and
//! the architecture-variant study.

mod adam;
mod checkpoint;
mod config;
mod metrics;
mod study;
mod train;
mod transfer;

use std::path::PathBuf;

pub use adam::{adam_step, AdamState, ADAM_EPS};
pub use checkpoint::{
    load_checkpoint, save_checkpoint, weights_hash, Checkpoint, Provenance, CHECKPOINT_MAGIC,
    CHECKPOINT_VERSION,
};
pub use config::{Precision, TrainConfig};
pub use metrics::{evaluate, evaluate_parallel, thread_cap, Metrics};
pub use study::{variant_study, write_report_csv, StudyRow, StudyTask, StudyVariant};
pub use train::{segments_tensor, train, write_history, EpochRecord, TrainOutcome};
pub use transfer::{transfer, TransferMode, HEAD_PREFIX};

use crate::dataset::DatasetError;
use crate::model::ModelError;

#[derive(Debug, thiserror::Error)]
pub enum TrainError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("non-finite gradient for {param} at step {step}")]
    NonFinite { param: String, step: u64 },
    #[error("empty evaluation set")]
    EmptyEval,
    #[error("incompatible transfer: {0}")]
    Transfer(String),
    #[error("checkpoint at byte {offset}: {reason}")]
    Checkpoint { offset: u64, reason: String },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Dataset(#[from] DatasetError),
}

impl From<crate::autodiff::TensorError> for TrainError {
    fn from(e: crate::autodiff::TensorError) -> Self {
        TrainError::Model(ModelError::Tensor(e))
    }
}
