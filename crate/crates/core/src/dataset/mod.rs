//! Trial ingestion, trial-level splits, sliding-window segmentation,
//! batching and a seeded synthetic sEMG generator.

mod archive;
mod batch;
mod manifest;
mod segment;
mod split;
mod synth;

use std::path::PathBuf;

pub use archive::{read_segments, write_segments, ARCHIVE_MAGIC, ARCHIVE_VERSION};
pub use batch::{batches, epoch_seed, Batch, Batches};
pub use manifest::{
    load_dataset, read_trial_file, trial_file_name, write_dataset, write_trial_file,
    DatasetManifest, TrialEntry,
};
pub use segment::{
    segment_count, segment_starts, segment_trial, Geometry, Segment, SegmentationConfig,
    Segmentation,
};
pub use split::{build_split, SplitSegments, SplitSpec};
pub use synth::{synth_generate, SynthSpec};

use crate::dsp::DspError;

#[derive(Debug, thiserror::Error)]
pub enum DatasetError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: malformed manifest: {source}")]
    Manifest {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
    #[error("trial {trial}: {reason}")]
    Trial { trial: String, reason: String },
    #[error("configuration error: {0}")]
    Config(String),
    #[error("segment archive at byte {offset}: {reason}")]
    Archive { offset: u64, reason: String },
    #[error(transparent)]
    Dsp(#[from] DspError),
}
