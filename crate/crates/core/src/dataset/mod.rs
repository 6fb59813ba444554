//! Class-balanced, pattern-isolated dataset construction.
//!
//! Test clips come only from pattern-B videos; train and validation clips
//! only from patterns A, C, D and E. Every class contributes the same number
//! of clips, split 8:1:1.

mod augment;
mod corpus;
mod export;
mod sample;
mod split;

use thiserror::Error;

use crate::ingest::IngestError;
use crate::windower::ClipError;

pub use augment::{augment_clip, AugmentationSpec, AugmentedClip, DEFAULT_HFLIP_PROBABILITY, DEFAULT_INPUT_SIDE};
pub use corpus::Corpus;
pub use export::{clip_dir_name, export_training_manifest, TrainingManifest, MANIFEST_FILE, SPLIT_FILE};
pub use sample::{candidate_anchors, sample_balanced_clips, SampledClips, DEFAULT_MIN_SPACING, REFERENCE_CLASS_QUOTA};
pub use split::{make_split, Split, SplitEntry, SplitPlan};

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("class quota must be a positive multiple of 10, got {0}")]
    InvalidQuota(usize),
    #[error("insufficient data: {0}")]
    InsufficientData(String),
    #[error("pattern shortage: {class} needs {need} clips from {side}, found {have}")]
    PatternShortage {
        class: String,
        side: &'static str,
        have: usize,
        need: usize,
    },
    #[error("sampled clips are not balanced: {0}")]
    UnbalancedSample(String),
    #[error("video {0:?} is not in the manifest")]
    UnknownVideo(String),
    #[error("split is empty")]
    EmptySplit,
    #[error("invalid augmentation: {0}")]
    InvalidSpec(String),
    #[error("training manifest key `{key}`: {message}")]
    Manifest { key: String, message: String },
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Clip(#[from] ClipError),
    #[error(transparent)]
    Ingest(#[from] IngestError),
}

impl DatasetError {
    pub(crate) fn io(path: &std::path::Path, source: std::io::Error) -> Self {
        DatasetError::Io {
            path: path.display().to_string(),
            source,
        }
    }
}
