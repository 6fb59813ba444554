//! Dataset manifests, per-video track annotations and frame sources.
//!
//! Layout of a dataset root on disk:
//!
//! ```text
//! <root>/manifest.csv
//! <root>/annotations/<video_id>.csv
//! <root>/frames/<video_id>/frame_000000.ppm ...
//! ```

mod annotations;
mod frames;
mod manifest;
pub mod synthetic;

use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::model::ModelError;

pub use annotations::{
    parse_annotations, read_annotations, serialize_annotations, write_annotations, Track,
    TrackAnnotation,
};
pub use frames::{
    frame_file_name, open_frame_source, write_frame, DirFrameSource, DirFrameStore, Frame,
    FrameSource, FrameStore, MemoryFrameStore,
};
pub use manifest::{parse_manifest, read_manifest, write_manifest, PathKind, Pattern, VideoMeta};
pub use synthetic::{generate_synthetic_scene, Archetype, SyntheticScene, SyntheticScript};

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: field `{field}`: {message}")]
    Parse {
        line: u64,
        field: String,
        message: String,
    },
    #[error("{}validation failed ({rule}): {detail}", line.map(|l| format!("line {l}: ")).unwrap_or_default())]
    Validation {
        line: Option<u64>,
        rule: &'static str,
        detail: String,
    },
    #[error("missing frame {0}")]
    MissingFrame(u64),
    #[error("frame {frame_index}: expected {expected_w}x{expected_h}, found {found_w}x{found_h}")]
    DimensionMismatch {
        frame_index: u64,
        expected_w: u32,
        expected_h: u32,
        found_w: u32,
        found_h: u32,
    },
    #[error("invalid synthetic script: {0}")]
    InvalidScript(String),
    #[error("image codec: {0}")]
    Image(#[from] image::ImageError),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl IngestError {
    pub(crate) fn io(path: &Path, source: std::io::Error) -> Self {
        IngestError::Io {
            path: path.to_path_buf(),
            source,
        }
    }

    pub(crate) fn validation(line: Option<u64>, rule: &'static str, detail: impl Into<String>) -> Self {
        IngestError::Validation {
            line,
            rule,
            detail: detail.into(),
        }
    }

    /// Name of the violated invariant, for validation errors.
    pub fn rule(&self) -> Option<&'static str> {
        match self {
            IngestError::Validation { rule, .. } => Some(rule),
            _ => None,
        }
    }
}

impl From<ModelError> for IngestError {
    fn from(e: ModelError) -> Self {
        let rule = match e {
            ModelError::UnknownLabel(_) | ModelError::UnknownCategory(_) => "unknown label",
            ModelError::InvalidBBox { .. } => "bbox bounds",
            ModelError::InvalidColor(_) => "color",
        };
        IngestError::validation(None, rule, e.to_string())
    }
}

/// Conventional paths inside a dataset root.
#[derive(Debug, Clone)]
pub struct DatasetLayout {
    pub root: PathBuf,
}

impl DatasetLayout {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        DatasetLayout { root: root.into() }
    }

    pub fn manifest(&self) -> PathBuf {
        self.root.join("manifest.csv")
    }

    pub fn annotations(&self, video_id: &str) -> PathBuf {
        self.root.join("annotations").join(format!("{video_id}.csv"))
    }

    pub fn frames(&self, video_id: &str) -> PathBuf {
        self.root.join("frames").join(video_id)
    }
}
