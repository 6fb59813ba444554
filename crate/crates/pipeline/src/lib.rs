//! Streaming triage runtime.
//!
//! Frames flow `admit -> window -> classify -> smooth -> publish` through
//! bounded stages. Results go out on an in-process [`bus::Bus`]; an optional
//! HTTP gateway exposes live tracks, a result stream, the latest frame,
//! metrics and operator overrides.

pub mod alarms;
pub mod board;
pub mod bus;
pub mod config;
pub mod gateway;
pub mod metrics;
pub mod queue;
pub mod record;
pub mod run;

use thiserror::Error;

pub use board::{OverrideError, StatusBoard, TrackView};
pub use bus::{Bus, BusEvent, SubscribeFrom, Topic};
pub use config::{ClassifierKind, PipelineConfig};
pub use metrics::MetricsSnapshot;
pub use queue::{Admission, DropPolicy, FrameQueue};
pub use record::{RecordSource, ResultRecord};
pub use run::{start_pipeline, start_pipeline_from_config, PipelineInput, RunHandle};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("config: {0}")]
    Config(String),
    #[error("source: {0}")]
    Source(String),
    #[error("{stage} stage: {message}")]
    Stage { stage: &'static str, message: String },
    #[error("gateway could not bind {addr}: {source}")]
    Bind {
        addr: String,
        #[source]
        source: std::io::Error,
    },
}
