//! Clip classification: a motion-feature baseline, a binary protocol for an
//! out-of-process worker, and per-track temporal smoothing.

mod baseline;
mod features;
mod remote;
mod smoothing;
pub mod wire;

use thiserror::Error;

use crate::model::DamageStatus;

pub use baseline::{classify_baseline, Thresholds, BASELINE_EPSILON};
pub use features::{extract_features, MotionFeatures};
pub use remote::{EchoWorker, RemoteClassifier, DEFAULT_REMOTE_TIMEOUT};
pub use smoothing::{smooth_track_status, StatusOverride, TrackStatusState, DEFAULT_SMOOTHING_WINDOW};

#[derive(Debug, Error)]
pub enum ClassifierError {
    #[error("invalid thresholds: {0}")]
    InvalidThresholds(String),
    #[error("remote classifier timed out")]
    Timeout,
    #[error("protocol error: {0}")]
    Protocol(String),
    #[error("probabilities sum to {0}, outside [0.99, 1.01]")]
    BadSimplex(f64),
    #[error("remote classifier unreachable: {0}")]
    Connect(std::io::Error),
    #[error("remote classifier i/o: {0}")]
    Io(std::io::Error),
}

impl ClassifierError {
    /// Maps socket errors, folding the platform's timeout kinds into
    /// [`ClassifierError::Timeout`].
    pub(crate) fn from_io(e: std::io::Error) -> Self {
        match e.kind() {
            std::io::ErrorKind::TimedOut | std::io::ErrorKind::WouldBlock => ClassifierError::Timeout,
            _ => ClassifierError::Io(e),
        }
    }
}

/// Class probabilities in `[safe, evacuation, call_for_help, emergency]`
/// order plus the winning class.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClassifierOutput {
    pub probabilities: [f64; 4],
    pub predicted: DamageStatus,
    pub latency_ms: f64,
    /// Worker-reported low confidence.
    pub low_confidence: bool,
}

impl ClassifierOutput {
    pub fn from_probabilities(probabilities: [f64; 4], latency_ms: f64) -> Self {
        ClassifierOutput {
            probabilities,
            predicted: argmax_status(&probabilities),
            latency_ms,
            low_confidence: false,
        }
    }
}

/// Index of the largest probability; equal maxima resolve to the more
/// urgent class.
pub fn argmax_status(p: &[f64; 4]) -> DamageStatus {
    let mut best = 0;
    for i in 1..4 {
        if p[i] >= p[best] {
            best = i;
        }
    }
    DamageStatus::from_index(best).expect("index below 4")
}
