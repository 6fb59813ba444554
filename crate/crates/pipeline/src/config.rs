//! Run configuration, read from TOML.
//!
//! ```toml
//! drop_policy = "drop_oldest"
//! frame_queue_capacity = 8
//! classifier = "baseline"          # or "remote"
//! remote_endpoint = "127.0.0.1:7070"
//! gateway_bind = "127.0.0.1:8080"
//! source_script = "scene.toml"
//! alarm_schedule = "alarms.csv"
//!
//! [thresholds]
//! aspect_lying = 1.3
//!
//! [palette.call_for_help]
//! color = "yellow"
//! tag = "SOS"
//! ```
//!
//! Relative paths resolve against the config file's directory.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use triage_core::classifier::{Thresholds, DEFAULT_SMOOTHING_WINDOW};
use triage_core::model::{OverlayEntry, OverlayStyle, SceneCategory};
use triage_core::windower::{DEFAULT_CONTEXT, DEFAULT_STRIDE, MIN_OUT_SIDE};

use crate::queue::DropPolicy;
use crate::PipelineError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClassifierKind {
    #[default]
    Baseline,
    Remote,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub frame_queue_capacity: usize,
    pub clip_queue_capacity: usize,
    pub result_queue_capacity: usize,
    pub drop_policy: DropPolicy,
    pub classifier: ClassifierKind,
    pub remote_endpoint: Option<String>,
    pub remote_timeout_ms: u64,
    /// Side the remote worker expects; clips are resized to it.
    pub remote_side: Option<u32>,
    pub classifier_workers: usize,
    pub smoothing_window: usize,
    pub clip_stride: u64,
    pub context: f64,
    pub out_side: u32,
    pub thresholds: Thresholds,
    pub palette: BTreeMap<SceneCategory, OverlayEntry>,
    pub gateway_bind: Option<String>,
    pub latency_budget_ms: f64,
    pub bus_history: usize,
    pub subscriber_buffer: usize,
    pub track_expiry_ms: u64,
    /// Interval between snapshots on the metrics topic; 0 disables them.
    pub metrics_interval_ms: u64,
    /// Frame pacing for file and synthetic sources; unset runs flat out.
    pub pace_fps: Option<f64>,
    pub source_script: Option<PathBuf>,
    pub source_dataset: Option<PathBuf>,
    pub source_video: Option<String>,
    pub alarm_schedule: Option<PathBuf>,
    /// Replaces the synthetic script's seed.
    pub seed: Option<u64>,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            frame_queue_capacity: 8,
            clip_queue_capacity: 64,
            result_queue_capacity: 256,
            drop_policy: DropPolicy::DropOldest,
            classifier: ClassifierKind::Baseline,
            remote_endpoint: None,
            remote_timeout_ms: 200,
            remote_side: None,
            classifier_workers: 2,
            smoothing_window: DEFAULT_SMOOTHING_WINDOW,
            clip_stride: DEFAULT_STRIDE,
            context: DEFAULT_CONTEXT,
            out_side: 112,
            thresholds: Thresholds::default(),
            palette: BTreeMap::new(),
            gateway_bind: None,
            latency_budget_ms: 150.0,
            bus_history: 1024,
            subscriber_buffer: 4096,
            track_expiry_ms: 30_000,
            metrics_interval_ms: 1000,
            pace_fps: None,
            source_script: None,
            source_dataset: None,
            source_video: None,
            alarm_schedule: None,
            seed: None,
        }
    }
}

impl PipelineConfig {
    pub fn from_toml(text: &str) -> Result<Self, PipelineError> {
        let cfg: PipelineConfig = toml::from_str(text).map_err(|e| PipelineError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, PipelineError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| PipelineError::Config(format!("{}: {e}", path.display())))?;
        let mut cfg = Self::from_toml(&text)?;
        let base = path.parent().unwrap_or(Path::new("."));
        for p in [&mut cfg.source_script, &mut cfg.source_dataset, &mut cfg.alarm_schedule]
            .into_iter()
            .flatten()
        {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config is representable as TOML")
    }

    pub fn validate(&self) -> Result<(), PipelineError> {
        let bad = |m: String| Err(PipelineError::Config(m));
        for (name, v) in [
            ("frame_queue_capacity", self.frame_queue_capacity),
            ("clip_queue_capacity", self.clip_queue_capacity),
            ("result_queue_capacity", self.result_queue_capacity),
            ("classifier_workers", self.classifier_workers),
            ("smoothing_window", self.smoothing_window),
            ("subscriber_buffer", self.subscriber_buffer),
        ] {
            if v < 1 {
                return bad(format!("{name} must be at least 1"));
            }
        }
        if self.out_side < MIN_OUT_SIDE {
            return bad(format!("out_side must be at least {MIN_OUT_SIDE}, got {}", self.out_side));
        }
        if self.clip_stride < 1 {
            return bad("clip_stride must be at least 1".into());
        }
        if !(self.context.is_finite() && self.context >= 1.0) {
            return bad(format!("context must be at least 1, got {}", self.context));
        }
        if self.classifier == ClassifierKind::Remote && self.remote_endpoint.is_none() {
            return bad("classifier = \"remote\" needs remote_endpoint".into());
        }
        if let Some(side) = self.remote_side {
            if side < MIN_OUT_SIDE || side > u16::MAX as u32 {
                return bad(format!("remote_side {side} out of range"));
            }
        }
        if let Some(fps) = self.pace_fps {
            if !(fps.is_finite() && fps > 0.0) {
                return bad(format!("pace_fps must be positive, got {fps}"));
            }
        }
        if self.source_script.is_some() && self.source_dataset.is_some() {
            return bad("set only one of source_script and source_dataset".into());
        }
        if self.source_dataset.is_some() && self.source_video.is_none() {
            return bad("source_dataset needs source_video".into());
        }
        self.thresholds.validate().map_err(|e| PipelineError::Config(e.to_string()))?;
        Ok(())
    }

    pub fn overlay_style(&self) -> OverlayStyle {
        OverlayStyle::with_overrides(self.palette.clone())
    }

    pub fn remote_timeout(&self) -> Duration {
        Duration::from_millis(self.remote_timeout_ms)
    }

    pub fn track_expiry(&self) -> Duration {
        Duration::from_millis(self.track_expiry_ms)
    }
}
