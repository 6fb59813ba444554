use serde::{Deserialize, Serialize};
use triage_core::model::{BBox, SceneCategory};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RecordSource {
    Auto,
    Override,
}

/// One published detection: a tracked person's status or a scene-level
/// alarm (track id 0).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRecord {
    pub video_id: String,
    pub frame_index: u64,
    pub timestamp_ms: u64,
    pub track_id: u64,
    pub bbox: BBox,
    pub category: SceneCategory,
    pub confidence: f64,
    pub source: RecordSource,
    pub publish_latency_ms: f64,
}

impl ResultRecord {
    /// Single-line JSON form used on the stream endpoint.
    pub fn to_line(&self) -> String {
        serde_json::to_string(self).expect("record is plain data")
    }

    pub fn from_line(line: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(line)
    }
}
