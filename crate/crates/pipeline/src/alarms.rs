//! Scripted smoke/flame detections.
//!
//! Schedule files are CSV with header `frame_index,category,x,y,w,h,confidence`;
//! `category` is `smoke` or `flame`.

use std::collections::BTreeMap;
use std::io::Read;
use std::path::Path;

use serde::Deserialize;
use triage_core::model::{BBox, SceneCategory};

use crate::PipelineError;

#[derive(Debug, Clone, PartialEq)]
pub struct AlarmEntry {
    pub category: SceneCategory,
    pub bbox: BBox,
    pub confidence: f64,
}

#[derive(Debug, Deserialize)]
struct Row {
    frame_index: u64,
    category: String,
    x: u32,
    y: u32,
    w: u32,
    h: u32,
    confidence: f64,
}

/// Alarm detections keyed by frame index.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct AlarmSchedule {
    by_frame: BTreeMap<u64, Vec<AlarmEntry>>,
}

impl AlarmSchedule {
    pub fn read<R: Read>(reader: R) -> Result<Self, PipelineError> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        let mut by_frame: BTreeMap<u64, Vec<AlarmEntry>> = BTreeMap::new();
        for (i, row) in rdr.deserialize::<Row>().enumerate() {
            let line = i + 2;
            let bad = |m: String| PipelineError::Source(format!("alarm schedule line {line}: {m}"));
            let row = row.map_err(|e| bad(e.to_string()))?;
            let category: SceneCategory = row.category.parse().map_err(|e: triage_core::model::ModelError| bad(e.to_string()))?;
            if category.is_person() {
                return Err(bad(format!("{category} is not an alarm category")));
            }
            if !(0.0..=1.0).contains(&row.confidence) {
                return Err(bad(format!("confidence {} outside [0, 1]", row.confidence)));
            }
            if row.w == 0 || row.h == 0 {
                return Err(bad("empty box".into()));
            }
            by_frame.entry(row.frame_index).or_default().push(AlarmEntry {
                category,
                bbox: BBox::new(row.x, row.y, row.w, row.h),
                confidence: row.confidence,
            });
        }
        Ok(AlarmSchedule { by_frame })
    }

    pub fn load(path: &Path) -> Result<Self, PipelineError> {
        let file = std::fs::File::open(path)
            .map_err(|e| PipelineError::Source(format!("{}: {e}", path.display())))?;
        Self::read(file)
    }

    pub fn at(&self, frame_index: u64) -> &[AlarmEntry] {
        self.by_frame.get(&frame_index).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn len(&self) -> usize {
        self.by_frame.values().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.by_frame.is_empty()
    }

    pub fn insert(&mut self, frame_index: u64, entry: AlarmEntry) {
        self.by_frame.entry(frame_index).or_default().push(entry);
    }
}
