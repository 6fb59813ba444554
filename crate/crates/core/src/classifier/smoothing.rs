use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use super::ClassifierOutput;
use crate::model::DamageStatus;

pub const DEFAULT_SMOOTHING_WINDOW: usize = 5;

/// Operator-pinned status for one track.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StatusOverride {
    pub status: DamageStatus,
    pub operator_id: String,
    /// Wall-clock milliseconds since the Unix epoch.
    pub set_at: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrackStatusState {
    pub track_id: u64,
    window: usize,
    buffer: VecDeque<ClassifierOutput>,
    current: DamageStatus,
    status_override: Option<StatusOverride>,
}

impl TrackStatusState {
    /// `window` is clamped to at least 1.
    pub fn new(track_id: u64, window: usize) -> Self {
        TrackStatusState {
            track_id,
            window: window.max(1),
            buffer: VecDeque::with_capacity(window.max(1)),
            current: DamageStatus::Safe,
            status_override: None,
        }
    }

    pub fn current_status(&self) -> DamageStatus {
        self.current
    }

    /// Majority of the buffered predictions, ignoring any override.
    pub fn voted_status(&self) -> Option<DamageStatus> {
        majority(self.buffer.iter().map(|o| o.predicted))
    }

    pub fn last(&self) -> Option<&ClassifierOutput> {
        self.buffer.back()
    }

    pub fn buffer(&self) -> impl Iterator<Item = &ClassifierOutput> {
        self.buffer.iter()
    }

    pub fn status_override(&self) -> Option<&StatusOverride> {
        self.status_override.as_ref()
    }

    pub fn set_override(&mut self, o: StatusOverride) {
        self.status_override = Some(o);
        self.recompute();
    }

    pub fn clear_override(&mut self) -> Option<StatusOverride> {
        let old = self.status_override.take();
        self.recompute();
        old
    }

    pub fn push(&mut self, output: ClassifierOutput) {
        if self.buffer.len() == self.window {
            self.buffer.pop_front();
        }
        self.buffer.push_back(output);
        self.recompute();
    }

    fn recompute(&mut self) {
        self.current = match &self.status_override {
            Some(o) => o.status,
            None => self.voted_status().unwrap_or(DamageStatus::Safe),
        };
    }
}

/// Most frequent status; ties go to the more urgent one.
fn majority(statuses: impl Iterator<Item = DamageStatus>) -> Option<DamageStatus> {
    let mut counts = [0usize; 4];
    let mut any = false;
    for s in statuses {
        counts[s.index()] += 1;
        any = true;
    }
    if !any {
        return None;
    }
    let best = (0..4).rev().max_by_key(|i| (counts[*i], *i)).expect("four classes");
    DamageStatus::from_index(best)
}

/// Folds one new output into the track's state.
pub fn smooth_track_status(mut state: TrackStatusState, new: ClassifierOutput) -> TrackStatusState {
    state.push(new);
    state
}
