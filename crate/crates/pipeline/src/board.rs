//! Per-track status table and the single place results are published.
//!
//! Auto results and operator overrides both go through [`StatusBoard`]
//! under one lock, so a track's records reach the bus in the order the
//! table saw them.

use std::collections::{HashMap, VecDeque};
use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant, SystemTime, UNIX_EPOCH};

use image::RgbImage;
use serde::Serialize;
use thiserror::Error;
use triage_core::classifier::{ClassifierOutput, StatusOverride, TrackStatusState};
use triage_core::model::{BBox, DamageStatus, FrameRef, SceneCategory};

use crate::bus::{Bus, BusEvent, ControlEvent, Topic};
use crate::metrics::Metrics;
use crate::record::{RecordSource, ResultRecord};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum OverrideError {
    #[error("track {0} is unknown or expired")]
    UnknownTrack(u64),
    #[error("{0:?} is not a person status")]
    InvalidStatus(String),
    #[error("run has ended")]
    Closed,
}

impl OverrideError {
    pub fn code(&self) -> &'static str {
        match self {
            OverrideError::UnknownTrack(_) => "UnknownTrack",
            OverrideError::InvalidStatus(_) => "InvalidStatus",
            OverrideError::Closed => "Closed",
        }
    }
}

/// Parses an operator-supplied status; smoke and flame are rejected.
pub fn parse_override_status(s: &str) -> Result<DamageStatus, OverrideError> {
    s.parse::<SceneCategory>()
        .ok()
        .and_then(SceneCategory::as_status)
        .ok_or_else(|| OverrideError::InvalidStatus(s.to_string()))
}

/// A classified clip ready for publication, identified by its newest frame.
#[derive(Debug, Clone)]
pub struct ClassifiedClip {
    pub frame: FrameRef,
    pub track_id: u64,
    pub bbox: BBox,
    pub captured: Instant,
    pub image: Arc<RgbImage>,
    pub output: ClassifierOutput,
}

struct TrackEntry {
    state: TrackStatusState,
    video_id: String,
    frame_index: u64,
    timestamp_ms: u64,
    bbox: BBox,
    last_seen: Instant,
    confidence: f64,
    source: RecordSource,
}

/// Row of the live track table.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrackView {
    pub track_id: u64,
    pub video_id: String,
    pub status: DamageStatus,
    pub source: RecordSource,
    pub confidence: f64,
    pub frame_index: u64,
    pub timestamp_ms: u64,
    pub bbox: BBox,
    pub last_seen_ms_ago: u64,
    #[serde(rename = "override")]
    pub status_override: Option<StatusOverride>,
}

/// Most recent frame with published person records, for overlays.
#[derive(Debug, Clone)]
pub struct LatestFrame {
    pub frame: FrameRef,
    pub image: Arc<RgbImage>,
    pub records: Vec<ResultRecord>,
}

const RECENT_ALARMS: usize = 64;

pub struct StatusBoard {
    tracks: Mutex<HashMap<u64, TrackEntry>>,
    latest: Mutex<Option<LatestFrame>>,
    alarms: Mutex<VecDeque<ResultRecord>>,
    bus: Bus,
    metrics: Arc<Metrics>,
    window: usize,
    expiry: Duration,
}

fn epoch_ms() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_millis() as u64)
        .unwrap_or(0)
}

fn mean_probability(state: &TrackStatusState, s: DamageStatus) -> f64 {
    let (sum, n) = state
        .buffer()
        .fold((0.0, 0usize), |(sum, n), o| (sum + o.probabilities[s.index()], n + 1));
    if n == 0 {
        0.0
    } else {
        (sum / n as f64).clamp(0.0, 1.0)
    }
}

impl StatusBoard {
    pub fn new(bus: Bus, metrics: Arc<Metrics>, window: usize, expiry: Duration) -> Self {
        StatusBoard {
            tracks: Mutex::new(HashMap::new()),
            latest: Mutex::new(None),
            alarms: Mutex::new(VecDeque::new()),
            bus,
            metrics,
            window,
            expiry,
        }
    }

    pub fn bus(&self) -> &Bus {
        &self.bus
    }

    fn record_for(entry: &TrackEntry, track_id: u64, latency: Duration) -> ResultRecord {
        ResultRecord {
            video_id: entry.video_id.clone(),
            frame_index: entry.frame_index,
            timestamp_ms: entry.timestamp_ms,
            track_id,
            bbox: entry.bbox,
            category: entry.state.current_status().into(),
            confidence: entry.confidence,
            source: entry.source,
            publish_latency_ms: latency.as_secs_f64() * 1e3,
        }
    }

    fn publish_locked(&self, record: &ResultRecord, started: Instant) -> bool {
        let latency = started.elapsed();
        let mut record = record.clone();
        record.publish_latency_ms = latency.as_secs_f64() * 1e3;
        let is_override = record.source == RecordSource::Override;
        if self.bus.publish(Topic::Results, BusEvent::Record(record)).is_err() {
            return false;
        }
        self.metrics.record_publish(latency, is_override);
        true
    }

    /// Folds a classified clip into its track and publishes the result.
    /// Returns the published record, or `None` once the bus is closed.
    pub fn publish_auto(&self, clip: ClassifiedClip) -> Option<ResultRecord> {
        let now = Instant::now();
        let mut tracks = self.tracks.lock().expect("board lock");
        let expired = tracks
            .get(&clip.track_id)
            .is_some_and(|e| now.duration_since(e.last_seen) > self.expiry);
        if expired {
            tracks.remove(&clip.track_id);
        }
        let entry = tracks.entry(clip.track_id).or_insert_with(|| TrackEntry {
            state: TrackStatusState::new(clip.track_id, self.window),
            video_id: clip.frame.video_id.clone(),
            frame_index: clip.frame.frame_index,
            timestamp_ms: clip.frame.timestamp_ms,
            bbox: clip.bbox,
            last_seen: now,
            confidence: 0.0,
            source: RecordSource::Auto,
        });
        entry.state.push(clip.output);
        entry.video_id = clip.frame.video_id.clone();
        entry.frame_index = clip.frame.frame_index;
        entry.timestamp_ms = clip.frame.timestamp_ms;
        entry.bbox = clip.bbox;
        entry.last_seen = now;
        if entry.state.status_override().is_some() {
            entry.source = RecordSource::Override;
            entry.confidence = 1.0;
            crate::metrics::Metrics::inc(&self.metrics.auto_suppressed);
        } else {
            entry.source = RecordSource::Auto;
            entry.confidence = mean_probability(&entry.state, entry.state.current_status());
        }
        let record = Self::record_for(entry, clip.track_id, Duration::ZERO);
        if !self.publish_locked(&record, clip.captured) {
            return None;
        }
        drop(tracks);

        let mut latest = self.latest.lock().expect("board lock");
        match latest.as_mut() {
            Some(l) if l.frame.frame_index == clip.frame.frame_index && l.frame.video_id == clip.frame.video_id => {
                l.records.push(record.clone())
            }
            Some(l) if l.frame.frame_index > clip.frame.frame_index => {}
            _ => {
                *latest = Some(LatestFrame {
                    frame: clip.frame,
                    image: clip.image,
                    records: vec![record.clone()],
                })
            }
        }
        Some(record)
    }

    /// Publishes a scene-level detection on the alarms topic.
    pub fn publish_alarm(&self, record: ResultRecord) -> bool {
        if self.bus.publish(Topic::Alarms, BusEvent::Record(record.clone())).is_err() {
            return false;
        }
        crate::metrics::Metrics::inc(&self.metrics.alarms_published);
        let mut alarms = self.alarms.lock().expect("board lock");
        if alarms.len() == RECENT_ALARMS {
            alarms.pop_front();
        }
        alarms.push_back(record);
        true
    }

    /// Sets (`Some`) or clears (`None`) the override for a live track and
    /// republishes its record immediately.
    pub fn apply_override(
        &self,
        track_id: u64,
        status: Option<DamageStatus>,
        operator_id: &str,
    ) -> Result<ResultRecord, OverrideError> {
        let started = Instant::now();
        let mut tracks = self.tracks.lock().expect("board lock");
        let entry = tracks
            .get_mut(&track_id)
            .filter(|e| started.duration_since(e.last_seen) <= self.expiry)
            .ok_or(OverrideError::UnknownTrack(track_id))?;
        if self.bus.is_closed() {
            return Err(OverrideError::Closed);
        }
        let control = match status {
            Some(status) => {
                entry.state.set_override(StatusOverride {
                    status,
                    operator_id: operator_id.to_string(),
                    set_at: epoch_ms(),
                });
                entry.source = RecordSource::Override;
                entry.confidence = 1.0;
                ControlEvent::OverrideSet {
                    track_id,
                    status: status.as_str().to_string(),
                    operator_id: operator_id.to_string(),
                }
            }
            None => {
                entry.state.clear_override();
                entry.source = RecordSource::Auto;
                entry.confidence = mean_probability(&entry.state, entry.state.current_status());
                ControlEvent::OverrideCleared {
                    track_id,
                    operator_id: operator_id.to_string(),
                }
            }
        };
        let record = Self::record_for(entry, track_id, Duration::ZERO);
        if !self.publish_locked(&record, started) {
            return Err(OverrideError::Closed);
        }
        let _ = self.bus.publish(Topic::Control, BusEvent::Control(control));
        Ok(ResultRecord {
            publish_latency_ms: started.elapsed().as_secs_f64() * 1e3,
            ..record
        })
    }

    /// Unexpired tracks, ordered by id.
    pub fn tracks(&self) -> Vec<TrackView> {
        let now = Instant::now();
        let tracks = self.tracks.lock().expect("board lock");
        let mut out: Vec<TrackView> = tracks
            .iter()
            .filter(|(_, e)| now.duration_since(e.last_seen) <= self.expiry)
            .map(|(id, e)| TrackView {
                track_id: *id,
                video_id: e.video_id.clone(),
                status: e.state.current_status(),
                source: e.source,
                confidence: e.confidence,
                frame_index: e.frame_index,
                timestamp_ms: e.timestamp_ms,
                bbox: e.bbox,
                last_seen_ms_ago: now.duration_since(e.last_seen).as_millis() as u64,
                status_override: e.state.status_override().cloned(),
            })
            .collect();
        out.sort_by_key(|t| t.track_id);
        out
    }

    /// Latest frame plus alarms no older than `alarm_window` frames.
    pub fn latest_frame(&self, alarm_window: u64) -> Option<LatestFrame> {
        let mut latest = self.latest.lock().expect("board lock").clone()?;
        let alarms = self.alarms.lock().expect("board lock");
        let f = latest.frame.frame_index;
        latest.records.extend(
            alarms
                .iter()
                .filter(|a| a.frame_index <= f && f - a.frame_index <= alarm_window)
                .cloned(),
        );
        Some(latest)
    }

    /// Drops tracks not seen within the expiry window.
    pub fn prune_expired(&self) -> usize {
        let now = Instant::now();
        let mut tracks = self.tracks.lock().expect("board lock");
        let before = tracks.len();
        tracks.retain(|_, e| now.duration_since(e.last_seen) <= self.expiry);
        before - tracks.len()
    }
}
