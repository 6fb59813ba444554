use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Mutex;
use std::time::{Duration, Instant};

use hdrhistogram::Histogram;
use serde::{Deserialize, Serialize};

use crate::queue::QueueCounts;

/// Highest latency the histogram resolves, in microseconds.
const MAX_TRACKED_US: u64 = 600_000_000;

struct Published {
    latency_us: Histogram<u64>,
    results: u64,
    overrides: u64,
}

/// Run-wide counters shared by all stages.
pub struct Metrics {
    started: Instant,
    finished: Mutex<Option<Instant>>,
    pub clips_emitted: AtomicU64,
    pub clips_classified: AtomicU64,
    pub clip_failures: AtomicU64,
    pub remote_timeouts: AtomicU64,
    pub alarms_published: AtomicU64,
    pub auto_suppressed: AtomicU64,
    published: Mutex<Published>,
}

impl Default for Metrics {
    fn default() -> Self {
        Self::new()
    }
}

impl Metrics {
    pub fn new() -> Self {
        Metrics {
            started: Instant::now(),
            finished: Mutex::new(None),
            clips_emitted: AtomicU64::new(0),
            clips_classified: AtomicU64::new(0),
            clip_failures: AtomicU64::new(0),
            remote_timeouts: AtomicU64::new(0),
            alarms_published: AtomicU64::new(0),
            auto_suppressed: AtomicU64::new(0),
            published: Mutex::new(Published {
                latency_us: Histogram::new_with_bounds(1, MAX_TRACKED_US, 3).expect("valid bounds"),
                results: 0,
                overrides: 0,
            }),
        }
    }

    /// Counts one result publish and its capture-to-publish latency.
    pub fn record_publish(&self, latency: Duration, is_override: bool) {
        let us = (latency.as_micros() as u64).clamp(1, MAX_TRACKED_US);
        let mut p = self.published.lock().expect("metrics lock");
        p.latency_us.record(us).expect("value within bounds");
        p.results += 1;
        if is_override {
            p.overrides += 1;
        }
    }

    pub fn mark_finished(&self) {
        self.finished.lock().expect("metrics lock").get_or_insert_with(Instant::now);
    }

    pub fn inc(counter: &AtomicU64) {
        counter.fetch_add(1, Ordering::Relaxed);
    }

    pub fn snapshot(&self, frames: QueueCounts, depths: QueueDepths, slow_consumers: u64) -> MetricsSnapshot {
        let end = self.finished.lock().expect("metrics lock").unwrap_or_else(Instant::now);
        let elapsed_s = end.duration_since(self.started).as_secs_f64();
        let p = self.published.lock().expect("metrics lock");
        let h = &p.latency_us;
        let q = |quantile: f64| {
            if h.is_empty() {
                0.0
            } else {
                h.value_at_quantile(quantile) as f64 / 1e3
            }
        };
        MetricsSnapshot {
            elapsed_s,
            frames_in: frames.frames_in,
            frames_processed: frames.processed,
            frames_dropped: frames.dropped,
            frames_queued: frames.queued,
            admitted_fps: if elapsed_s > 0.0 {
                (frames.frames_in - frames.dropped) as f64 / elapsed_s
            } else {
                0.0
            },
            clips_emitted: self.clips_emitted.load(Ordering::Relaxed),
            clips_classified: self.clips_classified.load(Ordering::Relaxed),
            clip_failures: self.clip_failures.load(Ordering::Relaxed),
            remote_timeouts: self.remote_timeouts.load(Ordering::Relaxed),
            results_published: p.results,
            override_publishes: p.overrides,
            auto_suppressed: self.auto_suppressed.load(Ordering::Relaxed),
            alarms_published: self.alarms_published.load(Ordering::Relaxed),
            slow_consumers,
            queue_depths: depths,
            latency: LatencySummary {
                count: h.len(),
                mean_ms: if h.is_empty() { 0.0 } else { h.mean() / 1e3 },
                p50_ms: q(0.50),
                p95_ms: q(0.95),
                p99_ms: q(0.99),
                max_ms: if h.is_empty() { 0.0 } else { h.max() as f64 / 1e3 },
            },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct QueueDepths {
    pub frames: u64,
    pub clips: u64,
    pub classified: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct LatencySummary {
    pub count: u64,
    pub mean_ms: f64,
    pub p50_ms: f64,
    pub p95_ms: f64,
    pub p99_ms: f64,
    pub max_ms: f64,
}

/// Point-in-time view of a run.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct MetricsSnapshot {
    pub elapsed_s: f64,
    pub frames_in: u64,
    pub frames_processed: u64,
    pub frames_dropped: u64,
    pub frames_queued: u64,
    /// Frames that entered processing per second of run time.
    pub admitted_fps: f64,
    pub clips_emitted: u64,
    pub clips_classified: u64,
    /// Clips whose classification failed (timeouts included).
    pub clip_failures: u64,
    pub remote_timeouts: u64,
    /// Result-topic publishes, auto and override.
    pub results_published: u64,
    pub override_publishes: u64,
    /// Auto results published under an active override.
    pub auto_suppressed: u64,
    pub alarms_published: u64,
    pub slow_consumers: u64,
    pub queue_depths: QueueDepths,
    pub latency: LatencySummary,
}

impl MetricsSnapshot {
    pub fn is_conserved(&self) -> bool {
        self.frames_in == self.frames_processed + self.frames_dropped + self.frames_queued
    }
}
