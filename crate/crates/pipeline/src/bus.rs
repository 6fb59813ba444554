//! In-process topic bus.
//!
//! Publishing never blocks: a subscriber whose buffer is full is
//! disconnected and counted. Each topic keeps a bounded history ring that
//! `SubscribeFrom::All` subscribers replay first.

use std::collections::VecDeque;
use std::fmt;
use std::str::FromStr;
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::{Arc, Mutex};
use std::time::Duration;

use crossbeam_channel::{bounded, Receiver, RecvTimeoutError, Sender, TrySendError};
use serde::Serialize;

use crate::metrics::MetricsSnapshot;
use crate::record::ResultRecord;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Topic {
    Results,
    Alarms,
    Metrics,
    Control,
}

impl Topic {
    pub const ALL: [Topic; 4] = [Topic::Results, Topic::Alarms, Topic::Metrics, Topic::Control];

    fn slot(self) -> usize {
        self as usize
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Topic::Results => "results",
            Topic::Alarms => "alarms",
            Topic::Metrics => "metrics",
            Topic::Control => "control",
        }
    }
}

impl fmt::Display for Topic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Topic {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Topic::ALL
            .into_iter()
            .find(|t| t.as_str() == s)
            .ok_or_else(|| format!("unknown topic {s:?}"))
    }
}

/// Operator actions echoed on the control topic.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "action", rename_all = "snake_case")]
pub enum ControlEvent {
    OverrideSet {
        track_id: u64,
        status: String,
        operator_id: String,
    },
    OverrideCleared {
        track_id: u64,
        operator_id: String,
    },
    StopRequested,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", content = "body", rename_all = "snake_case")]
pub enum BusEvent {
    Record(ResultRecord),
    Metrics(Box<MetricsSnapshot>),
    Control(ControlEvent),
    /// Terminal marker; nothing follows it on any topic.
    EndOfStream,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SubscribeFrom {
    Latest,
    All,
}

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum BusError {
    #[error("bus is closed")]
    Closed,
}

struct Subscriber {
    tx: Sender<Arc<BusEvent>>,
    kicked: Arc<AtomicBool>,
}

#[derive(Default)]
struct TopicState {
    history: VecDeque<Arc<BusEvent>>,
    subscribers: Vec<Subscriber>,
    published: u64,
}

struct Inner {
    topics: [Mutex<TopicState>; 4],
    closed: AtomicBool,
    history_capacity: usize,
    subscriber_buffer: usize,
    slow_consumers: AtomicU64,
}

/// Cheaply cloneable handle to a shared bus.
#[derive(Clone)]
pub struct Bus {
    inner: Arc<Inner>,
}

impl fmt::Debug for Bus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Bus")
            .field("closed", &self.is_closed())
            .field("slow_consumers", &self.slow_consumers())
            .finish()
    }
}

impl Bus {
    pub fn new(history_capacity: usize, subscriber_buffer: usize) -> Self {
        Bus {
            inner: Arc::new(Inner {
                topics: Default::default(),
                closed: AtomicBool::new(false),
                history_capacity,
                subscriber_buffer: subscriber_buffer.max(1),
                slow_consumers: AtomicU64::new(0),
            }),
        }
    }

    pub fn publish(&self, topic: Topic, event: BusEvent) -> Result<(), BusError> {
        let mut st = self.inner.topics[topic.slot()].lock().expect("bus lock");
        if self.inner.closed.load(Ordering::SeqCst) {
            return Err(BusError::Closed);
        }
        self.deliver(&mut st, Arc::new(event));
        Ok(())
    }

    fn deliver(&self, st: &mut TopicState, event: Arc<BusEvent>) {
        st.published += 1;
        if self.inner.history_capacity > 0 {
            if st.history.len() == self.inner.history_capacity {
                st.history.pop_front();
            }
            st.history.push_back(event.clone());
        }
        st.subscribers.retain(|s| match s.tx.try_send(event.clone()) {
            Ok(()) => true,
            Err(TrySendError::Full(_)) => {
                s.kicked.store(true, Ordering::SeqCst);
                self.inner.slow_consumers.fetch_add(1, Ordering::SeqCst);
                log::warn!("disconnected slow bus subscriber");
                false
            }
            Err(TrySendError::Disconnected(_)) => false,
        });
    }

    pub fn subscribe(&self, topic: Topic, from: SubscribeFrom) -> Subscription {
        self.subscribe_with_buffer(topic, from, self.inner.subscriber_buffer)
    }

    /// Like [`Bus::subscribe`] with a per-subscriber buffer size.
    pub fn subscribe_with_buffer(&self, topic: Topic, from: SubscribeFrom, buffer: usize) -> Subscription {
        let mut st = self.inner.topics[topic.slot()].lock().expect("bus lock");
        let replay: Vec<Arc<BusEvent>> = match from {
            SubscribeFrom::All => st.history.iter().cloned().collect(),
            SubscribeFrom::Latest => Vec::new(),
        };
        let (tx, rx) = bounded(buffer.max(1) + replay.len());
        let replayed_end = replay.last().is_some_and(|e| **e == BusEvent::EndOfStream);
        for e in replay {
            tx.try_send(e).expect("capacity covers replay");
        }
        let kicked = Arc::new(AtomicBool::new(false));
        if self.inner.closed.load(Ordering::SeqCst) {
            if !replayed_end {
                tx.try_send(Arc::new(BusEvent::EndOfStream)).ok();
            }
        } else {
            st.subscribers.push(Subscriber {
                tx,
                kicked: kicked.clone(),
            });
        }
        Subscription { topic, rx, kicked }
    }

    /// Publishes the terminal marker on every topic and refuses further
    /// publishes. Idempotent.
    pub fn close(&self) {
        let mut guards: Vec<_> = self
            .inner
            .topics
            .iter()
            .map(|t| t.lock().expect("bus lock"))
            .collect();
        if self.inner.closed.swap(true, Ordering::SeqCst) {
            return;
        }
        let end = Arc::new(BusEvent::EndOfStream);
        for st in guards.iter_mut() {
            self.deliver(st, end.clone());
            st.subscribers.clear();
        }
    }

    pub fn is_closed(&self) -> bool {
        self.inner.closed.load(Ordering::SeqCst)
    }

    pub fn slow_consumers(&self) -> u64 {
        self.inner.slow_consumers.load(Ordering::SeqCst)
    }

    /// Events published on `topic`, including the terminal marker.
    pub fn published(&self, topic: Topic) -> u64 {
        self.inner.topics[topic.slot()].lock().expect("bus lock").published
    }

    pub fn subscriber_count(&self, topic: Topic) -> usize {
        self.inner.topics[topic.slot()].lock().expect("bus lock").subscribers.len()
    }
}

#[derive(Debug, PartialEq)]
pub enum Delivery {
    Event(Arc<BusEvent>),
    /// No event within the timeout.
    Idle,
    /// The bus dropped this subscriber for falling behind.
    SlowConsumer,
    /// Channel closed after the terminal marker was consumed.
    Closed,
}

pub struct Subscription {
    topic: Topic,
    rx: Receiver<Arc<BusEvent>>,
    kicked: Arc<AtomicBool>,
}

impl Subscription {
    pub fn topic(&self) -> Topic {
        self.topic
    }

    fn on_disconnect(&self) -> Delivery {
        if self.kicked.load(Ordering::SeqCst) {
            Delivery::SlowConsumer
        } else {
            Delivery::Closed
        }
    }

    pub fn recv_timeout(&self, timeout: Duration) -> Delivery {
        match self.rx.recv_timeout(timeout) {
            Ok(e) => Delivery::Event(e),
            Err(RecvTimeoutError::Timeout) => Delivery::Idle,
            Err(RecvTimeoutError::Disconnected) => self.on_disconnect(),
        }
    }

    /// Blocks for the next event. `None` once the stream has ended or this
    /// subscriber was dropped.
    pub fn recv(&self) -> Option<Arc<BusEvent>> {
        self.rx.recv().ok()
    }

    pub fn try_recv(&self) -> Option<Arc<BusEvent>> {
        self.rx.try_recv().ok()
    }

    pub fn was_disconnected_as_slow(&self) -> bool {
        self.kicked.load(Ordering::SeqCst)
    }

    /// Events until the terminal marker, exclusive. Stops early if this
    /// subscriber is disconnected.
    pub fn drain_until_end(&self) -> Vec<Arc<BusEvent>> {
        let mut out = Vec::new();
        while let Some(e) = self.recv() {
            if *e == BusEvent::EndOfStream {
                break;
            }
            out.push(e);
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use triage_core::model::{BBox, SceneCategory};

    use crate::record::RecordSource;

    fn rec(track_id: u64, frame_index: u64) -> BusEvent {
        BusEvent::Record(ResultRecord {
            video_id: "v".into(),
            frame_index,
            timestamp_ms: 0,
            track_id,
            bbox: BBox { x: 0, y: 0, w: 1, h: 1 },
            category: SceneCategory::Safe,
            confidence: 1.0,
            source: RecordSource::Auto,
            publish_latency_ms: 0.0,
        })
    }

    fn frame_of(e: &BusEvent) -> (u64, u64) {
        match e {
            BusEvent::Record(r) => (r.track_id, r.frame_index),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn subscribers_see_publish_order() {
        let bus = Bus::new(16, 16);
        let a = bus.subscribe(Topic::Results, SubscribeFrom::Latest);
        bus.publish(Topic::Results, rec(1, 1)).unwrap();
        bus.publish(Topic::Results, rec(1, 2)).unwrap();
        bus.close();
        let got: Vec<_> = a.drain_until_end().iter().map(|e| frame_of(e)).collect();
        assert_eq!(got, vec![(1, 1), (1, 2)]);
    }

    #[test]
    fn latest_skips_history_and_all_replays_it() {
        let bus = Bus::new(16, 16);
        bus.publish(Topic::Results, rec(1, 1)).unwrap();
        let latest = bus.subscribe(Topic::Results, SubscribeFrom::Latest);
        let all = bus.subscribe(Topic::Results, SubscribeFrom::All);
        bus.publish(Topic::Results, rec(1, 2)).unwrap();
        bus.close();
        let l: Vec<_> = latest.drain_until_end().iter().map(|e| frame_of(e)).collect();
        let a: Vec<_> = all.drain_until_end().iter().map(|e| frame_of(e)).collect();
        assert_eq!(l, vec![(1, 2)]);
        assert_eq!(a, vec![(1, 1), (1, 2)]);
    }

    #[test]
    fn history_ring_is_bounded() {
        let bus = Bus::new(3, 16);
        for i in 0..10 {
            bus.publish(Topic::Alarms, rec(0, i)).unwrap();
        }
        let all = bus.subscribe(Topic::Alarms, SubscribeFrom::All);
        bus.close();
        let got: Vec<_> = all.drain_until_end().iter().map(|e| frame_of(e).1).collect();
        assert_eq!(got, vec![7, 8, 9]);
    }

    #[test]
    fn slow_consumer_is_dropped_without_blocking() {
        let bus = Bus::new(0, 2);
        let slow = bus.subscribe(Topic::Results, SubscribeFrom::Latest);
        let fast = bus.subscribe_with_buffer(Topic::Results, SubscribeFrom::Latest, 2000);
        for i in 0..1000 {
            bus.publish(Topic::Results, rec(1, i)).unwrap();
        }
        assert_eq!(bus.slow_consumers(), 1);
        assert!(slow.was_disconnected_as_slow());
        assert_eq!(slow.try_recv().map(|e| frame_of(&e)), Some((1, 0)));
        assert_eq!(slow.try_recv().map(|e| frame_of(&e)), Some((1, 1)));
        assert_eq!(slow.recv_timeout(Duration::from_millis(10)), Delivery::SlowConsumer);
        bus.close();
        assert_eq!(fast.drain_until_end().len(), 1000);
    }

    #[test]
    fn closed_bus_rejects_publishes() {
        let bus = Bus::new(4, 4);
        bus.close();
        bus.close();
        assert_eq!(bus.publish(Topic::Results, rec(1, 1)), Err(BusError::Closed));
        let late = bus.subscribe(Topic::Results, SubscribeFrom::Latest);
        assert_eq!(late.recv().as_deref(), Some(&BusEvent::EndOfStream));
        assert_eq!(bus.published(Topic::Results), 1);
    }

    #[test]
    fn interleaved_tracks_keep_their_own_order() {
        let bus = Bus::new(0, 4096);
        let sub = bus.subscribe(Topic::Results, SubscribeFrom::Latest);
        let publishers: Vec<_> = (1..=4)
            .map(|track| {
                let bus = bus.clone();
                std::thread::spawn(move || {
                    for f in 0..200 {
                        bus.publish(Topic::Results, rec(track, f)).unwrap();
                    }
                })
            })
            .collect();
        for p in publishers {
            p.join().unwrap();
        }
        bus.close();
        let mut last = std::collections::HashMap::new();
        for e in sub.drain_until_end() {
            let (t, f) = frame_of(&e);
            if let Some(prev) = last.insert(t, f) {
                assert!(f > prev);
            }
        }
        assert_eq!(last.len(), 4);
    }
}
