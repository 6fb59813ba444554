use std::collections::VecDeque;
use std::str::FromStr;
use std::sync::{Condvar, Mutex};
use std::time::Duration;

use serde::{Deserialize, Serialize};

/// What to do with a new frame when the admission queue is full.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DropPolicy {
    /// Evict the oldest queued frame and admit the new one.
    #[default]
    DropOldest,
    /// Stall the producer until there is room.
    Block,
}

impl FromStr for DropPolicy {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "drop_oldest" => Ok(DropPolicy::DropOldest),
            "block" => Ok(DropPolicy::Block),
            other => Err(format!("unknown drop policy {other:?}")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Admission {
    Admitted,
    /// Admitted after evicting the frame with this index.
    Evicted(u64),
    /// The queue was closed; the frame was not counted.
    Closed,
}

/// Counters taken under the queue lock, so
/// `frames_in == processed + dropped + queued` always holds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
pub struct QueueCounts {
    pub frames_in: u64,
    pub processed: u64,
    pub dropped: u64,
    pub queued: u64,
}

struct State<T> {
    items: VecDeque<(u64, T)>,
    counts: QueueCounts,
    closed: bool,
    recent_drops: VecDeque<u64>,
}

const DROP_LOG_LEN: usize = 256;

/// Bounded single-consumer frame queue with an admission policy.
pub struct FrameQueue<T> {
    capacity: usize,
    policy: DropPolicy,
    state: Mutex<State<T>>,
    not_empty: Condvar,
    not_full: Condvar,
}

impl<T> FrameQueue<T> {
    pub fn new(capacity: usize, policy: DropPolicy) -> Self {
        FrameQueue {
            capacity: capacity.max(1),
            policy,
            state: Mutex::new(State {
                items: VecDeque::with_capacity(capacity.max(1)),
                counts: QueueCounts::default(),
                closed: false,
                recent_drops: VecDeque::new(),
            }),
            not_empty: Condvar::new(),
            not_full: Condvar::new(),
        }
    }

    pub fn policy(&self) -> DropPolicy {
        self.policy
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    /// Offers a frame. Under [`DropPolicy::Block`] this waits for room.
    pub fn admit(&self, frame_index: u64, item: T) -> Admission {
        let mut st = self.state.lock().expect("queue lock");
        if self.policy == DropPolicy::Block {
            while st.items.len() >= self.capacity && !st.closed {
                st = self.not_full.wait(st).expect("queue lock");
            }
        }
        if st.closed {
            return Admission::Closed;
        }
        st.counts.frames_in += 1;
        let mut outcome = Admission::Admitted;
        if st.items.len() >= self.capacity {
            let (old, _) = st.items.pop_front().expect("full queue is non-empty");
            st.counts.dropped += 1;
            if st.recent_drops.len() == DROP_LOG_LEN {
                st.recent_drops.pop_front();
            }
            st.recent_drops.push_back(old);
            log::debug!("dropped frame {old}");
            outcome = Admission::Evicted(old);
        }
        st.items.push_back((frame_index, item));
        st.counts.queued = st.items.len() as u64;
        drop(st);
        self.not_empty.notify_one();
        outcome
    }

    /// Takes the oldest frame, waiting while the queue is empty and open.
    /// `None` once closed and drained.
    pub fn pop(&self) -> Option<(u64, T)> {
        let mut st = self.state.lock().expect("queue lock");
        loop {
            if let Some(item) = st.items.pop_front() {
                st.counts.processed += 1;
                st.counts.queued = st.items.len() as u64;
                drop(st);
                self.not_full.notify_one();
                return Some(item);
            }
            if st.closed {
                return None;
            }
            st = self.not_empty.wait(st).expect("queue lock");
        }
    }

    pub fn pop_timeout(&self, timeout: Duration) -> Option<(u64, T)> {
        let mut st = self.state.lock().expect("queue lock");
        if st.items.is_empty() && !st.closed {
            st = self.not_empty.wait_timeout(st, timeout).expect("queue lock").0;
        }
        let item = st.items.pop_front()?;
        st.counts.processed += 1;
        st.counts.queued = st.items.len() as u64;
        drop(st);
        self.not_full.notify_one();
        Some(item)
    }

    /// Stops admission; queued frames stay available to the consumer.
    pub fn close(&self) {
        self.state.lock().expect("queue lock").closed = true;
        self.not_empty.notify_all();
        self.not_full.notify_all();
    }

    pub fn counts(&self) -> QueueCounts {
        self.state.lock().expect("queue lock").counts
    }

    pub fn queued_indices(&self) -> Vec<u64> {
        self.state
            .lock()
            .expect("queue lock")
            .items
            .iter()
            .map(|(i, _)| *i)
            .collect()
    }

    /// Indices of the most recently dropped frames, oldest first.
    pub fn recent_drops(&self) -> Vec<u64> {
        self.state.lock().expect("queue lock").recent_drops.iter().copied().collect()
    }
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use proptest::prelude::*;

    use super::*;

    #[test]
    fn drop_oldest_evicts_head() {
        let q = FrameQueue::new(2, DropPolicy::DropOldest);
        q.admit(5, ());
        q.admit(6, ());
        assert_eq!(q.admit(7, ()), Admission::Evicted(5));
        assert_eq!(q.queued_indices(), vec![6, 7]);
        assert_eq!(q.counts().dropped, 1);
        assert_eq!(q.recent_drops(), vec![5]);
    }

    #[test]
    fn block_stalls_until_consumer_pops() {
        let q = Arc::new(FrameQueue::new(2, DropPolicy::Block));
        q.admit(5, ());
        q.admit(6, ());
        let producer = {
            let q = q.clone();
            std::thread::spawn(move || q.admit(7, ()))
        };
        std::thread::sleep(Duration::from_millis(50));
        assert!(!producer.is_finished());
        assert_eq!(q.queued_indices(), vec![5, 6]);
        assert_eq!(q.pop().map(|(i, _)| i), Some(5));
        assert_eq!(producer.join().unwrap(), Admission::Admitted);
        assert_eq!(q.queued_indices(), vec![6, 7]);
        assert_eq!(q.counts().dropped, 0);
    }

    #[test]
    fn empty_queue_always_admits() {
        for policy in [DropPolicy::DropOldest, DropPolicy::Block] {
            let q = FrameQueue::new(1, policy);
            assert_eq!(q.admit(0, ()), Admission::Admitted);
        }
    }

    #[test]
    fn close_wakes_blocked_producer_and_drains() {
        let q = Arc::new(FrameQueue::new(1, DropPolicy::Block));
        q.admit(0, ());
        let producer = {
            let q = q.clone();
            std::thread::spawn(move || q.admit(1, ()))
        };
        std::thread::sleep(Duration::from_millis(20));
        q.close();
        assert_eq!(producer.join().unwrap(), Admission::Closed);
        assert_eq!(q.pop().map(|(i, _)| i), Some(0));
        assert_eq!(q.pop(), None);
        let c = q.counts();
        assert_eq!((c.frames_in, c.processed), (1, 1));
    }

    proptest! {
        #[test]
        fn counts_are_conserved(ops in proptest::collection::vec(any::<bool>(), 1..200), cap in 1usize..6) {
            let q = FrameQueue::new(cap, DropPolicy::DropOldest);
            let mut next = 0;
            let mut popped = Vec::new();
            for push in ops {
                if push {
                    q.admit(next, ());
                    next += 1;
                } else if let Some((i, _)) = q.pop_timeout(Duration::ZERO) {
                    popped.push(i);
                }
                let c = q.counts();
                prop_assert_eq!(c.frames_in, c.processed + c.dropped + c.queued);
                prop_assert!(c.queued as usize <= cap);
            }
            prop_assert!(popped.windows(2).all(|w| w[0] < w[1]));
        }
    }
}
