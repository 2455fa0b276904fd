use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;
use std::time::Duration;

use crossbeam_channel::{bounded, Receiver, RecvTimeoutError, Sender};

use super::wire::Shipment;

#[derive(Debug, Default)]
struct Counters {
    sent_episodes: AtomicU64,
    sent_trajectories: AtomicU64,
}

/// Producer half of a [`sample_channel`]. Sending blocks while the channel
/// is full; whole episodes travel as one message.
pub struct SampleSender<S> {
    tx: Sender<Shipment<S>>,
    counters: Arc<Counters>,
}

impl<S> Clone for SampleSender<S> {
    fn clone(&self) -> Self {
        SampleSender { tx: self.tx.clone(), counters: self.counters.clone() }
    }
}

/// The learner side has hung up.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Closed;

impl<S> SampleSender<S> {
    pub fn send(&self, s: Shipment<S>) -> Result<(), Closed> {
        let n = s.data.trajectories.len() as u64;
        self.tx.send(s).map_err(|_| Closed)?;
        self.counters.sent_episodes.fetch_add(1, Ordering::Relaxed);
        self.counters.sent_trajectories.fetch_add(n, Ordering::Relaxed);
        Ok(())
    }
}

pub enum Recv<S> {
    Shipment(Shipment<S>),
    Timeout,
    /// Every sender is gone and the queue is drained.
    Closed,
}

pub struct SampleReceiver<S> {
    rx: Receiver<Shipment<S>>,
    counters: Arc<Counters>,
}

impl<S> SampleReceiver<S> {
    pub fn recv_timeout(&self, d: Duration) -> Recv<S> {
        match self.rx.recv_timeout(d) {
            Ok(s) => Recv::Shipment(s),
            Err(RecvTimeoutError::Timeout) => Recv::Timeout,
            Err(RecvTimeoutError::Disconnected) => Recv::Closed,
        }
    }

    pub fn len(&self) -> usize {
        self.rx.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rx.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.rx.capacity().unwrap_or(usize::MAX)
    }

    /// Episodes handed to the channel by all senders so far.
    pub fn sent_episodes(&self) -> u64 {
        self.counters.sent_episodes.load(Ordering::Relaxed)
    }

    pub fn sent_trajectories(&self) -> u64 {
        self.counters.sent_trajectories.load(Ordering::Relaxed)
    }
}

/// Bounded FIFO from actors to the learner holding at most `capacity`
/// episodes.
pub fn sample_channel<S>(capacity: usize) -> (SampleSender<S>, SampleReceiver<S>) {
    let (tx, rx) = bounded(capacity.max(1));
    let counters = Arc::new(Counters::default());
    (SampleSender { tx, counters: counters.clone() }, SampleReceiver { rx, counters })
}
