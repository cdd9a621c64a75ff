//! Subject-routed publish/subscribe bus carrying CSI indications up and PMI
//! control down.
//!
//! [`Bus`] is the in-process transport: publishing fans a message out to the
//! queue of every subscriber whose pattern matches, under one lock, so all
//! subscribers observe publishes in the same order. Subscribers drain their
//! queue whenever they like. [`tcp`] exposes the same bus over NDJSON sockets.

pub mod message;
pub mod subject;
pub mod tcp;

use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::mpsc::{self, Receiver, RecvTimeoutError, Sender, TryRecvError};
use std::sync::{Arc, Mutex};
use std::time::Duration;

pub use message::{
    decode, encode, Assignment, BusMessage, ControlDirective, FrameDecoder, Payload, SubbandScope,
};
pub use subject::{Pattern, Subject};

use crate::error::{Error, Result};

struct Subscriber {
    id: u64,
    pattern: Pattern,
    tx: Sender<BusMessage>,
}

#[derive(Default)]
struct Inner {
    subscribers: Mutex<Vec<Subscriber>>,
    next_id: AtomicU64,
}

/// Cheaply cloneable handle to one bus.
#[derive(Clone, Default)]
pub struct Bus {
    inner: Arc<Inner>,
}

impl std::fmt::Debug for Bus {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Bus")
            .field("subscribers", &self.subscriber_count())
            .finish()
    }
}

impl Bus {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn subscribe(&self, pattern: &str) -> Result<Subscription> {
        let pattern = Pattern::parse(pattern)?;
        let (tx, rx) = mpsc::channel();
        let id = self.inner.next_id.fetch_add(1, Ordering::Relaxed);
        self.lock().push(Subscriber {
            id,
            pattern: pattern.clone(),
            tx,
        });
        Ok(Subscription {
            id,
            pattern,
            rx,
            bus: self.clone(),
        })
    }

    /// Delivers `msg` to every matching subscriber and returns how many
    /// received it. Subscribers whose receiving end is gone are removed.
    pub fn publish(&self, msg: BusMessage) -> Result<usize> {
        msg.validate()?;
        let mut subs = self.lock();
        let mut delivered = 0;
        subs.retain(|s| {
            if !s.pattern.matches(&msg.subject) {
                return true;
            }
            let ok = s.tx.send(msg.clone()).is_ok();
            delivered += ok as usize;
            ok
        });
        Ok(delivered)
    }

    pub fn subscriber_count(&self) -> usize {
        self.lock().len()
    }

    fn unsubscribe(&self, id: u64) {
        self.lock().retain(|s| s.id != id);
    }

    fn lock(&self) -> std::sync::MutexGuard<'_, Vec<Subscriber>> {
        self.inner
            .subscribers
            .lock()
            .unwrap_or_else(|poisoned| poisoned.into_inner())
    }
}

/// Receiving end of a subscription. Dropping it unsubscribes.
pub struct Subscription {
    id: u64,
    pattern: Pattern,
    rx: Receiver<BusMessage>,
    bus: Bus,
}

impl std::fmt::Debug for Subscription {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Subscription")
            .field("id", &self.id)
            .field("pattern", &self.pattern.as_str())
            .finish()
    }
}

impl Subscription {
    pub fn pattern(&self) -> &str {
        self.pattern.as_str()
    }

    /// Everything queued so far, in delivery order.
    pub fn drain(&self) -> Vec<BusMessage> {
        let mut out = Vec::new();
        loop {
            match self.rx.try_recv() {
                Ok(m) => out.push(m),
                Err(TryRecvError::Empty | TryRecvError::Disconnected) => return out,
            }
        }
    }

    pub fn recv_timeout(&self, timeout: Duration) -> Result<Option<BusMessage>> {
        match self.rx.recv_timeout(timeout) {
            Ok(m) => Ok(Some(m)),
            Err(RecvTimeoutError::Timeout) => Ok(None),
            Err(RecvTimeoutError::Disconnected) => Err(Error::Bus("subscription closed".into())),
        }
    }
}

impl Drop for Subscription {
    fn drop(&mut self) {
        self.bus.unsubscribe(self.id);
    }
}
