//! Bounded FIFO between pipeline stages.

use std::collections::VecDeque;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Condvar, Mutex};
use std::time::Duration;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum QueuePolicy {
    /// `push` waits for room.
    BlockProducer,
    /// `push` evicts the oldest item when full.
    DropOldest,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct QueueStats {
    pub capacity: usize,
    pub depth: usize,
    pub max_depth: usize,
    pub pushed: u64,
    pub popped: u64,
    pub dropped: u64,
}

/// Returned by `push` after `close`; carries the rejected item back.
#[derive(Debug, PartialEq, Eq)]
pub struct Closed<T>(pub T);

struct Inner<T> {
    items: VecDeque<T>,
    closed: bool,
    max_depth: usize,
}

pub struct BoundedQueue<T> {
    inner: Mutex<Inner<T>>,
    not_empty: Condvar,
    not_full: Condvar,
    capacity: usize,
    policy: QueuePolicy,
    pushed: AtomicU64,
    popped: AtomicU64,
    dropped: AtomicU64,
}

impl<T> BoundedQueue<T> {
    pub fn new(capacity: usize, policy: QueuePolicy) -> Self {
        assert!(capacity >= 1);
        Self {
            inner: Mutex::new(Inner {
                items: VecDeque::with_capacity(capacity),
                closed: false,
                max_depth: 0,
            }),
            not_empty: Condvar::new(),
            not_full: Condvar::new(),
            capacity,
            policy,
            pushed: AtomicU64::new(0),
            popped: AtomicU64::new(0),
            dropped: AtomicU64::new(0),
        }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn policy(&self) -> QueuePolicy {
        self.policy
    }

    pub fn push(&self, item: T) -> Result<(), Closed<T>> {
        let mut g = self.inner.lock().unwrap();
        loop {
            if g.closed {
                return Err(Closed(item));
            }
            if g.items.len() < self.capacity {
                break;
            }
            match self.policy {
                QueuePolicy::BlockProducer => g = self.not_full.wait(g).unwrap(),
                QueuePolicy::DropOldest => {
                    g.items.pop_front();
                    self.dropped.fetch_add(1, Ordering::Relaxed);
                }
            }
        }
        g.items.push_back(item);
        g.max_depth = g.max_depth.max(g.items.len());
        self.pushed.fetch_add(1, Ordering::Relaxed);
        drop(g);
        self.not_empty.notify_one();
        Ok(())
    }

    /// Waits for an item; `None` once the queue is closed and drained.
    pub fn pop(&self) -> Option<T> {
        let mut g = self.inner.lock().unwrap();
        loop {
            if let Some(item) = g.items.pop_front() {
                self.popped.fetch_add(1, Ordering::Relaxed);
                drop(g);
                self.not_full.notify_one();
                return Some(item);
            }
            if g.closed {
                return None;
            }
            g = self.not_empty.wait(g).unwrap();
        }
    }

    pub fn pop_timeout(&self, timeout: Duration) -> Option<T> {
        let mut g = self.inner.lock().unwrap();
        if g.items.is_empty() && !g.closed {
            g = self.not_empty.wait_timeout(g, timeout).unwrap().0;
        }
        let item = g.items.pop_front()?;
        self.popped.fetch_add(1, Ordering::Relaxed);
        drop(g);
        self.not_full.notify_one();
        Some(item)
    }

    pub fn try_pop(&self) -> Option<T> {
        self.pop_timeout(Duration::ZERO)
    }

    /// Rejects further pushes; consumers drain what is left.
    pub fn close(&self) {
        self.inner.lock().unwrap().closed = true;
        self.not_empty.notify_all();
        self.not_full.notify_all();
    }

    pub fn is_closed(&self) -> bool {
        self.inner.lock().unwrap().closed
    }

    pub fn depth(&self) -> usize {
        self.inner.lock().unwrap().items.len()
    }

    pub fn stats(&self) -> QueueStats {
        let g = self.inner.lock().unwrap();
        QueueStats {
            capacity: self.capacity,
            depth: g.items.len(),
            max_depth: g.max_depth,
            pushed: self.pushed.load(Ordering::Relaxed),
            popped: self.popped.load(Ordering::Relaxed),
            dropped: self.dropped.load(Ordering::Relaxed),
        }
    }
}

/// Type-erased view used for gauges and shutdown.
pub trait QueueHandle: Send + Sync {
    fn stats(&self) -> QueueStats;
    fn close(&self);
}

impl<T: Send> QueueHandle for BoundedQueue<T> {
    fn stats(&self) -> QueueStats {
        BoundedQueue::stats(self)
    }

    fn close(&self) {
        BoundedQueue::close(self)
    }
}
