//! Outbound message arbiter shared by the dataplane and the channel writer.

use std::collections::VecDeque;
use std::sync::atomic::{AtomicU32, AtomicU64, Ordering};
use std::sync::{Condvar, Mutex, MutexGuard};
use std::time::Duration;

use super::message::{Message, OfpMessage};

/// Priority classes, highest first.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Class {
    PacketIn = 0,
    Statistics = 1,
    SwitchConfig = 2,
    Keepalive = 3,
}

impl Class {
    pub const ALL: [Class; 4] = [
        Class::PacketIn,
        Class::Statistics,
        Class::SwitchConfig,
        Class::Keepalive,
    ];

    pub fn of(msg: &Message) -> Class {
        match msg {
            Message::PacketIn(_) => Class::PacketIn,
            Message::MultipartReply(_) | Message::MultipartRequest(_) => Class::Statistics,
            Message::Hello(_) | Message::EchoRequest(_) | Message::EchoReply(_) => Class::Keepalive,
            _ => Class::SwitchConfig,
        }
    }
}

#[derive(Default)]
struct Inner {
    classes: [VecDeque<OfpMessage>; 4],
    closed: bool,
}

/// Four FIFO classes drained in strict priority order. Only the packet-in
/// class is bounded; a full class rejects new packet-ins.
pub struct OutboundQueue {
    inner: Mutex<Inner>,
    ready: Condvar,
    packet_in_limit: usize,
    next_xid: AtomicU32,
    rejected: AtomicU64,
}

impl OutboundQueue {
    pub fn new(packet_in_limit: usize) -> Self {
        OutboundQueue {
            inner: Mutex::new(Inner::default()),
            ready: Condvar::new(),
            packet_in_limit,
            next_xid: AtomicU32::new(1),
            rejected: AtomicU64::new(0),
        }
    }

    fn lock(&self) -> MutexGuard<'_, Inner> {
        self.inner.lock().unwrap_or_else(|e| e.into_inner())
    }

    /// Transaction id for a switch-initiated message.
    pub fn next_xid(&self) -> u32 {
        self.next_xid.fetch_add(1, Ordering::Relaxed)
    }

    /// Queues `msg`; hands it back when its class is full.
    #[allow(clippy::result_large_err)]
    pub fn push(&self, msg: OfpMessage) -> Result<(), OfpMessage> {
        let class = Class::of(&msg.body);
        let mut g = self.lock();
        let q = &mut g.classes[class as usize];
        if class == Class::PacketIn && q.len() >= self.packet_in_limit {
            drop(g);
            self.rejected.fetch_add(1, Ordering::Relaxed);
            return Err(msg);
        }
        q.push_back(msg);
        drop(g);
        self.ready.notify_one();
        Ok(())
    }

    /// Oldest message of the highest non-empty class.
    pub fn pop(&self) -> Option<OfpMessage> {
        Self::take(&mut self.lock())
    }

    fn take(g: &mut Inner) -> Option<OfpMessage> {
        g.classes.iter_mut().find_map(VecDeque::pop_front)
    }

    /// Like [`pop`](Self::pop) but waits up to `timeout` for a message.
    /// Returns `None` on timeout or once the queue is closed and empty.
    pub fn pop_wait(&self, timeout: Duration) -> Option<OfpMessage> {
        let mut g = self.lock();
        if let Some(m) = Self::take(&mut g) {
            return Some(m);
        }
        if g.closed {
            return None;
        }
        let (mut g, _) = self
            .ready
            .wait_timeout_while(g, timeout, |i| {
                !i.closed && i.classes.iter().all(VecDeque::is_empty)
            })
            .unwrap_or_else(|e| e.into_inner());
        Self::take(&mut g)
    }

    pub fn len(&self) -> usize {
        self.lock().classes.iter().map(VecDeque::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn class_len(&self, class: Class) -> usize {
        self.lock().classes[class as usize].len()
    }

    /// Packet-ins refused because their class was full.
    pub fn rejected(&self) -> u64 {
        self.rejected.load(Ordering::Relaxed)
    }

    /// Removes every queued message.
    pub fn drain(&self) -> Vec<OfpMessage> {
        let mut g = self.lock();
        let mut out = Vec::new();
        while let Some(m) = Self::take(&mut g) {
            out.push(m);
        }
        out
    }

    /// Wakes blocked consumers.
    pub fn close(&self) {
        self.lock().closed = true;
        self.ready.notify_all();
    }

    pub fn reopen(&self) {
        self.lock().closed = false;
    }
}

impl Default for OutboundQueue {
    fn default() -> Self {
        OutboundQueue::new(4096)
    }
}
