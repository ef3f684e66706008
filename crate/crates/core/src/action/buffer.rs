use std::collections::HashMap;

use crate::packet::RawFrame;

/// `OFP_NO_BUFFER`.
pub const NO_BUFFER: u32 = 0xffff_ffff;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BufferedFrame {
    pub frame: RawFrame,
    pub miss_table: u8,
    pub buffered_at: u64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BufferOutcome {
    Buffered(u32),
    /// No free slot; the caller drops the frame.
    Full,
}

/// Frames waiting for a Packet-Out, keyed by buffer id.
#[derive(Debug)]
pub struct PacketBuffer {
    capacity: usize,
    ttl_ns: u64,
    slots: HashMap<u32, BufferedFrame>,
    next_id: u32,
}

impl PacketBuffer {
    pub fn new(capacity: usize, ttl_ns: u64) -> Self {
        PacketBuffer {
            capacity,
            ttl_ns,
            slots: HashMap::with_capacity(capacity),
            next_id: 1,
        }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.slots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.slots.is_empty()
    }

    pub fn contains(&self, id: u32) -> bool {
        self.slots.contains_key(&id)
    }

    pub fn store(&mut self, frame: RawFrame, miss_table: u8, now: u64) -> BufferOutcome {
        if self.slots.len() >= self.capacity {
            return BufferOutcome::Full;
        }
        let mut id = self.next_id;
        while id == NO_BUFFER || self.slots.contains_key(&id) {
            id = id.wrapping_add(1);
        }
        self.next_id = id.wrapping_add(1);
        self.slots.insert(
            id,
            BufferedFrame {
                frame,
                miss_table,
                buffered_at: now,
            },
        );
        BufferOutcome::Buffered(id)
    }

    pub fn take(&mut self, id: u32) -> Option<BufferedFrame> {
        self.slots.remove(&id)
    }

    /// Removes frames buffered for longer than the TTL.
    pub fn expire(&mut self, now: u64) -> Vec<BufferedFrame> {
        let ttl = self.ttl_ns;
        let dead: Vec<u32> = self
            .slots
            .iter()
            .filter(|(_, b)| now.saturating_sub(b.buffered_at) >= ttl)
            .map(|(id, _)| *id)
            .collect();
        dead.into_iter()
            .filter_map(|id| self.slots.remove(&id))
            .collect()
    }
}
