//! RAM-emulated CAM/TCAM.
//!
//! A `K`-bit key is cut into `ceil(K / c)` chunks of `c` bits. Each chunk
//! owns a bank of `2^c` bit-vectors, one bit per slot: bit `s` of word `a`
//! in bank `i` is set when slot `s` accepts chunk value `a` at position `i`.
//! A lookup reads one word per bank and ANDs them together; the surviving
//! bits are the matching slots, and the priority encoder picks one of them.
//!
//! Exact entries touch one address per bank on insert. A wildcarded chunk
//! is expanded into every address it accepts, so a fully wildcarded 8-bit
//! chunk sets its slot bit in all 256 words of that bank.
//!
//! ```text
//!  key ─┬─ chunk 0 ─> bank 0 [2^c x N bits] ─┐
//!       ├─ chunk 1 ─> bank 1 [2^c x N bits] ─┼─ AND ─> priority encoder ─> slot
//!       └─ chunk k ─> bank k [2^c x N bits] ─┘
//! ```

use smallvec::{smallvec, SmallVec};
use thiserror::Error;

/// Chunk width used by the flow tables.
pub const DEFAULT_CHUNK_BITS: u32 = 8;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum MatcherError {
    #[error("matcher is full ({0} slots)")]
    Full(usize),
    #[error("key is {got} bytes, matcher expects {expected}")]
    KeyWidth { expected: usize, got: usize },
    #[error("slot {0} is out of range")]
    SlotOutOfRange(usize),
    #[error("slot {0} is already occupied")]
    SlotOccupied(usize),
    #[error("value and mask lengths differ ({0} vs {1})")]
    MaskLength(usize, usize),
    #[error("unsupported chunk width {0}")]
    ChunkWidth(u32),
}

/// A ternary key: `mask` bits set to 1 must match `value`.
///
/// Don't-care positions of `value` are always zero.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct MaskedKey {
    value: Box<[u8]>,
    mask: Box<[u8]>,
}

impl MaskedKey {
    /// Builds a key, clearing value bits that fall outside the mask.
    pub fn new(value: Vec<u8>, mask: Vec<u8>) -> Result<Self, MatcherError> {
        if value.len() != mask.len() {
            return Err(MatcherError::MaskLength(value.len(), mask.len()));
        }
        let value: Box<[u8]> = value.iter().zip(&mask).map(|(v, m)| v & m).collect();
        Ok(MaskedKey {
            value,
            mask: mask.into_boxed_slice(),
        })
    }

    pub fn exact(value: Vec<u8>) -> Self {
        let mask = vec![0xff; value.len()].into_boxed_slice();
        MaskedKey {
            value: value.into_boxed_slice(),
            mask,
        }
    }

    /// Matches every key of `width` bytes.
    pub fn wildcard(width: usize) -> Self {
        MaskedKey {
            value: vec![0; width].into_boxed_slice(),
            mask: vec![0; width].into_boxed_slice(),
        }
    }

    pub fn value(&self) -> &[u8] {
        &self.value
    }

    pub fn mask(&self) -> &[u8] {
        &self.mask
    }

    pub fn width(&self) -> usize {
        self.value.len()
    }

    pub fn matches(&self, key: &[u8]) -> bool {
        key.len() == self.value.len()
            && key
                .iter()
                .zip(self.mask.iter().zip(self.value.iter()))
                .all(|(k, (m, v))| k & m == *v)
    }

    /// True when every key matched by `other` is also matched by `self`.
    pub fn subsumes(&self, other: &MaskedKey) -> bool {
        self.width() == other.width()
            && self
                .mask
                .iter()
                .zip(other.mask.iter())
                .zip(self.value.iter().zip(other.value.iter()))
                .all(|((sm, om), (sv, ov))| sm & !om == 0 && ov & sm == *sv)
    }

    /// True when some key is matched by both.
    pub fn overlaps(&self, other: &MaskedKey) -> bool {
        self.width() == other.width()
            && self
                .mask
                .iter()
                .zip(other.mask.iter())
                .zip(self.value.iter().zip(other.value.iter()))
                .all(|((sm, om), (sv, ov))| (sv ^ ov) & sm & om == 0)
    }
}

/// A matching slot and its priority.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Hit {
    pub slot: usize,
    pub priority: u32,
}

/// Slot-addressed ternary lookup structure.
pub trait Matcher: Send + Sync {
    fn key_bytes(&self) -> usize;
    fn capacity(&self) -> usize;
    fn len(&self) -> usize;
    fn is_empty(&self) -> bool {
        self.len() == 0
    }
    /// Places the entry in the lowest vacant slot.
    fn insert(&mut self, key: MaskedKey, priority: u32) -> Result<usize, MatcherError>;
    fn insert_at(&mut self, slot: usize, key: MaskedKey, priority: u32)
        -> Result<(), MatcherError>;
    /// Vacating an empty slot is a no-op.
    fn remove(&mut self, slot: usize);
    fn lookup(&self, key: &[u8]) -> Option<Hit>;
    fn entry(&self, slot: usize) -> Option<(&MaskedKey, u32)>;
}

/// Linear scan over `(key, priority, slot)` triples: highest priority wins,
/// equal priorities go to the lowest slot.
pub fn oracle_lookup<'a, I>(entries: I, key: &[u8]) -> Option<Hit>
where
    I: IntoIterator<Item = (&'a MaskedKey, u32, usize)>,
{
    let mut best: Option<Hit> = None;
    for (mk, priority, slot) in entries {
        if !mk.matches(key) {
            continue;
        }
        let better = match best {
            None => true,
            Some(b) => priority > b.priority || (priority == b.priority && slot < b.slot),
        };
        if better {
            best = Some(Hit { slot, priority });
        }
    }
    best
}

#[derive(Clone, Debug)]
pub struct TernaryMatcher {
    key_bytes: usize,
    chunk_bits: u32,
    chunks: usize,
    /// u64 words per bank row (one bit per slot).
    words: usize,
    banks: Vec<u64>,
    occupied: Vec<u64>,
    slots: Vec<Option<(MaskedKey, u32)>>,
    len: usize,
}

impl TernaryMatcher {
    pub fn new(key_bytes: usize, capacity: usize) -> Self {
        Self::with_chunk_bits(key_bytes, capacity, DEFAULT_CHUNK_BITS)
            .expect("default chunk width is valid")
    }

    pub fn with_chunk_bits(
        key_bytes: usize,
        capacity: usize,
        chunk_bits: u32,
    ) -> Result<Self, MatcherError> {
        if !(1..=16).contains(&chunk_bits) {
            return Err(MatcherError::ChunkWidth(chunk_bits));
        }
        let key_bits = key_bytes * 8;
        let chunks = key_bits.div_ceil(chunk_bits as usize);
        let words = capacity.div_ceil(64).max(1);
        Ok(TernaryMatcher {
            key_bytes,
            chunk_bits,
            chunks,
            words,
            banks: vec![0; chunks * (1usize << chunk_bits) * words],
            occupied: vec![0; words],
            slots: vec![None; capacity],
            len: 0,
        })
    }

    pub fn chunk_bits(&self) -> u32 {
        self.chunk_bits
    }

    pub fn chunk_count(&self) -> usize {
        self.chunks
    }

    /// Raw bank storage, `[chunk][address][word]` in row-major order.
    pub fn banks(&self) -> &[u64] {
        &self.banks
    }

    /// The bank word for `(chunk, address)`.
    pub fn bank_row(&self, chunk: usize, address: usize) -> &[u64] {
        let at = self.row_index(chunk, address);
        &self.banks[at..at + self.words]
    }

    /// Iterator over occupied `(key, priority, slot)` triples.
    pub fn entries(&self) -> impl Iterator<Item = (&MaskedKey, u32, usize)> {
        self.slots
            .iter()
            .enumerate()
            .filter_map(|(s, e)| e.as_ref().map(|(k, p)| (k, *p, s)))
    }

    /// Re-derives every bank from the slot keys and compares with the live banks.
    pub fn is_consistent(&self) -> bool {
        let mut fresh =
            TernaryMatcher::with_chunk_bits(self.key_bytes, self.slots.len(), self.chunk_bits)
                .expect("same geometry");
        for (key, priority, slot) in self.entries() {
            if fresh.insert_at(slot, key.clone(), priority).is_err() {
                return false;
            }
        }
        fresh.banks == self.banks && fresh.occupied == self.occupied
    }

    fn row_index(&self, chunk: usize, address: usize) -> usize {
        ((chunk << self.chunk_bits) + address) * self.words
    }

    fn chunk_of(&self, bytes: &[u8], index: usize) -> usize {
        if self.chunk_bits == 8 {
            return usize::from(bytes[index]);
        }
        let c = self.chunk_bits as usize;
        let total = bytes.len() * 8;
        let mut v = 0usize;
        for bit in index * c..index * c + c {
            let b = if bit < total {
                (bytes[bit / 8] >> (7 - bit % 8)) & 1
            } else {
                0
            };
            v = (v << 1) | usize::from(b);
        }
        v
    }

    /// Calls `f(chunk, address)` for every bank address accepted by `key`.
    fn for_each_address(&self, key: &MaskedKey, mut f: impl FnMut(usize, usize)) {
        let full = (1usize << self.chunk_bits) - 1;
        for chunk in 0..self.chunks {
            let value = self.chunk_of(key.value(), chunk);
            // Bits past the key width read as zero in both, i.e. don't-care.
            let care = self.chunk_of(key.mask(), chunk);
            let free = !care & full;
            let mut sub = 0usize;
            loop {
                f(chunk, value | sub);
                if sub == free {
                    break;
                }
                sub = sub.wrapping_sub(free) & free;
            }
        }
    }

    fn check_width(&self, len: usize) -> Result<(), MatcherError> {
        if len != self.key_bytes {
            return Err(MatcherError::KeyWidth {
                expected: self.key_bytes,
                got: len,
            });
        }
        Ok(())
    }

    fn lowest_vacant(&self) -> Option<usize> {
        self.occupied.iter().enumerate().find_map(|(w, bits)| {
            let slot = w * 64 + (!bits).trailing_zeros() as usize;
            (*bits != u64::MAX && slot < self.slots.len()).then_some(slot)
        })
    }
}

impl Matcher for TernaryMatcher {
    fn key_bytes(&self) -> usize {
        self.key_bytes
    }

    fn capacity(&self) -> usize {
        self.slots.len()
    }

    fn len(&self) -> usize {
        self.len
    }

    fn insert(&mut self, key: MaskedKey, priority: u32) -> Result<usize, MatcherError> {
        self.check_width(key.width())?;
        let slot = self
            .lowest_vacant()
            .ok_or(MatcherError::Full(self.slots.len()))?;
        self.insert_at(slot, key, priority)?;
        Ok(slot)
    }

    fn insert_at(
        &mut self,
        slot: usize,
        key: MaskedKey,
        priority: u32,
    ) -> Result<(), MatcherError> {
        self.check_width(key.width())?;
        if slot >= self.slots.len() {
            return Err(MatcherError::SlotOutOfRange(slot));
        }
        if self.slots[slot].is_some() {
            return Err(MatcherError::SlotOccupied(slot));
        }
        let (word, bit) = (slot / 64, 1u64 << (slot % 64));
        let mut rows = Vec::new();
        self.for_each_address(&key, |chunk, addr| rows.push(self.row_index(chunk, addr)));
        for row in rows {
            self.banks[row + word] |= bit;
        }
        self.occupied[word] |= bit;
        self.slots[slot] = Some((key, priority));
        self.len += 1;
        Ok(())
    }

    fn remove(&mut self, slot: usize) {
        let Some((key, _)) = self.slots.get_mut(slot).and_then(Option::take) else {
            return;
        };
        let (word, bit) = (slot / 64, 1u64 << (slot % 64));
        let mut rows = Vec::new();
        self.for_each_address(&key, |chunk, addr| rows.push(self.row_index(chunk, addr)));
        for row in rows {
            self.banks[row + word] &= !bit;
        }
        self.occupied[word] &= !bit;
        self.len -= 1;
    }

    fn lookup(&self, key: &[u8]) -> Option<Hit> {
        if key.len() != self.key_bytes || self.len == 0 {
            return None;
        }
        let mut acc: SmallVec<[u64; 32]> = smallvec![u64::MAX; self.words];
        for chunk in 0..self.chunks {
            let at = self.row_index(chunk, self.chunk_of(key, chunk));
            let row = &self.banks[at..at + self.words];
            let mut any = 0u64;
            for (a, r) in acc.iter_mut().zip(row) {
                *a &= r;
                any |= *a;
            }
            if any == 0 {
                return None;
            }
        }
        let mut best: Option<Hit> = None;
        for (w, mut bits) in acc.into_iter().enumerate() {
            while bits != 0 {
                let slot = w * 64 + bits.trailing_zeros() as usize;
                bits &= bits - 1;
                let priority = self.slots[slot].as_ref().map_or(0, |(_, p)| *p);
                if best.is_none_or(|b| priority > b.priority) {
                    best = Some(Hit { slot, priority });
                }
            }
        }
        best
    }

    fn entry(&self, slot: usize) -> Option<(&MaskedKey, u32)> {
        self.slots.get(slot)?.as_ref().map(|(k, p)| (k, *p))
    }
}

/// Slot-compatible matcher that answers lookups with [`oracle_lookup`].
#[derive(Clone, Debug)]
pub struct LinearMatcher {
    key_bytes: usize,
    slots: Vec<Option<(MaskedKey, u32)>>,
    len: usize,
}

impl LinearMatcher {
    pub fn new(key_bytes: usize, capacity: usize) -> Self {
        LinearMatcher {
            key_bytes,
            slots: vec![None; capacity],
            len: 0,
        }
    }
}

impl Matcher for LinearMatcher {
    fn key_bytes(&self) -> usize {
        self.key_bytes
    }

    fn capacity(&self) -> usize {
        self.slots.len()
    }

    fn len(&self) -> usize {
        self.len
    }

    fn insert(&mut self, key: MaskedKey, priority: u32) -> Result<usize, MatcherError> {
        let slot = self
            .slots
            .iter()
            .position(Option::is_none)
            .ok_or(MatcherError::Full(self.slots.len()))?;
        self.insert_at(slot, key, priority)?;
        Ok(slot)
    }

    fn insert_at(
        &mut self,
        slot: usize,
        key: MaskedKey,
        priority: u32,
    ) -> Result<(), MatcherError> {
        if key.width() != self.key_bytes {
            return Err(MatcherError::KeyWidth {
                expected: self.key_bytes,
                got: key.width(),
            });
        }
        match self.slots.get_mut(slot) {
            None => Err(MatcherError::SlotOutOfRange(slot)),
            Some(Some(_)) => Err(MatcherError::SlotOccupied(slot)),
            Some(s) => {
                *s = Some((key, priority));
                self.len += 1;
                Ok(())
            }
        }
    }

    fn remove(&mut self, slot: usize) {
        if let Some(s) = self.slots.get_mut(slot) {
            if s.take().is_some() {
                self.len -= 1;
            }
        }
    }

    fn lookup(&self, key: &[u8]) -> Option<Hit> {
        oracle_lookup(
            self.slots
                .iter()
                .enumerate()
                .filter_map(|(s, e)| e.as_ref().map(|(k, p)| (k, *p, s))),
            key,
        )
    }

    fn entry(&self, slot: usize) -> Option<(&MaskedKey, u32)> {
        self.slots.get(slot)?.as_ref().map(|(k, p)| (k, *p))
    }
}
