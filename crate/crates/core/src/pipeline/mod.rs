//! Multi-table flow pipeline.

mod flow;
mod key;

use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{RwLock, RwLockReadGuard, RwLockWriteGuard};

pub(crate) use flow::decode_instructions;
pub use flow::{
    encode_instructions, flags, instructions_len, FlowCounters, FlowEntry, FlowMod, FlowModCommand,
    FlowStats, Instruction, InstructionSet, RemovalReason, RemovedFlow,
};
pub use key::{match_key, slot_of, tuple_key, KEY_BYTES};

use crate::action::{port, validate_actions, ActionSet};
use crate::error::OfpError;
use crate::oxm::Match;
use crate::packet::HeaderTuple;
use crate::tcam::{Matcher, MatcherError, TernaryMatcher};

/// `OFPTT_ALL`.
pub const ALL_TABLES: u8 = 0xff;

/// What happens to a packet no entry in a table matches.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MissPolicy {
    Controller,
    Drop,
}

impl MissPolicy {
    /// Table-mod `config` value: 0 sends misses to the controller, 2 drops.
    pub fn from_config(config: u32) -> Result<Self, OfpError> {
        match config {
            0 => Ok(MissPolicy::Controller),
            2 => Ok(MissPolicy::Drop),
            _ => Err(OfpError::TABLE_MOD_BAD_CONFIG),
        }
    }

    pub fn config(self) -> u32 {
        match self {
            MissPolicy::Controller => 0,
            MissPolicy::Drop => 2,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PipelineConfig {
    pub tables: u8,
    pub table_capacity: usize,
    /// Used to validate output actions.
    pub port_count: u32,
    pub miss_policy: MissPolicy,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            tables: 4,
            table_capacity: 1024,
            port_count: 8,
            miss_policy: MissPolicy::Controller,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Verdict {
    /// The pipeline ended on a matching entry without a goto.
    Actions(ActionSet),
    Miss {
        table_id: u8,
        policy: MissPolicy,
    },
    DropMalicious,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct TableStats {
    pub table_id: u8,
    pub active_count: u32,
    pub lookup_count: u64,
    pub matched_count: u64,
}

/// Selects flows for statistics requests.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FlowFilter {
    pub table_id: u8,
    pub out_port: u32,
    pub cookie: u64,
    pub cookie_mask: u64,
    pub match_fields: Match,
}

impl Default for FlowFilter {
    fn default() -> Self {
        FlowFilter {
            table_id: ALL_TABLES,
            out_port: port::ANY,
            cookie: 0,
            cookie_mask: 0,
            match_fields: Match::any(),
        }
    }
}

/// Every table's counters and entries taken under one set of locks.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Snapshot {
    pub tables: Vec<TableStats>,
    pub flows: Vec<FlowStats>,
}

struct Table<M> {
    matcher: M,
    entries: Vec<Option<FlowEntry>>,
    miss_policy: MissPolicy,
    lookups: AtomicU64,
    matched: AtomicU64,
}

impl<M: Matcher> Table<M> {
    fn live(&self) -> impl Iterator<Item = (usize, &FlowEntry)> {
        self.entries
            .iter()
            .enumerate()
            .filter_map(|(slot, e)| e.as_ref().map(|e| (slot, e)))
    }

    fn find_exact(&self, key: &crate::tcam::MaskedKey, priority: u16) -> Option<usize> {
        self.live()
            .find(|(_, e)| e.priority == priority && e.key == *key)
            .map(|(slot, _)| slot)
    }

    fn remove(&mut self, slot: usize) -> Option<FlowEntry> {
        self.matcher.remove(slot);
        self.entries[slot].take()
    }

    fn stats(&self, table_id: u8) -> TableStats {
        TableStats {
            table_id,
            active_count: self.matcher.len() as u32,
            lookup_count: self.lookups.load(Ordering::Relaxed),
            matched_count: self.matched.load(Ordering::Relaxed),
        }
    }
}

/// Flow tables walked in order from table 0, each lookup backed by a
/// [`Matcher`].
pub struct Pipeline<M: Matcher = TernaryMatcher> {
    tables: Vec<RwLock<Table<M>>>,
    port_count: u32,
    malicious: AtomicU64,
}

impl Pipeline<TernaryMatcher> {
    pub fn new(config: &PipelineConfig) -> Self {
        Pipeline::with_matcher(config, TernaryMatcher::new)
    }
}

impl<M: Matcher> Pipeline<M> {
    /// Builds a pipeline whose tables use `make(key_bytes, capacity)`.
    pub fn with_matcher(config: &PipelineConfig, make: impl Fn(usize, usize) -> M) -> Self {
        assert!(
            config.tables > 0 && config.tables < ALL_TABLES,
            "table count out of range"
        );
        let tables = (0..config.tables)
            .map(|_| {
                RwLock::new(Table {
                    matcher: make(KEY_BYTES, config.table_capacity),
                    entries: (0..config.table_capacity).map(|_| None).collect(),
                    miss_policy: config.miss_policy,
                    lookups: AtomicU64::new(0),
                    matched: AtomicU64::new(0),
                })
            })
            .collect();
        Pipeline {
            tables,
            port_count: config.port_count,
            malicious: AtomicU64::new(0),
        }
    }

    pub fn table_count(&self) -> u8 {
        self.tables.len() as u8
    }

    pub fn table_capacity(&self) -> usize {
        self.read(0).entries.len()
    }

    /// Packets dropped before lookup because the parser flagged them.
    pub fn malicious_drops(&self) -> u64 {
        self.malicious.load(Ordering::Relaxed)
    }

    fn read(&self, t: usize) -> RwLockReadGuard<'_, Table<M>> {
        self.tables[t].read().unwrap_or_else(|e| e.into_inner())
    }

    fn write(&self, t: usize) -> RwLockWriteGuard<'_, Table<M>> {
        self.tables[t].write().unwrap_or_else(|e| e.into_inner())
    }

    fn write_all(&self) -> Vec<RwLockWriteGuard<'_, Table<M>>> {
        (0..self.tables.len()).map(|t| self.write(t)).collect()
    }

    /// Runs a parsed packet of `frame_len` bytes through the tables.
    pub fn process(&self, tuple: &HeaderTuple, frame_len: usize, now: u64) -> Verdict {
        if tuple.malicious {
            self.malicious.fetch_add(1, Ordering::Relaxed);
            return Verdict::DropMalicious;
        }
        let key = tuple_key(tuple);
        let mut set = ActionSet::new();
        let mut t = 0usize;
        loop {
            let table = self.read(t);
            table.lookups.fetch_add(1, Ordering::Relaxed);
            let Some(hit) = table.matcher.lookup(&key) else {
                return Verdict::Miss {
                    table_id: t as u8,
                    policy: table.miss_policy,
                };
            };
            table.matched.fetch_add(1, Ordering::Relaxed);
            let entry = table.entries[hit.slot]
                .as_ref()
                .expect("matcher slot without flow entry");
            entry.counters.hit(frame_len as u64, now);
            let inst = &entry.compiled;
            if inst.clear_actions {
                set.clear();
            }
            if let Some(actions) = &inst.write_actions {
                set.write(actions);
            }
            match inst.goto_table {
                Some(next) => t = usize::from(next),
                None => return Verdict::Actions(set),
            }
        }
    }

    /// Applies a flow-mod. Returns the flows it removed.
    pub fn apply_flow_mod(&self, fm: &FlowMod, now: u64) -> Result<Vec<RemovedFlow>, OfpError> {
        match fm.command {
            FlowModCommand::Add => self.add(fm, now).map(|()| Vec::new()),
            FlowModCommand::Modify | FlowModCommand::ModifyStrict => {
                self.modify(fm).map(|()| Vec::new())
            }
            FlowModCommand::Delete | FlowModCommand::DeleteStrict => self.delete(fm, now),
        }
    }

    fn compile(&self, fm: &FlowMod) -> Result<InstructionSet, OfpError> {
        let set = InstructionSet::compile(&fm.instructions, fm.table_id, self.table_count())?;
        if let Some(actions) = &set.write_actions {
            validate_actions(actions, self.port_count)?;
        }
        Ok(set)
    }

    fn check_table(&self, table_id: u8) -> Result<usize, OfpError> {
        if usize::from(table_id) < self.tables.len() {
            Ok(usize::from(table_id))
        } else {
            Err(OfpError::BAD_TABLE_ID)
        }
    }

    fn add(&self, fm: &FlowMod, now: u64) -> Result<(), OfpError> {
        let t = self.check_table(fm.table_id)?;
        let key = match_key(&fm.match_fields)?;
        let compiled = self.compile(fm)?;
        let mut table = self.write(t);
        if fm.flags & flags::CHECK_OVERLAP != 0
            && table
                .live()
                .any(|(_, e)| e.priority == fm.priority && e.key.overlaps(&key) && e.key != key)
        {
            return Err(OfpError::OVERLAP);
        }
        let mut entry = FlowEntry::new(fm, key.clone(), compiled, now);
        if let Some(slot) = table.find_exact(&key, fm.priority) {
            let old = table.entries[slot].take().expect("live slot");
            if fm.flags & flags::RESET_COUNTS == 0 {
                entry.adopt_counters(&old);
            }
            table.entries[slot] = Some(entry);
            return Ok(());
        }
        let slot = table
            .matcher
            .insert(key, u32::from(fm.priority))
            .map_err(|e| match e {
                MatcherError::Full(_) => OfpError::TABLE_FULL,
                _ => OfpError::FLOW_MOD_UNKNOWN,
            })?;
        table.entries[slot] = Some(entry);
        Ok(())
    }

    fn selected(
        fm: &FlowMod,
        filter_key: &crate::tcam::MaskedKey,
        e: &FlowEntry,
        strict: bool,
    ) -> bool {
        let key_ok = if strict {
            e.priority == fm.priority && e.key == *filter_key
        } else {
            filter_key.subsumes(&e.key)
        };
        key_ok && e.cookie_matches(fm.cookie, fm.cookie_mask)
    }

    fn modify(&self, fm: &FlowMod) -> Result<(), OfpError> {
        let t = self.check_table(fm.table_id)?;
        let key = match_key(&fm.match_fields)?;
        let compiled = self.compile(fm)?;
        let strict = fm.command == FlowModCommand::ModifyStrict;
        let mut table = self.write(t);
        for e in table.entries.iter_mut().flatten() {
            if Self::selected(fm, &key, e, strict) {
                e.instructions = fm.instructions.clone();
                e.compiled = compiled.clone();
                if fm.flags & flags::RESET_COUNTS != 0 {
                    e.reset_counters();
                }
            }
        }
        Ok(())
    }

    fn delete(&self, fm: &FlowMod, now: u64) -> Result<Vec<RemovedFlow>, OfpError> {
        let range = if fm.table_id == ALL_TABLES {
            0..self.tables.len()
        } else {
            let t = self.check_table(fm.table_id)?;
            t..t + 1
        };
        let key = match_key(&fm.match_fields)?;
        let strict = fm.command == FlowModCommand::DeleteStrict;
        let mut removed = Vec::new();
        for t in range {
            let mut table = self.write(t);
            let victims: Vec<usize> = table
                .live()
                .filter(|(_, e)| Self::selected(fm, &key, e, strict))
                .filter(|(_, e)| fm.out_port == port::ANY || e.compiled.outputs_to(fm.out_port))
                .map(|(slot, _)| slot)
                .collect();
            for slot in victims {
                if let Some(e) = table.remove(slot) {
                    removed.push(RemovedFlow {
                        reason: RemovalReason::Delete,
                        stats: e.snapshot(t as u8, now),
                    });
                }
            }
        }
        Ok(removed)
    }

    /// Removes flows whose idle or hard timeout has fired.
    pub fn expire_flows(&self, now: u64) -> Vec<RemovedFlow> {
        let mut removed = Vec::new();
        for t in 0..self.tables.len() {
            let mut table = self.write(t);
            let dead: Vec<(usize, RemovalReason)> = table
                .live()
                .filter_map(|(slot, e)| e.expiry(now).map(|r| (slot, r)))
                .collect();
            for (slot, reason) in dead {
                if let Some(e) = table.remove(slot) {
                    removed.push(RemovedFlow {
                        reason,
                        stats: e.snapshot(t as u8, now),
                    });
                }
            }
        }
        removed
    }

    /// Sets the miss policy of one table or of all of them.
    pub fn table_mod(&self, table_id: u8, config: u32) -> Result<(), OfpError> {
        let policy = MissPolicy::from_config(config)?;
        if table_id == ALL_TABLES {
            for mut t in self.write_all() {
                t.miss_policy = policy;
            }
            return Ok(());
        }
        if usize::from(table_id) >= self.tables.len() {
            return Err(OfpError::TABLE_MOD_BAD_TABLE);
        }
        self.write(usize::from(table_id)).miss_policy = policy;
        Ok(())
    }

    pub fn miss_policy(&self, table_id: u8) -> Option<MissPolicy> {
        self.tables.get(usize::from(table_id))?;
        Some(self.read(usize::from(table_id)).miss_policy)
    }

    pub fn flow_count(&self) -> usize {
        (0..self.tables.len())
            .map(|t| self.read(t).matcher.len())
            .sum()
    }

    /// A consistent view of every table: all locks are held while copying.
    pub fn snapshot(&self, now: u64) -> Snapshot {
        let guards = self.write_all();
        let mut snap = Snapshot {
            tables: Vec::with_capacity(guards.len()),
            flows: Vec::new(),
        };
        for (t, table) in guards.iter().enumerate() {
            snap.tables.push(table.stats(t as u8));
            snap.flows
                .extend(table.live().map(|(_, e)| e.snapshot(t as u8, now)));
        }
        snap
    }

    pub fn table_stats(&self) -> Vec<TableStats> {
        let guards = self.write_all();
        guards
            .iter()
            .enumerate()
            .map(|(t, table)| table.stats(t as u8))
            .collect()
    }

    pub fn flow_stats(&self, filter: &FlowFilter, now: u64) -> Result<Vec<FlowStats>, OfpError> {
        if filter.table_id != ALL_TABLES && usize::from(filter.table_id) >= self.tables.len() {
            return Err(OfpError::BAD_REQUEST_TABLE_ID);
        }
        let key = match_key(&filter.match_fields)?;
        let guards = self.write_all();
        let mut out = Vec::new();
        for (t, table) in guards.iter().enumerate() {
            if filter.table_id != ALL_TABLES && usize::from(filter.table_id) != t {
                continue;
            }
            out.extend(
                table
                    .live()
                    .filter(|(_, e)| key.subsumes(&e.key))
                    .filter(|(_, e)| e.cookie_matches(filter.cookie, filter.cookie_mask))
                    .filter(|(_, e)| {
                        filter.out_port == port::ANY || e.compiled.outputs_to(filter.out_port)
                    })
                    .map(|(_, e)| e.snapshot(t as u8, now)),
            );
        }
        Ok(out)
    }
}
