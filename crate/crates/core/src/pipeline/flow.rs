//! Flow entries, instructions and flow-mod descriptors.

use std::sync::atomic::{AtomicU64, Ordering};

use crate::action::{actions_len, decode_actions, encode_actions, Action};
use crate::bytes::{pad, put_u16, put_u32, put_u64, Reader};
use crate::error::OfpError;
use crate::oxm::Match;
use crate::tcam::MaskedKey;

mod code {
    pub const GOTO_TABLE: u16 = 1;
    pub const WRITE_METADATA: u16 = 2;
    pub const WRITE_ACTIONS: u16 = 3;
    pub const APPLY_ACTIONS: u16 = 4;
    pub const CLEAR_ACTIONS: u16 = 5;
    pub const METER: u16 = 6;
}

/// Flow-mod flags.
pub mod flags {
    pub const SEND_FLOW_REM: u16 = 1 << 0;
    pub const CHECK_OVERLAP: u16 = 1 << 1;
    pub const RESET_COUNTS: u16 = 1 << 2;
}

/// `ofp_instruction` as carried on the wire.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum Instruction {
    GotoTable(u8),
    WriteMetadata { metadata: u64, mask: u64 },
    WriteActions(Vec<Action>),
    ApplyActions(Vec<Action>),
    ClearActions,
    Meter(u32),
}

impl Instruction {
    pub fn wire_len(&self) -> usize {
        match self {
            Instruction::WriteMetadata { .. } => 24,
            Instruction::WriteActions(a) | Instruction::ApplyActions(a) => 8 + actions_len(a),
            _ => 8,
        }
    }

    pub fn encode(&self, out: &mut Vec<u8>) {
        let len = self.wire_len() as u16;
        match self {
            Instruction::GotoTable(t) => {
                put_u16(out, code::GOTO_TABLE);
                put_u16(out, len);
                out.push(*t);
                pad(out, 3);
            }
            Instruction::WriteMetadata { metadata, mask } => {
                put_u16(out, code::WRITE_METADATA);
                put_u16(out, len);
                pad(out, 4);
                put_u64(out, *metadata);
                put_u64(out, *mask);
            }
            Instruction::WriteActions(a) | Instruction::ApplyActions(a) => {
                let c = if matches!(self, Instruction::WriteActions(_)) {
                    code::WRITE_ACTIONS
                } else {
                    code::APPLY_ACTIONS
                };
                put_u16(out, c);
                put_u16(out, len);
                pad(out, 4);
                encode_actions(a, out);
            }
            Instruction::ClearActions => {
                put_u16(out, code::CLEAR_ACTIONS);
                put_u16(out, len);
                pad(out, 4);
            }
            Instruction::Meter(id) => {
                put_u16(out, code::METER);
                put_u16(out, len);
                put_u32(out, *id);
            }
        }
    }

    pub(crate) fn decode(r: &mut Reader<'_>) -> Result<Self, OfpError> {
        let short = |_| OfpError::BAD_INST_LEN;
        let kind = r.u16().map_err(short)?;
        let len = usize::from(r.u16().map_err(short)?);
        if len < 8 || len % 8 != 0 {
            return Err(OfpError::BAD_INST_LEN);
        }
        let mut b = Reader::new(r.bytes(len - 4).map_err(short)?);
        let fixed = |n: usize| {
            if len == n {
                Ok(())
            } else {
                Err(OfpError::BAD_INST_LEN)
            }
        };
        Ok(match kind {
            code::GOTO_TABLE => {
                fixed(8)?;
                Instruction::GotoTable(b.u8().map_err(short)?)
            }
            code::WRITE_METADATA => {
                fixed(24)?;
                b.skip(4).map_err(short)?;
                Instruction::WriteMetadata {
                    metadata: b.u64().map_err(short)?,
                    mask: b.u64().map_err(short)?,
                }
            }
            code::WRITE_ACTIONS | code::APPLY_ACTIONS => {
                b.skip(4).map_err(short)?;
                let actions = decode_actions(b.rest())?;
                if kind == code::WRITE_ACTIONS {
                    Instruction::WriteActions(actions)
                } else {
                    Instruction::ApplyActions(actions)
                }
            }
            code::CLEAR_ACTIONS => {
                fixed(8)?;
                Instruction::ClearActions
            }
            code::METER => {
                fixed(8)?;
                Instruction::Meter(b.u32().map_err(short)?)
            }
            _ => return Err(OfpError::UNKNOWN_INST),
        })
    }
}

pub fn encode_instructions(list: &[Instruction], out: &mut Vec<u8>) {
    for i in list {
        i.encode(out);
    }
}

pub(crate) fn decode_instructions(bytes: &[u8]) -> Result<Vec<Instruction>, OfpError> {
    let mut r = Reader::new(bytes);
    let mut out = Vec::new();
    while !r.is_empty() {
        out.push(Instruction::decode(&mut r)?);
    }
    Ok(out)
}

pub fn instructions_len(list: &[Instruction]) -> usize {
    list.iter().map(Instruction::wire_len).sum()
}

/// The instructions a flow entry executes, in the fixed order clear, write,
/// goto.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct InstructionSet {
    pub clear_actions: bool,
    pub write_actions: Option<Vec<Action>>,
    pub goto_table: Option<u8>,
}

impl InstructionSet {
    /// Validates a wire instruction list for a flow in `table_id`.
    pub fn compile(list: &[Instruction], table_id: u8, n_tables: u8) -> Result<Self, OfpError> {
        let mut set = InstructionSet::default();
        let mut seen = 0u8;
        for inst in list {
            let bit = match inst {
                Instruction::GotoTable(_) => 1,
                Instruction::WriteActions(_) => 2,
                Instruction::ClearActions => 4,
                Instruction::ApplyActions(_)
                | Instruction::WriteMetadata { .. }
                | Instruction::Meter(_) => return Err(OfpError::UNSUP_INST),
            };
            if seen & bit != 0 {
                return Err(OfpError::INST_EPERM);
            }
            seen |= bit;
            match inst {
                Instruction::GotoTable(t) => {
                    if *t <= table_id || *t >= n_tables {
                        return Err(OfpError::BAD_INST_TABLE_ID);
                    }
                    set.goto_table = Some(*t);
                }
                Instruction::WriteActions(a) => set.write_actions = Some(a.clone()),
                Instruction::ClearActions => set.clear_actions = true,
                _ => unreachable!(),
            }
        }
        Ok(set)
    }

    pub fn outputs_to(&self, port: u32) -> bool {
        self.write_actions
            .iter()
            .flatten()
            .any(|a| matches!(a, Action::Output { port: p, .. } if *p == port))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum FlowModCommand {
    Add = 0,
    Modify = 1,
    ModifyStrict = 2,
    Delete = 3,
    DeleteStrict = 4,
}

impl FlowModCommand {
    pub fn from_code(c: u8) -> Option<Self> {
        Some(match c {
            0 => FlowModCommand::Add,
            1 => FlowModCommand::Modify,
            2 => FlowModCommand::ModifyStrict,
            3 => FlowModCommand::Delete,
            4 => FlowModCommand::DeleteStrict,
            _ => return None,
        })
    }
}

/// A flow-table modification, as carried by `OFPT_FLOW_MOD`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FlowMod {
    pub cookie: u64,
    pub cookie_mask: u64,
    pub table_id: u8,
    pub command: FlowModCommand,
    pub idle_timeout: u16,
    pub hard_timeout: u16,
    pub priority: u16,
    pub buffer_id: u32,
    pub out_port: u32,
    pub out_group: u32,
    pub flags: u16,
    pub match_fields: Match,
    pub instructions: Vec<Instruction>,
}

impl FlowMod {
    /// An `ADD` into `table_id` with no timeouts, cookie or buffer.
    pub fn add(
        table_id: u8,
        priority: u16,
        match_fields: Match,
        instructions: Vec<Instruction>,
    ) -> Self {
        FlowMod {
            cookie: 0,
            cookie_mask: 0,
            table_id,
            command: FlowModCommand::Add,
            idle_timeout: 0,
            hard_timeout: 0,
            priority,
            buffer_id: crate::action::NO_BUFFER,
            out_port: crate::action::port::ANY,
            out_group: 0xffff_ffff,
            flags: 0,
            match_fields,
            instructions,
        }
    }

    pub fn delete(table_id: u8, match_fields: Match) -> Self {
        FlowMod {
            command: FlowModCommand::Delete,
            ..FlowMod::add(table_id, 0, match_fields, Vec::new())
        }
    }

    pub fn with_command(mut self, command: FlowModCommand) -> Self {
        self.command = command;
        self
    }
}

#[derive(Debug, Default)]
pub struct FlowCounters {
    packets: AtomicU64,
    bytes: AtomicU64,
    last_hit: AtomicU64,
}

impl FlowCounters {
    fn starting_at(now: u64) -> Self {
        FlowCounters {
            last_hit: AtomicU64::new(now),
            ..FlowCounters::default()
        }
    }

    pub(crate) fn hit(&self, bytes: u64, now: u64) {
        self.packets.fetch_add(1, Ordering::Relaxed);
        self.bytes.fetch_add(bytes, Ordering::Relaxed);
        self.last_hit.fetch_max(now, Ordering::Relaxed);
    }

    pub fn packets(&self) -> u64 {
        self.packets.load(Ordering::Relaxed)
    }

    pub fn bytes(&self) -> u64 {
        self.bytes.load(Ordering::Relaxed)
    }

    pub fn last_hit(&self) -> u64 {
        self.last_hit.load(Ordering::Relaxed)
    }

    fn reset(&self) {
        self.packets.store(0, Ordering::Relaxed);
        self.bytes.store(0, Ordering::Relaxed);
    }
}

#[derive(Debug)]
pub struct FlowEntry {
    pub match_fields: Match,
    pub key: MaskedKey,
    pub priority: u16,
    pub instructions: Vec<Instruction>,
    pub compiled: InstructionSet,
    pub cookie: u64,
    pub idle_timeout: u16,
    pub hard_timeout: u16,
    pub flags: u16,
    pub installed_at: u64,
    pub counters: FlowCounters,
}

impl FlowEntry {
    pub(crate) fn new(fm: &FlowMod, key: MaskedKey, compiled: InstructionSet, now: u64) -> Self {
        FlowEntry {
            match_fields: fm.match_fields.clone(),
            key,
            priority: fm.priority,
            instructions: fm.instructions.clone(),
            compiled,
            cookie: fm.cookie,
            idle_timeout: fm.idle_timeout,
            hard_timeout: fm.hard_timeout,
            flags: fm.flags,
            installed_at: now,
            counters: FlowCounters::starting_at(now),
        }
    }

    pub(crate) fn reset_counters(&self) {
        self.counters.reset();
    }

    pub(crate) fn adopt_counters(&mut self, old: &FlowEntry) {
        self.counters
            .packets
            .store(old.counters.packets(), Ordering::Relaxed);
        self.counters
            .bytes
            .store(old.counters.bytes(), Ordering::Relaxed);
    }

    pub fn cookie_matches(&self, cookie: u64, mask: u64) -> bool {
        self.cookie & mask == cookie & mask
    }

    /// The timeout that has fired at `now`, if any.
    pub fn expiry(&self, now: u64) -> Option<RemovalReason> {
        const NS: u64 = 1_000_000_000;
        if self.hard_timeout > 0
            && now.saturating_sub(self.installed_at) >= u64::from(self.hard_timeout) * NS
        {
            return Some(RemovalReason::HardTimeout);
        }
        if self.idle_timeout > 0
            && now.saturating_sub(self.counters.last_hit()) >= u64::from(self.idle_timeout) * NS
        {
            return Some(RemovalReason::IdleTimeout);
        }
        None
    }

    pub(crate) fn snapshot(&self, table_id: u8, now: u64) -> FlowStats {
        let age = now.saturating_sub(self.installed_at);
        FlowStats {
            table_id,
            duration_sec: (age / 1_000_000_000) as u32,
            duration_nsec: (age % 1_000_000_000) as u32,
            priority: self.priority,
            idle_timeout: self.idle_timeout,
            hard_timeout: self.hard_timeout,
            flags: self.flags,
            cookie: self.cookie,
            packet_count: self.counters.packets(),
            byte_count: self.counters.bytes(),
            match_fields: self.match_fields.clone(),
            instructions: self.instructions.clone(),
        }
    }
}

/// `ofp_flow_removed_reason`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum RemovalReason {
    IdleTimeout = 0,
    HardTimeout = 1,
    Delete = 2,
}

impl RemovalReason {
    pub fn from_code(c: u8) -> Option<Self> {
        Some(match c {
            0 => RemovalReason::IdleTimeout,
            1 => RemovalReason::HardTimeout,
            2 => RemovalReason::Delete,
            _ => return None,
        })
    }
}

/// One flow's statistics; the body of an `ofp_flow_stats` record.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FlowStats {
    pub table_id: u8,
    pub duration_sec: u32,
    pub duration_nsec: u32,
    pub priority: u16,
    pub idle_timeout: u16,
    pub hard_timeout: u16,
    pub flags: u16,
    pub cookie: u64,
    pub packet_count: u64,
    pub byte_count: u64,
    pub match_fields: Match,
    pub instructions: Vec<Instruction>,
}

/// A flow that left its table, with the data for a flow-removed message.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RemovedFlow {
    pub reason: RemovalReason,
    pub stats: FlowStats,
}

impl RemovedFlow {
    pub fn wants_notification(&self) -> bool {
        self.stats.flags & flags::SEND_FLOW_REM != 0
    }
}
