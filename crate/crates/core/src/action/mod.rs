//! Actions, action sets and the action execution engine.

mod buffer;
mod rewrite;

use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Mutex;

pub use buffer::{BufferOutcome, BufferedFrame, PacketBuffer, NO_BUFFER};
pub use rewrite::{apply, Skip};

use crate::bytes::{pad, pad_to_8, put_u16, put_u32, Reader};
use crate::error::OfpError;
use crate::oxm::{Oxm, OxmField};
use crate::packet::RawFrame;

/// Reserved OpenFlow port numbers.
pub mod port {
    pub const MAX: u32 = 0xffff_ff00;
    pub const IN_PORT: u32 = 0xffff_fff8;
    pub const TABLE: u32 = 0xffff_fff9;
    pub const NORMAL: u32 = 0xffff_fffa;
    pub const FLOOD: u32 = 0xffff_fffb;
    pub const ALL: u32 = 0xffff_fffc;
    pub const CONTROLLER: u32 = 0xffff_fffd;
    pub const LOCAL: u32 = 0xffff_fffe;
    pub const ANY: u32 = 0xffff_ffff;
}

/// `OFPCML_NO_BUFFER`: send the whole packet to the controller.
pub const CML_NO_BUFFER: u16 = 0xffff;

mod code {
    pub const OUTPUT: u16 = 0;
    pub const PUSH_VLAN: u16 = 17;
    pub const POP_VLAN: u16 = 18;
    pub const PUSH_MPLS: u16 = 19;
    pub const POP_MPLS: u16 = 20;
    pub const SET_NW_TTL: u16 = 23;
    pub const DEC_NW_TTL: u16 = 24;
    pub const SET_FIELD: u16 = 25;
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Action {
    /// `max_len` bounds the bytes sent when `port` is the controller.
    Output {
        port: u32,
        max_len: u16,
    },
    PushVlan(u16),
    PopVlan,
    PushMpls(u16),
    /// Pops the outer label and sets the EtherType to the argument.
    PopMpls(u16),
    /// The OXM is always unmasked.
    SetField(Oxm),
    SetNwTtl(u8),
    DecNwTtl,
}

impl Action {
    pub fn output(port: u32) -> Self {
        Action::Output {
            port,
            max_len: CML_NO_BUFFER,
        }
    }

    pub fn set_field(field: OxmField, value: u64) -> Self {
        Action::SetField(Oxm::exact(field, value))
    }

    /// Position in the action-set execution order.
    fn stage(&self) -> u8 {
        match self {
            Action::PopVlan | Action::PopMpls(_) => 2,
            Action::PushMpls(_) => 3,
            Action::PushVlan(_) => 5,
            Action::DecNwTtl => 7,
            Action::SetNwTtl(_) | Action::SetField(_) => 8,
            Action::Output { .. } => 11,
        }
    }

    /// Actions with equal keys replace each other inside an action set.
    fn set_key(&self) -> (u8, u8) {
        match self {
            Action::Output { .. } => (0, 0),
            Action::PushVlan(_) => (1, 0),
            Action::PopVlan => (2, 0),
            Action::PushMpls(_) => (3, 0),
            Action::PopMpls(_) => (4, 0),
            Action::SetField(o) => (5, o.field.code()),
            Action::SetNwTtl(_) => (6, 0),
            Action::DecNwTtl => (7, 0),
        }
    }

    pub fn wire_len(&self) -> usize {
        match self {
            Action::Output { .. } => 16,
            Action::SetField(o) => (4 + o.wire_len()).next_multiple_of(8),
            _ => 8,
        }
    }

    pub fn encode(&self, out: &mut Vec<u8>) {
        let start = out.len();
        match *self {
            Action::Output { port, max_len } => {
                put_u16(out, code::OUTPUT);
                put_u16(out, 16);
                put_u32(out, port);
                put_u16(out, max_len);
                pad(out, 6);
            }
            Action::PushVlan(et) | Action::PushMpls(et) | Action::PopMpls(et) => {
                let c = match self {
                    Action::PushVlan(_) => code::PUSH_VLAN,
                    Action::PushMpls(_) => code::PUSH_MPLS,
                    _ => code::POP_MPLS,
                };
                put_u16(out, c);
                put_u16(out, 8);
                put_u16(out, et);
                pad(out, 2);
            }
            Action::PopVlan | Action::DecNwTtl => {
                let c = if *self == Action::PopVlan {
                    code::POP_VLAN
                } else {
                    code::DEC_NW_TTL
                };
                put_u16(out, c);
                put_u16(out, 8);
                pad(out, 4);
            }
            Action::SetNwTtl(ttl) => {
                put_u16(out, code::SET_NW_TTL);
                put_u16(out, 8);
                out.push(ttl);
                pad(out, 3);
            }
            Action::SetField(oxm) => {
                put_u16(out, code::SET_FIELD);
                put_u16(out, self.wire_len() as u16);
                oxm.encode(out);
                pad_to_8(out, start);
            }
        }
    }

    pub(crate) fn decode(r: &mut Reader<'_>) -> Result<Self, OfpError> {
        let kind = r.u16().map_err(|_| OfpError::BAD_ACTION_LEN)?;
        let len = usize::from(r.u16().map_err(|_| OfpError::BAD_ACTION_LEN)?);
        if len < 8 || len % 8 != 0 {
            return Err(OfpError::BAD_ACTION_LEN);
        }
        let body = r.bytes(len - 4).map_err(|_| OfpError::BAD_ACTION_LEN)?;
        let mut b = Reader::new(body);
        let fixed = |expect: usize| {
            if len == expect {
                Ok(())
            } else {
                Err(OfpError::BAD_ACTION_LEN)
            }
        };
        let short = |_| OfpError::BAD_ACTION_LEN;
        Ok(match kind {
            code::OUTPUT => {
                fixed(16)?;
                Action::Output {
                    port: b.u32().map_err(short)?,
                    max_len: b.u16().map_err(short)?,
                }
            }
            code::PUSH_VLAN => {
                fixed(8)?;
                Action::PushVlan(b.u16().map_err(short)?)
            }
            code::POP_VLAN => {
                fixed(8)?;
                Action::PopVlan
            }
            code::PUSH_MPLS => {
                fixed(8)?;
                Action::PushMpls(b.u16().map_err(short)?)
            }
            code::POP_MPLS => {
                fixed(8)?;
                Action::PopMpls(b.u16().map_err(short)?)
            }
            code::SET_NW_TTL => {
                fixed(8)?;
                Action::SetNwTtl(b.u8().map_err(short)?)
            }
            code::DEC_NW_TTL => {
                fixed(8)?;
                Action::DecNwTtl
            }
            code::SET_FIELD => {
                let oxm = Oxm::decode(&mut b).map_err(|e| match e {
                    OfpError::BAD_FIELD => OfpError::BAD_SET_TYPE,
                    _ => OfpError::BAD_SET_LEN,
                })?;
                if oxm.mask.is_some() {
                    return Err(OfpError::BAD_SET_ARGUMENT);
                }
                if (4 + oxm.wire_len()).next_multiple_of(8) != len {
                    return Err(OfpError::BAD_SET_LEN);
                }
                Action::SetField(oxm)
            }
            _ => return Err(OfpError::BAD_ACTION_TYPE),
        })
    }
}

/// Encodes a list of actions back to back.
pub fn encode_actions(actions: &[Action], out: &mut Vec<u8>) {
    for a in actions {
        a.encode(out);
    }
}

pub(crate) fn decode_actions(bytes: &[u8]) -> Result<Vec<Action>, OfpError> {
    let mut r = Reader::new(bytes);
    let mut out = Vec::new();
    while !r.is_empty() {
        out.push(Action::decode(&mut r)?);
    }
    Ok(out)
}

pub fn actions_len(actions: &[Action]) -> usize {
    actions.iter().map(Action::wire_len).sum()
}

/// Checks an action list against the switch: output ports must exist or be
/// a supported reserved port, push ethertypes must fit the header and
/// set-field values must fit the field.
pub fn validate_actions(list: &[Action], port_count: u32) -> Result<(), OfpError> {
    for a in list {
        match *a {
            Action::Output { port: p, .. } => {
                let reserved = matches!(
                    p,
                    port::IN_PORT | port::ALL | port::FLOOD | port::CONTROLLER
                );
                if p >= port_count && !reserved {
                    return Err(OfpError::BAD_OUT_PORT);
                }
            }
            Action::PushVlan(et) if !crate::packet::ethertype::is_vlan(et) => {
                return Err(OfpError::BAD_ACTION_ARGUMENT)
            }
            Action::PushMpls(et) if !crate::packet::ethertype::is_mpls(et) => {
                return Err(OfpError::BAD_ACTION_ARGUMENT)
            }
            Action::SetField(oxm) => {
                if oxm.field == OxmField::InPort {
                    return Err(OfpError::BAD_SET_TYPE);
                }
                if oxm.value > oxm.field.max_value() {
                    return Err(OfpError::BAD_SET_ARGUMENT);
                }
            }
            _ => {}
        }
    }
    Ok(())
}

/// Actions kept in execution order: pops, push-MPLS, push-VLAN, TTL
/// decrement, set-field, output.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct ActionSet {
    actions: Vec<Action>,
}

impl ActionSet {
    pub fn new() -> Self {
        ActionSet::default()
    }

    /// Builds a set from an explicit list, keeping duplicates (several
    /// outputs, for instance) and ordering by execution stage.
    pub fn from_list(list: &[Action]) -> Self {
        let mut actions = list.to_vec();
        actions.sort_by_key(Action::stage);
        ActionSet { actions }
    }

    /// Merges `list` into the set; an action replaces any existing one of the
    /// same type (same field for set-field).
    pub fn write(&mut self, list: &[Action]) {
        for a in list {
            self.actions.retain(|x| x.set_key() != a.set_key());
            let at = self
                .actions
                .iter()
                .position(|x| x.stage() > a.stage())
                .unwrap_or(self.actions.len());
            self.actions.insert(at, *a);
        }
    }

    pub fn clear(&mut self) {
        self.actions.clear();
    }

    pub fn is_empty(&self) -> bool {
        self.actions.is_empty()
    }

    pub fn len(&self) -> usize {
        self.actions.len()
    }

    pub fn iter(&self) -> std::slice::Iter<'_, Action> {
        self.actions.iter()
    }

    pub fn as_slice(&self) -> &[Action] {
        &self.actions
    }

    pub fn has_output(&self) -> bool {
        self.actions
            .iter()
            .any(|a| matches!(a, Action::Output { .. }))
    }
}

impl<'a> IntoIterator for &'a ActionSet {
    type Item = &'a Action;
    type IntoIter = std::slice::Iter<'a, Action>;

    fn into_iter(self) -> Self::IntoIter {
        self.actions.iter()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Egress {
    Port(u32),
    Controller { max_len: u16 },
}

/// One copy of a frame leaving the engine.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Emit {
    pub egress: Egress,
    pub data: Vec<u8>,
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Execution {
    pub emits: Vec<Emit>,
    /// A TTL decrement hit zero and the packet was dropped.
    pub ttl_expired: bool,
    /// Actions skipped because the frame lacked the header they act on.
    pub skipped: u32,
}

impl Execution {
    pub fn is_drop(&self) -> bool {
        self.emits.is_empty()
    }
}

/// Executes an action set against a copy of `data` received on `in_port`.
///
/// Output to `ALL`/`FLOOD` expands to every port but the ingress port.
pub fn execute_on(in_port: u32, data: &[u8], actions: &ActionSet, port_count: u32) -> Execution {
    let mut out = Execution::default();
    let mut frame = data.to_vec();
    for action in actions {
        match *action {
            Action::Output { port: p, max_len } => match p {
                port::CONTROLLER => out.emits.push(Emit {
                    egress: Egress::Controller { max_len },
                    data: frame.clone(),
                }),
                port::ALL | port::FLOOD => {
                    for p in (0..port_count).filter(|p| *p != in_port) {
                        out.emits.push(Emit {
                            egress: Egress::Port(p),
                            data: frame.clone(),
                        });
                    }
                }
                port::IN_PORT => out.emits.push(Emit {
                    egress: Egress::Port(in_port),
                    data: frame.clone(),
                }),
                p if p < port_count => out.emits.push(Emit {
                    egress: Egress::Port(p),
                    data: frame.clone(),
                }),
                _ => out.skipped += 1,
            },
            ref modify => match apply(&mut frame, modify) {
                Ok(()) => {}
                Err(Skip::TtlExpired) => {
                    out.emits.clear();
                    out.ttl_expired = true;
                    return out;
                }
                Err(Skip::MissingHeader) => out.skipped += 1,
            },
        }
    }
    out
}

/// The action execution engine: stateless rewriting plus the packet buffer
/// that holds table-miss frames until the controller decides.
#[derive(Debug)]
pub struct ActionEngine {
    port_count: u32,
    buffer: Mutex<PacketBuffer>,
    skipped: AtomicU64,
}

impl ActionEngine {
    pub fn new(port_count: u32, buffer_capacity: usize, buffer_ttl_ns: u64) -> Self {
        ActionEngine {
            port_count,
            buffer: Mutex::new(PacketBuffer::new(buffer_capacity, buffer_ttl_ns)),
            skipped: AtomicU64::new(0),
        }
    }

    pub fn port_count(&self) -> u32 {
        self.port_count
    }

    pub fn execute(&self, frame: &RawFrame, actions: &ActionSet) -> Execution {
        let ex = execute_on(frame.ingress_port, &frame.data, actions, self.port_count);
        if ex.skipped > 0 {
            self.skipped
                .fetch_add(u64::from(ex.skipped), Ordering::Relaxed);
        }
        ex
    }

    /// Actions skipped so far for lack of a matching header or port.
    pub fn skipped_actions(&self) -> u64 {
        self.skipped.load(Ordering::Relaxed)
    }

    pub fn buffer_for_controller(
        &self,
        frame: RawFrame,
        miss_table: u8,
        now: u64,
    ) -> BufferOutcome {
        self.lock().store(frame, miss_table, now)
    }

    /// Frees `buffer_id` and executes `actions` on the stored frame.
    pub fn release(
        &self,
        buffer_id: u32,
        actions: &ActionSet,
    ) -> Result<(RawFrame, Execution), OfpError> {
        let stored = self.take(buffer_id)?;
        let ex = self.execute(&stored.frame, actions);
        Ok((stored.frame, ex))
    }

    /// Frees `buffer_id` without executing anything.
    pub fn take(&self, buffer_id: u32) -> Result<BufferedFrame, OfpError> {
        self.lock().take(buffer_id).ok_or(OfpError::BUFFER_UNKNOWN)
    }

    pub fn expire_buffers(&self, now: u64) -> Vec<BufferedFrame> {
        self.lock().expire(now)
    }

    pub fn buffered(&self) -> usize {
        self.lock().len()
    }

    pub fn buffer_capacity(&self) -> usize {
        self.lock().capacity()
    }

    fn lock(&self) -> std::sync::MutexGuard<'_, PacketBuffer> {
        self.buffer.lock().unwrap_or_else(|e| e.into_inner())
    }
}
