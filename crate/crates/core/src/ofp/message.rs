//! OpenFlow 1.3 message types and their wire codec.
//!
//! Every encoded message is zero-padded to a multiple of 8 bytes and the
//! header length covers the padding. Decoding accepts trailing padding after
//! fixed-size bodies; variable `data` fields extend to the end of the message.

use thiserror::Error;

use crate::action::{actions_len, decode_actions, encode_actions, Action};
use crate::bytes::{pad, pad_to_8, patch_u16, put_u16, put_u32, put_u64, Reader, Short};
use crate::error::OfpError;
use crate::oxm::Match;
use crate::pipeline::{
    decode_instructions, encode_instructions, FlowMod, FlowModCommand, FlowStats, RemovalReason,
    TableStats,
};

pub const OFP_VERSION: u8 = 0x04;
pub const HEADER_LEN: usize = 8;
/// Multipart `REQ_MORE` / `REPLY_MORE`.
pub const MULTIPART_MORE: u16 = 1;

pub mod msg_type {
    pub const HELLO: u8 = 0;
    pub const ERROR: u8 = 1;
    pub const ECHO_REQUEST: u8 = 2;
    pub const ECHO_REPLY: u8 = 3;
    pub const FEATURES_REQUEST: u8 = 5;
    pub const FEATURES_REPLY: u8 = 6;
    pub const GET_CONFIG_REQUEST: u8 = 7;
    pub const GET_CONFIG_REPLY: u8 = 8;
    pub const SET_CONFIG: u8 = 9;
    pub const PACKET_IN: u8 = 10;
    pub const FLOW_REMOVED: u8 = 11;
    pub const PACKET_OUT: u8 = 13;
    pub const FLOW_MOD: u8 = 14;
    pub const TABLE_MOD: u8 = 17;
    pub const MULTIPART_REQUEST: u8 = 18;
    pub const MULTIPART_REPLY: u8 = 19;
    pub const BARRIER_REQUEST: u8 = 20;
    pub const BARRIER_REPLY: u8 = 21;
}

pub mod multipart {
    pub const DESC: u16 = 0;
    pub const FLOW: u16 = 1;
    pub const TABLE: u16 = 3;
    pub const PORT_STATS: u16 = 4;
    pub const QUEUE: u16 = 5;
    pub const PORT_DESC: u16 = 13;
}

/// `ofp_capabilities` bits.
pub mod capabilities {
    pub const FLOW_STATS: u32 = 1 << 0;
    pub const TABLE_STATS: u32 = 1 << 1;
    pub const PORT_STATS: u32 = 1 << 2;
    pub const QUEUE_STATS: u32 = 1 << 6;
}

const HELLO_ELEM_VERSIONBITMAP: u16 = 1;
const DESC_STR_LEN: usize = 256;
const SERIAL_NUM_LEN: usize = 32;
const PORT_NAME_LEN: usize = 16;

/// Connection-fatal: the byte stream cannot be split into messages.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Error)]
pub enum FramingError {
    #[error("header length {0} is below 8")]
    LengthTooSmall(u16),
    #[error("message needs {needed} bytes, {available} available")]
    Truncated { needed: usize, available: usize },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Error)]
pub enum DecodeError {
    #[error(transparent)]
    Framing(#[from] FramingError),
    /// The message is framed correctly but malformed; the connection
    /// survives and the peer gets an error reply.
    #[error("message xid {xid}: {error}")]
    Message { xid: u32, error: OfpError },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Error)]
pub enum EncodeError {
    #[error("encoded message is {0} bytes, over the 65535 limit")]
    TooLong(usize),
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum HelloElement {
    VersionBitmap(Vec<u32>),
    Unknown { kind: u16, data: Vec<u8> },
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Hello {
    pub elements: Vec<HelloElement>,
}

impl Hello {
    /// A Hello advertising only OpenFlow 1.3.
    pub fn v13() -> Self {
        Hello {
            elements: vec![HelloElement::VersionBitmap(vec![1 << OFP_VERSION])],
        }
    }

    pub fn bitmap(&self) -> Option<&[u32]> {
        self.elements.iter().find_map(|e| match e {
            HelloElement::VersionBitmap(b) => Some(b.as_slice()),
            HelloElement::Unknown { .. } => None,
        })
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ErrorMsg {
    pub error: OfpError,
    /// Leading bytes of the offending request.
    pub data: Vec<u8>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Features {
    pub datapath_id: u64,
    pub n_buffers: u32,
    pub n_tables: u8,
    pub auxiliary_id: u8,
    pub capabilities: u32,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SwitchConfig {
    pub flags: u16,
    pub miss_send_len: u16,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum PacketInReason {
    NoMatch = 0,
    Action = 1,
    InvalidTtl = 2,
}

impl PacketInReason {
    fn from_code(c: u8) -> Option<Self> {
        Some(match c {
            0 => PacketInReason::NoMatch,
            1 => PacketInReason::Action,
            2 => PacketInReason::InvalidTtl,
            _ => return None,
        })
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PacketIn {
    pub buffer_id: u32,
    pub total_len: u16,
    pub reason: PacketInReason,
    pub table_id: u8,
    pub cookie: u64,
    pub match_fields: Match,
    pub data: Vec<u8>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FlowRemoved {
    pub cookie: u64,
    pub priority: u16,
    pub reason: RemovalReason,
    pub table_id: u8,
    pub duration_sec: u32,
    pub duration_nsec: u32,
    pub idle_timeout: u16,
    pub hard_timeout: u16,
    pub packet_count: u64,
    pub byte_count: u64,
    pub match_fields: Match,
}

impl From<&crate::pipeline::RemovedFlow> for FlowRemoved {
    fn from(r: &crate::pipeline::RemovedFlow) -> Self {
        let s = &r.stats;
        FlowRemoved {
            cookie: s.cookie,
            priority: s.priority,
            reason: r.reason,
            table_id: s.table_id,
            duration_sec: s.duration_sec,
            duration_nsec: s.duration_nsec,
            idle_timeout: s.idle_timeout,
            hard_timeout: s.hard_timeout,
            packet_count: s.packet_count,
            byte_count: s.byte_count,
            match_fields: s.match_fields.clone(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PacketOut {
    pub buffer_id: u32,
    pub in_port: u32,
    pub actions: Vec<Action>,
    pub data: Vec<u8>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct TableMod {
    pub table_id: u8,
    pub config: u32,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FlowStatsRequest {
    pub table_id: u8,
    pub out_port: u32,
    pub out_group: u32,
    pub cookie: u64,
    pub cookie_mask: u64,
    pub match_fields: Match,
}

impl Default for FlowStatsRequest {
    fn default() -> Self {
        FlowStatsRequest {
            table_id: crate::pipeline::ALL_TABLES,
            out_port: crate::action::port::ANY,
            out_group: 0xffff_ffff,
            cookie: 0,
            cookie_mask: 0,
            match_fields: Match::any(),
        }
    }
}

impl FlowStatsRequest {
    pub fn filter(&self) -> crate::pipeline::FlowFilter {
        crate::pipeline::FlowFilter {
            table_id: self.table_id,
            out_port: self.out_port,
            cookie: self.cookie,
            cookie_mask: self.cookie_mask,
            match_fields: self.match_fields.clone(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum MultipartRequestBody {
    Desc,
    Flow(FlowStatsRequest),
    Table,
    PortStats { port_no: u32 },
    Queue { port_no: u32, queue_id: u32 },
    PortDesc,
    Unknown { kind: u16, body: Vec<u8> },
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MultipartRequest {
    pub flags: u16,
    pub body: MultipartRequestBody,
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Desc {
    pub mfr_desc: String,
    pub hw_desc: String,
    pub sw_desc: String,
    pub serial_num: String,
    pub dp_desc: String,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct PortStats {
    pub port_no: u32,
    pub rx_packets: u64,
    pub tx_packets: u64,
    pub rx_bytes: u64,
    pub tx_bytes: u64,
    pub rx_dropped: u64,
    pub tx_dropped: u64,
    pub rx_errors: u64,
    pub tx_errors: u64,
    pub rx_frame_err: u64,
    pub rx_over_err: u64,
    pub rx_crc_err: u64,
    pub collisions: u64,
    pub duration_sec: u32,
    pub duration_nsec: u32,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct QueueStats {
    pub port_no: u32,
    pub queue_id: u32,
    pub tx_bytes: u64,
    pub tx_packets: u64,
    pub tx_errors: u64,
    pub duration_sec: u32,
    pub duration_nsec: u32,
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct PortDesc {
    pub port_no: u32,
    pub hw_addr: u64,
    pub name: String,
    pub config: u32,
    pub state: u32,
    pub curr: u32,
    pub advertised: u32,
    pub supported: u32,
    pub peer: u32,
    pub curr_speed: u32,
    pub max_speed: u32,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum MultipartReplyBody {
    Desc(Desc),
    Flow(Vec<FlowStats>),
    Table(Vec<TableStats>),
    PortStats(Vec<PortStats>),
    Queue(Vec<QueueStats>),
    PortDesc(Vec<PortDesc>),
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MultipartReply {
    pub flags: u16,
    pub body: MultipartReplyBody,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Message {
    Hello(Hello),
    Error(ErrorMsg),
    EchoRequest(Vec<u8>),
    EchoReply(Vec<u8>),
    FeaturesRequest,
    FeaturesReply(Features),
    GetConfigRequest,
    GetConfigReply(SwitchConfig),
    SetConfig(SwitchConfig),
    PacketIn(PacketIn),
    FlowRemoved(FlowRemoved),
    PacketOut(PacketOut),
    FlowMod(FlowMod),
    TableMod(TableMod),
    MultipartRequest(MultipartRequest),
    MultipartReply(MultipartReply),
    BarrierRequest,
    BarrierReply,
    /// A well-framed message of a type outside the supported subset.
    Unsupported {
        msg_type: u8,
        body: Vec<u8>,
    },
}

impl Message {
    pub fn msg_type(&self) -> u8 {
        use msg_type::*;
        match self {
            Message::Hello(_) => HELLO,
            Message::Error(_) => ERROR,
            Message::EchoRequest(_) => ECHO_REQUEST,
            Message::EchoReply(_) => ECHO_REPLY,
            Message::FeaturesRequest => FEATURES_REQUEST,
            Message::FeaturesReply(_) => FEATURES_REPLY,
            Message::GetConfigRequest => GET_CONFIG_REQUEST,
            Message::GetConfigReply(_) => GET_CONFIG_REPLY,
            Message::SetConfig(_) => SET_CONFIG,
            Message::PacketIn(_) => PACKET_IN,
            Message::FlowRemoved(_) => FLOW_REMOVED,
            Message::PacketOut(_) => PACKET_OUT,
            Message::FlowMod(_) => FLOW_MOD,
            Message::TableMod(_) => TABLE_MOD,
            Message::MultipartRequest(_) => MULTIPART_REQUEST,
            Message::MultipartReply(_) => MULTIPART_REPLY,
            Message::BarrierRequest => BARRIER_REQUEST,
            Message::BarrierReply => BARRIER_REPLY,
            Message::Unsupported { msg_type, .. } => *msg_type,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Message::Hello(_) => "HELLO",
            Message::Error(_) => "ERROR",
            Message::EchoRequest(_) => "ECHO_REQUEST",
            Message::EchoReply(_) => "ECHO_REPLY",
            Message::FeaturesRequest => "FEATURES_REQUEST",
            Message::FeaturesReply(_) => "FEATURES_REPLY",
            Message::GetConfigRequest => "GET_CONFIG_REQUEST",
            Message::GetConfigReply(_) => "GET_CONFIG_REPLY",
            Message::SetConfig(_) => "SET_CONFIG",
            Message::PacketIn(_) => "PACKET_IN",
            Message::FlowRemoved(_) => "FLOW_REMOVED",
            Message::PacketOut(_) => "PACKET_OUT",
            Message::FlowMod(_) => "FLOW_MOD",
            Message::TableMod(_) => "TABLE_MOD",
            Message::MultipartRequest(_) => "MULTIPART_REQUEST",
            Message::MultipartReply(_) => "MULTIPART_REPLY",
            Message::BarrierRequest => "BARRIER_REQUEST",
            Message::BarrierReply => "BARRIER_REPLY",
            Message::Unsupported { .. } => "UNSUPPORTED",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct OfpMessage {
    pub version: u8,
    pub xid: u32,
    pub body: Message,
}

impl OfpMessage {
    pub fn new(xid: u32, body: Message) -> Self {
        OfpMessage {
            version: OFP_VERSION,
            xid,
            body,
        }
    }

    pub fn encode(&self) -> Result<Vec<u8>, EncodeError> {
        encode(self)
    }
}

/// Length of the first complete message in `buf`, or `None` when more bytes
/// are needed.
pub fn frame_len(buf: &[u8]) -> Result<Option<usize>, FramingError> {
    if buf.len() < HEADER_LEN {
        return Ok(None);
    }
    let len = u16::from_be_bytes([buf[2], buf[3]]);
    if usize::from(len) < HEADER_LEN {
        return Err(FramingError::LengthTooSmall(len));
    }
    Ok((buf.len() >= usize::from(len)).then_some(usize::from(len)))
}

trait OrLen<T> {
    fn or_len(self) -> Result<T, OfpError>;
}

impl<T> OrLen<T> for Result<T, Short> {
    fn or_len(self) -> Result<T, OfpError> {
        self.map_err(|_| OfpError::BAD_REQUEST_LEN)
    }
}

fn put_str(out: &mut Vec<u8>, s: &str, n: usize) {
    let b = s.as_bytes();
    let take = b.len().min(n - 1);
    out.extend_from_slice(&b[..take]);
    pad(out, n - take);
}

fn get_str(r: &mut Reader<'_>, n: usize) -> Result<String, OfpError> {
    let raw = r.bytes(n).or_len()?;
    let end = raw.iter().position(|b| *b == 0).unwrap_or(n);
    Ok(String::from_utf8_lossy(&raw[..end]).into_owned())
}

pub fn encode(m: &OfpMessage) -> Result<Vec<u8>, EncodeError> {
    let mut out = Vec::with_capacity(64);
    out.push(m.version);
    out.push(m.body.msg_type());
    put_u16(&mut out, 0);
    put_u32(&mut out, m.xid);
    encode_body(&m.body, &mut out);
    pad_to_8(&mut out, 0);
    if out.len() > usize::from(u16::MAX) {
        return Err(EncodeError::TooLong(out.len()));
    }
    let len = out.len() as u16;
    patch_u16(&mut out, 2, len);
    Ok(out)
}

fn encode_body(body: &Message, out: &mut Vec<u8>) {
    match body {
        Message::Hello(h) => {
            for e in &h.elements {
                let start = out.len();
                match e {
                    HelloElement::VersionBitmap(bits) => {
                        put_u16(out, HELLO_ELEM_VERSIONBITMAP);
                        put_u16(out, (4 + 4 * bits.len()) as u16);
                        for b in bits {
                            put_u32(out, *b);
                        }
                    }
                    HelloElement::Unknown { kind, data } => {
                        put_u16(out, *kind);
                        put_u16(out, (4 + data.len()) as u16);
                        out.extend_from_slice(data);
                    }
                }
                pad_to_8(out, start);
            }
        }
        Message::Error(e) => {
            put_u16(out, e.error.err_type);
            put_u16(out, e.error.code);
            out.extend_from_slice(&e.data);
        }
        Message::EchoRequest(d) | Message::EchoReply(d) => out.extend_from_slice(d),
        Message::FeaturesRequest
        | Message::GetConfigRequest
        | Message::BarrierRequest
        | Message::BarrierReply => {}
        Message::FeaturesReply(f) => {
            put_u64(out, f.datapath_id);
            put_u32(out, f.n_buffers);
            out.push(f.n_tables);
            out.push(f.auxiliary_id);
            pad(out, 2);
            put_u32(out, f.capabilities);
            put_u32(out, 0);
        }
        Message::GetConfigReply(c) | Message::SetConfig(c) => {
            put_u16(out, c.flags);
            put_u16(out, c.miss_send_len);
        }
        Message::PacketIn(p) => {
            put_u32(out, p.buffer_id);
            put_u16(out, p.total_len);
            out.push(p.reason as u8);
            out.push(p.table_id);
            put_u64(out, p.cookie);
            p.match_fields.encode(out);
            pad(out, 2);
            out.extend_from_slice(&p.data);
        }
        Message::FlowRemoved(f) => {
            put_u64(out, f.cookie);
            put_u16(out, f.priority);
            out.push(f.reason as u8);
            out.push(f.table_id);
            put_u32(out, f.duration_sec);
            put_u32(out, f.duration_nsec);
            put_u16(out, f.idle_timeout);
            put_u16(out, f.hard_timeout);
            put_u64(out, f.packet_count);
            put_u64(out, f.byte_count);
            f.match_fields.encode(out);
        }
        Message::PacketOut(p) => {
            put_u32(out, p.buffer_id);
            put_u32(out, p.in_port);
            put_u16(out, actions_len(&p.actions) as u16);
            pad(out, 6);
            encode_actions(&p.actions, out);
            out.extend_from_slice(&p.data);
        }
        Message::FlowMod(f) => {
            put_u64(out, f.cookie);
            put_u64(out, f.cookie_mask);
            out.push(f.table_id);
            out.push(f.command as u8);
            put_u16(out, f.idle_timeout);
            put_u16(out, f.hard_timeout);
            put_u16(out, f.priority);
            put_u32(out, f.buffer_id);
            put_u32(out, f.out_port);
            put_u32(out, f.out_group);
            put_u16(out, f.flags);
            pad(out, 2);
            f.match_fields.encode(out);
            encode_instructions(&f.instructions, out);
        }
        Message::TableMod(t) => {
            out.push(t.table_id);
            pad(out, 3);
            put_u32(out, t.config);
        }
        Message::MultipartRequest(m) => encode_mp_request(m, out),
        Message::MultipartReply(m) => encode_mp_reply(m, out),
        Message::Unsupported { body, .. } => out.extend_from_slice(body),
    }
}

fn encode_mp_request(m: &MultipartRequest, out: &mut Vec<u8>) {
    let kind = match &m.body {
        MultipartRequestBody::Desc => multipart::DESC,
        MultipartRequestBody::Flow(_) => multipart::FLOW,
        MultipartRequestBody::Table => multipart::TABLE,
        MultipartRequestBody::PortStats { .. } => multipart::PORT_STATS,
        MultipartRequestBody::Queue { .. } => multipart::QUEUE,
        MultipartRequestBody::PortDesc => multipart::PORT_DESC,
        MultipartRequestBody::Unknown { kind, .. } => *kind,
    };
    put_u16(out, kind);
    put_u16(out, m.flags);
    pad(out, 4);
    match &m.body {
        MultipartRequestBody::Flow(f) => {
            out.push(f.table_id);
            pad(out, 3);
            put_u32(out, f.out_port);
            put_u32(out, f.out_group);
            pad(out, 4);
            put_u64(out, f.cookie);
            put_u64(out, f.cookie_mask);
            f.match_fields.encode(out);
        }
        MultipartRequestBody::PortStats { port_no } => {
            put_u32(out, *port_no);
            pad(out, 4);
        }
        MultipartRequestBody::Queue { port_no, queue_id } => {
            put_u32(out, *port_no);
            put_u32(out, *queue_id);
        }
        MultipartRequestBody::Unknown { body, .. } => out.extend_from_slice(body),
        MultipartRequestBody::Desc
        | MultipartRequestBody::Table
        | MultipartRequestBody::PortDesc => {}
    }
}

fn encode_flow_stats(f: &FlowStats, out: &mut Vec<u8>) {
    let start = out.len();
    put_u16(out, 0);
    out.push(f.table_id);
    pad(out, 1);
    put_u32(out, f.duration_sec);
    put_u32(out, f.duration_nsec);
    put_u16(out, f.priority);
    put_u16(out, f.idle_timeout);
    put_u16(out, f.hard_timeout);
    put_u16(out, f.flags);
    pad(out, 4);
    put_u64(out, f.cookie);
    put_u64(out, f.packet_count);
    put_u64(out, f.byte_count);
    f.match_fields.encode(out);
    encode_instructions(&f.instructions, out);
    let len = (out.len() - start) as u16;
    patch_u16(out, start, len);
}

/// Encoded size of one flow-stats record.
pub fn flow_stats_len(f: &FlowStats) -> usize {
    48 + f.match_fields.wire_len() + crate::pipeline::instructions_len(&f.instructions)
}

fn encode_mp_reply(m: &MultipartReply, out: &mut Vec<u8>) {
    let kind = match &m.body {
        MultipartReplyBody::Desc(_) => multipart::DESC,
        MultipartReplyBody::Flow(_) => multipart::FLOW,
        MultipartReplyBody::Table(_) => multipart::TABLE,
        MultipartReplyBody::PortStats(_) => multipart::PORT_STATS,
        MultipartReplyBody::Queue(_) => multipart::QUEUE,
        MultipartReplyBody::PortDesc(_) => multipart::PORT_DESC,
    };
    put_u16(out, kind);
    put_u16(out, m.flags);
    pad(out, 4);
    match &m.body {
        MultipartReplyBody::Desc(d) => {
            put_str(out, &d.mfr_desc, DESC_STR_LEN);
            put_str(out, &d.hw_desc, DESC_STR_LEN);
            put_str(out, &d.sw_desc, DESC_STR_LEN);
            put_str(out, &d.serial_num, SERIAL_NUM_LEN);
            put_str(out, &d.dp_desc, DESC_STR_LEN);
        }
        MultipartReplyBody::Flow(list) => list.iter().for_each(|f| encode_flow_stats(f, out)),
        MultipartReplyBody::Table(list) => {
            for t in list {
                out.push(t.table_id);
                pad(out, 3);
                put_u32(out, t.active_count);
                put_u64(out, t.lookup_count);
                put_u64(out, t.matched_count);
            }
        }
        MultipartReplyBody::PortStats(list) => {
            for p in list {
                put_u32(out, p.port_no);
                pad(out, 4);
                for v in [
                    p.rx_packets,
                    p.tx_packets,
                    p.rx_bytes,
                    p.tx_bytes,
                    p.rx_dropped,
                    p.tx_dropped,
                    p.rx_errors,
                    p.tx_errors,
                    p.rx_frame_err,
                    p.rx_over_err,
                    p.rx_crc_err,
                    p.collisions,
                ] {
                    put_u64(out, v);
                }
                put_u32(out, p.duration_sec);
                put_u32(out, p.duration_nsec);
            }
        }
        MultipartReplyBody::Queue(list) => {
            for q in list {
                put_u32(out, q.port_no);
                put_u32(out, q.queue_id);
                put_u64(out, q.tx_bytes);
                put_u64(out, q.tx_packets);
                put_u64(out, q.tx_errors);
                put_u32(out, q.duration_sec);
                put_u32(out, q.duration_nsec);
            }
        }
        MultipartReplyBody::PortDesc(list) => {
            for p in list {
                put_u32(out, p.port_no);
                pad(out, 4);
                out.extend_from_slice(&p.hw_addr.to_be_bytes()[2..]);
                pad(out, 2);
                put_str(out, &p.name, PORT_NAME_LEN);
                for v in [
                    p.config,
                    p.state,
                    p.curr,
                    p.advertised,
                    p.supported,
                    p.peer,
                    p.curr_speed,
                    p.max_speed,
                ] {
                    put_u32(out, v);
                }
            }
        }
    }
}

/// Decodes the first message in `bytes`.
pub fn decode(bytes: &[u8]) -> Result<OfpMessage, DecodeError> {
    decode_one(bytes).map(|(m, _)| m)
}

/// Decodes the first message in `bytes` and returns it with its length.
pub fn decode_one(bytes: &[u8]) -> Result<(OfpMessage, usize), DecodeError> {
    let len = match frame_len(bytes)? {
        Some(n) => n,
        None => {
            let needed = if bytes.len() < HEADER_LEN {
                HEADER_LEN
            } else {
                usize::from(u16::from_be_bytes([bytes[2], bytes[3]]))
            };
            return Err(FramingError::Truncated {
                needed,
                available: bytes.len(),
            }
            .into());
        }
    };
    let version = bytes[0];
    let kind = bytes[1];
    let xid = u32::from_be_bytes([bytes[4], bytes[5], bytes[6], bytes[7]]);
    let fail = |error| DecodeError::Message { xid, error };
    if version != OFP_VERSION && kind != msg_type::HELLO {
        return Err(fail(OfpError::BAD_VERSION));
    }
    let mut r = Reader::new(&bytes[HEADER_LEN..len]);
    let body = decode_body(kind, &mut r).map_err(fail)?;
    Ok((OfpMessage { version, xid, body }, len))
}

fn decode_body(kind: u8, r: &mut Reader<'_>) -> Result<Message, OfpError> {
    use msg_type::*;
    Ok(match kind {
        HELLO => Message::Hello(decode_hello(r)?),
        ERROR => Message::Error(ErrorMsg {
            error: OfpError::new(r.u16().or_len()?, r.u16().or_len()?),
            data: r.rest().to_vec(),
        }),
        ECHO_REQUEST => Message::EchoRequest(r.rest().to_vec()),
        ECHO_REPLY => Message::EchoReply(r.rest().to_vec()),
        FEATURES_REQUEST => Message::FeaturesRequest,
        GET_CONFIG_REQUEST => Message::GetConfigRequest,
        BARRIER_REQUEST => Message::BarrierRequest,
        BARRIER_REPLY => Message::BarrierReply,
        FEATURES_REPLY => {
            let datapath_id = r.u64().or_len()?;
            let n_buffers = r.u32().or_len()?;
            let n_tables = r.u8().or_len()?;
            let auxiliary_id = r.u8().or_len()?;
            r.skip(2).or_len()?;
            let capabilities = r.u32().or_len()?;
            r.skip(4).or_len()?;
            Message::FeaturesReply(Features {
                datapath_id,
                n_buffers,
                n_tables,
                auxiliary_id,
                capabilities,
            })
        }
        GET_CONFIG_REPLY | SET_CONFIG => {
            let c = SwitchConfig {
                flags: r.u16().or_len()?,
                miss_send_len: r.u16().or_len()?,
            };
            if kind == SET_CONFIG {
                Message::SetConfig(c)
            } else {
                Message::GetConfigReply(c)
            }
        }
        PACKET_IN => {
            let buffer_id = r.u32().or_len()?;
            let total_len = r.u16().or_len()?;
            let reason = PacketInReason::from_code(r.u8().or_len()?).ok_or(OfpError::BAD_PACKET)?;
            let table_id = r.u8().or_len()?;
            let cookie = r.u64().or_len()?;
            let match_fields = Match::decode(r)?;
            r.skip(2).or_len()?;
            // Data never exceeds the frame; anything past total_len is padding.
            let rest = r.rest();
            let data = rest[..rest.len().min(usize::from(total_len))].to_vec();
            Message::PacketIn(PacketIn {
                buffer_id,
                total_len,
                reason,
                table_id,
                cookie,
                match_fields,
                data,
            })
        }
        FLOW_REMOVED => {
            let cookie = r.u64().or_len()?;
            let priority = r.u16().or_len()?;
            let reason = RemovalReason::from_code(r.u8().or_len()?).ok_or(OfpError::BAD_PACKET)?;
            Message::FlowRemoved(FlowRemoved {
                cookie,
                priority,
                reason,
                table_id: r.u8().or_len()?,
                duration_sec: r.u32().or_len()?,
                duration_nsec: r.u32().or_len()?,
                idle_timeout: r.u16().or_len()?,
                hard_timeout: r.u16().or_len()?,
                packet_count: r.u64().or_len()?,
                byte_count: r.u64().or_len()?,
                match_fields: Match::decode(r)?,
            })
        }
        PACKET_OUT => {
            let buffer_id = r.u32().or_len()?;
            let in_port = r.u32().or_len()?;
            let alen = usize::from(r.u16().or_len()?);
            r.skip(6).or_len()?;
            let actions = decode_actions(r.bytes(alen).or_len()?)?;
            Message::PacketOut(PacketOut {
                buffer_id,
                in_port,
                actions,
                data: r.rest().to_vec(),
            })
        }
        FLOW_MOD => Message::FlowMod(decode_flow_mod(r)?),
        TABLE_MOD => {
            let table_id = r.u8().or_len()?;
            r.skip(3).or_len()?;
            Message::TableMod(TableMod {
                table_id,
                config: r.u32().or_len()?,
            })
        }
        MULTIPART_REQUEST => Message::MultipartRequest(decode_mp_request(r)?),
        MULTIPART_REPLY => Message::MultipartReply(decode_mp_reply(r)?),
        other => Message::Unsupported {
            msg_type: other,
            body: r.rest().to_vec(),
        },
    })
}

fn decode_hello(r: &mut Reader<'_>) -> Result<Hello, OfpError> {
    let mut elements = Vec::new();
    while r.remaining() >= 4 {
        let kind = r.u16().or_len()?;
        let len = usize::from(r.u16().or_len()?);
        if len < 4 {
            return Err(OfpError::BAD_REQUEST_LEN);
        }
        let data = r.bytes(len - 4).or_len()?;
        // The final element may omit its padding.
        let padding = (len.next_multiple_of(8) - len).min(r.remaining());
        r.skip(padding).or_len()?;
        elements.push(match kind {
            HELLO_ELEM_VERSIONBITMAP => {
                let mut b = Reader::new(data);
                let mut bits = Vec::new();
                while b.remaining() >= 4 {
                    bits.push(b.u32().or_len()?);
                }
                HelloElement::VersionBitmap(bits)
            }
            _ => HelloElement::Unknown {
                kind,
                data: data.to_vec(),
            },
        });
    }
    Ok(Hello { elements })
}

fn decode_flow_mod(r: &mut Reader<'_>) -> Result<FlowMod, OfpError> {
    let cookie = r.u64().or_len()?;
    let cookie_mask = r.u64().or_len()?;
    let table_id = r.u8().or_len()?;
    let command = FlowModCommand::from_code(r.u8().or_len()?).ok_or(OfpError::BAD_COMMAND)?;
    let idle_timeout = r.u16().or_len()?;
    let hard_timeout = r.u16().or_len()?;
    let priority = r.u16().or_len()?;
    let buffer_id = r.u32().or_len()?;
    let out_port = r.u32().or_len()?;
    let out_group = r.u32().or_len()?;
    let flags = r.u16().or_len()?;
    r.skip(2).or_len()?;
    let match_fields = Match::decode(r)?;
    let instructions = decode_instructions(r.rest())?;
    Ok(FlowMod {
        cookie,
        cookie_mask,
        table_id,
        command,
        idle_timeout,
        hard_timeout,
        priority,
        buffer_id,
        out_port,
        out_group,
        flags,
        match_fields,
        instructions,
    })
}

fn decode_mp_request(r: &mut Reader<'_>) -> Result<MultipartRequest, OfpError> {
    let kind = r.u16().or_len()?;
    let flags = r.u16().or_len()?;
    r.skip(4).or_len()?;
    let body = match kind {
        multipart::DESC => MultipartRequestBody::Desc,
        multipart::TABLE => MultipartRequestBody::Table,
        multipart::PORT_DESC => MultipartRequestBody::PortDesc,
        multipart::FLOW => {
            let table_id = r.u8().or_len()?;
            r.skip(3).or_len()?;
            let out_port = r.u32().or_len()?;
            let out_group = r.u32().or_len()?;
            r.skip(4).or_len()?;
            MultipartRequestBody::Flow(FlowStatsRequest {
                table_id,
                out_port,
                out_group,
                cookie: r.u64().or_len()?,
                cookie_mask: r.u64().or_len()?,
                match_fields: Match::decode(r)?,
            })
        }
        multipart::PORT_STATS => {
            let port_no = r.u32().or_len()?;
            r.skip(4).or_len()?;
            MultipartRequestBody::PortStats { port_no }
        }
        multipart::QUEUE => MultipartRequestBody::Queue {
            port_no: r.u32().or_len()?,
            queue_id: r.u32().or_len()?,
        },
        kind => MultipartRequestBody::Unknown {
            kind,
            body: r.rest().to_vec(),
        },
    };
    Ok(MultipartRequest { flags, body })
}

fn decode_flow_stats(r: &mut Reader<'_>) -> Result<FlowStats, OfpError> {
    let len = usize::from(r.u16().or_len()?);
    if len < 48 {
        return Err(OfpError::BAD_REQUEST_LEN);
    }
    let mut b = Reader::new(r.bytes(len - 2).or_len()?);
    let table_id = b.u8().or_len()?;
    b.skip(1).or_len()?;
    let duration_sec = b.u32().or_len()?;
    let duration_nsec = b.u32().or_len()?;
    let priority = b.u16().or_len()?;
    let idle_timeout = b.u16().or_len()?;
    let hard_timeout = b.u16().or_len()?;
    let flags = b.u16().or_len()?;
    b.skip(4).or_len()?;
    Ok(FlowStats {
        table_id,
        duration_sec,
        duration_nsec,
        priority,
        idle_timeout,
        hard_timeout,
        flags,
        cookie: b.u64().or_len()?,
        packet_count: b.u64().or_len()?,
        byte_count: b.u64().or_len()?,
        match_fields: Match::decode(&mut b)?,
        instructions: decode_instructions(b.rest())?,
    })
}

fn records<T>(
    r: &mut Reader<'_>,
    size: usize,
    mut one: impl FnMut(&mut Reader<'_>) -> Result<T, OfpError>,
) -> Result<Vec<T>, OfpError> {
    let mut out = Vec::new();
    while r.remaining() >= size {
        out.push(one(r)?);
    }
    Ok(out)
}

fn decode_mp_reply(r: &mut Reader<'_>) -> Result<MultipartReply, OfpError> {
    let kind = r.u16().or_len()?;
    let flags = r.u16().or_len()?;
    r.skip(4).or_len()?;
    let body = match kind {
        multipart::DESC => MultipartReplyBody::Desc(Desc {
            mfr_desc: get_str(r, DESC_STR_LEN)?,
            hw_desc: get_str(r, DESC_STR_LEN)?,
            sw_desc: get_str(r, DESC_STR_LEN)?,
            serial_num: get_str(r, SERIAL_NUM_LEN)?,
            dp_desc: get_str(r, DESC_STR_LEN)?,
        }),
        multipart::FLOW => MultipartReplyBody::Flow(records(r, 48, decode_flow_stats)?),
        multipart::TABLE => MultipartReplyBody::Table(records(r, 24, |r| {
            let table_id = r.u8().or_len()?;
            r.skip(3).or_len()?;
            Ok(TableStats {
                table_id,
                active_count: r.u32().or_len()?,
                lookup_count: r.u64().or_len()?,
                matched_count: r.u64().or_len()?,
            })
        })?),
        multipart::PORT_STATS => MultipartReplyBody::PortStats(records(r, 112, |r| {
            let port_no = r.u32().or_len()?;
            r.skip(4).or_len()?;
            let mut v = [0u64; 12];
            for x in v.iter_mut() {
                *x = r.u64().or_len()?;
            }
            Ok(PortStats {
                port_no,
                rx_packets: v[0],
                tx_packets: v[1],
                rx_bytes: v[2],
                tx_bytes: v[3],
                rx_dropped: v[4],
                tx_dropped: v[5],
                rx_errors: v[6],
                tx_errors: v[7],
                rx_frame_err: v[8],
                rx_over_err: v[9],
                rx_crc_err: v[10],
                collisions: v[11],
                duration_sec: r.u32().or_len()?,
                duration_nsec: r.u32().or_len()?,
            })
        })?),
        multipart::QUEUE => MultipartReplyBody::Queue(records(r, 40, |r| {
            Ok(QueueStats {
                port_no: r.u32().or_len()?,
                queue_id: r.u32().or_len()?,
                tx_bytes: r.u64().or_len()?,
                tx_packets: r.u64().or_len()?,
                tx_errors: r.u64().or_len()?,
                duration_sec: r.u32().or_len()?,
                duration_nsec: r.u32().or_len()?,
            })
        })?),
        multipart::PORT_DESC => MultipartReplyBody::PortDesc(records(r, 64, |r| {
            let port_no = r.u32().or_len()?;
            r.skip(4).or_len()?;
            let hw_addr = r.uint(6).or_len()?;
            r.skip(2).or_len()?;
            let name = get_str(r, PORT_NAME_LEN)?;
            let mut v = [0u32; 8];
            for x in v.iter_mut() {
                *x = r.u32().or_len()?;
            }
            Ok(PortDesc {
                port_no,
                hw_addr,
                name,
                config: v[0],
                state: v[1],
                curr: v[2],
                advertised: v[3],
                supported: v[4],
                peer: v[5],
                curr_speed: v[6],
                max_speed: v[7],
            })
        })?),
        _ => return Err(OfpError::BAD_MULTIPART),
    };
    Ok(MultipartReply { flags, body })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oxm::{Oxm, OxmField};
    use crate::pipeline::Instruction;

    fn roundtrip(m: OfpMessage) -> Vec<u8> {
        let bytes = encode(&m).unwrap();
        assert_eq!(bytes.len() % 8, 0, "{}", m.body.name());
        assert_eq!(
            usize::from(u16::from_be_bytes([bytes[2], bytes[3]])),
            bytes.len()
        );
        assert_eq!(decode(&bytes).unwrap(), m);
        bytes
    }

    #[test]
    fn hello_bytes() {
        let b = encode(&OfpMessage::new(42, Message::Hello(Hello::default()))).unwrap();
        assert_eq!(b, [0x04, 0, 0, 8, 0, 0, 0, 0x2a]);
        assert_eq!(
            decode(&[4, 0, 0, 8, 0, 0, 0, 0x2a]).unwrap(),
            OfpMessage::new(42, Message::Hello(Hello::default()))
        );
        let b = roundtrip(OfpMessage::new(1, Message::Hello(Hello::v13())));
        assert_eq!(&b[8..], &[0, 1, 0, 8, 0, 0, 0, 0x10]);
    }

    #[test]
    fn echo_payload_kept() {
        let raw = [4, 2, 0, 0x10, 0, 0, 0, 5, 1, 2, 3, 4, 5, 6, 7, 8];
        let m = decode(&raw).unwrap();
        assert_eq!(m.body, Message::EchoRequest(vec![1, 2, 3, 4, 5, 6, 7, 8]));
        assert_eq!(encode(&m).unwrap(), raw);
    }

    #[test]
    fn features_reply_is_32_bytes() {
        let b = roundtrip(OfpMessage::new(
            3,
            Message::FeaturesReply(Features {
                datapath_id: 0xdead_beef,
                n_buffers: 256,
                n_tables: 4,
                auxiliary_id: 0,
                capabilities: 7,
            }),
        ));
        assert_eq!(b.len(), 32);
    }

    #[test]
    fn set_config_accepts_twelve_bytes() {
        let raw = [4, 9, 0, 12, 0, 0, 0, 1, 0, 0, 0, 0x80];
        let m = decode(&raw).unwrap();
        assert_eq!(
            m.body,
            Message::SetConfig(SwitchConfig {
                flags: 0,
                miss_send_len: 128
            })
        );
        assert_eq!(encode(&m).unwrap().len(), 16);
    }

    #[test]
    fn flow_mod_roundtrip() {
        let fm = FlowMod {
            cookie: 9,
            idle_timeout: 10,
            ..FlowMod::add(
                0,
                100,
                Match::any().with(Oxm::exact(OxmField::InPort, 1)),
                vec![Instruction::WriteActions(vec![Action::output(2)])],
            )
        };
        let b = roundtrip(OfpMessage::new(7, Message::FlowMod(fm)));
        assert_eq!(b[1], msg_type::FLOW_MOD);
        // 48-byte prelude, 16-byte match, 8 + 16 bytes of instruction.
        assert_eq!(b.len(), 48 + 16 + 24);
    }

    #[test]
    fn packet_in_layout() {
        let p = PacketIn {
            buffer_id: 7,
            total_len: 64,
            reason: PacketInReason::NoMatch,
            table_id: 0,
            cookie: 0,
            match_fields: Match::any().with(Oxm::exact(OxmField::InPort, 3)),
            data: vec![0xab; 62],
        };
        let b = roundtrip(OfpMessage::new(1, Message::PacketIn(p)));
        assert_eq!(b.len(), 24 + 16 + 2 + 62);
        assert_eq!(&b[40..42], &[0, 0]);
    }

    #[test]
    fn packet_in_padding_is_not_data() {
        let p = PacketIn {
            buffer_id: u32::MAX,
            total_len: 60,
            reason: PacketInReason::Action,
            table_id: 0,
            cookie: 0,
            match_fields: Match::any().with(Oxm::exact(OxmField::InPort, 3)),
            data: vec![0xab; 60],
        };
        let b = encode(&OfpMessage::new(1, Message::PacketIn(p.clone()))).unwrap();
        assert_eq!(b.len(), 104);
        assert_eq!(decode(&b).unwrap().body, Message::PacketIn(p));
    }

    #[test]
    fn unknown_oxm_is_message_error() {
        let mut b = encode(&OfpMessage::new(
            5,
            Message::FlowMod(FlowMod::add(
                0,
                1,
                Match::any().with(Oxm::exact(OxmField::InPort, 1)),
                vec![],
            )),
        ))
        .unwrap();
        // Rewrite the field number to IPv6 source.
        b[48 + 6] = 26 << 1;
        assert_eq!(
            decode(&b),
            Err(DecodeError::Message {
                xid: 5,
                error: OfpError::BAD_FIELD
            })
        );
    }

    #[test]
    fn framing_errors() {
        assert_eq!(frame_len(&[4, 0, 0]), Ok(None));
        assert_eq!(
            frame_len(&[4, 0, 0, 4, 0, 0, 0, 0]),
            Err(FramingError::LengthTooSmall(4))
        );
        assert!(matches!(
            decode(&[4, 2, 0, 16, 0, 0, 0, 0, 1]),
            Err(DecodeError::Framing(FramingError::Truncated {
                needed: 16,
                available: 9
            }))
        ));
    }

    #[test]
    fn wrong_version_rejected() {
        assert_eq!(
            decode(&[1, 2, 0, 8, 0, 0, 0, 9]),
            Err(DecodeError::Message {
                xid: 9,
                error: OfpError::BAD_VERSION
            })
        );
    }

    #[test]
    fn unsupported_type_is_kept() {
        let m = decode(&[4, 16, 0, 8, 0, 0, 0, 1]).unwrap();
        assert_eq!(
            m.body,
            Message::Unsupported {
                msg_type: 16,
                body: vec![]
            }
        );
    }

    #[test]
    fn multipart_roundtrips() {
        let reqs = [
            MultipartRequestBody::Desc,
            MultipartRequestBody::Table,
            MultipartRequestBody::PortDesc,
            MultipartRequestBody::Flow(FlowStatsRequest::default()),
            MultipartRequestBody::PortStats { port_no: 1 },
            MultipartRequestBody::Queue {
                port_no: 2,
                queue_id: 0,
            },
        ];
        for body in reqs {
            roundtrip(OfpMessage::new(
                1,
                Message::MultipartRequest(MultipartRequest { flags: 0, body }),
            ));
        }
        let desc = MultipartReplyBody::Desc(Desc {
            mfr_desc: "m".into(),
            hw_desc: "h".into(),
            sw_desc: "s".into(),
            serial_num: "1".into(),
            dp_desc: "d".into(),
        });
        let b = roundtrip(OfpMessage::new(
            1,
            Message::MultipartReply(MultipartReply {
                flags: 0,
                body: desc,
            }),
        ));
        assert_eq!(b.len(), 16 + 1056);
        let stats = FlowStats {
            table_id: 1,
            duration_sec: 2,
            duration_nsec: 3,
            priority: 4,
            idle_timeout: 5,
            hard_timeout: 6,
            flags: 1,
            cookie: 7,
            packet_count: 8,
            byte_count: 9,
            match_fields: Match::any().with(Oxm::exact(OxmField::InPort, 1)),
            instructions: vec![Instruction::GotoTable(2)],
        };
        assert_eq!(flow_stats_len(&stats), 48 + 16 + 8);
        let bodies = [
            MultipartReplyBody::Flow(vec![stats.clone(), stats]),
            MultipartReplyBody::Table(vec![TableStats {
                table_id: 0,
                active_count: 1,
                lookup_count: 2,
                matched_count: 3,
            }]),
            MultipartReplyBody::PortStats(vec![PortStats {
                port_no: 3,
                rx_packets: 5,
                ..Default::default()
            }]),
            MultipartReplyBody::Queue(vec![QueueStats {
                port_no: 1,
                tx_bytes: 9,
                ..Default::default()
            }]),
            MultipartReplyBody::PortDesc(vec![PortDesc {
                port_no: 1,
                hw_addr: 0x0200_0000_0001,
                name: "port1".into(),
                ..Default::default()
            }]),
        ];
        for body in bodies {
            roundtrip(OfpMessage::new(
                1,
                Message::MultipartReply(MultipartReply {
                    flags: MULTIPART_MORE,
                    body,
                }),
            ));
        }
    }
}
