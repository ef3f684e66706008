//! Per-connection OpenFlow channel state machine.

use super::message::{
    decode, flow_stats_len, DecodeError, ErrorMsg, Features, FlowRemoved, Hello, Message,
    MultipartReply, MultipartReplyBody, MultipartRequestBody, OfpMessage, PacketOut, SwitchConfig,
    TableMod, HEADER_LEN, MULTIPART_MORE, OFP_VERSION,
};
use crate::error::OfpError;
use crate::pipeline::{FlowMod, RemovedFlow};

/// Bytes of an offending request echoed back in error replies.
const ERROR_DATA_LEN: usize = 64;
/// Flow-stats bytes per reply before splitting with `REPLY_MORE`.
const FLOW_STATS_BUDGET: usize = 0xff00 - HEADER_LEN - 8;

/// The switch side of the channel.
pub trait Datapath {
    fn features(&self) -> Features;
    fn switch_config(&self) -> SwitchConfig;
    fn set_switch_config(&self, config: SwitchConfig) -> Result<(), OfpError>;
    /// Returns flows the modification removed.
    fn flow_mod(&self, fm: &FlowMod, now: u64) -> Result<Vec<RemovedFlow>, OfpError>;
    fn table_mod(&self, tm: &TableMod) -> Result<(), OfpError>;
    fn packet_out(&self, po: &PacketOut, now: u64) -> Result<(), OfpError>;
    fn multipart(
        &self,
        req: &MultipartRequestBody,
        now: u64,
    ) -> Result<MultipartReplyBody, OfpError>;
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ChannelState {
    AwaitingHello,
    Negotiated,
    Closed,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct KeepaliveConfig {
    pub interval_ns: u64,
    /// Unanswered echo requests tolerated before the channel closes.
    pub max_missed: u32,
}

impl Default for KeepaliveConfig {
    fn default() -> Self {
        KeepaliveConfig {
            interval_ns: 5_000_000_000,
            max_missed: 3,
        }
    }
}

#[derive(Debug)]
pub enum Event<'a> {
    Connected,
    /// One complete message as received.
    Received(&'a [u8]),
    Tick,
}

pub struct Channel {
    state: ChannelState,
    keepalive: KeepaliveConfig,
    next_xid: u32,
    last_echo: u64,
    missed: u32,
}

impl Channel {
    pub fn new(keepalive: KeepaliveConfig) -> Self {
        Channel {
            state: ChannelState::AwaitingHello,
            keepalive,
            next_xid: 1,
            last_echo: 0,
            missed: 0,
        }
    }

    pub fn state(&self) -> ChannelState {
        self.state
    }

    /// Uses `xids` for switch-initiated messages instead of the internal
    /// counter, so that dataplane notifications share one sequence.
    fn xid(&mut self, xids: Option<&dyn Fn() -> u32>) -> u32 {
        match xids {
            Some(f) => f(),
            None => {
                let x = self.next_xid;
                self.next_xid = self.next_xid.wrapping_add(1);
                x
            }
        }
    }

    pub fn step(&mut self, event: Event<'_>, dp: &dyn Datapath, now: u64) -> Vec<OfpMessage> {
        self.step_with(event, dp, now, None)
    }

    /// [`step`](Self::step) with an external xid source.
    pub fn step_with(
        &mut self,
        event: Event<'_>,
        dp: &dyn Datapath,
        now: u64,
        xids: Option<&dyn Fn() -> u32>,
    ) -> Vec<OfpMessage> {
        if self.state == ChannelState::Closed {
            return Vec::new();
        }
        match event {
            Event::Connected => {
                self.last_echo = now;
                let xid = self.xid(xids);
                vec![OfpMessage::new(xid, Message::Hello(Hello::v13()))]
            }
            Event::Tick => self.tick(now, xids),
            Event::Received(raw) => {
                self.missed = 0;
                self.last_echo = now;
                match decode(raw) {
                    Ok(msg) => self.handle(msg, raw, dp, now, xids),
                    Err(DecodeError::Message { xid, error }) => vec![error_reply(xid, error, raw)],
                    Err(DecodeError::Framing(e)) => {
                        log::warn!("closing channel: {e}");
                        self.state = ChannelState::Closed;
                        Vec::new()
                    }
                }
            }
        }
    }

    fn tick(&mut self, now: u64, xids: Option<&dyn Fn() -> u32>) -> Vec<OfpMessage> {
        if self.state != ChannelState::Negotiated
            || now.saturating_sub(self.last_echo) < self.keepalive.interval_ns
        {
            return Vec::new();
        }
        if self.missed >= self.keepalive.max_missed {
            log::warn!("closing channel: {} echo requests unanswered", self.missed);
            self.state = ChannelState::Closed;
            return Vec::new();
        }
        self.missed += 1;
        self.last_echo = now;
        let xid = self.xid(xids);
        vec![OfpMessage::new(xid, Message::EchoRequest(Vec::new()))]
    }

    fn handle(
        &mut self,
        msg: OfpMessage,
        raw: &[u8],
        dp: &dyn Datapath,
        now: u64,
        xids: Option<&dyn Fn() -> u32>,
    ) -> Vec<OfpMessage> {
        let xid = msg.xid;
        let reply = |body| vec![OfpMessage::new(xid, body)];
        let or_error = |r: Result<(), OfpError>| match r {
            Ok(()) => Vec::new(),
            Err(e) => vec![error_reply(xid, e, raw)],
        };
        if let Message::Hello(h) = &msg.body {
            return self.on_hello(msg.version, h, raw, xid);
        }
        if self.state == ChannelState::AwaitingHello
            && !matches!(
                msg.body,
                Message::EchoRequest(_) | Message::EchoReply(_) | Message::Error(_)
            )
        {
            return vec![error_reply(xid, OfpError::HELLO_EPERM, raw)];
        }
        match msg.body {
            Message::Hello(_) => unreachable!(),
            Message::EchoRequest(data) => reply(Message::EchoReply(data)),
            Message::EchoReply(_) => Vec::new(),
            Message::Error(e) => {
                log::warn!(
                    "controller reported error type {} code {}",
                    e.error.err_type,
                    e.error.code
                );
                Vec::new()
            }
            Message::FeaturesRequest => reply(Message::FeaturesReply(dp.features())),
            Message::GetConfigRequest => reply(Message::GetConfigReply(dp.switch_config())),
            Message::SetConfig(c) => or_error(dp.set_switch_config(c)),
            Message::BarrierRequest => reply(Message::BarrierReply),
            Message::TableMod(tm) => or_error(dp.table_mod(&tm)),
            Message::PacketOut(po) => or_error(dp.packet_out(&po, now)),
            Message::FlowMod(fm) => match dp.flow_mod(&fm, now) {
                Ok(removed) => self.flow_removed(&removed, xids),
                Err(e) => vec![error_reply(xid, e, raw)],
            },
            Message::MultipartRequest(req) => {
                if let MultipartRequestBody::Unknown { .. } = req.body {
                    return vec![error_reply(xid, OfpError::BAD_MULTIPART, raw)];
                }
                match dp.multipart(&req.body, now) {
                    Ok(body) => split_reply(body)
                        .into_iter()
                        .map(|r| OfpMessage::new(xid, Message::MultipartReply(r)))
                        .collect(),
                    Err(e) => vec![error_reply(xid, e, raw)],
                }
            }
            Message::Unsupported { .. }
            | Message::FeaturesReply(_)
            | Message::GetConfigReply(_)
            | Message::PacketIn(_)
            | Message::FlowRemoved(_)
            | Message::MultipartReply(_)
            | Message::BarrierReply => vec![error_reply(xid, OfpError::BAD_TYPE, raw)],
        }
    }

    fn on_hello(&mut self, version: u8, h: &Hello, raw: &[u8], xid: u32) -> Vec<OfpMessage> {
        if self.state == ChannelState::Negotiated {
            return Vec::new();
        }
        let ok = match h.bitmap() {
            Some(bits) => bits.first().is_some_and(|w| w & (1 << OFP_VERSION) != 0),
            None => version >= OFP_VERSION,
        };
        if ok {
            self.state = ChannelState::Negotiated;
            Vec::new()
        } else {
            self.state = ChannelState::Closed;
            let mut e = error_reply(xid, OfpError::HELLO_INCOMPATIBLE, raw);
            if let Message::Error(ref mut m) = e.body {
                m.data = b"only OpenFlow 1.3 is supported".to_vec();
            }
            vec![e]
        }
    }

    fn flow_removed(
        &mut self,
        removed: &[RemovedFlow],
        xids: Option<&dyn Fn() -> u32>,
    ) -> Vec<OfpMessage> {
        removed
            .iter()
            .filter(|r| r.wants_notification())
            .map(|r| {
                let xid = self.xid(xids);
                OfpMessage::new(xid, Message::FlowRemoved(FlowRemoved::from(r)))
            })
            .collect()
    }
}

pub fn error_reply(xid: u32, error: OfpError, raw: &[u8]) -> OfpMessage {
    OfpMessage::new(
        xid,
        Message::Error(ErrorMsg {
            error,
            data: raw[..raw.len().min(ERROR_DATA_LEN)].to_vec(),
        }),
    )
}

/// Splits a flow-stats body that would overflow one message.
fn split_reply(body: MultipartReplyBody) -> Vec<MultipartReply> {
    let MultipartReplyBody::Flow(flows) = body else {
        return vec![MultipartReply { flags: 0, body }];
    };
    let mut parts: Vec<Vec<_>> = vec![Vec::new()];
    let mut used = 0;
    for f in flows {
        let n = flow_stats_len(&f);
        if used + n > FLOW_STATS_BUDGET && !parts.last().is_some_and(Vec::is_empty) {
            parts.push(Vec::new());
            used = 0;
        }
        used += n;
        parts.last_mut().expect("non-empty").push(f);
    }
    let last = parts.len() - 1;
    parts
        .into_iter()
        .enumerate()
        .map(|(i, p)| MultipartReply {
            flags: if i < last { MULTIPART_MORE } else { 0 },
            body: MultipartReplyBody::Flow(p),
        })
        .collect()
}
