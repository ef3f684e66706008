//! Switch core: virtual ports, input arbitration, and the wiring of parser,
//! pipeline, action engine and OpenFlow agent.

pub mod arbiter;
mod config;
mod runtime;

use std::collections::VecDeque;
use std::sync::atomic::{AtomicU16, AtomicU64, Ordering};
use std::sync::{Arc, Condvar, Mutex, MutexGuard};
use std::time::{Duration, Instant};

use serde::Serialize;
use smallvec::SmallVec;
use thiserror::Error;

pub use config::{ArbiterPolicy, Config, ConfigError, DEFAULT_CONTROLLER_PORT};
pub use runtime::{ControllerStatus, SwitchHandle};

use crate::action::{
    port, validate_actions, ActionEngine, ActionSet, BufferOutcome, Egress, Execution,
    CML_NO_BUFFER, NO_BUFFER,
};
use crate::error::OfpError;
use crate::ofp::{
    capabilities, Datapath, Desc, Features, FlowRemoved, Message, MultipartReplyBody,
    MultipartRequestBody, OfpMessage, OutboundQueue, PacketIn, PacketInReason, PacketOut, PortDesc,
    PortStats, QueueStats, SwitchConfig, TableMod, HEADER_LEN,
};
use crate::oxm::{Match, Oxm, OxmField};
use crate::packet::{parse, RawFrame};
use crate::pipeline::{FlowMod, FlowModCommand, Pipeline, PipelineConfig, RemovedFlow, Verdict};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum SwitchError {
    #[error("port {0} is not configured")]
    UnknownPort(u32),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Ingress {
    Accepted,
    Dropped,
}

/// A frame placed on an output queue.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct EgressFrame {
    pub port: u32,
    pub ingress_port: u32,
    pub data: Vec<u8>,
    /// Arrival time of the originating frame, ns since switch start.
    pub ingress_at: u64,
    pub egress_at: u64,
}

impl EgressFrame {
    pub fn latency_ns(&self) -> u64 {
        self.egress_at.saturating_sub(self.ingress_at)
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize)]
pub struct PortCounters {
    pub rx_packets: u64,
    pub rx_bytes: u64,
    pub tx_packets: u64,
    pub tx_bytes: u64,
    pub rx_dropped: u64,
    pub tx_dropped: u64,
}

#[derive(Default)]
struct AtomicPortCounters {
    rx_packets: AtomicU64,
    rx_bytes: AtomicU64,
    tx_packets: AtomicU64,
    tx_bytes: AtomicU64,
    rx_dropped: AtomicU64,
    tx_dropped: AtomicU64,
}

impl AtomicPortCounters {
    fn snapshot(&self) -> PortCounters {
        let l = |a: &AtomicU64| a.load(Ordering::Relaxed);
        PortCounters {
            rx_packets: l(&self.rx_packets),
            rx_bytes: l(&self.rx_bytes),
            tx_packets: l(&self.tx_packets),
            tx_bytes: l(&self.tx_bytes),
            rx_dropped: l(&self.rx_dropped),
            tx_dropped: l(&self.tx_dropped),
        }
    }
}

/// What became of a frame handed to the dataplane.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Disposition {
    /// Copies placed on (or dropped at) this many output ports.
    Forwarded(usize),
    Dropped,
    ToController,
    Buffered(u32),
}

/// Frame-level accounting. For unicast traffic `injected` and
/// `replicated` are zero and [`holds`](Self::holds) reduces to
/// `rx = tx + rx_dropped + tx_dropped + pipeline_dropped + buffered_live +
/// to_controller` once the switch is idle.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize)]
pub struct Conservation {
    pub rx_packets: u64,
    pub rx_dropped: u64,
    pub tx_packets: u64,
    pub tx_dropped: u64,
    pub pipeline_dropped: u64,
    pub buffered_live: u64,
    pub to_controller: u64,
    /// Frames still queued or being processed.
    pub in_flight: u64,
    /// Output copies of Packet-Out data frames, which have no rx.
    pub injected: u64,
    /// Output copies beyond the first for multi-port actions.
    pub replicated: u64,
    pub forwarded: u64,
}

impl Conservation {
    pub fn holds(&self) -> bool {
        let out = (self.tx_packets + self.tx_dropped) as i128
            - self.injected as i128
            - self.replicated as i128
            + (self.rx_dropped
                + self.pipeline_dropped
                + self.buffered_live
                + self.to_controller
                + self.in_flight) as i128;
        out == self.rx_packets as i128
    }
}

#[derive(Default)]
struct Dispositions {
    pipeline_dropped: AtomicU64,
    to_controller: AtomicU64,
    forwarded: AtomicU64,
    injected: AtomicU64,
    replicated: AtomicU64,
    processing: AtomicU64,
}

struct InputStage {
    queues: Vec<VecDeque<RawFrame>>,
    /// Last served position within each shard's port list; the final entry
    /// belongs to the all-ports list used by [`Switch::step`].
    last: Vec<usize>,
    waiting: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Origin {
    Received,
    Released,
    Injected,
}

pub struct Switch {
    config: Config,
    pipeline: Pipeline,
    engine: ActionEngine,
    outbound: Arc<OutboundQueue>,
    counters: Vec<AtomicPortCounters>,
    input: Mutex<InputStage>,
    input_ready: Condvar,
    outputs: Vec<Mutex<VecDeque<EgressFrame>>>,
    shards: Vec<Vec<u32>>,
    miss_send_len: AtomicU16,
    config_flags: AtomicU16,
    disp: Dispositions,
    epoch: Instant,
}

/// Bytes of a `len`-byte frame to put in a PacketIn limited to `max`.
/// A truncated copy is extended with further frame bytes until the message
/// needs no trailing padding, which a receiver could not tell from data.
fn packet_in_take(len: usize, max: usize, match_fields: &Match) -> usize {
    let take = len.min(max);
    if take == len {
        return take;
    }
    let before_data = HEADER_LEN + 16 + match_fields.wire_len() + 2;
    (take + (8 - (before_data + take) % 8) % 8).min(len)
}

fn lock<T>(m: &Mutex<T>) -> MutexGuard<'_, T> {
    m.lock().unwrap_or_else(|e| e.into_inner())
}

impl Switch {
    pub fn new(config: Config) -> Result<Self, ConfigError> {
        config.validate()?;
        let n = config.ports as usize;
        let pipeline = Pipeline::new(&PipelineConfig {
            tables: config.tables,
            table_capacity: config.table_capacity,
            port_count: config.ports,
            miss_policy: config.miss_policy,
        });
        let engine = ActionEngine::new(
            config.ports,
            config.buffer_slots,
            config.buffer_ttl_ms.saturating_mul(1_000_000),
        );
        let mut shards: Vec<Vec<u32>> = (0..config.workers)
            .map(|w| {
                (0..config.ports)
                    .filter(|p| *p as usize % config.workers == w)
                    .collect()
            })
            .collect();
        shards.push((0..config.ports).collect());
        Ok(Switch {
            pipeline,
            engine,
            outbound: Arc::new(OutboundQueue::new(config.packet_in_queue)),
            counters: (0..n).map(|_| AtomicPortCounters::default()).collect(),
            input: Mutex::new(InputStage {
                queues: (0..n).map(|_| VecDeque::new()).collect(),
                last: shards.iter().map(|s| s.len() - 1).collect(),
                waiting: 0,
            }),
            input_ready: Condvar::new(),
            outputs: (0..n).map(|_| Mutex::new(VecDeque::new())).collect(),
            shards,
            miss_send_len: AtomicU16::new(config.miss_send_len),
            config_flags: AtomicU16::new(0),
            disp: Dispositions::default(),
            epoch: Instant::now(),
            config,
        })
    }

    pub fn config(&self) -> &Config {
        &self.config
    }

    pub fn port_count(&self) -> u32 {
        self.config.ports
    }

    pub fn pipeline(&self) -> &Pipeline {
        &self.pipeline
    }

    pub fn engine(&self) -> &ActionEngine {
        &self.engine
    }

    pub fn outbound(&self) -> &Arc<OutboundQueue> {
        &self.outbound
    }

    /// Nanoseconds since the switch was created.
    pub fn now(&self) -> u64 {
        self.epoch.elapsed().as_nanos() as u64
    }

    pub fn ingress(&self, port: u32, data: Vec<u8>) -> Result<Ingress, SwitchError> {
        self.ingress_at(port, data, self.now())
    }

    pub fn ingress_at(&self, port: u32, data: Vec<u8>, now: u64) -> Result<Ingress, SwitchError> {
        let c = self
            .counters
            .get(port as usize)
            .ok_or(SwitchError::UnknownPort(port))?;
        c.rx_packets.fetch_add(1, Ordering::Relaxed);
        c.rx_bytes.fetch_add(data.len() as u64, Ordering::Relaxed);
        let mut g = lock(&self.input);
        let q = &mut g.queues[port as usize];
        if q.len() >= self.config.input_queue {
            drop(g);
            c.rx_dropped.fetch_add(1, Ordering::Relaxed);
            return Ok(Ingress::Dropped);
        }
        q.push_back(RawFrame::new(port, data, now));
        let wake = g.waiting > 0;
        drop(g);
        if wake {
            self.input_ready.notify_all();
        }
        Ok(Ingress::Accepted)
    }

    pub fn input_len(&self, port: u32) -> usize {
        lock(&self.input)
            .queues
            .get(port as usize)
            .map_or(0, VecDeque::len)
    }

    fn pick(&self, g: &mut InputStage, shard: usize) -> Option<RawFrame> {
        let ports = &self.shards[shard];
        let occ: SmallVec<[usize; 16]> =
            ports.iter().map(|p| g.queues[*p as usize].len()).collect();
        let at = arbiter::select(&occ, g.last[shard], self.config.arbiter)?;
        g.last[shard] = at;
        self.disp.processing.fetch_add(1, Ordering::Relaxed);
        g.queues[ports[at] as usize].pop_front()
    }

    /// Removes the next frame chosen by the input arbiter.
    pub fn arbitrate(&self) -> Option<RawFrame> {
        let frame = self.pick(&mut lock(&self.input), self.shards.len() - 1)?;
        self.disp.processing.fetch_sub(1, Ordering::Relaxed);
        Some(frame)
    }

    /// Processes one frame from the input queues. Returns `None` when they
    /// are empty.
    pub fn step(&self, now: u64) -> Option<Disposition> {
        let frame = self.pick(&mut lock(&self.input), self.shards.len() - 1)?;
        Some(self.finish(frame, now))
    }

    fn finish(&self, frame: RawFrame, now: u64) -> Disposition {
        let d = self.process_frame(frame, now);
        self.disp.processing.fetch_sub(1, Ordering::Relaxed);
        d
    }

    /// Processes frames until every input queue is empty.
    pub fn run_until_idle(&self) -> usize {
        let mut n = 0;
        while self.step(self.now()).is_some() {
            n += 1;
        }
        n
    }

    /// Worker body for one shard: waits up to `timeout` for a frame.
    pub(crate) fn step_shard(&self, shard: usize, timeout: Duration) -> bool {
        let frame = {
            let mut g = lock(&self.input);
            match self.pick(&mut g, shard) {
                Some(f) => f,
                None => {
                    g.waiting += 1;
                    let (mut g2, _) = self
                        .input_ready
                        .wait_timeout(g, timeout)
                        .unwrap_or_else(|e| e.into_inner());
                    g2.waiting -= 1;
                    match self.pick(&mut g2, shard) {
                        Some(f) => f,
                        None => return false,
                    }
                }
            }
        };
        self.finish(frame, self.now());
        true
    }

    pub(crate) fn wake_workers(&self) {
        self.input_ready.notify_all();
    }

    pub(crate) fn shard_count(&self) -> usize {
        self.shards.len() - 1
    }

    /// Parses, looks up and executes one frame.
    pub fn process_frame(&self, frame: RawFrame, now: u64) -> Disposition {
        let tuple = parse(&frame);
        match self.pipeline.process(&tuple, frame.len(), now) {
            Verdict::DropMalicious
            | Verdict::Miss {
                policy: crate::pipeline::MissPolicy::Drop,
                ..
            } => {
                self.disp.pipeline_dropped.fetch_add(1, Ordering::Relaxed);
                Disposition::Dropped
            }
            Verdict::Miss { table_id, .. } => self.miss_to_controller(frame, table_id, now),
            Verdict::Actions(set) => {
                let ex = self.engine.execute(&frame, &set);
                self.deliver(&frame, ex, now, Origin::Received)
            }
        }
    }

    fn packet_in(
        &self,
        buffer_id: u32,
        frame: &RawFrame,
        reason: PacketInReason,
        table_id: u8,
        max: usize,
    ) -> OfpMessage {
        let match_fields =
            Match::any().with(Oxm::exact(OxmField::InPort, u64::from(frame.ingress_port)));
        let take = packet_in_take(frame.data.len(), max, &match_fields);
        OfpMessage::new(
            self.outbound.next_xid(),
            Message::PacketIn(PacketIn {
                buffer_id,
                total_len: frame.data.len().min(usize::from(u16::MAX)) as u16,
                reason,
                table_id,
                cookie: u64::MAX,
                match_fields,
                data: frame.data[..take].to_vec(),
            }),
        )
    }

    fn miss_to_controller(&self, frame: RawFrame, table_id: u8, now: u64) -> Disposition {
        let msl = self.miss_send_len.load(Ordering::Relaxed);
        if msl == CML_NO_BUFFER {
            let msg = self.packet_in(
                NO_BUFFER,
                &frame,
                PacketInReason::NoMatch,
                table_id,
                usize::MAX,
            );
            return self.push_packet_in(msg, None);
        }
        let in_port =
            Match::any().with(Oxm::exact(OxmField::InPort, u64::from(frame.ingress_port)));
        let take = packet_in_take(frame.len(), usize::from(msl), &in_port);
        let preview = RawFrame::new(
            frame.ingress_port,
            frame.data[..take].to_vec(),
            frame.arrived_at,
        );
        let total = frame.len();
        let outcome = self.engine.buffer_for_controller(frame, table_id, now);
        let id = match outcome {
            BufferOutcome::Buffered(id) => id,
            BufferOutcome::Full => NO_BUFFER,
        };
        let mut msg = self.packet_in(id, &preview, PacketInReason::NoMatch, table_id, usize::MAX);
        if let Message::PacketIn(p) = &mut msg.body {
            p.total_len = total.min(usize::from(u16::MAX)) as u16;
        }
        self.push_packet_in(msg, (id != NO_BUFFER).then_some(id))
    }

    fn push_packet_in(&self, msg: OfpMessage, buffer: Option<u32>) -> Disposition {
        match self.outbound.push(msg) {
            Ok(()) => match buffer {
                Some(id) => Disposition::Buffered(id),
                None => {
                    self.disp.to_controller.fetch_add(1, Ordering::Relaxed);
                    Disposition::ToController
                }
            },
            Err(_) => {
                if let Some(id) = buffer {
                    let _ = self.engine.take(id);
                }
                log::debug!("packet-in queue full, dropping frame");
                self.disp.pipeline_dropped.fetch_add(1, Ordering::Relaxed);
                Disposition::Dropped
            }
        }
    }

    fn enqueue_output(&self, port: u32, data: Vec<u8>, frame: &RawFrame, now: u64) {
        let c = &self.counters[port as usize];
        let len = data.len() as u64;
        let mut q = lock(&self.outputs[port as usize]);
        if q.len() >= self.config.output_queue {
            drop(q);
            c.tx_dropped.fetch_add(1, Ordering::Relaxed);
            return;
        }
        q.push_back(EgressFrame {
            port,
            ingress_port: frame.ingress_port,
            data,
            ingress_at: frame.arrived_at,
            egress_at: now,
        });
        drop(q);
        c.tx_packets.fetch_add(1, Ordering::Relaxed);
        c.tx_bytes.fetch_add(len, Ordering::Relaxed);
    }

    fn deliver(&self, frame: &RawFrame, ex: Execution, now: u64, origin: Origin) -> Disposition {
        let mut copies = 0usize;
        let mut controller_ok = false;
        for emit in ex.emits {
            match emit.egress {
                Egress::Port(p) => {
                    self.enqueue_output(p, emit.data, frame, now);
                    copies += 1;
                }
                Egress::Controller { max_len } => {
                    let max = if max_len == CML_NO_BUFFER {
                        usize::MAX
                    } else {
                        usize::from(max_len)
                    };
                    let f = RawFrame::new(frame.ingress_port, emit.data, frame.arrived_at);
                    let msg = self.packet_in(NO_BUFFER, &f, PacketInReason::Action, 0, max);
                    controller_ok |= self.outbound.push(msg).is_ok();
                }
            }
        }
        let d = &self.disp;
        if origin == Origin::Injected {
            d.injected.fetch_add(copies as u64, Ordering::Relaxed);
            return Disposition::Forwarded(copies);
        }
        if copies > 0 {
            d.forwarded.fetch_add(1, Ordering::Relaxed);
            d.replicated.fetch_add(copies as u64 - 1, Ordering::Relaxed);
            Disposition::Forwarded(copies)
        } else if controller_ok || origin == Origin::Released {
            d.to_controller.fetch_add(1, Ordering::Relaxed);
            Disposition::ToController
        } else {
            d.pipeline_dropped.fetch_add(1, Ordering::Relaxed);
            Disposition::Dropped
        }
    }

    pub fn port_counters(&self, port: u32) -> Option<PortCounters> {
        self.counters
            .get(port as usize)
            .map(AtomicPortCounters::snapshot)
    }

    pub fn output_len(&self, port: u32) -> usize {
        self.outputs.get(port as usize).map_or(0, |q| lock(q).len())
    }

    pub fn pop_output(&self, port: u32) -> Option<EgressFrame> {
        lock(self.outputs.get(port as usize)?).pop_front()
    }

    pub fn drain_output(&self, port: u32) -> Vec<EgressFrame> {
        self.outputs
            .get(port as usize)
            .map(|q| lock(q).drain(..).collect())
            .unwrap_or_default()
    }

    pub fn conservation(&self) -> Conservation {
        let mut c = Conservation::default();
        for p in &self.counters {
            let s = p.snapshot();
            c.rx_packets += s.rx_packets;
            c.rx_dropped += s.rx_dropped;
            c.tx_packets += s.tx_packets;
            c.tx_dropped += s.tx_dropped;
        }
        let l = |a: &AtomicU64| a.load(Ordering::Relaxed);
        c.pipeline_dropped = l(&self.disp.pipeline_dropped);
        c.to_controller = l(&self.disp.to_controller);
        c.forwarded = l(&self.disp.forwarded);
        c.injected = l(&self.disp.injected);
        c.replicated = l(&self.disp.replicated);
        c.buffered_live = self.engine.buffered() as u64;
        let queued: usize = lock(&self.input).queues.iter().map(VecDeque::len).sum();
        c.in_flight = queued as u64 + l(&self.disp.processing);
        c
    }

    /// Runs flow and buffer timeouts, queueing flow-removed notifications.
    pub fn expire(&self, now: u64) {
        let removed = self.pipeline.expire_flows(now);
        self.notify_removed(&removed);
        let stale = self.engine.expire_buffers(now);
        self.disp
            .to_controller
            .fetch_add(stale.len() as u64, Ordering::Relaxed);
    }

    fn notify_removed(&self, removed: &[RemovedFlow]) {
        for r in removed.iter().filter(|r| r.wants_notification()) {
            let msg = OfpMessage::new(
                self.outbound.next_xid(),
                Message::FlowRemoved(FlowRemoved::from(r)),
            );
            let _ = self.outbound.push(msg);
        }
    }

    fn port_desc(&self, p: u32) -> PortDesc {
        PortDesc {
            port_no: p,
            hw_addr: 0x0200_0000_0000 | u64::from(p + 1),
            name: format!("port{p}"),
            config: 0,
            state: 4,
            curr: 0x2000 | 0x800,
            advertised: 0,
            supported: 0,
            peer: 0,
            curr_speed: 10_000_000,
            max_speed: 10_000_000,
        }
    }

    fn port_stats(&self, p: u32, now: u64) -> PortStats {
        let c = self.counters[p as usize].snapshot();
        PortStats {
            port_no: p,
            rx_packets: c.rx_packets,
            tx_packets: c.tx_packets,
            rx_bytes: c.rx_bytes,
            tx_bytes: c.tx_bytes,
            rx_dropped: c.rx_dropped,
            tx_dropped: c.tx_dropped,
            duration_sec: (now / 1_000_000_000) as u32,
            duration_nsec: (now % 1_000_000_000) as u32,
            ..PortStats::default()
        }
    }

    fn ports_selected(&self, port_no: u32) -> Result<Vec<u32>, ()> {
        if port_no == port::ANY {
            Ok((0..self.config.ports).collect())
        } else if port_no < self.config.ports {
            Ok(vec![port_no])
        } else {
            Err(())
        }
    }
}

impl Datapath for Switch {
    fn features(&self) -> Features {
        Features {
            datapath_id: self.config.datapath_id,
            n_buffers: self.config.buffer_slots as u32,
            n_tables: self.config.tables,
            auxiliary_id: 0,
            capabilities: capabilities::FLOW_STATS
                | capabilities::TABLE_STATS
                | capabilities::PORT_STATS,
        }
    }

    fn switch_config(&self) -> SwitchConfig {
        SwitchConfig {
            flags: self.config_flags.load(Ordering::Relaxed),
            miss_send_len: self.miss_send_len.load(Ordering::Relaxed),
        }
    }

    fn set_switch_config(&self, c: SwitchConfig) -> Result<(), OfpError> {
        // Only OFPC_FRAG_NORMAL is implemented.
        if c.flags != 0 {
            return Err(OfpError::SWITCH_CONFIG_BAD_FLAGS);
        }
        self.config_flags.store(c.flags, Ordering::Relaxed);
        self.miss_send_len.store(c.miss_send_len, Ordering::Relaxed);
        Ok(())
    }

    fn flow_mod(&self, fm: &FlowMod, now: u64) -> Result<Vec<RemovedFlow>, OfpError> {
        let removed = self.pipeline.apply_flow_mod(fm, now)?;
        let installs = matches!(
            fm.command,
            FlowModCommand::Add | FlowModCommand::Modify | FlowModCommand::ModifyStrict
        );
        if installs && fm.buffer_id != NO_BUFFER {
            let stored = self.engine.take(fm.buffer_id)?;
            self.process_frame(stored.frame, now);
        }
        Ok(removed)
    }

    fn table_mod(&self, tm: &TableMod) -> Result<(), OfpError> {
        self.pipeline.table_mod(tm.table_id, tm.config)
    }

    fn packet_out(&self, po: &PacketOut, now: u64) -> Result<(), OfpError> {
        validate_actions(&po.actions, self.config.ports)?;
        if po.in_port >= self.config.ports
            && po.in_port != port::CONTROLLER
            && po.in_port != port::ANY
        {
            return Err(OfpError::BAD_PORT);
        }
        let set = ActionSet::from_list(&po.actions);
        if po.buffer_id != NO_BUFFER {
            let (frame, ex) = self.engine.release(po.buffer_id, &set)?;
            self.deliver(&frame, ex, now, Origin::Released);
            return Ok(());
        }
        if po.data.is_empty() {
            return Err(OfpError::BAD_PACKET);
        }
        let frame = RawFrame::new(po.in_port, po.data.clone(), now);
        let ex = self.engine.execute(&frame, &set);
        self.deliver(&frame, ex, now, Origin::Injected);
        Ok(())
    }

    fn multipart(
        &self,
        req: &MultipartRequestBody,
        now: u64,
    ) -> Result<MultipartReplyBody, OfpError> {
        Ok(match req {
            MultipartRequestBody::Desc => MultipartReplyBody::Desc(Desc {
                mfr_desc: "sdn-fabric".into(),
                hw_desc: "software dataplane".into(),
                sw_desc: env!("CARGO_PKG_VERSION").into(),
                serial_num: "0".into(),
                dp_desc: format!("datapath {:#x}", self.config.datapath_id),
            }),
            MultipartRequestBody::Flow(f) => {
                MultipartReplyBody::Flow(self.pipeline.flow_stats(&f.filter(), now)?)
            }
            MultipartRequestBody::Table => MultipartReplyBody::Table(self.pipeline.table_stats()),
            MultipartRequestBody::PortStats { port_no } => {
                let ports = self
                    .ports_selected(*port_no)
                    .map_err(|()| OfpError::BAD_PORT)?;
                MultipartReplyBody::PortStats(
                    ports.into_iter().map(|p| self.port_stats(p, now)).collect(),
                )
            }
            MultipartRequestBody::Queue { port_no, queue_id } => {
                let ports = self
                    .ports_selected(*port_no)
                    .map_err(|()| OfpError::QUEUE_BAD_PORT)?;
                if *queue_id != 0 && *queue_id != 0xffff_ffff {
                    return Err(OfpError::QUEUE_BAD_QUEUE);
                }
                MultipartReplyBody::Queue(
                    ports
                        .into_iter()
                        .map(|p| {
                            let c = self.counters[p as usize].snapshot();
                            QueueStats {
                                port_no: p,
                                queue_id: 0,
                                tx_bytes: c.tx_bytes,
                                tx_packets: c.tx_packets,
                                tx_errors: c.tx_dropped,
                                duration_sec: (now / 1_000_000_000) as u32,
                                duration_nsec: (now % 1_000_000_000) as u32,
                            }
                        })
                        .collect(),
                )
            }
            MultipartRequestBody::PortDesc => MultipartReplyBody::PortDesc(
                (0..self.config.ports).map(|p| self.port_desc(p)).collect(),
            ),
            MultipartRequestBody::Unknown { .. } => return Err(OfpError::BAD_MULTIPART),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::action::Action;
    use crate::packet::{FrameBuilder, L4Header};
    use crate::pipeline::Instruction;

    fn small(ports: u32, queue: usize) -> Switch {
        Switch::new(Config {
            ports,
            input_queue: queue,
            output_queue: queue,
            ..Config::default()
        })
        .unwrap()
    }

    fn frame(i: u16) -> Vec<u8> {
        FrameBuilder::default()
            .ipv4(0x0a000001, 0x0a000002, L4Header::Udp { src: i, dst: 80 })
            .frame_len(64)
            .build()
    }

    fn forward(sw: &Switch, from: u64, to: u32) {
        let fm = FlowMod::add(
            0,
            10,
            Match::any().with(Oxm::exact(OxmField::InPort, from)),
            vec![Instruction::WriteActions(vec![Action::output(to)])],
        );
        sw.flow_mod(&fm, 0).unwrap();
    }

    #[test]
    fn unknown_port() {
        assert_eq!(
            small(2, 4).ingress(2, frame(0)),
            Err(SwitchError::UnknownPort(2))
        );
    }

    #[test]
    fn full_input_queue_drops() {
        let sw = small(2, 3);
        let results: Vec<_> = (0..30).map(|i| sw.ingress(0, frame(i)).unwrap()).collect();
        assert_eq!(
            results.iter().filter(|r| **r == Ingress::Accepted).count(),
            3
        );
        let c = sw.port_counters(0).unwrap();
        assert_eq!((c.rx_packets, c.rx_dropped), (30, 27));
    }

    #[test]
    fn echo_flow_is_byte_identical_and_ordered() {
        let sw = small(2, 128);
        forward(&sw, 0, 1);
        let sent: Vec<_> = (0..100).map(frame).collect();
        for f in &sent {
            sw.ingress(0, f.clone()).unwrap();
        }
        assert_eq!(sw.run_until_idle(), 100);
        let out: Vec<_> = sw.drain_output(1).into_iter().map(|e| e.data).collect();
        assert_eq!(out, sent);
        let c = sw.conservation();
        assert!(c.holds(), "{c:?}");
        assert_eq!(c.tx_packets, 100);
    }

    #[test]
    fn miss_buffers_and_packet_out_releases() {
        let sw = small(4, 16);
        let f = frame(7);
        sw.ingress(0, f.clone()).unwrap();
        let Some(Disposition::Buffered(id)) = sw.step(0) else {
            panic!()
        };
        let msgs = sw.outbound().drain();
        assert_eq!(msgs.len(), 1);
        let Message::PacketIn(pin) = &msgs[0].body else {
            panic!()
        };
        assert_eq!(pin.buffer_id, id);
        assert_eq!(pin.data, f[..64.min(f.len())].to_vec());
        assert_eq!(sw.conservation().buffered_live, 1);
        assert!(sw.conservation().holds());
        let po = PacketOut {
            buffer_id: id,
            in_port: 0,
            actions: vec![Action::output(2)],
            data: vec![],
        };
        sw.packet_out(&po, 1).unwrap();
        assert_eq!(sw.drain_output(2)[0].data, f);
        assert_eq!(sw.packet_out(&po, 1), Err(OfpError::BUFFER_UNKNOWN));
        let c = sw.conservation();
        assert!(c.holds(), "{c:?}");
        assert_eq!(c.buffered_live, 0);
    }

    #[test]
    fn miss_send_len_truncates() {
        let sw = small(2, 16);
        sw.set_switch_config(SwitchConfig {
            flags: 0,
            miss_send_len: 20,
        })
        .unwrap();
        let f = frame(1);
        sw.ingress(0, f.clone()).unwrap();
        sw.step(0);
        let Message::PacketIn(pin) = &sw.outbound().pop().unwrap().body else {
            panic!()
        };
        // 20 bytes requested, rounded up to 22 so the message is unpadded.
        assert_eq!(pin.data, f[..22].to_vec());
        assert_eq!(usize::from(pin.total_len), f.len());
    }

    #[test]
    fn packet_in_data_survives_the_wire() {
        for msl in [0u16, 1, 20, 63, 64, 128, 1000] {
            for len in [60usize, 64, 65, 71, 200] {
                let sw = small(2, 16);
                sw.set_switch_config(SwitchConfig {
                    flags: 0,
                    miss_send_len: msl,
                })
                .unwrap();
                let f = FrameBuilder::default()
                    .ipv4(1, 2, L4Header::Udp { src: 1, dst: 2 })
                    .frame_len(len)
                    .build();
                sw.ingress(1, f.clone()).unwrap();
                sw.step(0);
                let msg = sw.outbound().pop().unwrap();
                let Message::PacketIn(sent) = &msg.body else {
                    panic!()
                };
                assert!(sent.data.len() >= usize::from(msl).min(len));
                let back = crate::ofp::decode(&msg.encode().unwrap()).unwrap();
                let Message::PacketIn(got) = back.body else {
                    panic!()
                };
                assert_eq!(got.data, sent.data, "msl {msl} len {len}");
                assert!(f.starts_with(&got.data));
            }
        }
    }

    #[test]
    fn buffer_full_sends_unbuffered() {
        let sw = Switch::new(Config {
            ports: 2,
            buffer_slots: 1,
            ..Config::default()
        })
        .unwrap();
        sw.ingress(0, frame(1)).unwrap();
        sw.ingress(0, frame(2)).unwrap();
        sw.run_until_idle();
        let ids: Vec<u32> = sw
            .outbound()
            .drain()
            .into_iter()
            .map(|m| match m.body {
                Message::PacketIn(p) => p.buffer_id,
                _ => panic!(),
            })
            .collect();
        assert_ne!(ids[0], NO_BUFFER);
        assert_eq!(ids[1], NO_BUFFER);
        assert!(sw.conservation().holds());
    }

    #[test]
    fn flow_mod_with_buffer_reprocesses() {
        let sw = small(2, 16);
        let f = frame(3);
        sw.ingress(0, f.clone()).unwrap();
        let Some(Disposition::Buffered(id)) = sw.step(0) else {
            panic!()
        };
        let fm = FlowMod {
            buffer_id: id,
            ..FlowMod::add(
                0,
                1,
                Match::any(),
                vec![Instruction::WriteActions(vec![Action::output(1)])],
            )
        };
        sw.flow_mod(&fm, 0).unwrap();
        assert_eq!(sw.drain_output(1)[0].data, f);
        assert!(sw.conservation().holds());
    }

    #[test]
    fn flood_counts_replicas() {
        let sw = small(4, 16);
        let fm = FlowMod::add(
            0,
            1,
            Match::any(),
            vec![Instruction::WriteActions(vec![Action::output(port::ALL)])],
        );
        sw.flow_mod(&fm, 0).unwrap();
        sw.ingress(1, frame(0)).unwrap();
        sw.run_until_idle();
        let c = sw.conservation();
        assert_eq!((c.tx_packets, c.replicated), (3, 2));
        assert!(c.holds());
    }

    #[test]
    fn packet_out_data_is_injected() {
        let sw = small(2, 16);
        let po = PacketOut {
            buffer_id: NO_BUFFER,
            in_port: port::CONTROLLER,
            actions: vec![Action::output(1)],
            data: frame(9),
        };
        sw.packet_out(&po, 0).unwrap();
        assert_eq!(sw.drain_output(1)[0].data, frame(9));
        let c = sw.conservation();
        assert_eq!(c.injected, 1);
        assert!(c.holds());
        let bad = PacketOut { in_port: 7, ..po };
        assert_eq!(sw.packet_out(&bad, 0), Err(OfpError::BAD_PORT));
    }

    #[test]
    fn full_output_queue_counts_tx_dropped() {
        let sw = small(2, 4);
        forward(&sw, 0, 1);
        for round in 0..3 {
            for i in 0..4 {
                sw.ingress(0, frame(round * 4 + i)).unwrap();
            }
            sw.run_until_idle();
        }
        let c = sw.port_counters(1).unwrap();
        assert_eq!((c.tx_packets, c.tx_dropped), (4, 8));
        assert!(sw.conservation().holds());
    }

    #[test]
    fn buffer_expiry_counts_to_controller() {
        let sw = small(2, 4);
        sw.ingress_at(0, frame(1), 0).unwrap();
        sw.step(0);
        sw.expire(sw.config().buffer_ttl_ms * 1_000_000);
        let c = sw.conservation();
        assert_eq!((c.buffered_live, c.to_controller), (0, 1));
        assert!(c.holds());
    }
}
