//! Reference implementations used for differential checks. None of them
//! share code with the structures they check beyond the public data types.

use rand::Rng;
use sdn_fabric::action::{Action, ActionSet};
use sdn_fabric::oxm::{Match, Oxm, OxmField};
use sdn_fabric::packet::{FrameBuilder, HeaderTuple, L4Header};
use sdn_fabric::pipeline::{tuple_key, Instruction, InstructionSet, MissPolicy, Verdict};
use sdn_fabric::tcam::{oracle_lookup, MaskedKey};

/// Parameters of a well-formed Ethernet/VLAN/MPLS/IPv4/L4 frame. The frame
/// is laid out byte by byte and the expected tuple follows from the
/// parameters alone.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FrameLayout {
    pub dst: u64,
    pub src: u64,
    /// (TPID, VID, PCP), outermost first.
    pub vlans: Vec<(u16, u16, u8)>,
    /// (label, TC), outermost first.
    pub labels: Vec<(u32, u8)>,
    pub ihl: u8,
    pub dscp: u8,
    pub tcp: bool,
    pub ip_src: u32,
    pub ip_dst: u32,
    pub sport: u16,
    pub dport: u16,
    pub payload: usize,
}

impl FrameLayout {
    pub fn random(rng: &mut impl Rng, vlans: usize, labels: usize, ihl: u8, tcp: bool) -> Self {
        FrameLayout {
            dst: rng.gen::<u64>() & 0xffff_ffff_ffff,
            src: rng.gen::<u64>() & 0xffff_ffff_ffff,
            vlans: (0..vlans)
                .map(|_| {
                    let tpid = if rng.gen() { 0x8100 } else { 0x88a8 };
                    (tpid, rng.gen_range(0..4096), rng.gen_range(0..8))
                })
                .collect(),
            labels: (0..labels)
                .map(|_| (rng.gen_range(0..1 << 20), rng.gen_range(0..8)))
                .collect(),
            ihl,
            dscp: rng.gen_range(0..64),
            tcp,
            ip_src: rng.gen(),
            ip_dst: rng.gen(),
            sport: rng.gen(),
            dport: rng.gen(),
            payload: rng.gen_range(0..48),
        }
    }

    /// Every combination of IHL 5..=15, 0..=2 tags, 0..=4 labels and TCP/UDP.
    pub fn grid(rng: &mut impl Rng) -> Vec<FrameLayout> {
        let mut out = Vec::new();
        for ihl in 5..=15u8 {
            for vlans in 0..=2 {
                for labels in 0..=4 {
                    for tcp in [true, false] {
                        out.push(FrameLayout::random(rng, vlans, labels, ihl, tcp));
                    }
                }
            }
        }
        out
    }

    fn l4_len(&self) -> usize {
        if self.tcp {
            20
        } else {
            8
        }
    }

    pub fn l4_offset(&self) -> usize {
        14 + 4 * self.vlans.len() + 4 * self.labels.len() + 4 * usize::from(self.ihl)
    }

    /// The frame, with no padding after the datagram.
    pub fn bytes(&self) -> Vec<u8> {
        let mut f = Vec::new();
        f.extend_from_slice(&self.dst.to_be_bytes()[2..]);
        f.extend_from_slice(&self.src.to_be_bytes()[2..]);
        for &(tpid, vid, pcp) in &self.vlans {
            f.extend_from_slice(&tpid.to_be_bytes());
            f.extend_from_slice(&((u16::from(pcp) << 13) | vid).to_be_bytes());
        }
        let et: u16 = if self.labels.is_empty() {
            0x0800
        } else {
            0x8847
        };
        f.extend_from_slice(&et.to_be_bytes());
        for (i, &(label, tc)) in self.labels.iter().enumerate() {
            let bos = u32::from(i + 1 == self.labels.len());
            f.extend_from_slice(
                &((label << 12) | (u32::from(tc) << 9) | (bos << 8) | 64).to_be_bytes(),
            );
        }
        let hlen = usize::from(self.ihl) * 4;
        let total = hlen + self.l4_len() + self.payload;
        f.push(0x40 | self.ihl);
        f.push(self.dscp << 2);
        f.extend_from_slice(&(total as u16).to_be_bytes());
        f.extend_from_slice(&[0, 0, 0x40, 0, 64, if self.tcp { 6 } else { 17 }, 0, 0]);
        f.extend_from_slice(&self.ip_src.to_be_bytes());
        f.extend_from_slice(&self.ip_dst.to_be_bytes());
        f.extend(std::iter::repeat_n(1u8, hlen - 20));
        f.extend_from_slice(&self.sport.to_be_bytes());
        f.extend_from_slice(&self.dport.to_be_bytes());
        f.extend(std::iter::repeat_n(0u8, self.l4_len() - 4));
        f.extend((0..self.payload).map(|i| i as u8));
        f
    }

    pub fn expected(&self, in_port: u32) -> HeaderTuple {
        HeaderTuple {
            in_port,
            eth_dst: self.dst,
            eth_src: self.src,
            eth_type: if self.labels.is_empty() {
                0x0800
            } else {
                0x8847
            },
            vlan_vid: self.vlans.first().map(|v| v.1),
            vlan_pcp: self.vlans.first().map(|v| v.2),
            mpls_label: self.labels.first().map(|l| l.0),
            mpls_tc: self.labels.first().map(|l| l.1),
            ip_proto: Some(if self.tcp { 6 } else { 17 }),
            ipv4_src: Some(self.ip_src),
            ipv4_dst: Some(self.ip_dst),
            ip_dscp: Some(self.dscp),
            l4_src: Some(self.sport),
            l4_dst: Some(self.dport),
            malicious: false,
            violations: Default::default(),
            header_len: self.l4_offset() + self.l4_len(),
        }
    }
}

struct Entry {
    key: MaskedKey,
    priority: u32,
    inst: InstructionSet,
    match_fields: Match,
    packets: u64,
    bytes: u64,
}

/// Multi-table pipeline over linear scans. Slots are assigned lowest-vacant
/// first, as in the matcher.
pub struct LinearPipeline {
    tables: Vec<Vec<Option<Entry>>>,
    pub lookups: Vec<u64>,
    pub matched: Vec<u64>,
}

impl LinearPipeline {
    pub fn new(tables: usize) -> Self {
        LinearPipeline {
            tables: (0..tables).map(|_| Vec::new()).collect(),
            lookups: vec![0; tables],
            matched: vec![0; tables],
        }
    }

    pub fn contains(&self, table: u8, key: &MaskedKey, priority: u32) -> bool {
        self.tables[usize::from(table)]
            .iter()
            .flatten()
            .any(|e| e.key == *key && e.priority == priority)
    }

    pub fn add(
        &mut self,
        table: u8,
        key: MaskedKey,
        priority: u32,
        inst: InstructionSet,
        match_fields: Match,
    ) {
        let e = Entry {
            key,
            priority,
            inst,
            match_fields,
            packets: 0,
            bytes: 0,
        };
        let slots = &mut self.tables[usize::from(table)];
        match slots.iter().position(Option::is_none) {
            Some(s) => slots[s] = Some(e),
            None => slots.push(Some(e)),
        }
    }

    /// Packet and byte counts of the entry with this match and priority.
    pub fn counters(&self, table: u8, match_fields: &Match, priority: u32) -> Option<(u64, u64)> {
        self.tables[usize::from(table)]
            .iter()
            .flatten()
            .find(|e| e.priority == priority && e.match_fields == *match_fields)
            .map(|e| (e.packets, e.bytes))
    }

    pub fn process(&mut self, tuple: &HeaderTuple, len: usize) -> Verdict {
        if tuple.malicious {
            return Verdict::DropMalicious;
        }
        let key = tuple_key(tuple);
        let mut set = ActionSet::new();
        let mut t = 0usize;
        loop {
            self.lookups[t] += 1;
            let slots = &mut self.tables[t];
            let live = slots
                .iter()
                .enumerate()
                .filter_map(|(s, e)| e.as_ref().map(|e| (&e.key, e.priority, s)));
            let Some(hit) = oracle_lookup(live, &key) else {
                return Verdict::Miss {
                    table_id: t as u8,
                    policy: MissPolicy::Controller,
                };
            };
            self.matched[t] += 1;
            let e = slots[hit.slot].as_mut().expect("hit on live slot");
            e.packets += 1;
            e.bytes += len as u64;
            if e.inst.clear_actions {
                set.clear();
            }
            if let Some(w) = &e.inst.write_actions {
                set.write(w);
            }
            match e.inst.goto_table {
                Some(n) => t = usize::from(n),
                None => return Verdict::Actions(set),
            }
        }
    }
}

/// A random flow for `tables` tables: `(table, priority, match, instructions)`.
/// Matches draw from small domains so that packets from [`random_packet`]
/// hit, miss and overlap often. Gotos always move forward.
pub fn random_flow(rng: &mut impl Rng, tables: u8) -> (u8, u32, Match, Vec<Instruction>) {
    let table = rng.gen_range(0..tables);
    let mut m = Match::any();
    if rng.gen_bool(0.5) {
        m = m.with(Oxm::exact(OxmField::InPort, rng.gen_range(0..4)));
    }
    if rng.gen_bool(0.9) {
        m = m.with(Oxm::exact(OxmField::EthType, 0x0800));
        if rng.gen_bool(0.8) {
            let prefix = [24u32, 30, 32, 32][rng.gen_range(0..4)];
            let mask = u64::from(u32::MAX << (32 - prefix));
            let addr = 0x0a00_0000 | (rng.gen_range(0..8u64) << 8) | rng.gen_range(0..4u64);
            m = m.with(Oxm::masked(OxmField::Ipv4Dst, addr & mask, mask));
        }
        if rng.gen_bool(0.4) {
            let tcp = rng.gen_bool(0.5);
            m = m.with(Oxm::exact(OxmField::IpProto, if tcp { 6 } else { 17 }));
            if rng.gen_bool(0.5) {
                let f = if tcp {
                    OxmField::TcpDst
                } else {
                    OxmField::UdpDst
                };
                m = m.with(Oxm::exact(f, [80, 443, 53][rng.gen_range(0..3)]));
            }
        }
    }
    if m == Match::any() {
        m = m.with(Oxm::exact(OxmField::InPort, rng.gen_range(0..4)));
    }
    let mut insts = Vec::new();
    if rng.gen_bool(0.15) {
        insts.push(Instruction::ClearActions);
    }
    if rng.gen_bool(0.85) {
        let mut acts = vec![Action::output(rng.gen_range(0..8))];
        if rng.gen_bool(0.3) {
            acts.push(Action::set_field(OxmField::IpDscp, rng.gen_range(0..64)));
        }
        insts.push(Instruction::WriteActions(acts));
    }
    if table + 1 < tables && rng.gen_bool(0.5) {
        insts.push(Instruction::GotoTable(rng.gen_range(table + 1..tables)));
    }
    (table, rng.gen_range(0..6), m, insts)
}

/// A random `(frame, in_port)`: mostly IPv4 TCP/UDP towards 10.0.0-3.0-3,
/// with some non-IP and some malformed (IHL 4) frames.
pub fn random_packet(rng: &mut impl Rng) -> (Vec<u8>, u32) {
    let in_port = rng.gen_range(0..4);
    let dst = 0x0a00_0000 | (rng.gen_range(0..4) << 8) | rng.gen_range(0..4);
    let port = [80, 443, 53, 8080][rng.gen_range(0..4)];
    let l4 = if rng.gen() {
        L4Header::Tcp {
            src: 1000,
            dst: port,
        }
    } else {
        L4Header::Udp {
            src: 1000,
            dst: port,
        }
    };
    let mut b = FrameBuilder::default();
    if rng.gen_bool(0.2) {
        b = b.vlan(rng.gen_range(1..10), 0);
    }
    let frame = match rng.gen_range(0..10) {
        0 => b.payload(&[0; 50]).build(),
        1 => {
            let mut f = b.ipv4(0x0a09_0909, dst, l4).build();
            let ip = if f[12..14] == [0x81, 0x00] { 18 } else { 14 };
            f[ip] = 0x44;
            f
        }
        _ => b
            .ipv4(0x0a09_0909, dst, l4)
            .frame_len(rng.gen_range(64..300))
            .build(),
    };
    (frame, in_port)
}

fn ones_complement_sum(chunks: &[&[u8]]) -> u16 {
    let mut sum: u64 = 0;
    for c in chunks {
        let mut it = c.chunks_exact(2);
        for w in &mut it {
            sum += u64::from(u16::from_be_bytes([w[0], w[1]]));
        }
        if let [last] = it.remainder() {
            sum += u64::from(*last) << 8;
        }
    }
    while sum > 0xffff {
        sum = (sum & 0xffff) + (sum >> 16);
    }
    sum as u16
}

/// Outcome of checking one frame's checksums.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ChecksumCheck {
    NotIpv4,
    Valid,
    BadIpv4,
    BadL4,
}

/// Verifies the IPv4 header checksum and, for unfragmented TCP and UDP, the
/// transport checksum over the pseudo-header.
pub fn verify_checksums(frame: &[u8]) -> ChecksumCheck {
    let mut at = 12;
    let mut et = match frame.get(12..14) {
        Some(b) => u16::from_be_bytes([b[0], b[1]]),
        None => return ChecksumCheck::NotIpv4,
    };
    while et == 0x8100 || et == 0x88a8 {
        at += 4;
        let Some(b) = frame.get(at..at + 2) else {
            return ChecksumCheck::NotIpv4;
        };
        et = u16::from_be_bytes([b[0], b[1]]);
    }
    at += 2;
    if et == 0x8847 || et == 0x8848 {
        loop {
            let Some(b) = frame.get(at..at + 4) else {
                return ChecksumCheck::NotIpv4;
            };
            at += 4;
            if b[2] & 1 == 1 {
                break;
            }
        }
        if frame.get(at).map(|b| b >> 4) != Some(4) {
            return ChecksumCheck::NotIpv4;
        }
    } else if et != 0x0800 {
        return ChecksumCheck::NotIpv4;
    }
    let Some(&vihl) = frame.get(at) else {
        return ChecksumCheck::NotIpv4;
    };
    let hlen = usize::from(vihl & 0xf) * 4;
    let Some(ip) = frame.get(at..at + hlen) else {
        return ChecksumCheck::NotIpv4;
    };
    if hlen < 20 {
        return ChecksumCheck::NotIpv4;
    }
    if ones_complement_sum(&[ip]) != 0xffff {
        return ChecksumCheck::BadIpv4;
    }
    let total = usize::from(u16::from_be_bytes([ip[2], ip[3]]));
    let frag = u16::from_be_bytes([ip[6], ip[7]]) & 0x3fff;
    let proto = ip[9];
    let Some(seg) = frame.get(at + hlen..at + total) else {
        return ChecksumCheck::Valid;
    };
    if frag != 0 || !(proto == 6 || proto == 17) {
        return ChecksumCheck::Valid;
    }
    if proto == 17 && seg.len() >= 8 && seg[6..8] == [0, 0] {
        return ChecksumCheck::Valid;
    }
    let len = (seg.len() as u16).to_be_bytes();
    let pseudo = [&ip[12..20], &[0, proto], &len[..], seg];
    if ones_complement_sum(&pseudo) == 0xffff {
        ChecksumCheck::Valid
    } else {
        ChecksumCheck::BadL4
    }
}
