//! Raw frames and header extraction.
//!
//! The parser graph is fixed:
//!
//! ```text
//! Ethernet ─┬─> 802.1Q (up to 2) ─┬─> IPv4 ─┬─> TCP
//!           │                     │         └─> UDP
//!           └─────────────────────┴─> MPLS (up to 4) ─> IPv4
//! ```
//!
//! Branches are chosen by EtherType and by the IPv4 protocol number. The
//! IPv4 header length (IHL) moves the L4 offset. Any structural
//! contradiction marks the tuple malicious; the pipeline drops such packets
//! without consulting the flow tables.

mod build;

pub use build::{FrameBuilder, L4Header};

pub const ETH_HEADER_LEN: usize = 14;
pub const MIN_FRAME_LEN: usize = ETH_HEADER_LEN;
pub const MAX_FRAME_LEN: usize = 9216;
/// Stacked 802.1Q tags walked before giving up on the L2 header.
pub const MAX_VLAN_TAGS: usize = 2;
/// Labels walked before a missing bottom-of-stack bit is a violation.
pub const MAX_MPLS_LABELS: usize = 4;

pub const IPV4_MIN_HEADER_LEN: usize = 20;
pub const TCP_HEADER_LEN: usize = 20;
pub const UDP_HEADER_LEN: usize = 8;

pub mod ethertype {
    pub const IPV4: u16 = 0x0800;
    pub const VLAN: u16 = 0x8100;
    pub const QINQ: u16 = 0x88a8;
    pub const MPLS: u16 = 0x8847;
    pub const MPLS_MCAST: u16 = 0x8848;

    pub fn is_vlan(et: u16) -> bool {
        et == VLAN || et == QINQ
    }

    pub fn is_mpls(et: u16) -> bool {
        et == MPLS || et == MPLS_MCAST
    }
}

pub mod ip_proto {
    pub const TCP: u8 = 6;
    pub const UDP: u8 = 17;
}

/// A frame as it sits in an input buffer.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RawFrame {
    pub ingress_port: u32,
    pub data: Vec<u8>,
    /// Monotonic arrival time in nanoseconds.
    pub arrived_at: u64,
}

impl RawFrame {
    pub fn new(ingress_port: u32, data: Vec<u8>, arrived_at: u64) -> Self {
        RawFrame {
            ingress_port,
            data,
            arrived_at,
        }
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }
}

/// A structural contradiction found while walking the parser graph.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Violation {
    /// IPv4 IHL below the 5-word minimum.
    IhlTooSmall,
    /// EtherType (or MPLS payload nibble) says IPv4 but the version field disagrees.
    BadIpVersion,
    /// IPv4 total length points past the end of the frame.
    LengthExceedsFrame,
    /// IPv4 total length is smaller than the IPv4 header itself.
    LengthBelowHeader,
    /// The parser graph needs bytes past the end of the frame.
    TruncatedHeader,
    /// No bottom-of-stack bit within [`MAX_MPLS_LABELS`] labels.
    MplsStackOverflow,
}

impl Violation {
    const ALL: [Violation; 6] = [
        Violation::IhlTooSmall,
        Violation::BadIpVersion,
        Violation::LengthExceedsFrame,
        Violation::LengthBelowHeader,
        Violation::TruncatedHeader,
        Violation::MplsStackOverflow,
    ];

    fn bit(self) -> u8 {
        1 << (self as u8)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Violation::IhlTooSmall => "ihl-too-small",
            Violation::BadIpVersion => "bad-ip-version",
            Violation::LengthExceedsFrame => "length-exceeds-frame",
            Violation::LengthBelowHeader => "length-below-header",
            Violation::TruncatedHeader => "truncated-header",
            Violation::MplsStackOverflow => "mpls-stack-overflow",
        }
    }
}

impl std::fmt::Display for Violation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Compact set of [`Violation`]s.
#[derive(Clone, Copy, Default, PartialEq, Eq, Hash)]
pub struct Violations(u8);

impl Violations {
    pub fn insert(&mut self, v: Violation) {
        self.0 |= v.bit();
    }

    pub fn contains(&self, v: Violation) -> bool {
        self.0 & v.bit() != 0
    }

    pub fn is_empty(&self) -> bool {
        self.0 == 0
    }

    pub fn len(&self) -> usize {
        self.0.count_ones() as usize
    }

    pub fn iter(&self) -> impl Iterator<Item = Violation> + '_ {
        Violation::ALL.into_iter().filter(|v| self.contains(*v))
    }
}

impl std::fmt::Debug for Violations {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_set().entries(self.iter()).finish()
    }
}

/// Match fields extracted from one frame.
///
/// Optional fields are `Some` exactly when the parser reached the header
/// carrying them. Only the outermost VLAN tag and MPLS label are reported.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct HeaderTuple {
    pub in_port: u32,
    /// 48-bit MAC in the low bits.
    pub eth_dst: u64,
    pub eth_src: u64,
    /// EtherType after any VLAN tags.
    pub eth_type: u16,
    pub vlan_vid: Option<u16>,
    pub vlan_pcp: Option<u8>,
    pub mpls_label: Option<u32>,
    pub mpls_tc: Option<u8>,
    pub ip_proto: Option<u8>,
    pub ipv4_src: Option<u32>,
    pub ipv4_dst: Option<u32>,
    pub ip_dscp: Option<u8>,
    pub l4_src: Option<u16>,
    pub l4_dst: Option<u16>,
    pub malicious: bool,
    pub violations: Violations,
    /// Bytes covered by every header the parser consumed.
    pub header_len: usize,
}

/// Byte offsets of the headers found in a frame. Used by the rewrite code.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct Layout {
    pub vlan_tags: usize,
    /// Offset of the EtherType that follows the VLAN tags.
    pub ethertype_offset: usize,
    pub mpls_labels: usize,
    pub ipv4_offset: Option<usize>,
    pub ipv4_header_len: usize,
    pub l4_offset: Option<usize>,
    pub l4_proto: u8,
}

impl Layout {
    /// First byte after the L2 header (EtherType included).
    pub fn l2_end(&self) -> usize {
        self.ethertype_offset + 2
    }
}

struct Cursor<'a> {
    data: &'a [u8],
    tuple: HeaderTuple,
    layout: Layout,
}

impl Cursor<'_> {
    fn has(&self, offset: usize, len: usize) -> bool {
        offset
            .checked_add(len)
            .is_some_and(|end| end <= self.data.len())
    }

    fn u16_at(&self, offset: usize) -> u16 {
        u16::from_be_bytes([self.data[offset], self.data[offset + 1]])
    }

    fn u32_at(&self, offset: usize) -> u32 {
        u32::from_be_bytes([
            self.data[offset],
            self.data[offset + 1],
            self.data[offset + 2],
            self.data[offset + 3],
        ])
    }

    fn u48_at(&self, offset: usize) -> u64 {
        self.data[offset..offset + 6]
            .iter()
            .fold(0u64, |acc, b| (acc << 8) | u64::from(*b))
    }

    fn flag(&mut self, v: Violation) {
        self.tuple.violations.insert(v);
        self.tuple.malicious = true;
    }

    fn ethernet(&mut self) {
        if !self.has(0, ETH_HEADER_LEN) {
            self.flag(Violation::TruncatedHeader);
            return;
        }
        self.tuple.eth_dst = self.u48_at(0);
        self.tuple.eth_src = self.u48_at(6);
        let mut et_off = 12;
        let mut et = self.u16_at(et_off);
        self.tuple.header_len = ETH_HEADER_LEN;
        while ethertype::is_vlan(et) && self.layout.vlan_tags < MAX_VLAN_TAGS {
            // Tag control word plus the EtherType after it.
            if !self.has(et_off + 2, 4) {
                self.flag(Violation::TruncatedHeader);
                return;
            }
            let tci = self.u16_at(et_off + 2);
            if self.layout.vlan_tags == 0 {
                self.tuple.vlan_vid = Some(tci & 0x0fff);
                self.tuple.vlan_pcp = Some((tci >> 13) as u8);
            }
            self.layout.vlan_tags += 1;
            et_off += 4;
            et = self.u16_at(et_off);
            self.tuple.header_len = et_off + 2;
        }
        self.tuple.eth_type = et;
        self.layout.ethertype_offset = et_off;
        let next = et_off + 2;
        if ethertype::is_mpls(et) {
            self.mpls(next);
        } else if et == ethertype::IPV4 {
            self.ipv4(next);
        }
    }

    fn mpls(&mut self, mut offset: usize) {
        loop {
            if self.layout.mpls_labels == MAX_MPLS_LABELS {
                self.flag(Violation::MplsStackOverflow);
                return;
            }
            if !self.has(offset, 4) {
                self.flag(Violation::TruncatedHeader);
                return;
            }
            let shim = self.u32_at(offset);
            if self.layout.mpls_labels == 0 {
                self.tuple.mpls_label = Some(shim >> 12);
                self.tuple.mpls_tc = Some(((shim >> 9) & 0x7) as u8);
            }
            self.layout.mpls_labels += 1;
            offset += 4;
            self.tuple.header_len = offset;
            if shim & 0x100 != 0 {
                break;
            }
        }
        // MPLS carries no payload type; the first nibble selects IPv4.
        if !self.has(offset, 1) {
            self.flag(Violation::TruncatedHeader);
            return;
        }
        if self.data[offset] >> 4 == 4 {
            self.ipv4(offset);
        }
    }

    fn ipv4(&mut self, offset: usize) {
        if !self.has(offset, 1) {
            self.flag(Violation::TruncatedHeader);
            return;
        }
        let first = self.data[offset];
        if first >> 4 != 4 {
            self.flag(Violation::BadIpVersion);
            return;
        }
        let ihl = usize::from(first & 0x0f);
        if ihl < 5 {
            self.flag(Violation::IhlTooSmall);
            return;
        }
        let hlen = ihl * 4;
        if !self.has(offset, hlen) {
            self.flag(Violation::TruncatedHeader);
            return;
        }
        let total_len = usize::from(self.u16_at(offset + 2));
        let mut datagram_end = offset + total_len;
        if total_len < hlen {
            self.flag(Violation::LengthBelowHeader);
            datagram_end = offset + hlen;
        }
        if datagram_end > self.data.len() {
            self.flag(Violation::LengthExceedsFrame);
            datagram_end = self.data.len();
        }

        let proto = self.data[offset + 9];
        self.tuple.ip_dscp = Some(self.data[offset + 1] >> 2);
        self.tuple.ip_proto = Some(proto);
        self.tuple.ipv4_src = Some(self.u32_at(offset + 12));
        self.tuple.ipv4_dst = Some(self.u32_at(offset + 16));
        self.tuple.header_len = offset + hlen;
        self.layout.ipv4_offset = Some(offset);
        self.layout.ipv4_header_len = hlen;

        let fragment_offset = self.u16_at(offset + 6) & 0x1fff;
        if fragment_offset != 0 || self.tuple.violations.contains(Violation::LengthBelowHeader) {
            return;
        }
        let l4 = offset + hlen;
        let need = match proto {
            ip_proto::TCP => TCP_HEADER_LEN,
            ip_proto::UDP => UDP_HEADER_LEN,
            _ => return,
        };
        if l4 + need > datagram_end {
            self.flag(Violation::TruncatedHeader);
            return;
        }
        self.tuple.l4_src = Some(self.u16_at(l4));
        self.tuple.l4_dst = Some(self.u16_at(l4 + 2));
        self.tuple.header_len = l4 + need;
        self.layout.l4_offset = Some(l4);
        self.layout.l4_proto = proto;
    }
}

/// Parses `data` received on `in_port`, returning the tuple and header offsets.
pub fn parse_layout(in_port: u32, data: &[u8]) -> (HeaderTuple, Layout) {
    let mut cursor = Cursor {
        data,
        tuple: HeaderTuple {
            in_port,
            ..HeaderTuple::default()
        },
        layout: Layout::default(),
    };
    cursor.ethernet();
    (cursor.tuple, cursor.layout)
}

pub fn parse_bytes(in_port: u32, data: &[u8]) -> HeaderTuple {
    parse_layout(in_port, data).0
}

/// Extracts the match tuple of `frame`.
pub fn parse(frame: &RawFrame) -> HeaderTuple {
    parse_bytes(frame.ingress_port, &frame.data)
}

/// Every structural violation detected in `frame`, in a fixed order.
pub fn malicious_reasons(frame: &RawFrame) -> Vec<Violation> {
    parse(frame).violations.iter().collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Hand-laid 64-byte Ethernet/IPv4/TCP frame, sport 80 dport 1024.
    fn tcp_frame() -> Vec<u8> {
        let mut f = vec![
            0x00, 0x11, 0x22, 0x33, 0x44, 0x55, // dst
            0x66, 0x77, 0x88, 0x99, 0xaa, 0xbb, // src
            0x08, 0x00, // IPv4
            0x45, 0x00, 0x00, 0x32, // v4 ihl5, tos, total 50
            0x00, 0x01, 0x00, 0x00, // id, frag
            0x40, 0x06, 0x00, 0x00, // ttl 64, tcp, csum
            0x0a, 0x00, 0x00, 0x01, // src 10.0.0.1
            0x0a, 0x00, 0x00, 0x02, // dst 10.0.0.2
            0x00, 0x50, 0x04, 0x00, // sport 80, dport 1024
        ];
        f.resize(64, 0);
        f
    }

    #[test]
    fn tcp_frame_fields() {
        let t = parse_bytes(3, &tcp_frame());
        assert!(!t.malicious);
        assert_eq!(t.in_port, 3);
        assert_eq!(t.eth_dst, 0x0011_2233_4455);
        assert_eq!(t.eth_src, 0x6677_8899_aabb);
        assert_eq!(t.eth_type, 0x0800);
        assert_eq!(t.ip_proto, Some(6));
        assert_eq!(t.ipv4_src, Some(0x0a00_0001));
        assert_eq!(t.ipv4_dst, Some(0x0a00_0002));
        assert_eq!(t.l4_src, Some(80));
        assert_eq!(t.l4_dst, Some(1024));
        assert_eq!(t.header_len, 54);
        assert_eq!(t.vlan_vid, None);
        assert_eq!(t.mpls_label, None);
    }

    #[test]
    fn ihl_three_is_malicious() {
        let mut f = tcp_frame();
        f[14] = 0x43;
        let t = parse_bytes(0, &f);
        assert!(t.malicious);
        assert!(t.violations.contains(Violation::IhlTooSmall));
        assert_eq!(t.ipv4_src, None);
        assert_eq!(t.ip_proto, None);
    }

    #[test]
    fn total_length_past_frame() {
        let mut f = tcp_frame();
        f[16..18].copy_from_slice(&2000u16.to_be_bytes());
        let frame = RawFrame::new(0, f, 0);
        assert_eq!(
            malicious_reasons(&frame),
            vec![Violation::LengthExceedsFrame]
        );
    }

    #[test]
    fn truncated_mid_ipv4() {
        let frame = RawFrame::new(0, tcp_frame()[..20].to_vec(), 0);
        assert_eq!(malicious_reasons(&frame), vec![Violation::TruncatedHeader]);
        let t = parse(&frame);
        assert!(t.header_len <= 20);
    }

    #[test]
    fn well_formed_has_no_reasons() {
        assert!(malicious_reasons(&RawFrame::new(0, tcp_frame(), 0)).is_empty());
    }

    #[test]
    fn unknown_ethertype_is_l2_only() {
        let mut f = tcp_frame();
        f[12..14].copy_from_slice(&0x86ddu16.to_be_bytes());
        let t = parse_bytes(0, &f);
        assert!(!t.malicious);
        assert_eq!(t.eth_type, 0x86dd);
        assert_eq!(t.header_len, 14);
        assert_eq!(t.ip_proto, None);
    }

    #[test]
    fn three_vlan_tags_stop_after_two() {
        let mut f = vec![0u8; 12];
        for vid in [10u16, 20, 30] {
            f.extend_from_slice(&[0x81, 0x00]);
            f.extend_from_slice(&vid.to_be_bytes());
        }
        f.extend_from_slice(&[0x08, 0x00]);
        f.resize(64, 0);
        let t = parse_bytes(0, &f);
        assert!(!t.malicious);
        assert_eq!(t.vlan_vid, Some(10));
        assert_eq!(t.eth_type, 0x8100);
        assert_eq!(t.ip_proto, None);
    }

    #[test]
    fn mpls_without_bottom_of_stack() {
        let mut f = vec![0u8; 12];
        f.extend_from_slice(&[0x88, 0x47]);
        for _ in 0..5 {
            f.extend_from_slice(&[0x00, 0x01, 0x00, 0x40]);
        }
        f.resize(64, 0);
        let t = parse_bytes(0, &f);
        assert!(t.malicious);
        assert!(t.violations.contains(Violation::MplsStackOverflow));
        assert_eq!(t.mpls_label, Some(0x10));
    }

    #[test]
    fn runt_frame() {
        let t = parse_bytes(0, &[0u8; 5]);
        assert!(t.malicious);
        assert_eq!(t.header_len, 0);
    }
}
