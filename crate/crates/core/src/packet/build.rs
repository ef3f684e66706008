use super::{ethertype, ip_proto, ETH_HEADER_LEN};
use crate::checksum;

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum L4Header {
    Tcp {
        src: u16,
        dst: u16,
    },
    Udp {
        src: u16,
        dst: u16,
    },
    /// Any other protocol number; no L4 header is written.
    Other(u8),
}

#[derive(Clone, Debug)]
struct Ipv4Spec {
    src: u32,
    dst: u32,
    ttl: u8,
    dscp: u8,
    options: Vec<u8>,
    l4: L4Header,
}

/// Builds well-formed frames with valid IPv4 and L4 checksums.
///
/// Tags and labels are listed outermost first.
#[derive(Clone, Debug)]
pub struct FrameBuilder {
    dst: u64,
    src: u64,
    vlans: Vec<(u16, u8, u16)>,
    mpls: Vec<(u32, u8, u8)>,
    ethertype: u16,
    ipv4: Option<Ipv4Spec>,
    payload: Vec<u8>,
    min_len: usize,
}

impl Default for FrameBuilder {
    fn default() -> Self {
        FrameBuilder::new(0x0200_0000_0002, 0x0200_0000_0001)
    }
}

impl FrameBuilder {
    pub fn new(dst: u64, src: u64) -> Self {
        FrameBuilder {
            dst,
            src,
            vlans: Vec::new(),
            mpls: Vec::new(),
            ethertype: 0x88b5,
            ipv4: None,
            payload: Vec::new(),
            min_len: 60,
        }
    }

    pub fn vlan(mut self, vid: u16, pcp: u8) -> Self {
        self.vlans.push((ethertype::VLAN, pcp, vid));
        self
    }

    pub fn vlan_tpid(mut self, tpid: u16, vid: u16, pcp: u8) -> Self {
        self.vlans.push((tpid, pcp, vid));
        self
    }

    pub fn mpls(mut self, label: u32, tc: u8, ttl: u8) -> Self {
        self.mpls.push((label, tc, ttl));
        self
    }

    /// Sets the EtherType used when no IPv4 header is requested.
    pub fn ethertype(mut self, et: u16) -> Self {
        self.ethertype = et;
        self
    }

    pub fn ipv4(mut self, src: u32, dst: u32, l4: L4Header) -> Self {
        self.ipv4 = Some(Ipv4Spec {
            src,
            dst,
            ttl: 64,
            dscp: 0,
            options: Vec::new(),
            l4,
        });
        self
    }

    pub fn ttl(mut self, ttl: u8) -> Self {
        if let Some(ip) = self.ipv4.as_mut() {
            ip.ttl = ttl;
        }
        self
    }

    pub fn dscp(mut self, dscp: u8) -> Self {
        if let Some(ip) = self.ipv4.as_mut() {
            ip.dscp = dscp & 0x3f;
        }
        self
    }

    /// IPv4 option bytes; padded with zero (end-of-options) to a word boundary.
    pub fn ip_options(mut self, options: &[u8]) -> Self {
        if let Some(ip) = self.ipv4.as_mut() {
            ip.options = options.to_vec();
            let rem = ip.options.len() % 4;
            if rem != 0 {
                ip.options.resize(ip.options.len() + 4 - rem, 0);
            }
            assert!(ip.options.len() <= 40, "IPv4 options exceed 40 bytes");
        }
        self
    }

    pub fn payload(mut self, payload: &[u8]) -> Self {
        self.payload = payload.to_vec();
        self
    }

    /// Minimum frame length; shorter frames get zero padding after the datagram.
    pub fn min_len(mut self, len: usize) -> Self {
        self.min_len = len;
        self
    }

    /// Grows the payload so that the whole frame is exactly `len` bytes.
    pub fn frame_len(mut self, len: usize) -> Self {
        let base = self.clone().payload(&[]).min_len(0).build().len();
        let need = len.saturating_sub(base);
        self.payload = (0..need).map(|i| i as u8).collect();
        self.min_len = len;
        self
    }

    pub fn build(&self) -> Vec<u8> {
        let mut f = Vec::with_capacity(self.min_len.max(64));
        f.extend_from_slice(&self.dst.to_be_bytes()[2..]);
        f.extend_from_slice(&self.src.to_be_bytes()[2..]);
        for (tpid, pcp, vid) in &self.vlans {
            f.extend_from_slice(&tpid.to_be_bytes());
            let tci = (u16::from(*pcp & 0x7) << 13) | (vid & 0x0fff);
            f.extend_from_slice(&tci.to_be_bytes());
        }
        let inner = if self.ipv4.is_some() {
            ethertype::IPV4
        } else {
            self.ethertype
        };
        let et = if self.mpls.is_empty() {
            inner
        } else {
            ethertype::MPLS
        };
        f.extend_from_slice(&et.to_be_bytes());
        for (i, (label, tc, ttl)) in self.mpls.iter().enumerate() {
            let bos = u32::from(i + 1 == self.mpls.len());
            let shim = ((label & 0xf_ffff) << 12)
                | (u32::from(tc & 0x7) << 9)
                | (bos << 8)
                | u32::from(*ttl);
            f.extend_from_slice(&shim.to_be_bytes());
        }
        match &self.ipv4 {
            Some(ip) => self.write_ipv4(&mut f, ip),
            None => f.extend_from_slice(&self.payload),
        }
        if f.len() < self.min_len {
            f.resize(self.min_len, 0);
        }
        debug_assert!(f.len() >= ETH_HEADER_LEN);
        f
    }

    fn write_ipv4(&self, f: &mut Vec<u8>, ip: &Ipv4Spec) {
        let ip_off = f.len();
        let hlen = 20 + ip.options.len();
        let (proto, l4) = match ip.l4 {
            L4Header::Tcp { src, dst } => {
                let mut h = vec![0u8; 20];
                h[0..2].copy_from_slice(&src.to_be_bytes());
                h[2..4].copy_from_slice(&dst.to_be_bytes());
                h[12] = 5 << 4;
                h[13] = 0x10;
                h[14..16].copy_from_slice(&0xffffu16.to_be_bytes());
                (ip_proto::TCP, h)
            }
            L4Header::Udp { src, dst } => {
                let mut h = vec![0u8; 8];
                h[0..2].copy_from_slice(&src.to_be_bytes());
                h[2..4].copy_from_slice(&dst.to_be_bytes());
                let ulen = (8 + self.payload.len()) as u16;
                h[4..6].copy_from_slice(&ulen.to_be_bytes());
                (ip_proto::UDP, h)
            }
            L4Header::Other(p) => (p, Vec::new()),
        };
        let total = hlen + l4.len() + self.payload.len();
        let mut hdr = vec![0u8; hlen];
        hdr[0] = 0x40 | (hlen / 4) as u8;
        hdr[1] = ip.dscp << 2;
        hdr[2..4].copy_from_slice(&(total as u16).to_be_bytes());
        hdr[4..6].copy_from_slice(&0x1234u16.to_be_bytes());
        hdr[6] = 0x40;
        hdr[8] = ip.ttl;
        hdr[9] = proto;
        hdr[12..16].copy_from_slice(&ip.src.to_be_bytes());
        hdr[16..20].copy_from_slice(&ip.dst.to_be_bytes());
        hdr[20..].copy_from_slice(&ip.options);
        checksum::fill_ipv4_checksum(&mut hdr);
        f.extend_from_slice(&hdr);

        let l4_off = f.len();
        f.extend_from_slice(&l4);
        f.extend_from_slice(&self.payload);
        if !l4.is_empty() {
            let seg_len = (l4.len() + self.payload.len()) as u16;
            let mut sum = checksum::accumulate(0, &f[ip_off + 12..ip_off + 20]);
            sum += u32::from(proto) + u32::from(seg_len);
            sum = checksum::accumulate(sum, &f[l4_off..]);
            let mut ck = checksum::finish(sum);
            let ck_off = if proto == ip_proto::TCP { 16 } else { 6 };
            if proto == ip_proto::UDP && ck == 0 {
                ck = 0xffff;
            }
            f[l4_off + ck_off..l4_off + ck_off + 2].copy_from_slice(&ck.to_be_bytes());
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::packet::parse_bytes;

    #[test]
    fn builds_parseable_tcp() {
        let f = FrameBuilder::default()
            .ipv4(0x0a000001, 0x0a000002, L4Header::Tcp { src: 80, dst: 1024 })
            .frame_len(64)
            .build();
        assert_eq!(f.len(), 64);
        let t = parse_bytes(0, &f);
        assert!(!t.malicious, "{:?}", t.violations);
        assert_eq!(t.l4_src, Some(80));
        assert_eq!(t.header_len, 54);
        assert_eq!(checksum::internet_checksum(&f[14..34]), 0);
    }

    #[test]
    fn stacked_headers() {
        let f = FrameBuilder::default()
            .vlan(100, 3)
            .vlan(200, 0)
            .mpls(1000, 1, 64)
            .mpls(2000, 0, 64)
            .ipv4(1, 2, L4Header::Udp { src: 5, dst: 6 })
            .build();
        let t = parse_bytes(0, &f);
        assert!(!t.malicious, "{:?}", t.violations);
        assert_eq!(t.vlan_vid, Some(100));
        assert_eq!(t.vlan_pcp, Some(3));
        assert_eq!(t.mpls_label, Some(1000));
        assert_eq!(t.mpls_tc, Some(1));
        assert_eq!(t.eth_type, ethertype::MPLS);
        assert_eq!(t.l4_dst, Some(6));
    }
}
