//! In-place header modifications.

use super::Action;
use crate::checksum;
use crate::oxm::OxmField;
use crate::packet::{ethertype, ip_proto, parse_layout, Layout};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Skip {
    /// The frame does not carry the header the action modifies.
    MissingHeader,
    /// TTL would reach zero; the packet must be dropped.
    TtlExpired,
}

fn be16(f: &[u8], at: usize) -> u16 {
    u16::from_be_bytes([f[at], f[at + 1]])
}

fn be32(f: &[u8], at: usize) -> u32 {
    u32::from_be_bytes([f[at], f[at + 1], f[at + 2], f[at + 3]])
}

fn put16(f: &mut [u8], at: usize, v: u16) {
    f[at..at + 2].copy_from_slice(&v.to_be_bytes());
}

fn put32(f: &mut [u8], at: usize, v: u32) {
    f[at..at + 4].copy_from_slice(&v.to_be_bytes());
}

fn refresh_ipv4(f: &mut [u8], l: &Layout) {
    if let Some(ip) = l.ipv4_offset {
        checksum::fill_ipv4_checksum(&mut f[ip..ip + l.ipv4_header_len]);
    }
}

fn ipv4(l: &Layout) -> Result<usize, Skip> {
    l.ipv4_offset.ok_or(Skip::MissingHeader)
}

/// Patches the L4 checksum after a 32-bit pseudo-header or header word changed.
fn fix_l4_checksum32(f: &mut [u8], l: &Layout, old: u32, new: u32) {
    let Some(l4) = l.l4_offset else { return };
    let at = match l.l4_proto {
        ip_proto::TCP => l4 + 16,
        ip_proto::UDP => l4 + 6,
        _ => return,
    };
    let ck = be16(f, at);
    if l.l4_proto == ip_proto::UDP && ck == 0 {
        return;
    }
    let mut fixed = checksum::adjust32(ck, old, new);
    if l.l4_proto == ip_proto::UDP && fixed == 0 {
        fixed = 0xffff;
    }
    put16(f, at, fixed);
}

fn set_port(f: &mut [u8], l: &Layout, proto: u8, offset: usize, value: u16) -> Result<(), Skip> {
    let l4 = l.l4_offset.ok_or(Skip::MissingHeader)?;
    if l.l4_proto != proto {
        return Err(Skip::MissingHeader);
    }
    let old = be16(f, l4 + offset);
    put16(f, l4 + offset, value);
    fix_l4_checksum32(f, l, u32::from(old), u32::from(value));
    Ok(())
}

fn set_field(f: &mut [u8], l: &Layout, field: OxmField, v: u64) -> Result<(), Skip> {
    match field {
        OxmField::InPort => return Err(Skip::MissingHeader),
        OxmField::EthDst => f[0..6].copy_from_slice(&v.to_be_bytes()[2..]),
        OxmField::EthSrc => f[6..12].copy_from_slice(&v.to_be_bytes()[2..]),
        OxmField::EthType => put16(f, l.ethertype_offset, v as u16),
        OxmField::VlanVid | OxmField::VlanPcp => {
            if l.vlan_tags == 0 {
                return Err(Skip::MissingHeader);
            }
            let tci = be16(f, 14);
            let tci = if field == OxmField::VlanVid {
                (tci & 0xf000) | (v as u16 & 0x0fff)
            } else {
                (tci & 0x1fff) | ((v as u16 & 0x7) << 13)
            };
            put16(f, 14, tci);
        }
        OxmField::MplsLabel | OxmField::MplsTc => {
            if l.mpls_labels == 0 {
                return Err(Skip::MissingHeader);
            }
            let at = l.l2_end();
            let shim = be32(f, at);
            let shim = if field == OxmField::MplsLabel {
                (shim & 0xfff) | ((v as u32 & 0xf_ffff) << 12)
            } else {
                (shim & !(0x7 << 9)) | ((v as u32 & 0x7) << 9)
            };
            put32(f, at, shim);
        }
        OxmField::IpDscp => {
            let ip = ipv4(l)?;
            f[ip + 1] = ((v as u8 & 0x3f) << 2) | (f[ip + 1] & 0x3);
            refresh_ipv4(f, l);
        }
        OxmField::IpProto => {
            let ip = ipv4(l)?;
            f[ip + 9] = v as u8;
            refresh_ipv4(f, l);
        }
        OxmField::Ipv4Src | OxmField::Ipv4Dst => {
            let ip = ipv4(l)?;
            let at = ip + if field == OxmField::Ipv4Src { 12 } else { 16 };
            let old = be32(f, at);
            put32(f, at, v as u32);
            refresh_ipv4(f, l);
            fix_l4_checksum32(f, l, old, v as u32);
        }
        OxmField::TcpSrc => set_port(f, l, ip_proto::TCP, 0, v as u16)?,
        OxmField::TcpDst => set_port(f, l, ip_proto::TCP, 2, v as u16)?,
        OxmField::UdpSrc => set_port(f, l, ip_proto::UDP, 0, v as u16)?,
        OxmField::UdpDst => set_port(f, l, ip_proto::UDP, 2, v as u16)?,
    }
    Ok(())
}

/// Applies one modification action to `frame` in place. Output actions are
/// handled by the caller and are a no-op here.
pub fn apply(frame: &mut Vec<u8>, action: &Action) -> Result<(), Skip> {
    let (_, l) = parse_layout(0, frame);
    if frame.len() < l.l2_end() || l.ethertype_offset == 0 {
        return Err(Skip::MissingHeader);
    }
    match *action {
        Action::Output { .. } => {}
        Action::PopVlan => {
            if l.vlan_tags == 0 {
                return Err(Skip::MissingHeader);
            }
            frame.drain(12..16);
        }
        Action::PushVlan(tpid) => {
            let tci = if l.vlan_tags > 0 { be16(frame, 14) } else { 0 };
            let mut tag = [0u8; 4];
            tag[..2].copy_from_slice(&tpid.to_be_bytes());
            tag[2..].copy_from_slice(&tci.to_be_bytes());
            frame.splice(12..12, tag);
        }
        Action::PushMpls(et) => {
            let at = l.ethertype_offset;
            let inner = be16(frame, at);
            let shim = if ethertype::is_mpls(inner) && l.mpls_labels > 0 {
                be32(frame, at + 2) & !0x100
            } else {
                let ttl = l.ipv4_offset.map_or(0, |ip| u32::from(frame[ip + 8]));
                0x100 | ttl
            };
            put16(frame, at, et);
            frame.splice(at + 2..at + 2, shim.to_be_bytes());
        }
        Action::PopMpls(et) => {
            if l.mpls_labels == 0 {
                return Err(Skip::MissingHeader);
            }
            let at = l.ethertype_offset;
            frame.drain(at + 2..at + 6);
            put16(frame, at, et);
        }
        Action::SetField(oxm) => set_field(frame, &l, oxm.field, oxm.value)?,
        Action::SetNwTtl(ttl) => {
            let ip = ipv4(&l)?;
            frame[ip + 8] = ttl;
            refresh_ipv4(frame, &l);
        }
        Action::DecNwTtl => {
            let ip = ipv4(&l)?;
            if frame[ip + 8] <= 1 {
                return Err(Skip::TtlExpired);
            }
            frame[ip + 8] -= 1;
            refresh_ipv4(frame, &l);
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::packet::{parse_bytes, FrameBuilder, L4Header};

    /// Independent RFC 1071 sum over 16-bit words.
    fn ones_sum_ok(bytes: &[u8]) -> bool {
        let mut sum: u64 = 0;
        for i in (0..bytes.len()).step_by(2) {
            let hi = u64::from(bytes[i]) << 8;
            let lo = bytes.get(i + 1).copied().map_or(0, u64::from);
            sum += hi | lo;
        }
        while sum > 0xffff {
            sum = (sum & 0xffff) + (sum >> 16);
        }
        sum == 0xffff
    }

    fn tcp_checksum_ok(f: &[u8], ip: usize, l4: usize) -> bool {
        let seg = &f[l4..];
        let mut pseudo = Vec::new();
        pseudo.extend_from_slice(&f[ip + 12..ip + 20]);
        pseudo.extend_from_slice(&[0, f[ip + 9]]);
        pseudo.extend_from_slice(&(seg.len() as u16).to_be_bytes());
        pseudo.extend_from_slice(seg);
        ones_sum_ok(&pseudo)
    }

    #[test]
    fn set_ipv4_dst_keeps_checksums_valid() {
        let mut f = FrameBuilder::default()
            .ipv4(0x0a000001, 0x0a000009, L4Header::Tcp { src: 1, dst: 2 })
            .payload(&[7; 26])
            .build();
        assert!(tcp_checksum_ok(&f, 14, 34));
        apply(&mut f, &Action::set_field(OxmField::Ipv4Dst, 0x0a000002)).unwrap();
        assert_eq!(parse_bytes(0, &f).ipv4_dst, Some(0x0a000002));
        assert!(ones_sum_ok(&f[14..34]));
        assert!(tcp_checksum_ok(&f, 14, 34));
    }

    #[test]
    fn set_tcp_port_on_udp_is_skipped() {
        let mut f = FrameBuilder::default()
            .ipv4(1, 2, L4Header::Udp { src: 1, dst: 2 })
            .build();
        assert_eq!(
            apply(&mut f, &Action::set_field(OxmField::TcpSrc, 9)),
            Err(Skip::MissingHeader)
        );
    }

    #[test]
    fn pop_vlan_on_untagged_is_skipped() {
        let mut f = FrameBuilder::default()
            .ipv4(1, 2, L4Header::Other(1))
            .build();
        assert_eq!(apply(&mut f, &Action::PopVlan), Err(Skip::MissingHeader));
    }

    #[test]
    fn push_vlan_copies_outer_tci() {
        let mut f = FrameBuilder::default()
            .vlan(77, 5)
            .ipv4(1, 2, L4Header::Other(1))
            .build();
        apply(&mut f, &Action::PushVlan(0x88a8)).unwrap();
        let t = parse_bytes(0, &f);
        assert_eq!(t.vlan_vid, Some(77));
        assert_eq!(t.vlan_pcp, Some(5));
        assert_eq!(&f[12..14], &[0x88, 0xa8]);
    }

    #[test]
    fn push_mpls_on_labelled_copies_label() {
        let mut f = FrameBuilder::default()
            .mpls(500, 2, 9)
            .ipv4(1, 2, L4Header::Other(1))
            .build();
        apply(&mut f, &Action::PushMpls(0x8847)).unwrap();
        let t = parse_bytes(0, &f);
        assert!(!t.malicious);
        assert_eq!(t.mpls_label, Some(500));
        assert_eq!(t.mpls_tc, Some(2));
        // Outer shim has the bottom-of-stack bit cleared.
        assert_eq!(f[16] & 0x01, 0);
        assert_eq!(f[20] & 0x01, 1);
    }
}
