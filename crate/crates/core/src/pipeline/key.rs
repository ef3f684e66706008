//! Fixed match-key layout.
//!
//! Fields are packed big-endian in this order (bytes):
//!
//! | field      | bytes | note                                   |
//! |------------|-------|----------------------------------------|
//! | in_port    | 4     |                                        |
//! | eth_dst    | 6     |                                        |
//! | eth_src    | 6     |                                        |
//! | eth_type   | 2     | after VLAN tags                        |
//! | vlan_vid   | 2     | `0x1000 | vid` when tagged, 0 otherwise |
//! | vlan_pcp   | 1     |                                        |
//! | mpls_label | 3     |                                        |
//! | mpls_tc    | 1     |                                        |
//! | ip_proto   | 1     |                                        |
//! | ipv4_src   | 4     |                                        |
//! | ipv4_dst   | 4     |                                        |
//! | ip_dscp    | 1     |                                        |
//! | l4_src     | 2     | TCP or UDP, selected by ip_proto       |
//! | l4_dst     | 2     |                                        |
//!
//! Absent fields are zero in packet keys and don't-care in flow keys that
//! do not mention them.

use crate::error::OfpError;
use crate::oxm::{Match, OxmField, VID_PRESENT};
use crate::packet::{ethertype, ip_proto, HeaderTuple};
use crate::tcam::MaskedKey;

pub const KEY_BYTES: usize = 39;

/// (offset, width) of the key slot backing an OXM field.
pub fn slot_of(field: OxmField) -> (usize, usize) {
    match field {
        OxmField::InPort => (0, 4),
        OxmField::EthDst => (4, 6),
        OxmField::EthSrc => (10, 6),
        OxmField::EthType => (16, 2),
        OxmField::VlanVid => (18, 2),
        OxmField::VlanPcp => (20, 1),
        OxmField::MplsLabel => (21, 3),
        OxmField::MplsTc => (24, 1),
        OxmField::IpProto => (25, 1),
        OxmField::Ipv4Src => (26, 4),
        OxmField::Ipv4Dst => (30, 4),
        OxmField::IpDscp => (34, 1),
        OxmField::TcpSrc | OxmField::UdpSrc => (35, 2),
        OxmField::TcpDst | OxmField::UdpDst => (37, 2),
    }
}

fn put(key: &mut [u8], field: OxmField, value: u64) {
    let (off, n) = slot_of(field);
    key[off..off + n].copy_from_slice(&value.to_be_bytes()[8 - n..]);
}

/// Serializes a parsed tuple into a lookup key.
pub fn tuple_key(t: &HeaderTuple) -> [u8; KEY_BYTES] {
    let mut k = [0u8; KEY_BYTES];
    put(&mut k, OxmField::InPort, u64::from(t.in_port));
    put(&mut k, OxmField::EthDst, t.eth_dst);
    put(&mut k, OxmField::EthSrc, t.eth_src);
    put(&mut k, OxmField::EthType, u64::from(t.eth_type));
    if let Some(vid) = t.vlan_vid {
        put(&mut k, OxmField::VlanVid, u64::from(VID_PRESENT | vid));
    }
    let opt = |v: Option<u64>| v.unwrap_or(0);
    put(&mut k, OxmField::VlanPcp, opt(t.vlan_pcp.map(u64::from)));
    put(
        &mut k,
        OxmField::MplsLabel,
        opt(t.mpls_label.map(u64::from)),
    );
    put(&mut k, OxmField::MplsTc, opt(t.mpls_tc.map(u64::from)));
    put(&mut k, OxmField::IpProto, opt(t.ip_proto.map(u64::from)));
    put(&mut k, OxmField::Ipv4Src, opt(t.ipv4_src.map(u64::from)));
    put(&mut k, OxmField::Ipv4Dst, opt(t.ipv4_dst.map(u64::from)));
    put(&mut k, OxmField::IpDscp, opt(t.ip_dscp.map(u64::from)));
    put(&mut k, OxmField::TcpSrc, opt(t.l4_src.map(u64::from)));
    put(&mut k, OxmField::TcpDst, opt(t.l4_dst.map(u64::from)));
    k
}

fn exact_value(m: &Match, field: OxmField) -> Option<u64> {
    m.get(field).filter(|o| o.mask.is_none()).map(|o| o.value)
}

fn check_prereqs(m: &Match) -> Result<(), OfpError> {
    let eth_type = exact_value(m, OxmField::EthType);
    let proto = exact_value(m, OxmField::IpProto);
    for oxm in &m.fields {
        let ok = match oxm.field {
            OxmField::IpDscp | OxmField::IpProto | OxmField::Ipv4Src | OxmField::Ipv4Dst => {
                eth_type == Some(u64::from(ethertype::IPV4))
            }
            OxmField::TcpSrc | OxmField::TcpDst => {
                eth_type == Some(u64::from(ethertype::IPV4))
                    && proto == Some(u64::from(ip_proto::TCP))
            }
            OxmField::UdpSrc | OxmField::UdpDst => {
                eth_type == Some(u64::from(ethertype::IPV4))
                    && proto == Some(u64::from(ip_proto::UDP))
            }
            OxmField::MplsLabel | OxmField::MplsTc => {
                eth_type.is_some_and(|et| ethertype::is_mpls(et as u16))
            }
            OxmField::VlanPcp => m.get(OxmField::VlanVid).is_some_and(|v| {
                let mask = v.mask.unwrap_or(u64::MAX);
                mask & v.value & u64::from(VID_PRESENT) != 0
            }),
            _ => true,
        };
        if !ok {
            return Err(OfpError::BAD_PREREQ);
        }
    }
    Ok(())
}

/// Converts an OXM match into a ternary flow key, enforcing OpenFlow field
/// prerequisites.
pub fn match_key(m: &Match) -> Result<MaskedKey, OfpError> {
    let mut value = vec![0u8; KEY_BYTES];
    let mut mask = vec![0u8; KEY_BYTES];
    let mut seen = 0u64;
    for oxm in &m.fields {
        let bit = 1u64 << oxm.field.code();
        if seen & bit != 0 {
            return Err(OfpError::DUP_FIELD);
        }
        seen |= bit;
        let max = oxm.field.max_value();
        if oxm.value > max {
            return Err(OfpError::BAD_VALUE);
        }
        let field_mask = match oxm.mask {
            None => max,
            Some(_) if !oxm.field.maskable() => return Err(OfpError::BAD_MASK),
            Some(mk) if mk > max => return Err(OfpError::BAD_MASK),
            Some(mk) => mk,
        };
        put(&mut value, oxm.field, oxm.value & field_mask);
        put(&mut mask, oxm.field, field_mask);
    }
    check_prereqs(m)?;
    MaskedKey::new(value, mask).map_err(|_| OfpError::BAD_MATCH_LEN)
}
