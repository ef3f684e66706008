//! OXM (OpenFlow eXtensible Match) TLVs for the `OPENFLOW_BASIC` fields the
//! parser extracts.

use crate::bytes::{pad_to_8, put_u16, put_uint, Reader};
use crate::error::OfpError;

pub const OFPXMC_OPENFLOW_BASIC: u16 = 0x8000;
pub const OFPMT_OXM: u16 = 1;
/// `OFPVID_PRESENT`: set in `vlan_vid` values when a tag is present.
pub const VID_PRESENT: u16 = 0x1000;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
#[repr(u8)]
pub enum OxmField {
    InPort = 0,
    EthDst = 3,
    EthSrc = 4,
    EthType = 5,
    VlanVid = 6,
    VlanPcp = 7,
    IpDscp = 8,
    IpProto = 10,
    Ipv4Src = 11,
    Ipv4Dst = 12,
    TcpSrc = 13,
    TcpDst = 14,
    UdpSrc = 15,
    UdpDst = 16,
    MplsLabel = 34,
    MplsTc = 35,
}

impl OxmField {
    pub const ALL: [OxmField; 16] = [
        OxmField::InPort,
        OxmField::EthDst,
        OxmField::EthSrc,
        OxmField::EthType,
        OxmField::VlanVid,
        OxmField::VlanPcp,
        OxmField::IpDscp,
        OxmField::IpProto,
        OxmField::Ipv4Src,
        OxmField::Ipv4Dst,
        OxmField::TcpSrc,
        OxmField::TcpDst,
        OxmField::UdpSrc,
        OxmField::UdpDst,
        OxmField::MplsLabel,
        OxmField::MplsTc,
    ];

    pub fn from_code(code: u8) -> Option<Self> {
        OxmField::ALL.into_iter().find(|f| *f as u8 == code)
    }

    pub fn code(self) -> u8 {
        self as u8
    }

    /// Payload bytes of an unmasked TLV.
    pub fn value_len(self) -> usize {
        match self {
            OxmField::InPort | OxmField::Ipv4Src | OxmField::Ipv4Dst | OxmField::MplsLabel => 4,
            OxmField::EthDst | OxmField::EthSrc => 6,
            OxmField::EthType
            | OxmField::VlanVid
            | OxmField::TcpSrc
            | OxmField::TcpDst
            | OxmField::UdpSrc
            | OxmField::UdpDst => 2,
            OxmField::VlanPcp | OxmField::IpDscp | OxmField::IpProto | OxmField::MplsTc => 1,
        }
    }

    /// Significant bits of the value.
    pub fn value_bits(self) -> u32 {
        match self {
            OxmField::VlanVid => 13,
            OxmField::VlanPcp | OxmField::MplsTc => 3,
            OxmField::IpDscp => 6,
            OxmField::MplsLabel => 20,
            f => f.value_len() as u32 * 8,
        }
    }

    pub fn maskable(self) -> bool {
        matches!(
            self,
            OxmField::EthDst
                | OxmField::EthSrc
                | OxmField::VlanVid
                | OxmField::Ipv4Src
                | OxmField::Ipv4Dst
        )
    }

    pub fn max_value(self) -> u64 {
        (1u64 << self.value_bits()) - 1
    }
}

/// One match TLV.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Oxm {
    pub field: OxmField,
    pub value: u64,
    pub mask: Option<u64>,
}

impl Oxm {
    pub fn exact(field: OxmField, value: u64) -> Self {
        Oxm {
            field,
            value,
            mask: None,
        }
    }

    pub fn masked(field: OxmField, value: u64, mask: u64) -> Self {
        Oxm {
            field,
            value,
            mask: Some(mask),
        }
    }

    pub fn wire_len(&self) -> usize {
        4 + self.field.value_len() * if self.mask.is_some() { 2 } else { 1 }
    }

    pub fn encode(&self, out: &mut Vec<u8>) {
        let n = self.field.value_len();
        put_u16(out, OFPXMC_OPENFLOW_BASIC);
        out.push((self.field.code() << 1) | u8::from(self.mask.is_some()));
        out.push((self.wire_len() - 4) as u8);
        put_uint(out, self.value, n);
        if let Some(mask) = self.mask {
            put_uint(out, mask, n);
        }
    }

    pub(crate) fn decode(r: &mut Reader<'_>) -> Result<Self, OfpError> {
        let class = r.u16().map_err(|_| OfpError::BAD_MATCH_LEN)?;
        let fh = r.u8().map_err(|_| OfpError::BAD_MATCH_LEN)?;
        let len = usize::from(r.u8().map_err(|_| OfpError::BAD_MATCH_LEN)?);
        if class != OFPXMC_OPENFLOW_BASIC {
            return Err(OfpError::BAD_FIELD);
        }
        let field = OxmField::from_code(fh >> 1).ok_or(OfpError::BAD_FIELD)?;
        let has_mask = fh & 1 == 1;
        let n = field.value_len();
        if len != n * if has_mask { 2 } else { 1 } {
            return Err(OfpError::BAD_MATCH_LEN);
        }
        let value = r.uint(n).map_err(|_| OfpError::BAD_MATCH_LEN)?;
        let mask = if has_mask {
            Some(r.uint(n).map_err(|_| OfpError::BAD_MATCH_LEN)?)
        } else {
            None
        };
        Ok(Oxm { field, value, mask })
    }
}

/// An `ofp_match` of type `OFPMT_OXM`; TLVs keep their wire order.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash)]
pub struct Match {
    pub fields: Vec<Oxm>,
}

impl Match {
    pub fn new(fields: Vec<Oxm>) -> Self {
        Match { fields }
    }

    pub fn any() -> Self {
        Match::default()
    }

    pub fn with(mut self, oxm: Oxm) -> Self {
        self.fields.push(oxm);
        self
    }

    pub fn get(&self, field: OxmField) -> Option<&Oxm> {
        self.fields.iter().find(|o| o.field == field)
    }

    /// Length field value: header plus TLVs, without trailing padding.
    pub fn unpadded_len(&self) -> usize {
        4 + self.fields.iter().map(Oxm::wire_len).sum::<usize>()
    }

    pub fn wire_len(&self) -> usize {
        self.unpadded_len().next_multiple_of(8)
    }

    pub fn encode(&self, out: &mut Vec<u8>) {
        let start = out.len();
        put_u16(out, OFPMT_OXM);
        put_u16(out, self.unpadded_len() as u16);
        for f in &self.fields {
            f.encode(out);
        }
        pad_to_8(out, start);
    }

    pub(crate) fn decode(r: &mut Reader<'_>) -> Result<Self, OfpError> {
        let mtype = r.u16().map_err(|_| OfpError::BAD_REQUEST_LEN)?;
        let len = usize::from(r.u16().map_err(|_| OfpError::BAD_REQUEST_LEN)?);
        if mtype != OFPMT_OXM {
            return Err(OfpError::BAD_MATCH_TYPE);
        }
        if len < 4 {
            return Err(OfpError::BAD_MATCH_LEN);
        }
        let body = r.bytes(len - 4).map_err(|_| OfpError::BAD_MATCH_LEN)?;
        r.skip(len.next_multiple_of(8) - len)
            .map_err(|_| OfpError::BAD_MATCH_LEN)?;
        let mut br = Reader::new(body);
        let mut fields = Vec::new();
        while !br.is_empty() {
            fields.push(Oxm::decode(&mut br)?);
        }
        Ok(Match { fields })
    }
}
