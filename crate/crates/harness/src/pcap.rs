//! Classic libpcap files: reading in either byte order and either timestamp
//! resolution, writing little-endian.

use std::io::{self, Read, Write};

use thiserror::Error;

pub const MAGIC_MICROS: u32 = 0xa1b2_c3d4;
pub const MAGIC_NANOS: u32 = 0xa1b2_3c4d;
pub const LINKTYPE_ETHERNET: u32 = 1;
const GLOBAL_HEADER_LEN: usize = 24;
const RECORD_HEADER_LEN: usize = 16;
const MAX_SNAPLEN: u32 = 262_144;

#[derive(Debug, Error)]
pub enum PcapError {
    #[error("offset {offset}: bad magic {magic:#010x}")]
    BadMagic { offset: u64, magic: u32 },
    #[error("offset {offset}: link type {linktype} is not Ethernet")]
    LinkType { offset: u64, linktype: u32 },
    #[error("offset {offset}: truncated {what}: need {needed} bytes, have {available}")]
    Truncated {
        offset: u64,
        what: &'static str,
        needed: usize,
        available: usize,
    },
    #[error("offset {offset}: record length {len} exceeds the limit")]
    RecordTooLong { offset: u64, len: u32 },
    #[error("offset {offset}: {source}")]
    Io { offset: u64, source: io::Error },
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Record {
    /// Nanoseconds since the epoch.
    pub ts_ns: u64,
    pub orig_len: u32,
    pub data: Vec<u8>,
}

/// Streams records from a pcap file. Stops at the first error.
pub struct PcapReader<R> {
    inner: R,
    offset: u64,
    swapped: bool,
    nanos: bool,
    pub snaplen: u32,
    failed: bool,
}

/// Reads until `buf` is full or EOF; returns the bytes read.
fn fill(r: &mut impl Read, buf: &mut [u8]) -> io::Result<usize> {
    let mut got = 0;
    while got < buf.len() {
        match r.read(&mut buf[got..]) {
            Ok(0) => break,
            Ok(n) => got += n,
            Err(e) if e.kind() == io::ErrorKind::Interrupted => {}
            Err(e) => return Err(e),
        }
    }
    Ok(got)
}

impl<R: Read> PcapReader<R> {
    pub fn new(mut inner: R) -> Result<Self, PcapError> {
        let mut h = [0u8; GLOBAL_HEADER_LEN];
        let got = fill(&mut inner, &mut h).map_err(|source| PcapError::Io { offset: 0, source })?;
        if got < 4 {
            return Err(PcapError::Truncated {
                offset: 0,
                what: "global header",
                needed: GLOBAL_HEADER_LEN,
                available: got,
            });
        }
        let magic = u32::from_le_bytes([h[0], h[1], h[2], h[3]]);
        let (swapped, nanos) = match magic {
            MAGIC_MICROS => (false, false),
            MAGIC_NANOS => (false, true),
            m if m.swap_bytes() == MAGIC_MICROS => (true, false),
            m if m.swap_bytes() == MAGIC_NANOS => (true, true),
            _ => return Err(PcapError::BadMagic { offset: 0, magic }),
        };
        if got < GLOBAL_HEADER_LEN {
            return Err(PcapError::Truncated {
                offset: 0,
                what: "global header",
                needed: GLOBAL_HEADER_LEN,
                available: got,
            });
        }
        let mut r = PcapReader {
            inner,
            offset: GLOBAL_HEADER_LEN as u64,
            swapped,
            nanos,
            snaplen: 0,
            failed: false,
        };
        r.snaplen = r.u32(&h[16..20]);
        let linktype = r.u32(&h[20..24]) & 0x0fff_ffff;
        if linktype != LINKTYPE_ETHERNET {
            return Err(PcapError::LinkType {
                offset: 20,
                linktype,
            });
        }
        Ok(r)
    }

    fn u32(&self, b: &[u8]) -> u32 {
        let v = u32::from_le_bytes([b[0], b[1], b[2], b[3]]);
        if self.swapped {
            v.swap_bytes()
        } else {
            v
        }
    }

    pub fn is_nanosecond(&self) -> bool {
        self.nanos
    }

    pub fn is_swapped(&self) -> bool {
        self.swapped
    }

    fn read_record(&mut self) -> Result<Option<Record>, PcapError> {
        let at = self.offset;
        let mut h = [0u8; RECORD_HEADER_LEN];
        let got =
            fill(&mut self.inner, &mut h).map_err(|source| PcapError::Io { offset: at, source })?;
        if got == 0 {
            return Ok(None);
        }
        if got < RECORD_HEADER_LEN {
            return Err(PcapError::Truncated {
                offset: at,
                what: "record header",
                needed: RECORD_HEADER_LEN,
                available: got,
            });
        }
        let secs = u64::from(self.u32(&h[0..4]));
        let frac = u64::from(self.u32(&h[4..8]));
        let incl = self.u32(&h[8..12]);
        let orig_len = self.u32(&h[12..16]);
        if incl > MAX_SNAPLEN {
            return Err(PcapError::RecordTooLong {
                offset: at,
                len: incl,
            });
        }
        let mut data = vec![0u8; incl as usize];
        let got = fill(&mut self.inner, &mut data).map_err(|source| PcapError::Io {
            offset: at + RECORD_HEADER_LEN as u64,
            source,
        })?;
        if got < data.len() {
            return Err(PcapError::Truncated {
                offset: at,
                what: "record data",
                needed: data.len(),
                available: got,
            });
        }
        self.offset = at + (RECORD_HEADER_LEN + data.len()) as u64;
        let ts_ns = secs * 1_000_000_000 + if self.nanos { frac } else { frac * 1000 };
        Ok(Some(Record {
            ts_ns,
            orig_len,
            data,
        }))
    }
}

impl<R: Read> Iterator for PcapReader<R> {
    type Item = Result<Record, PcapError>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.failed {
            return None;
        }
        match self.read_record() {
            Ok(r) => r.map(Ok),
            Err(e) => {
                self.failed = true;
                Some(Err(e))
            }
        }
    }
}

pub struct PcapWriter<W: Write> {
    inner: W,
    nanos: bool,
}

impl<W: Write> PcapWriter<W> {
    pub fn new(inner: W) -> io::Result<Self> {
        Self::with_resolution(inner, false)
    }

    pub fn with_resolution(mut inner: W, nanos: bool) -> io::Result<Self> {
        let magic = if nanos { MAGIC_NANOS } else { MAGIC_MICROS };
        let mut h = Vec::with_capacity(GLOBAL_HEADER_LEN);
        h.extend_from_slice(&magic.to_le_bytes());
        h.extend_from_slice(&2u16.to_le_bytes());
        h.extend_from_slice(&4u16.to_le_bytes());
        h.extend_from_slice(&0i32.to_le_bytes());
        h.extend_from_slice(&0u32.to_le_bytes());
        h.extend_from_slice(&MAX_SNAPLEN.to_le_bytes());
        h.extend_from_slice(&LINKTYPE_ETHERNET.to_le_bytes());
        inner.write_all(&h)?;
        Ok(PcapWriter { inner, nanos })
    }

    pub fn write(&mut self, ts_ns: u64, data: &[u8]) -> io::Result<()> {
        let secs = (ts_ns / 1_000_000_000) as u32;
        let sub = ts_ns % 1_000_000_000;
        let frac = if self.nanos { sub } else { sub / 1000 } as u32;
        let len = data.len() as u32;
        let mut h = [0u8; RECORD_HEADER_LEN];
        h[0..4].copy_from_slice(&secs.to_le_bytes());
        h[4..8].copy_from_slice(&frac.to_le_bytes());
        h[8..12].copy_from_slice(&len.to_le_bytes());
        h[12..16].copy_from_slice(&len.to_le_bytes());
        self.inner.write_all(&h)?;
        self.inner.write_all(data)
    }

    pub fn into_inner(self) -> W {
        self.inner
    }
}

/// Rewrites a little-endian pcap image in big-endian byte order.
pub fn swap_endianness(le: &[u8]) -> Vec<u8> {
    fn flip(out: &mut Vec<u8>, b: &[u8]) {
        out.extend(b.iter().rev());
    }
    let mut out = Vec::with_capacity(le.len());
    flip(&mut out, &le[0..4]);
    flip(&mut out, &le[4..6]);
    flip(&mut out, &le[6..8]);
    for f in le[8..24].chunks(4) {
        flip(&mut out, f);
    }
    let mut at = GLOBAL_HEADER_LEN;
    while at + RECORD_HEADER_LEN <= le.len() {
        for f in le[at..at + RECORD_HEADER_LEN].chunks(4) {
            flip(&mut out, f);
        }
        let incl = u32::from_le_bytes(le[at + 8..at + 12].try_into().unwrap()) as usize;
        let end = (at + RECORD_HEADER_LEN + incl).min(le.len());
        out.extend_from_slice(&le[at + RECORD_HEADER_LEN..end]);
        at = end;
    }
    out
}
