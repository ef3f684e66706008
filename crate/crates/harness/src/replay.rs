//! Pcap files as a traffic source.

use std::fs::File;
use std::io::BufReader;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::pcap::{PcapError, PcapReader};

/// `PORT=PATH`: frames from `path` enter the switch on `port`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PortInput {
    pub port: u32,
    pub path: PathBuf,
}

impl FromStr for PortInput {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let (port, path) = s
            .split_once('=')
            .ok_or_else(|| format!("expected PORT=PATH, got {s:?}"))?;
        let port = port
            .trim()
            .parse()
            .map_err(|e| format!("port {port:?}: {e}"))?;
        Ok(PortInput {
            port,
            path: PathBuf::from(path),
        })
    }
}

/// Frames loaded from one or more captures.
#[derive(Debug, Default)]
pub struct Replay {
    /// `(ingress port, frame)` in send order.
    pub frames: Vec<(u32, Vec<u8>)>,
    /// Errors that cut a file short, with its path. Frames read before the
    /// error are kept.
    pub errors: Vec<(PathBuf, PcapError)>,
}

/// Timestamped records read so far, plus the error that stopped reading.
type Partial = (Vec<(u64, Vec<u8>)>, Option<PcapError>);

fn read_file(path: &Path) -> Result<Partial, PcapError> {
    let f = File::open(path).map_err(|source| PcapError::Io { offset: 0, source })?;
    let mut out = Vec::new();
    for rec in PcapReader::new(BufReader::new(f))? {
        match rec {
            Ok(r) => out.push((r.ts_ns, r.data)),
            Err(e) => return Ok((out, Some(e))),
        }
    }
    Ok((out, None))
}

/// Loads every input. A single file keeps its record order; several files
/// are merged by timestamp, ties going to the earlier input.
pub fn pcap_replay(inputs: &[PortInput]) -> Replay {
    let mut replay = Replay::default();
    let mut merged = Vec::new();
    for (i, input) in inputs.iter().enumerate() {
        match read_file(&input.path) {
            Ok((frames, err)) => {
                for (seq, (ts, data)) in frames.into_iter().enumerate() {
                    merged.push((ts, i, seq, input.port, data));
                }
                if let Some(e) = err {
                    replay.errors.push((input.path.clone(), e));
                }
            }
            Err(e) => replay.errors.push((input.path.clone(), e)),
        }
    }
    if inputs.len() > 1 {
        merged.sort_by_key(|&(ts, i, seq, _, _)| (ts, i, seq));
    }
    replay.frames = merged
        .into_iter()
        .map(|(_, _, _, port, data)| (port, data))
        .collect();
    replay
}
