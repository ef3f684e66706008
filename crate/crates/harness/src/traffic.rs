//! Synthetic traffic: flow templates expanded into deterministic frames.

use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sdn_fabric::oxm::{Match, Oxm, OxmField};
use sdn_fabric::packet::{FrameBuilder, L4Header};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const MIN_FRAME: usize = 64;
pub const MAX_FRAME: usize = 9216;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum SpecError {
    #[error("flow {flow}: frame size {size} outside [{MIN_FRAME}, {MAX_FRAME}]")]
    FrameSize { flow: usize, size: usize },
    #[error("flow {flow}: ingress port {port} not below port count {ports}")]
    Port { flow: usize, port: u32, ports: u32 },
    #[error("rate must be positive")]
    Rate,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Transport {
    Tcp,
    Udp,
}

/// Header fields shared by every frame of a flow.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct HeaderTemplate {
    pub eth_dst: u64,
    pub eth_src: u64,
    pub vlan: Option<u16>,
    pub ipv4_src: u32,
    pub ipv4_dst: u32,
    pub transport: Transport,
    pub src_port: u16,
    pub dst_port: u16,
}

impl Default for HeaderTemplate {
    fn default() -> Self {
        HeaderTemplate {
            eth_dst: 0x0200_0000_0002,
            eth_src: 0x0200_0000_0001,
            vlan: None,
            ipv4_src: 0x0a00_0001,
            ipv4_dst: 0x0a00_0002,
            transport: Transport::Udp,
            src_port: 1024,
            dst_port: 80,
        }
    }
}

impl HeaderTemplate {
    /// Exact match on the template's ingress, addresses, protocol and ports.
    pub fn exact_match(&self, in_port: u32) -> Match {
        let (proto, sf, df) = match self.transport {
            Transport::Tcp => (6, OxmField::TcpSrc, OxmField::TcpDst),
            Transport::Udp => (17, OxmField::UdpSrc, OxmField::UdpDst),
        };
        let mut m = Match::any().with(Oxm::exact(OxmField::InPort, u64::from(in_port)));
        if let Some(vid) = self.vlan {
            m = m.with(Oxm::exact(OxmField::VlanVid, 0x1000 | u64::from(vid)));
        }
        m.with(Oxm::exact(OxmField::EthType, 0x0800))
            .with(Oxm::exact(OxmField::IpProto, proto))
            .with(Oxm::exact(OxmField::Ipv4Src, u64::from(self.ipv4_src)))
            .with(Oxm::exact(OxmField::Ipv4Dst, u64::from(self.ipv4_dst)))
            .with(Oxm::exact(sf, u64::from(self.src_port)))
            .with(Oxm::exact(df, u64::from(self.dst_port)))
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FlowSpec {
    #[serde(default)]
    pub template: HeaderTemplate,
    pub packets: u64,
    pub frame_size: usize,
    pub ingress_port: u32,
    /// Where the benchmark's installed flow sends this traffic. Defaults to
    /// the next port.
    #[serde(default)]
    pub egress_port: Option<u32>,
}

impl FlowSpec {
    pub fn egress(&self, ports: u32) -> u32 {
        self.egress_port.unwrap_or((self.ingress_port + 1) % ports)
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrafficSpec {
    #[serde(default)]
    pub flows: Vec<FlowSpec>,
    #[serde(default)]
    pub seed: u64,
    /// Packets per second across all flows; `None` is unlimited.
    #[serde(default)]
    pub rate: Option<f64>,
}

impl TrafficSpec {
    pub fn single_flow(packets: u64, frame_size: usize) -> Self {
        TrafficSpec {
            flows: vec![FlowSpec {
                template: HeaderTemplate::default(),
                packets,
                frame_size,
                ingress_port: 0,
                egress_port: None,
            }],
            seed: 0,
            rate: None,
        }
    }

    pub fn validate(&self, ports: u32) -> Result<(), SpecError> {
        for (i, f) in self.flows.iter().enumerate() {
            if !(MIN_FRAME..=MAX_FRAME).contains(&f.frame_size) {
                return Err(SpecError::FrameSize {
                    flow: i,
                    size: f.frame_size,
                });
            }
            if f.ingress_port >= ports || f.egress(ports) >= ports {
                return Err(SpecError::Port {
                    flow: i,
                    port: f.ingress_port.max(f.egress(ports)),
                    ports,
                });
            }
        }
        if self.rate.is_some_and(|r| r.is_nan() || r <= 0.0) {
            return Err(SpecError::Rate);
        }
        Ok(())
    }

    pub fn total_packets(&self) -> u64 {
        self.flows.iter().map(|f| f.packets).sum()
    }

    /// Frames in send order: flows interleaved round-robin.
    pub fn frames(&self) -> Frames {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let templates = self
            .flows
            .iter()
            .map(|f| {
                let l4 = match f.template.transport {
                    Transport::Tcp => L4Header::Tcp {
                        src: f.template.src_port,
                        dst: f.template.dst_port,
                    },
                    Transport::Udp => L4Header::Udp {
                        src: f.template.src_port,
                        dst: f.template.dst_port,
                    },
                };
                let mut b = FrameBuilder::new(f.template.eth_dst, f.template.eth_src);
                if let Some(vid) = f.template.vlan {
                    b = b.vlan(vid, 0);
                }
                let b = b.ipv4(f.template.ipv4_src, f.template.ipv4_dst, l4);
                let base = b.clone().min_len(0).build().len();
                let mut payload = vec![0u8; f.frame_size.saturating_sub(base)];
                rng.fill(&mut payload[..]);
                b.payload(&payload).min_len(f.frame_size).build()
            })
            .collect();
        Frames {
            templates,
            remaining: self.flows.iter().map(|f| f.packets).collect(),
            ports: self.flows.iter().map(|f| f.ingress_port).collect(),
            next: 0,
            left: self.total_packets(),
        }
    }
}

/// Iterator of `(ingress port, frame)` pairs.
///
/// Every frame of a flow is identical; the payload is drawn from the seed.
pub struct Frames {
    templates: Vec<Vec<u8>>,
    remaining: Vec<u64>,
    ports: Vec<u32>,
    next: usize,
    left: u64,
}

impl Iterator for Frames {
    type Item = (u32, Vec<u8>);

    fn next(&mut self) -> Option<Self::Item> {
        if self.left == 0 {
            return None;
        }
        loop {
            let i = self.next;
            self.next = (self.next + 1) % self.remaining.len();
            if self.remaining[i] > 0 {
                self.remaining[i] -= 1;
                self.left -= 1;
                return Some((self.ports[i], self.templates[i].clone()));
            }
        }
    }

    fn size_hint(&self) -> (usize, Option<usize>) {
        (self.left as usize, Some(self.left as usize))
    }
}

/// Paces sends at a fixed rate; packet `i` is due `i / rate` seconds after
/// the start.
pub struct Pacer {
    start: Instant,
    interval_ns: Option<f64>,
    sent: u64,
}

impl Pacer {
    pub fn new(rate: Option<f64>) -> Self {
        Pacer {
            start: Instant::now(),
            interval_ns: rate.map(|r| 1e9 / r),
            sent: 0,
        }
    }

    /// Offset of packet `i` from the start.
    pub fn due(&self, i: u64) -> Duration {
        match self.interval_ns {
            Some(ns) => Duration::from_nanos((i as f64 * ns) as u64),
            None => Duration::ZERO,
        }
    }

    /// Blocks until the next packet is due.
    pub fn wait(&mut self) {
        let due = self.due(self.sent);
        self.sent += 1;
        let elapsed = self.start.elapsed();
        if due > elapsed {
            let gap = due - elapsed;
            if gap > Duration::from_micros(200) {
                std::thread::sleep(gap - Duration::from_micros(100));
            }
            while self.start.elapsed() < due {
                std::hint::spin_loop();
            }
        }
    }
}
