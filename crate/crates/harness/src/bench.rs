//! Benchmark runner: drives generated traffic through a running switch and
//! reports rate, drops and latency.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::PathBuf;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;
use std::thread;
use std::time::{Duration, Instant};

use sdn_fabric::action::Action;
use sdn_fabric::ofp::Datapath;
use sdn_fabric::oxm::{Match, Oxm, OxmField};
use sdn_fabric::pipeline::{FlowMod, Instruction};
use sdn_fabric::switch::{Config, ConfigError, Conservation, Switch, SwitchHandle};
use serde::Serialize;
use thiserror::Error;

use crate::pcap::PcapWriter;
use crate::traffic::{Pacer, SpecError, TrafficSpec};

#[derive(Debug, Error)]
pub enum BenchError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Spec(#[from] SpecError),
    #[error("installing flow {0}: {1}")]
    Flow(usize, sdn_fabric::error::OfpError),
    #[error("egress capture: {0}")]
    Io(#[from] std::io::Error),
    #[error("switch did not go idle within {0:?}")]
    Stuck(Duration),
}

#[derive(Clone, Debug, Default)]
pub struct BenchOptions {
    /// Install one exact-match flow per traffic flow before sending.
    pub install_flows: bool,
    /// Write each port's egress to `port<N>.pcap` in this directory.
    pub capture_dir: Option<PathBuf>,
    pub idle_timeout: Option<Duration>,
}

impl BenchOptions {
    pub fn with_flows() -> Self {
        BenchOptions {
            install_flows: true,
            ..BenchOptions::default()
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct Report {
    pub offered: u64,
    pub rx_packets: u64,
    pub tx_packets: u64,
    pub tx_bytes: u64,
    pub rx_dropped: u64,
    pub tx_dropped: u64,
    pub pipeline_dropped: u64,
    pub to_controller: u64,
    pub buffered: u64,
    pub drops: u64,
    pub elapsed_s: f64,
    pub pps: f64,
    pub gbps: f64,
    pub latency_p50_ns: u64,
    pub latency_p99_ns: u64,
    pub latency_max_ns: u64,
    pub conservation: Conservation,
    pub conservation_holds: bool,
}

impl Report {
    pub fn to_text(&self) -> String {
        let c = &self.conservation;
        format!(
            "offered: {}\nrx_packets: {}\ntx_packets: {}\nrx_dropped: {}\ntx_dropped: {}\n\
             pipeline_dropped: {}\nto_controller: {}\nbuffered: {}\ndrops: {}\nelapsed_s: {:.6}\n\
             pps: {:.0}\ngbps: {:.3}\nlatency_p50_ns: {}\nlatency_p99_ns: {}\nlatency_max_ns: {}\n\
             conservation: rx {} = tx {} + tx_dropped {} - injected {} - replicated {} + rx_dropped {} \
             + pipeline_dropped {} + buffered {} + to_controller {} + in_flight {} ({})\n",
            self.offered,
            self.rx_packets,
            self.tx_packets,
            self.rx_dropped,
            self.tx_dropped,
            self.pipeline_dropped,
            self.to_controller,
            self.buffered,
            self.drops,
            self.elapsed_s,
            self.pps,
            self.gbps,
            self.latency_p50_ns,
            self.latency_p99_ns,
            self.latency_max_ns,
            c.rx_packets,
            c.tx_packets,
            c.tx_dropped,
            c.injected,
            c.replicated,
            c.rx_dropped,
            c.pipeline_dropped,
            c.buffered_live,
            c.to_controller,
            c.in_flight,
            if self.conservation_holds { "holds" } else { "VIOLATED" },
        )
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

/// Nearest-rank percentile of sorted samples.
pub fn percentile(sorted: &[u64], p: f64) -> u64 {
    if sorted.is_empty() {
        return 0;
    }
    let rank = ((p / 100.0) * sorted.len() as f64).ceil() as usize;
    sorted[rank.clamp(1, sorted.len()) - 1]
}

/// Drains every output queue on its own thread, recording latency and
/// optionally writing each port's egress to `port<N>.pcap`.
pub struct Sink {
    stop: Arc<AtomicBool>,
    thread: thread::JoinHandle<std::io::Result<Vec<u64>>>,
}

impl Sink {
    pub fn start(sw: Arc<Switch>, capture: Option<PathBuf>) -> std::io::Result<Sink> {
        let mut writers = Vec::new();
        if let Some(dir) = &capture {
            std::fs::create_dir_all(dir)?;
            for p in 0..sw.port_count() {
                let f = File::create(dir.join(format!("port{p}.pcap")))?;
                writers.push(PcapWriter::new(BufWriter::new(f))?);
            }
        }
        let stop = Arc::new(AtomicBool::new(false));
        let flag = stop.clone();
        let thread = thread::Builder::new()
            .name("sink".into())
            .spawn(move || drain(&sw, &flag, writers))
            .expect("spawn sink");
        Ok(Sink { stop, thread })
    }

    /// Stops after the output queues are empty; returns sorted latencies.
    pub fn finish(self) -> std::io::Result<Vec<u64>> {
        self.stop.store(true, Ordering::Release);
        let mut lat = self.thread.join().expect("sink panicked")?;
        lat.sort_unstable();
        Ok(lat)
    }
}

fn drain(
    sw: &Switch,
    stop: &AtomicBool,
    mut writers: Vec<PcapWriter<BufWriter<File>>>,
) -> std::io::Result<Vec<u64>> {
    let mut latencies = Vec::new();
    loop {
        let finishing = stop.load(Ordering::Acquire);
        let mut got = 0;
        for p in 0..sw.port_count() {
            for e in sw.drain_output(p) {
                got += 1;
                latencies.push(e.latency_ns());
                if let Some(w) = writers.get_mut(p as usize) {
                    w.write(e.egress_at, &e.data)?;
                }
            }
        }
        if got == 0 {
            if finishing {
                break;
            }
            thread::sleep(Duration::from_micros(50));
        }
    }
    for w in writers {
        w.into_inner().flush()?;
    }
    Ok(latencies)
}

/// Waits until nothing is queued or being processed.
pub fn wait_idle(sw: &Switch, limit: Duration) -> Result<(), BenchError> {
    let start = Instant::now();
    while sw.conservation().in_flight != 0 {
        if start.elapsed() > limit {
            return Err(BenchError::Stuck(limit));
        }
        thread::sleep(Duration::from_micros(200));
    }
    Ok(())
}

pub fn install_flows(sw: &Switch, spec: &TrafficSpec) -> Result<(), BenchError> {
    for (i, f) in spec.flows.iter().enumerate() {
        let fm = FlowMod::add(
            0,
            100,
            f.template.exact_match(f.ingress_port),
            vec![Instruction::WriteActions(vec![Action::output(
                f.egress(sw.port_count()),
            )])],
        );
        sw.flow_mod(&fm, sw.now())
            .map_err(|e| BenchError::Flow(i, e))?;
    }
    Ok(())
}

/// Forwards everything arriving on `in_port` to `out_port`.
pub fn install_forward(
    sw: &Switch,
    in_port: u32,
    out_port: u32,
) -> Result<(), sdn_fabric::error::OfpError> {
    let fm = FlowMod::add(
        0,
        1,
        Match::any().with(Oxm::exact(OxmField::InPort, u64::from(in_port))),
        vec![Instruction::WriteActions(vec![Action::output(out_port)])],
    );
    sw.flow_mod(&fm, sw.now()).map(|_| ())
}

/// Runs `spec` through a fresh switch built from `config`.
pub fn run_benchmark(
    spec: &TrafficSpec,
    config: Config,
    opts: &BenchOptions,
) -> Result<Report, BenchError> {
    spec.validate(config.ports)?;
    let sw = Arc::new(Switch::new(config)?);
    if opts.install_flows {
        install_flows(&sw, spec)?;
    }
    run_on(sw, spec, opts)
}

/// Runs `spec` through `sw`, which must not be running yet.
pub fn run_on(
    sw: Arc<Switch>,
    spec: &TrafficSpec,
    opts: &BenchOptions,
) -> Result<Report, BenchError> {
    run_frames(sw, spec.frames(), spec.rate, opts)
}

/// Sends `frames` through `sw` at `rate`, waits for the switch to go idle
/// and reports. `sw` must not be running yet.
pub fn run_frames<I>(
    sw: Arc<Switch>,
    frames: I,
    rate: Option<f64>,
    opts: &BenchOptions,
) -> Result<Report, BenchError>
where
    I: IntoIterator<Item = (u32, Vec<u8>)>,
    I::IntoIter: Send + 'static,
{
    let handle = SwitchHandle::start(sw.clone());
    let sink = Sink::start(sw.clone(), opts.capture_dir.clone())?;

    let start = Instant::now();
    let frames = frames.into_iter();
    let generator = {
        let sw = sw.clone();
        thread::Builder::new()
            .name("generator".into())
            .spawn(move || {
                let mut pacer = Pacer::new(rate);
                let mut sent = 0u64;
                for (port, frame) in frames {
                    pacer.wait();
                    if sw.ingress(port, frame).is_ok() {
                        sent += 1;
                    }
                }
                sent
            })
            .expect("spawn generator")
    };
    let offered = generator.join().expect("generator panicked");

    let idle = wait_idle(&sw, opts.idle_timeout.unwrap_or(Duration::from_secs(120)));
    let elapsed = start.elapsed().as_secs_f64();
    handle.shutdown();
    let latencies = sink.finish()?;
    idle?;
    Ok(Report::collect(&sw, offered, elapsed, &latencies))
}

impl Report {
    /// Snapshot of `sw`'s counters; `latencies` must be sorted.
    pub fn collect(sw: &Switch, offered: u64, elapsed: f64, latencies: &[u64]) -> Report {
        let c = sw.conservation();
        let tx_bytes: u64 = (0..sw.port_count())
            .filter_map(|p| sw.port_counters(p))
            .map(|p| p.tx_bytes)
            .sum();
        let rate = |n: f64| if elapsed > 0.0 { n / elapsed } else { 0.0 };
        Report {
            offered,
            rx_packets: c.rx_packets,
            tx_packets: c.tx_packets,
            tx_bytes,
            rx_dropped: c.rx_dropped,
            tx_dropped: c.tx_dropped,
            pipeline_dropped: c.pipeline_dropped,
            to_controller: c.to_controller,
            buffered: c.buffered_live,
            drops: c.rx_dropped + c.tx_dropped + c.pipeline_dropped,
            elapsed_s: elapsed,
            pps: rate(c.tx_packets as f64),
            gbps: rate(tx_bytes as f64 * 8.0) / 1e9,
            latency_p50_ns: percentile(latencies, 50.0),
            latency_p99_ns: percentile(latencies, 99.0),
            latency_max_ns: latencies.last().copied().unwrap_or(0),
            conservation: c,
            conservation_holds: c.holds(),
        }
    }
}
