use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::thread;
use std::time::{Duration, Instant};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use fabric_harness::bench::{self, BenchOptions, Report, Sink};
use fabric_harness::replay::{pcap_replay, PortInput};
use fabric_harness::settings::{self, Overrides};
use fabric_harness::throughput::{theoretical_throughput, DEFAULT_CLOCK_MHZ, DEFAULT_WIDTHS};
use fabric_harness::traffic::{Pacer, TrafficSpec};
use log::{info, warn};
use sdn_fabric::ofp::{decode_one, frame_len};
use sdn_fabric::switch::{Config, Switch, SwitchHandle};

#[derive(Parser)]
#[command(
    name = "fabric",
    version,
    about = "Software OpenFlow 1.3 switch: simulation, benchmarks and tools"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the switch against a controller, optionally feeding pcap traffic.
    Run(RunArgs),
    /// Generate traffic through the switch and report rate, drops and latency.
    Bench(BenchArgs),
    /// Replay pcap captures through the switch.
    Replay(ReplayArgs),
    /// Print data width x clock throughput figures.
    ThroughputModel(ModelArgs),
    /// Decode and hex-dump OpenFlow messages.
    Decode(DecodeArgs),
}

/// Switch settings. Keys in `--config` take precedence over these flags.
#[derive(Args, Clone, Debug, Default)]
struct SwitchArgs {
    /// TOML config file.
    #[arg(long, short)]
    config: Option<PathBuf>,
    #[arg(long)]
    ports: Option<u32>,
    #[arg(long)]
    workers: Option<u32>,
    /// Input queue capacity per port, in frames.
    #[arg(long)]
    input_queue: Option<u32>,
    /// Output queue capacity per port, in frames.
    #[arg(long)]
    output_queue: Option<u32>,
    #[arg(long)]
    tables: Option<u8>,
    /// `controller` or `drop`.
    #[arg(long)]
    miss_policy: Option<String>,
    /// `longest-queue` or `round-robin`.
    #[arg(long)]
    arbiter: Option<String>,
    /// Controller address, HOST[:PORT]; the port defaults to 6633.
    #[arg(long)]
    controller: Option<String>,
}

impl SwitchArgs {
    fn load(&self) -> Result<Config> {
        let mut o = Overrides::default();
        o.set_opt("ports", self.ports.map(i64::from))
            .set_opt("workers", self.workers.map(i64::from))
            .set_opt("input_queue", self.input_queue.map(i64::from))
            .set_opt("output_queue", self.output_queue.map(i64::from))
            .set_opt("tables", self.tables.map(i64::from))
            .set_opt("miss_policy", self.miss_policy.clone())
            .set_opt("arbiter", self.arbiter.clone())
            .set_opt("controller", self.controller.clone());
        Ok(settings::load(&o, self.config.as_deref())?)
    }
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    switch: SwitchArgs,
    /// Traffic source, PORT=FILE.pcap; repeatable.
    #[arg(long = "input", value_name = "PORT=PCAP")]
    inputs: Vec<PortInput>,
    /// Send rate for pcap input in packets per second.
    #[arg(long)]
    rate: Option<f64>,
    /// Stop after this many seconds; runs until killed otherwise.
    #[arg(long)]
    duration: Option<f64>,
    /// Write egress to DIR/port<N>.pcap.
    #[arg(long, value_name = "DIR")]
    out_dir: Option<PathBuf>,
}

#[derive(Args)]
struct BenchArgs {
    #[command(flatten)]
    switch: SwitchArgs,
    /// Traffic spec as JSON; replaces the single-flow flags below.
    #[arg(long)]
    spec: Option<PathBuf>,
    #[arg(long, default_value_t = 1_000_000)]
    packets: u64,
    #[arg(long, default_value_t = 64)]
    frame_size: usize,
    /// Packets per second; unlimited when absent.
    #[arg(long)]
    rate: Option<f64>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Skip installing one exact-match flow per traffic flow.
    #[arg(long)]
    no_flows: bool,
    /// Write the JSON report here.
    #[arg(long, value_name = "FILE")]
    json: Option<PathBuf>,
    /// Write egress to DIR/port<N>.pcap.
    #[arg(long, value_name = "DIR")]
    capture_dir: Option<PathBuf>,
}

#[derive(Args)]
struct ReplayArgs {
    #[command(flatten)]
    switch: SwitchArgs,
    /// Traffic source, PORT=FILE.pcap; repeatable.
    #[arg(long = "input", value_name = "PORT=PCAP", required = true)]
    inputs: Vec<PortInput>,
    /// Install a catch-all flow from IN to OUT; repeatable.
    #[arg(long, value_name = "IN:OUT", value_parser = parse_forward)]
    forward: Vec<(u32, u32)>,
    /// Packets per second; unlimited when absent.
    #[arg(long)]
    rate: Option<f64>,
    /// Write egress to DIR/port<N>.pcap.
    #[arg(long, value_name = "DIR")]
    out_dir: Option<PathBuf>,
    /// Write the JSON report here.
    #[arg(long, value_name = "FILE")]
    json: Option<PathBuf>,
}

#[derive(Args)]
struct ModelArgs {
    /// Data widths in bits.
    #[arg(long, value_delimiter = ',', default_values_t = DEFAULT_WIDTHS)]
    widths: Vec<u32>,
    #[arg(long, default_value_t = DEFAULT_CLOCK_MHZ)]
    clock_mhz: f64,
}

#[derive(Args)]
struct DecodeArgs {
    /// Message bytes in hex; whitespace and colons are ignored.
    hex: Option<String>,
    /// Read bytes from a file instead (raw, or hex text).
    #[arg(long, conflicts_with = "hex")]
    file: Option<PathBuf>,
}

fn parse_forward(s: &str) -> Result<(u32, u32), String> {
    let (a, b) = s
        .split_once(':')
        .ok_or_else(|| format!("expected IN:OUT, got {s:?}"))?;
    let p = |x: &str| x.trim().parse::<u32>().map_err(|e| format!("{x:?}: {e}"));
    Ok((p(a)?, p(b)?))
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match Cli::parse().command {
        Command::Run(a) => run(a),
        Command::Bench(a) => bench_cmd(a),
        Command::Replay(a) => replay(a),
        Command::ThroughputModel(a) => model(a),
        Command::Decode(a) => decode_cmd(a),
    }
}

fn emit(report: &Report, json: Option<&Path>) -> Result<()> {
    print!("{}", report.to_text());
    if let Some(path) = json {
        std::fs::write(path, report.to_json())
            .with_context(|| format!("writing {}", path.display()))?;
    }
    if !report.conservation_holds {
        bail!("conservation identity violated");
    }
    Ok(())
}

fn load_inputs(inputs: &[PortInput]) -> Vec<(u32, Vec<u8>)> {
    let r = pcap_replay(inputs);
    for (path, e) in &r.errors {
        warn!("{}: {e}", path.display());
    }
    info!(
        "loaded {} frames from {} capture(s)",
        r.frames.len(),
        inputs.len()
    );
    r.frames
}

fn run(a: RunArgs) -> Result<()> {
    let config = a.switch.load()?;
    let frames = load_inputs(&a.inputs);
    let sw = Arc::new(Switch::new(config)?);
    let handle = SwitchHandle::start(sw.clone());
    let sink = Sink::start(sw.clone(), a.out_dir.clone())?;
    let start = Instant::now();
    let deadline = a.duration.map(|s| start + Duration::from_secs_f64(s));
    let feeder = {
        let sw = sw.clone();
        let rate = a.rate;
        thread::spawn(move || {
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
    };
    let mut last_log = Instant::now();
    let mut last_status = None;
    while deadline.is_none_or(|d| Instant::now() < d) {
        thread::sleep(Duration::from_millis(50));
        let status = handle.controller_status();
        if last_status != Some(status) {
            info!("controller: {status:?}");
            last_status = Some(status);
        }
        if last_log.elapsed() >= Duration::from_secs(5) {
            let c = sw.conservation();
            info!(
                "rx {} tx {} to_controller {} drops {}",
                c.rx_packets,
                c.tx_packets,
                c.to_controller,
                c.rx_dropped + c.tx_dropped + c.pipeline_dropped
            );
            last_log = Instant::now();
        }
    }
    let offered = feeder.join().expect("feeder panicked");
    let elapsed = start.elapsed().as_secs_f64();
    handle.shutdown();
    let lat = sink.finish()?;
    emit(&Report::collect(&sw, offered, elapsed, &lat), None)
}

fn bench_cmd(a: BenchArgs) -> Result<()> {
    let config = a.switch.load()?;
    let spec = match &a.spec {
        Some(p) => {
            let text =
                std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            serde_json::from_str(&text).with_context(|| format!("parsing {}", p.display()))?
        }
        None => TrafficSpec {
            rate: a.rate,
            seed: a.seed,
            ..TrafficSpec::single_flow(a.packets, a.frame_size)
        },
    };
    let opts = BenchOptions {
        install_flows: !a.no_flows,
        capture_dir: a.capture_dir,
        idle_timeout: None,
    };
    info!(
        "sending {} packets in {} flow(s)",
        spec.total_packets(),
        spec.flows.len()
    );
    let report = bench::run_benchmark(&spec, config, &opts)?;
    emit(&report, a.json.as_deref())
}

fn replay(a: ReplayArgs) -> Result<()> {
    let config = a.switch.load()?;
    let frames = load_inputs(&a.inputs);
    let sw = Arc::new(Switch::new(config)?);
    for &(i, o) in &a.forward {
        bench::install_forward(&sw, i, o).map_err(|e| anyhow::anyhow!("forward {i}:{o}: {e}"))?;
    }
    let opts = BenchOptions {
        install_flows: false,
        capture_dir: a.out_dir,
        idle_timeout: None,
    };
    let report = bench::run_frames(sw, frames, a.rate, &opts)?;
    emit(&report, a.json.as_deref())
}

fn model(a: ModelArgs) -> Result<()> {
    println!("{:>10} {:>10} {:>12}", "width_bits", "clock_mhz", "gbps");
    for w in a.widths {
        let g = theoretical_throughput(f64::from(w), a.clock_mhz)?;
        println!("{w:>10} {:>10} {g:>12.2}", a.clock_mhz);
    }
    Ok(())
}

fn parse_hex(text: &str) -> Result<Vec<u8>> {
    let digits: String = text
        .trim()
        .trim_start_matches("0x")
        .chars()
        .filter(|c| !c.is_whitespace() && *c != ':')
        .collect();
    hex::decode(&digits).context("invalid hex")
}

fn hexdump(bytes: &[u8]) -> String {
    let mut s = String::new();
    for (i, line) in bytes.chunks(16).enumerate() {
        let _ = write!(s, "  {:04x}  ", i * 16);
        for b in line {
            let _ = write!(s, "{b:02x} ");
        }
        s.push('\n');
    }
    s
}

fn decode_cmd(a: DecodeArgs) -> Result<()> {
    let bytes = match (&a.hex, &a.file) {
        (Some(h), _) => parse_hex(h)?,
        (None, Some(p)) => {
            let raw = std::fs::read(p).with_context(|| format!("reading {}", p.display()))?;
            match std::str::from_utf8(&raw).ok().map(parse_hex) {
                Some(Ok(b)) => b,
                _ => raw,
            }
        }
        (None, None) => bail!("give hex bytes or --file"),
    };
    let mut off = 0;
    while off < bytes.len() {
        let rest = &bytes[off..];
        let n = match frame_len(rest) {
            Ok(Some(n)) if n <= rest.len() => n,
            Ok(_) => bail!(
                "offset {off}: incomplete message ({} bytes left)",
                rest.len()
            ),
            Err(e) => bail!("offset {off}: {e}"),
        };
        println!("offset {off}, {n} bytes:");
        print!("{}", hexdump(&rest[..n]));
        match decode_one(&rest[..n]) {
            Ok((m, _)) => println!("{} xid={}\n{:#?}", m.body.name(), m.xid, m.body),
            Err(e) => println!("undecodable: {e}"),
        }
        off += n;
    }
    Ok(())
}
