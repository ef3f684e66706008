//! Pcap replay and benchmark runs through a live switch.

use std::fs::File;
use std::sync::Arc;
use std::time::Instant;

use fabric_harness::bench::{install_forward, run_benchmark, run_frames, BenchOptions};
use fabric_harness::pcap::{PcapReader, PcapWriter};
use fabric_harness::replay::{pcap_replay, PortInput};
use fabric_harness::traffic::{FlowSpec, HeaderTemplate, TrafficSpec, Transport};
use sdn_fabric::switch::{Config, Switch};

fn read_all(path: &std::path::Path) -> Vec<Vec<u8>> {
    PcapReader::new(File::open(path).unwrap())
        .unwrap()
        .map(|r| r.unwrap().data)
        .collect()
}

#[test]
fn replayed_capture_egresses_unchanged() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("in.pcap");
    let frames: Vec<_> = TrafficSpec::single_flow(50, 128)
        .frames()
        .map(|(_, f)| f)
        .collect();
    let mut varied = frames.clone();
    for (i, f) in varied.iter_mut().enumerate() {
        f[6] = i as u8;
    }
    let mut w = PcapWriter::new(File::create(&input).unwrap()).unwrap();
    for (i, f) in varied.iter().enumerate() {
        w.write(i as u64 * 1000, f).unwrap();
    }
    drop(w);

    let replay = pcap_replay(&[PortInput {
        port: 2,
        path: input.clone(),
    }]);
    assert!(replay.errors.is_empty());
    let sw = Arc::new(Switch::new(Config::default()).unwrap());
    install_forward(&sw, 2, 6).unwrap();
    let out = dir.path().join("out");
    let opts = BenchOptions {
        capture_dir: Some(out.clone()),
        ..BenchOptions::default()
    };
    let r = run_frames(sw, replay.frames, None, &opts).unwrap();
    assert_eq!((r.offered, r.tx_packets, r.drops), (50, 50, 0));
    assert!(r.conservation_holds);
    assert_eq!(read_all(&out.join("port6.pcap")), varied);
    assert!(read_all(&out.join("port0.pcap")).is_empty());
}

#[test]
fn truncated_capture_delivers_prefix() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("cut.pcap");
    let mut w = PcapWriter::new(File::create(&input).unwrap()).unwrap();
    for (_, f) in TrafficSpec::single_flow(5, 64).frames() {
        w.write(0, &f).unwrap();
    }
    drop(w);
    let mut bytes = std::fs::read(&input).unwrap();
    bytes.truncate(bytes.len() - 10);
    std::fs::write(&input, bytes).unwrap();

    let replay = pcap_replay(&[PortInput {
        port: 0,
        path: input,
    }]);
    assert_eq!(replay.frames.len(), 4);
    let msg = replay.errors[0].1.to_string();
    // 24-byte file header, then four 16 + 64 byte records.
    assert!(msg.starts_with(&format!("offset {}", 24 + 4 * 80)), "{msg}");
    let sw = Arc::new(Switch::new(Config::default()).unwrap());
    install_forward(&sw, 0, 1).unwrap();
    let r = run_frames(sw, replay.frames, None, &BenchOptions::default()).unwrap();
    assert_eq!(r.tx_packets, 4);
}

fn mixed_spec(seed: u64) -> TrafficSpec {
    let flow = |port: u32, transport, packets, frame_size| FlowSpec {
        template: HeaderTemplate {
            transport,
            src_port: 2000 + port as u16,
            vlan: (port % 2 == 1).then_some(10 + port as u16),
            ..HeaderTemplate::default()
        },
        packets,
        frame_size,
        ingress_port: port,
        egress_port: None,
    };
    TrafficSpec {
        flows: vec![
            flow(0, Transport::Udp, 3000, 64),
            flow(1, Transport::Tcp, 2000, 512),
            flow(2, Transport::Udp, 1000, 1500),
            flow(3, Transport::Tcp, 500, 9000),
        ],
        seed,
        rate: None,
    }
}

#[test]
fn deterministic_counter_totals() {
    let config = Config {
        workers: 4,
        input_queue: 8192,
        output_queue: 8192,
        ..Config::default()
    };
    let run = || {
        let r = run_benchmark(&mixed_spec(7), config.clone(), &BenchOptions::with_flows()).unwrap();
        (
            r.rx_packets,
            r.tx_packets,
            r.tx_bytes,
            r.drops,
            r.to_controller,
        )
    };
    let a = run();
    assert_eq!(a, run());
    assert_eq!(a.0, 6500);
    assert_eq!(a.1, 6500);
    assert_eq!(a.3, 0);
}

#[test]
fn unmatched_traffic_is_accounted() {
    let config = Config {
        input_queue: 10_000,
        output_queue: 10_000,
        ..Config::default()
    };
    let r = run_benchmark(&mixed_spec(1), config, &BenchOptions::default()).unwrap();
    assert_eq!(r.tx_packets, 0);
    assert_eq!(r.to_controller + r.buffered + r.pipeline_dropped, 6500);
    assert!(r.conservation_holds, "{}", r.to_text());
}

#[test]
fn empty_spec_gives_zero_report() {
    let r = run_benchmark(
        &TrafficSpec::default(),
        Config::default(),
        &BenchOptions::with_flows(),
    )
    .unwrap();
    assert_eq!(
        (r.offered, r.rx_packets, r.tx_packets, r.drops),
        (0, 0, 0, 0)
    );
    assert_eq!(r.latency_p99_ns, 0);
    assert!(r.conservation_holds);
    let json: serde_json::Value = serde_json::from_str(&r.to_json()).unwrap();
    assert_eq!(json["tx_packets"], 0);
}

#[test]
fn invalid_spec_is_rejected() {
    let spec = TrafficSpec::single_flow(10, 10_000);
    assert!(run_benchmark(&spec, Config::default(), &BenchOptions::default()).is_err());
}

#[test]
fn rate_limited_run_holds_rate() {
    // 1000 pps for 10 s.
    let mut spec = TrafficSpec::single_flow(10_000, 64);
    spec.rate = Some(1000.0);
    let start = Instant::now();
    let r = run_benchmark(&spec, Config::default(), &BenchOptions::with_flows()).unwrap();
    let secs = start.elapsed().as_secs_f64();
    assert_eq!(r.tx_packets, 10_000);
    assert_eq!(r.drops, 0);
    let forwarded_in_10s = r.tx_packets as f64 * 10.0 / secs;
    assert!(
        (forwarded_in_10s - 10_000.0).abs() <= 100.0,
        "{} packets in {secs:.3} s",
        r.tx_packets
    );
}
