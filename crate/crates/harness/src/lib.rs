//! Test and measurement tooling around the `sdn-fabric` switch: traffic
//! generation, pcap I/O, a scripted controller, reference oracles and a
//! benchmark runner.

pub mod bench;
pub mod corpus;
pub mod mock;
pub mod oracle;
pub mod pcap;
pub mod replay;
pub mod settings;
pub mod throughput;
pub mod traffic;
