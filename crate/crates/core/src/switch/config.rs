use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::pipeline::MissPolicy;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("reading {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("parsing config: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("invalid config: {0}")]
    Invalid(String),
}

/// How the input arbiter picks the next port.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ArbiterPolicy {
    /// Fullest input queue first, ties broken round-robin.
    #[default]
    LongestQueue,
    RoundRobin,
}

/// Switch configuration, loadable from TOML. Every key is optional.
///
/// ```toml
/// datapath_id = 1
/// ports = 8
/// input_queue = 1024
/// output_queue = 1024
/// tables = 4
/// table_capacity = 1024
/// buffer_slots = 256
/// buffer_ttl_ms = 10000
/// miss_send_len = 128
/// miss_policy = "controller"   # or "drop"
/// arbiter = "longest-queue"    # or "round-robin"
/// controller = "127.0.0.1:6633"
/// workers = 1
/// echo_interval_ms = 5000
/// echo_max_missed = 3
/// packet_in_queue = 4096
/// ```
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub datapath_id: u64,
    pub ports: u32,
    pub input_queue: usize,
    pub output_queue: usize,
    pub tables: u8,
    pub table_capacity: usize,
    pub buffer_slots: usize,
    pub buffer_ttl_ms: u64,
    pub miss_send_len: u16,
    pub miss_policy: MissPolicy,
    pub arbiter: ArbiterPolicy,
    pub controller: Option<String>,
    pub workers: usize,
    pub echo_interval_ms: u64,
    pub echo_max_missed: u32,
    pub packet_in_queue: usize,
}

pub const DEFAULT_CONTROLLER_PORT: u16 = 6633;

impl Default for Config {
    fn default() -> Self {
        Config {
            datapath_id: 1,
            ports: 8,
            input_queue: 1024,
            output_queue: 1024,
            tables: 4,
            table_capacity: 1024,
            buffer_slots: 256,
            buffer_ttl_ms: 10_000,
            miss_send_len: 128,
            miss_policy: MissPolicy::Controller,
            arbiter: ArbiterPolicy::LongestQueue,
            controller: None,
            workers: 1,
            echo_interval_ms: 5_000,
            echo_max_missed: 3,
            packet_in_queue: 4096,
        }
    }
}

impl Config {
    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        let c: Config = toml::from_str(text)?;
        c.validate()?;
        Ok(c)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Config::from_toml(&text)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = |m: &str| Err(ConfigError::Invalid(m.to_string()));
        if self.ports == 0 || self.ports >= crate::action::port::MAX {
            return bad("ports must be between 1 and 0xffffff00");
        }
        if self.input_queue == 0 || self.output_queue == 0 {
            return bad("queue capacities must be positive");
        }
        if self.tables == 0 || self.tables == crate::pipeline::ALL_TABLES {
            return bad("tables must be between 1 and 254");
        }
        if self.table_capacity == 0 {
            return bad("table_capacity must be positive");
        }
        if self.workers == 0 || self.workers > self.ports as usize {
            return bad("workers must be between 1 and the port count");
        }
        if self.echo_interval_ms == 0 {
            return bad("echo_interval_ms must be positive");
        }
        if self.packet_in_queue == 0 {
            return bad("packet_in_queue must be positive");
        }
        Ok(())
    }

    /// Controller address with the default port filled in.
    pub fn controller_addr(&self) -> Option<String> {
        self.controller.as_ref().map(|c| {
            if c.contains(':') {
                c.clone()
            } else {
                format!("{c}:{DEFAULT_CONTROLLER_PORT}")
            }
        })
    }
}
