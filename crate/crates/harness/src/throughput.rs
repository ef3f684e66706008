//! Theoretical throughput of a datapath that moves one data word per clock.

use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum ModelError {
    #[error("{name} must be positive, got {value}")]
    NonPositive { name: &'static str, value: f64 },
}

/// Gbps for a datapath `data_width_bits` wide clocked at `clock_mhz`.
pub fn theoretical_throughput(data_width_bits: f64, clock_mhz: f64) -> Result<f64, ModelError> {
    for (name, value) in [("data width", data_width_bits), ("clock", clock_mhz)] {
        if value.is_nan() || value <= 0.0 {
            return Err(ModelError::NonPositive { name, value });
        }
    }
    Ok(data_width_bits * clock_mhz * 1e-3)
}

/// Widths evaluated by the `throughput-model` command when none are given.
pub const DEFAULT_WIDTHS: [u32; 4] = [512, 1024, 2048, 4096];
pub const DEFAULT_CLOCK_MHZ: f64 = 160.0;
