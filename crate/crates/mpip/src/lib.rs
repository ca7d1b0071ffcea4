//! File formats, the trial runner and the command-line surface for
//! model-predictive interaction primitives.
//!
//! The numerical core lives in [`mpip_core`]; this crate adds everything
//! that needs `std`: files, wall-clock timing and the `mpip` binary.

#![warn(missing_docs)]

pub mod commands;
pub mod config;
mod error;
pub mod io;
pub mod runner;

use std::time::Instant;

use mpip_core::mpc::Clock;

pub use error::CliError;

/// Monotonic clock measuring from its construction.
#[derive(Debug, Clone, Copy)]
pub struct StdClock {
    origin: Instant,
}

impl StdClock {
    /// A clock reading zero now.
    pub fn new() -> Self {
        Self { origin: Instant::now() }
    }
}

impl Default for StdClock {
    fn default() -> Self {
        Self::new()
    }
}

impl Clock for StdClock {
    fn now_ns(&self) -> u64 {
        self.origin.elapsed().as_nanos() as u64
    }
}
