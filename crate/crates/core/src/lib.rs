//! Model-predictive interaction primitives.
//!
//! Multi-channel demonstrations are compressed into basis-function weights,
//! a sample ensemble of those weights is filtered against live partial
//! observations, and the learned joint distribution between control and
//! unobserved channels is used to plan control trajectories in the phase
//! domain.
//!
//! The crate is `no_std` and only needs an allocator. File formats, wall-clock
//! timing and the command line live in the `mpip` companion crate.

#![no_std]
#![warn(missing_docs)]
// negated float comparisons are used on purpose: they also reject NaN
#![allow(clippy::neg_cmp_op_on_partial_ord)]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod basis;
mod error;
pub mod filter;
pub mod metrics;
pub mod model;
pub mod mpc;
pub mod stats;
pub mod solver;
pub mod synth;

pub use error::{Error, Result};

pub use nalgebra;
pub use rand_chacha::ChaCha8Rng;

/// Seeded generator used for every stochastic step in the crate.
pub fn seeded_rng(seed: u64) -> ChaCha8Rng {
    use rand::SeedableRng;
    ChaCha8Rng::seed_from_u64(seed)
}
