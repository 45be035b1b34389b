//! Runtime failure prediction for learned lane-keeping controllers.
//!
//! The crate is `no_std` (with `alloc`) and holds every numerical piece of
//! the pipeline:
//!
//! - [`nnet`]: feed-forward regressors with dropout, trained by Adam on MSE.
//! - [`uq`]: MC-Dropout, deep-ensemble and autoencoder uncertainty scores.
//! - [`monitor`]: windowed-max scoring, Gamma calibration and online alarms.
//! - [`sim`]: a kinematic-bicycle lane-keeping world with perturbations and
//!   model mutations.
//! - [`eval`]: detection windows, confusion counts, F-beta, AUC-ROC and
//!   two-sample statistics.
//!
//! IO, file formats, latency measurement and the CLI live in the `uqmon`
//! companion crate.
#![no_std]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod error;
pub mod eval;
pub mod monitor;
pub mod nnet;
pub mod sim;
pub mod special;
pub mod uq;

pub use error::{Error, Result};

/// Deterministic random stream used throughout the workbench.
pub type SimRng = rand_chacha::ChaCha8Rng;

/// Builds a [`SimRng`] from a 64-bit seed.
pub fn rng_from_seed(seed: u64) -> SimRng {
    use rand::SeedableRng;
    SimRng::seed_from_u64(seed)
}
