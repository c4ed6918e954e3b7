//! Desk-scale simulator for probabilistically shaped high-order QAM over a
//! coherent optical link.
//!
//! The crate is organised along the signal path:
//!
//! * [`constellation`] builds square QAM alphabets with sign/amplitude labels
//!   and imposes Maxwell-Boltzmann distributions at a target entropy.
//! * [`shaping`] holds the constant-composition distribution matcher, the
//!   amplitude-shaping frame layout and the rate arithmetic.
//! * [`txdsp`] turns symbols into a band-limited, DAC-impaired waveform.
//! * [`channel`] applies dispersion, noise loading, laser phase noise and I/Q
//!   impairments, and evaluates the Gaussian-noise link budget.
//! * [`rxdsp`] recovers symbols and produces soft information, including the
//!   partial-response BCJR detector.
//! * [`metrics`] converts soft outputs into information rates and bitrates.
//! * [`scenario`] chains everything into reproducible sweeps.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod channel;
pub mod constellation;
mod error;
pub mod fft;
pub mod metrics;
pub mod rxdsp;
pub mod scenario;
pub mod shaping;
pub mod signal;
pub mod svg;
pub mod txdsp;

pub use error::{Error, Result};
pub use num_complex::Complex64;

/// Converts decibels to a linear power ratio.
pub fn db_to_lin(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

/// Converts a linear power ratio to decibels.
pub fn lin_to_db(lin: f64) -> f64 {
    10.0 * lin.log10()
}

/// Seeded generator used by every stochastic stage.
pub type SimRng = rand_chacha::ChaCha20Rng;

/// Builds a [`SimRng`] from a 64-bit seed.
pub fn rng_from_seed(seed: u64) -> SimRng {
    use rand::SeedableRng;
    SimRng::seed_from_u64(seed)
}
