//! Wideband STAR-RIS beamforming for THz OFDM systems.
//!
//! The crate builds frequency-selective BS-to-RIS and RIS-to-user channels,
//! measures beam split for phase-only, fully-connected and sub-connected
//! STAR-RIS hardware, designs the BS time-delay frontend and runs the
//! alternating fractional-programming sum-rate optimizer.

pub mod beam_gain;
pub mod bs_frontend;
pub mod channel;
pub mod error;
pub mod experiment;
pub mod fp_optimizer;
pub mod scenario;
pub mod solvers;
pub mod star_ris;
pub mod system;

pub use error::{Error, Result};
pub use num_complex::Complex64 as C64;

/// Speed of light in vacuum (m/s).
pub const SPEED_OF_LIGHT: f64 = 2.99792458e8;
