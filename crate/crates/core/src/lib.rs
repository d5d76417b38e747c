//! Safeguarded acoustic test signals and impulse response measurement by
//! DFT deconvolution.
//!
//! The pipeline has three stages: [`safeguard`] turns any sound into a
//! stimulus whose spectrum never drops below a per-bin floor, [`channel`]
//! and [`estimator`] simulate and measure an LTI system with it, and
//! [`report`] turns the session into logs, tables and plot data.

pub mod audio;
pub mod channel;
pub mod cli;
mod digest;
pub mod error;
pub mod estimator;
pub mod io;
pub mod report;
pub mod safeguard;
pub mod spectral;

pub use error::{Error, Result};
pub use spectral::{Signal, Spectrum};

pub use digest::{file_sha256, sha256_hex};
