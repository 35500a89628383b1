//! Spectral fitting workbench for simulated MR spectroscopy data.

pub mod axis;
pub mod basis;
pub mod error;
pub mod fingerprint;
pub mod harness;
pub mod metrics;
pub mod nnet;
pub mod par;
pub mod signal;
pub mod simulator;
pub mod spectrum;
pub mod strategies;

pub use error::{Error, Result};
