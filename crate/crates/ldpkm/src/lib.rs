//! Simulator around `ldpkm-core`: experiment configs, synthetic data, the
//! experiment driver with a non-private baseline, JSON round artifacts,
//! calibration probes and invariant verification.

pub mod artifacts;
pub mod calibrate;
pub mod cli;
pub mod config;
pub mod data;
pub mod experiment;
#[cfg(feature = "theory")]
pub mod theory;
pub mod verify;

/// Whether the exact-data oracles are compiled in.
pub const THEORY_ENABLED: bool = cfg!(feature = "theory");

pub use config::{Algorithm, ExperimentConfig};
pub use experiment::{run_experiment, run_once, sweep, RunRow};
