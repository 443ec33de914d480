//! Experiment runner for effective-dimension and training studies of
//! Fourier regression models.

pub mod config;
pub mod output;
pub mod runner;

pub use config::{load, Family, Preset, RunConfig};
pub use runner::{execute, run, Outcome, RunSummary};
