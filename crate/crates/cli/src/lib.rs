//! Experiment harness for the `ubot` command: configuration, runners and
//! hand-rolled SVG output.

pub mod config;
pub mod experiments;
pub mod svg;

pub use config::{CliError, CliResult, Experiment, ExperimentConfig};
pub use experiments::run;
