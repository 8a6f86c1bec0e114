//! Command-line driver: config loading, the `run`, `report`, `ablate` and
//! `synth-sweep` commands, and exit-code mapping.

pub mod commands;
pub mod config;
pub mod error;

pub use config::HarnessConfig;
pub use error::CliError;
