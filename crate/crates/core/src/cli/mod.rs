//! Batch front end: configuration parsing and command execution.

pub mod config;
pub mod run;

pub use config::{parse_config, Command, ConfigError, Formats, RunConfig};
pub use run::{run, RunError, RunReport};
