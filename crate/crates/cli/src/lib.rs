//! File formats and experiment dispatch for the `qnd` command.

pub mod config;
pub mod output;
pub mod run;

pub use config::{parse_config, ConfigError, Experiment, RunConfig};
pub use output::RunManifest;
pub use run::{dispatch, RunError};
