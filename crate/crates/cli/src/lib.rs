//! Command-line front end: configuration, scenario dispatch and output files.

pub mod config;
pub mod error;
pub mod exec;
pub mod output;
pub mod runner;

pub use config::{parse_config, Cli, RunConfig, Scenario};
pub use error::{CliError, CliResult};
pub use exec::execute;
pub use runner::{run, RunManifest};
