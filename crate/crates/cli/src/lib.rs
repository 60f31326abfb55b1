//! Config-driven experiment runner around the `myula` library.

pub mod config;
pub mod error;
pub mod problem;
pub mod run;
pub mod writer;

pub use config::LoadedConfig;
pub use error::{CliError, CliResult};
pub use run::{run, RunSummary, Subcommand};
