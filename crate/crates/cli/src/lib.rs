//! Reproducible simulate / analyze / sweep runs on top of `cvgauss`.

pub mod commands;
pub mod config;
pub mod error;

pub use config::{Overrides, RunConfig};
pub use error::{CliError, CliResult};
