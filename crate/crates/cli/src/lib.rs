//! Command-line orchestration of the scoring and evaluation pipeline.

pub mod args;
pub mod commands;
pub mod config;
pub mod error;
pub mod svg;
pub mod validate;

pub use args::{run, Cli};
pub use config::RunConfig;
pub use error::{CliError, Result};
