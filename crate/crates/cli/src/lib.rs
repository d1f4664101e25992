//! Command-line front end: config handling, runs and output files.

pub mod app;
pub mod config;
pub mod data;
pub mod error;
pub mod output;
pub mod pipeline;

pub use app::{run, Cli};
pub use config::ExperimentConfig;
pub use error::CliError;
