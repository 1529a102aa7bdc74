//! Front end for `nhgeo`: config ingestion, runs and report emission.

pub mod commands;
pub mod config;
pub mod output;

use thiserror::Error;

pub use commands::{run, Command, Overrides};
pub use config::{Format, RunConfig};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("model error: {0}")]
    Model(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("i/o error: {0}")]
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            Self::Numerical(_) => 1,
            Self::Config(_) | Self::Io(_) => 2,
            Self::Model(_) => 3,
        }
    }
}
