//! Command implementations behind the `hpl` binary.

pub mod commands;
pub mod config;
pub mod data;
pub mod io;
pub mod training;

use std::path::Path;

use thiserror::Error;

pub use commands::{ablate, fixtures, gen_maps, plan, train, LoadedModels, PlanReport, Stage, TrainMeta};
pub use config::RunConfig;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    BadInput(String),

    #[error("could not produce a connected instance in {0} tries")]
    ExhaustedRetries(usize),

    #[error("planning failed: {0}")]
    Planning(String),

    #[error("training diverged: {0}")]
    Divergence(String),

    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
}

impl CliError {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        CliError::Io { path: path.display().to_string(), source }
    }

    /// 2 bad input, 3 planning failure, 4 training divergence.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::BadInput(_) | CliError::ExhaustedRetries(_) | CliError::Io { .. } => 2,
            CliError::Planning(_) => 3,
            CliError::Divergence(_) => 4,
        }
    }
}
