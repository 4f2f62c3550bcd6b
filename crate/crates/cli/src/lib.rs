//! Reproducible pipelines over the `pacc` library: simulate logs, train,
//! evaluate, run swap studies, and benchmark all model kinds over a seed grid.

mod bench;
mod commands;
pub mod config;

use thiserror::Error;

pub use bench::{bench_runs, cmd_bench, comparison_table, violation_rate, BenchRun};
pub use commands::{cmd_eval, cmd_simulate, cmd_swap, cmd_train, resolve_out_dir, OUT_DIR_ENV};
pub use config::RunConfig;

#[derive(Debug, Error)]
pub enum CliError {
    /// Bad arguments or configuration; nothing was run.
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Runtime(#[from] pacc::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Runtime(_) => 2,
        }
    }
}

pub type Result<T> = std::result::Result<T, CliError>;
