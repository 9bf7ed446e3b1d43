//! Scenario runner for `afrelay-core`: configuration files, seeded channel
//! generation, experiment commands and report output.

pub mod commands;
pub mod generate;
pub mod report;
pub mod scenario;

pub use commands::{run_command, Command, Outcome, Overrides};
pub use generate::generate_network;
pub use scenario::{load_scenario, Scenario};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("{path}: cannot read: {1}", path = .0)]
    Io(String, String),
    #[error("{path}:{line}:{column}: field '{field}': {message}")]
    Parse { path: String, field: String, line: usize, column: usize, message: String },
    #[error("invalid scenario:\n  {}", .0.join("\n  "))]
    Validation(Vec<String>),
    #[error("usage: {0}")]
    Usage(String),
    #[error(transparent)]
    Core(#[from] afrelay_core::Error),
    #[error("cannot write {0}: {1}")]
    Output(String, String),
}

impl HarnessError {
    /// Process exit code for this error.
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Core(_) => 2,
            _ => 1,
        }
    }
}
