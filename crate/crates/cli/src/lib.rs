//! Command-line layer of `mmgate`: configuration, run manifests, CSV and
//! JSON outputs, and the `trap`, `modes`, `design` and `scan` commands.

pub mod commands;
pub mod config;
pub mod journal;
pub mod manifest;
pub mod output;

use thiserror::Error;

pub use commands::{run, Command, Options};
pub use config::RunConfig;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error(transparent)]
    Core(#[from] mmgate_core::Error),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("every scan point failed: {0}")]
    ScanFailed(String),
}

impl CliError {
    pub fn io(path: &std::path::Path, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.display().to_string(),
            source,
        }
    }

    /// Process exit status: 2 configuration, 3 instability, 4 infeasible
    /// design, 5 numerical failure.
    pub fn exit_code(&self) -> i32 {
        use mmgate_core::Error as E;
        match self {
            CliError::Config(_) => 2,
            CliError::Core(e) => match e {
                E::InvalidConfiguration(_) | E::Domain(_) | E::GridResolution(_) | E::TruncationFailure(_) => 2,
                E::Unstable { .. } | E::NoEquilibrium { .. } => 3,
                E::Infeasible(_) => 4,
                E::IntegrationFailure { .. }
                | E::DegenerateParameters(_)
                | E::TruncationLeakage { .. }
                | E::Numerical(_) => 5,
            },
            CliError::Io { .. } => 5,
            CliError::ScanFailed(_) => 5,
        }
    }
}
