//! Command-line front end: configuration, control artifacts and the
//! experiment commands behind the `mvdlmc` binary.

pub mod artifact;
pub mod commands;
pub mod config;

use std::path::Path;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("configuration: {0}")]
    Config(String),

    #[error("control artifact: {0}")]
    Artifact(String),

    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Core(#[from] mvdlmc::Error),
}

impl CliError {
    pub(crate) fn io(path: &Path, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.display().to_string(),
            source,
        }
    }

    /// 2 for configuration and input problems, 4 when the adaptive driver
    /// hits its level cap, 3 for other numerical failures.
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) | CliError::Artifact(_) | CliError::Io { .. } => 2,
            CliError::Core(mvdlmc::Error::LevelCapExceeded { .. }) => 4,
            CliError::Core(e) if e.is_usage() => 2,
            CliError::Core(_) => 3,
        }
    }
}
