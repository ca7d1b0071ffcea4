use std::path::{Path, PathBuf};

use thiserror::Error;

/// Errors surfaced by the command-line layer.
#[derive(Debug, Error)]
pub enum CliError {
    /// An error from the numerical core.
    #[error(transparent)]
    Core(#[from] mpip_core::Error),
    /// Reading or writing a file failed.
    #[error("{}: {source}", path.display())]
    Io {
        /// Offending path.
        path: PathBuf,
        /// Underlying error.
        source: std::io::Error,
    },
    /// A file exists but does not parse.
    #[error("{}: {message}", path.display())]
    Format {
        /// Offending path.
        path: PathBuf,
        /// What went wrong.
        message: String,
    },
    /// Invalid settings.
    #[error("{0}")]
    Config(String),
}

impl CliError {
    pub(crate) fn io(path: &Path, source: std::io::Error) -> Self {
        Self::Io {
            path: path.to_path_buf(),
            source,
        }
    }

    pub(crate) fn format(path: &Path, message: impl Into<String>) -> Self {
        Self::Format {
            path: path.to_path_buf(),
            message: message.into(),
        }
    }

    /// Process exit code: 2 configuration, 3 format, 4 numerical, 5 I/O,
    /// 6 invalid input data.
    pub fn exit_code(&self) -> i32 {
        use mpip_core::Error as E;
        match self {
            CliError::Config(_) | CliError::Core(E::Config(_)) => 2,
            CliError::Format { .. } | CliError::Core(E::Format(_)) => 3,
            CliError::Core(E::Numerical(_)) => 4,
            CliError::Io { .. } => 5,
            CliError::Core(E::Domain(_)) => 6,
        }
    }
}

pub(crate) type Result<T, E = CliError> = std::result::Result<T, E>;
