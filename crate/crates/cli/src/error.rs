//! Process-level error type carrying the exit-code contract:
//! 0 success, 1 run or validation failure, 2 bad configuration.

use std::fmt;
use std::io;
use std::path::PathBuf;

#[derive(Debug)]
pub enum CliError {
    /// The request itself is malformed: bad parameter ranges, an unusable
    /// flag combination, or an unparseable environment variable.
    Config(String),
    /// Reading or writing an artifact failed.
    Io { path: PathBuf, source: io::Error },
    /// A library computation refused the inputs or failed to converge.
    Run(String),
    /// `validate` ran to completion and some checks did not pass.
    ChecksFailed { failed: usize, total: usize },
}

impl CliError {
    /// Stable exit-code mapping.
    #[must_use]
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Io { .. } | CliError::Run(_) | CliError::ChecksFailed { .. } => 1,
        }
    }

    /// Convenience for library-level failures whose message is already
    /// descriptive.
    pub fn run(err: impl fmt::Display) -> Self {
        CliError::Run(err.to_string())
    }

    /// Convenience for configuration failures.
    pub fn config(msg: impl Into<String>) -> Self {
        CliError::Config(msg.into())
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Config(msg) => write!(f, "bad configuration: {msg}"),
            CliError::Io { path, source } => {
                write!(f, "i/o failure on {}: {source}", path.display())
            }
            CliError::Run(msg) => write!(f, "{msg}"),
            CliError::ChecksFailed { failed, total } => {
                write!(f, "{failed} of {total} checks failed")
            }
        }
    }
}

impl std::error::Error for CliError {
    fn source(&self) -> Option<&(dyn std::error::Error + 'static)> {
        match self {
            CliError::Io { source, .. } => Some(source),
            _ => None,
        }
    }
}
