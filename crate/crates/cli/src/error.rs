use std::path::PathBuf;

use radar_ood::Error as CoreError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("configuration: {0}")]
    Config(String),

    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: std::io::Error },

    #[error("{context}: {source}")]
    Core { context: String, source: CoreError },
}

impl CliError {
    /// 2 for configuration errors, 3 for numeric failures, 4 for I/O.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Io { .. } => 4,
            CliError::Core { source, .. } => match source {
                CoreError::InvalidArgument(_) | CoreError::ShapeMismatch { .. } | CoreError::DimensionMismatch { .. } => 2,
                CoreError::Divergence(_) | CoreError::NonConvergence { .. } | CoreError::NotPositiveDefinite { .. } => 3,
                CoreError::MalformedHeader(_)
                | CoreError::Truncated { .. }
                | CoreError::Checksum { .. }
                | CoreError::Json(_)
                | CoreError::Io(_) => 4,
            },
        }
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;

pub fn config(msg: impl Into<String>) -> CliError {
    CliError::Config(msg.into())
}

/// Attaches a context string to core errors.
pub trait Context<T> {
    fn context(self, ctx: impl FnOnce() -> String) -> CliResult<T>;
}

impl<T> Context<T> for radar_ood::Result<T> {
    fn context(self, ctx: impl FnOnce() -> String) -> CliResult<T> {
        self.map_err(|source| CliError::Core { context: ctx(), source })
    }
}

pub fn io_err(path: impl Into<PathBuf>) -> impl FnOnce(std::io::Error) -> CliError {
    let path = path.into();
    move |source| CliError::Io { path, source }
}
