use thiserror::Error;

/// Exit status of a clean run.
pub const EXIT_OK: i32 = 0;
/// Usage, configuration or I/O problem.
pub const EXIT_USAGE: i32 = 1;
/// A computation failed numerically.
pub const EXIT_NUMERICAL: i32 = 2;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),

    #[error("config: {0}")]
    Config(String),

    #[error("{context}: {source}")]
    Io { context: String, source: std::io::Error },

    #[error(transparent)]
    Core(#[from] harvester_core::Error),

    /// Some sweep cases failed; the rest were written.
    #[error("{failed} case(s) failed")]
    Partial { failed: usize, numerical: bool },
}

impl CliError {
    pub fn io(context: impl Into<String>, source: std::io::Error) -> Self {
        CliError::Io { context: context.into(), source }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Core(e) if e.is_numerical() => EXIT_NUMERICAL,
            CliError::Partial { numerical: true, .. } => EXIT_NUMERICAL,
            _ => EXIT_USAGE,
        }
    }

    pub fn is_numerical(&self) -> bool {
        self.exit_code() == EXIT_NUMERICAL
    }
}
