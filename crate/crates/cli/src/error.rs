use std::fmt;
use std::process::ExitCode;

/// Failure of a subcommand, categorised by exit status.
#[derive(Debug)]
pub enum CliError {
    /// Bad config, spec or flags. Nothing was run.
    Config(anyhow::Error),
    /// A run, an I/O step or an input artifact failed.
    Runtime(anyhow::Error),
    /// Replay disagreed with at least one log.
    Mismatch(usize),
}

impl CliError {
    pub fn config(e: impl Into<anyhow::Error>) -> Self {
        CliError::Config(e.into())
    }

    pub fn runtime(e: impl Into<anyhow::Error>) -> Self {
        CliError::Runtime(e.into())
    }

    pub fn exit_code(&self) -> ExitCode {
        ExitCode::from(match self {
            CliError::Config(_) => 2,
            CliError::Runtime(_) => 3,
            CliError::Mismatch(_) => 4,
        })
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Config(e) => write!(f, "configuration error: {e:#}"),
            CliError::Runtime(e) => write!(f, "runtime error: {e:#}"),
            CliError::Mismatch(n) => write!(f, "replay mismatch in {n} log(s)"),
        }
    }
}

pub type CliResult<T> = Result<T, CliError>;

/// Attach context and a category in one step.
pub trait Categorize<T> {
    fn or_config(self, context: impl fmt::Display) -> CliResult<T>;
    fn or_runtime(self, context: impl fmt::Display) -> CliResult<T>;
}

impl<T, E: fmt::Display> Categorize<T> for Result<T, E> {
    fn or_config(self, context: impl fmt::Display) -> CliResult<T> {
        self.map_err(|e| CliError::Config(anyhow::anyhow!("{context}: {e}")))
    }

    fn or_runtime(self, context: impl fmt::Display) -> CliResult<T> {
        self.map_err(|e| CliError::Runtime(anyhow::anyhow!("{context}: {e}")))
    }
}
