use std::process::ExitCode;

/// Failure classes with their process exit codes.
#[derive(Debug)]
pub enum CliError {
    /// Invalid configuration or input data (exit 2).
    Config(anyhow::Error),
    /// A computation failed: integrator guard, fit non-convergence, ... (exit 3).
    Numerical(anyhow::Error),
    /// The run completed but a reproduction check failed (exit 4).
    Acceptance(String),
    /// Filesystem failure while writing outputs (exit 1).
    Io(anyhow::Error),
}

impl CliError {
    pub fn exit_code(&self) -> ExitCode {
        ExitCode::from(match self {
            CliError::Io(_) => 1,
            CliError::Config(_) => 2,
            CliError::Numerical(_) => 3,
            CliError::Acceptance(_) => 4,
        })
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Config(e) => write!(f, "config error: {e:#}"),
            CliError::Numerical(e) => write!(f, "numerical failure: {e:#}"),
            CliError::Acceptance(e) => write!(f, "acceptance check failed: {e}"),
            CliError::Io(e) => write!(f, "i/o error: {e:#}"),
        }
    }
}

pub fn numerical(e: impl std::fmt::Display) -> CliError {
    CliError::Numerical(anyhow::anyhow!("{e}"))
}

pub fn input(e: impl std::fmt::Display) -> CliError {
    CliError::Config(anyhow::anyhow!("{e}"))
}

pub fn io(e: impl std::fmt::Display) -> CliError {
    CliError::Io(anyhow::anyhow!("{e}"))
}
