use thiserror::Error;

/// Failures surfaced to the shell; each maps to a fixed exit code.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("usage error: {0}")]
    Usage(String),

    #[error("data error: {0}")]
    Data(String),

    #[error("numerical failure: {0}")]
    Numerical(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Data(_) => 3,
            CliError::Numerical(_) => 4,
        }
    }
}

impl From<curemix::Error> for CliError {
    fn from(e: curemix::Error) -> Self {
        use curemix::Error as E;
        match e {
            E::Config(_) | E::Domain(_) | E::Io(_) => CliError::Usage(e.to_string()),
            E::Data(_) | E::Serde(_) => CliError::Data(e.to_string()),
            E::Invariant(_) | E::Numerical(_) => CliError::Numerical(e.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Usage(format!("I/O error: {e}"))
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;
