use thiserror::Error;

/// A failed command, carrying the process exit code.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Config(String),
    #[error("{0}")]
    Data(String),
    #[error("{0}")]
    Numerical(String),
}

impl CliError {
    pub fn config(msg: impl Into<String>) -> Self {
        CliError::Config(msg.into())
    }

    pub fn data(msg: impl Into<String>) -> Self {
        CliError::Data(msg.into())
    }

    pub fn code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Data(_) => 3,
            CliError::Numerical(_) => 4,
        }
    }
}

impl From<hdp_slice::Error> for CliError {
    fn from(e: hdp_slice::Error) -> Self {
        use hdp_slice::Error as E;
        match e {
            E::Domain(_) => CliError::Config(e.to_string()),
            E::Format(_) => CliError::Data(e.to_string()),
            E::Io(_) => CliError::Data(e.to_string()),
            E::Invariant(_) | E::Numerical { .. } | E::RestartLimit { .. } => CliError::Numerical(e.to_string()),
        }
    }
}
