use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Solver(#[from] pullin_core::Error),

    #[error("I/O error on {path}: {source}")]
    Io { path: String, source: std::io::Error },
}

impl CliError {
    /// Process exit status for this failure.
    pub fn exit_code(&self) -> i32 {
        use pullin_core::Error as E;
        match self {
            CliError::Config(_) => 2,
            CliError::Solver(E::InvalidParameter(_) | E::UndefinedRatio { .. }) => 2,
            CliError::Solver(E::BracketInvalid { .. }) => 4,
            CliError::Solver(_) => 3,
            CliError::Io { .. } => 5,
        }
    }
}
