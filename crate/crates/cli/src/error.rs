use esp_core::EspError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("bad input: {0}")]
    BadInput(String),

    #[error("invariant violation: {0}")]
    Invariant(String),

    #[error(transparent)]
    Core(#[from] EspError),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl CliError {
    /// Process exit code: 1 infeasible, 2 bad input, 3 invariant violation.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::BadInput(_) | CliError::Io(_) => 2,
            CliError::Invariant(_) => 3,
            CliError::Core(e) => match e {
                EspError::Infeasible { .. } => 1,
                EspError::InvalidTrace(_)
                | EspError::InvalidSpec(_)
                | EspError::InvalidStats(_)
                | EspError::SizeLimit(_) => 2,
                _ => 3,
            },
        }
    }
}
