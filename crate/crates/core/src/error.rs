use thiserror::Error;

/// Errors raised by the storage model, solvers and analysis routines.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum EspError {
    #[error("invalid trace: {0}")]
    InvalidTrace(String),

    #[error("invalid storage spec: {0}")]
    InvalidSpec(String),

    #[error("invalid market stats: {0}")]
    InvalidStats(String),

    #[error("length mismatch: trace has {expected} slots, schedule has {got}")]
    LengthMismatch { expected: usize, got: usize },

    #[error("ratio undefined: {0}")]
    UndefinedRatio(String),

    /// The boundary condition cannot be met; `slot` is the earliest slot
    /// (1-based) at which the violation is certain.
    #[error("infeasible at slot {slot}: {reason}")]
    Infeasible { slot: usize, reason: String },

    #[error("instance exceeds oracle limits: {0}")]
    SizeLimit(String),

    #[error("undefined point: {0}")]
    UndefinedPoint(String),
}

pub type Result<T> = std::result::Result<T, EspError>;
