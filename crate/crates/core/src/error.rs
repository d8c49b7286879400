use std::io;

use thiserror::Error;

/// Errors raised by the laboratory.
#[derive(Debug, Error)]
pub enum ZkError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("{what} did not converge after {iterations} iterations (last residual {residual:e})")]
    ConvergenceFailure {
        what: &'static str,
        iterations: usize,
        residual: f64,
    },

    /// The solution left the representable regime; `t_last_good` is the last
    /// time at which the state passed every sanity check.
    #[error("blow-up detected after t = {t_last_good}: {reason}")]
    BlowUpDetected { t_last_good: f64, reason: String },

    #[error("modulation failed: {0}")]
    ModulationFailure(String),

    #[error("insufficient range: {0}")]
    InsufficientRange(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("unsupported case: {0}")]
    UnsupportedCase(String),

    #[error("malformed file: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] io::Error),
}

pub type Result<T, E = ZkError> = std::result::Result<T, E>;

impl ZkError {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        ZkError::InvalidArgument(msg.into())
    }

    /// Stable machine-readable name of the variant.
    pub fn kind(&self) -> &'static str {
        match self {
            ZkError::InvalidArgument(_) => "invalid_argument",
            ZkError::ConvergenceFailure { .. } => "convergence_failure",
            ZkError::BlowUpDetected { .. } => "blow_up",
            ZkError::ModulationFailure(_) => "modulation_failure",
            ZkError::InsufficientRange(_) => "insufficient_range",
            ZkError::InvalidConfig(_) => "invalid_config",
            ZkError::UnsupportedCase(_) => "unsupported_case",
            ZkError::Format(_) => "format",
            ZkError::Io(_) => "io",
        }
    }

    /// Whether this error means the computation itself failed (as opposed
    /// to a malformed request). Drives the CLI exit status.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            ZkError::ConvergenceFailure { .. }
                | ZkError::BlowUpDetected { .. }
                | ZkError::ModulationFailure(_)
                | ZkError::InsufficientRange(_)
        )
    }
}
