use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Failure modes of the simulator and its diagnostics.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("non-finite value encountered: {0}")]
    NumericDomain(String),

    #[error("trajectory diverged at substep {substep} (norm {norm:e})")]
    Diverged { substep: usize, norm: f64 },

    #[error("invalid state: {0}")]
    InvalidState(String),

    #[error("no (M, gamma) pair reached the epsilon target; best eps_hat = {best_eps:e}")]
    TuningFailed { best_eps: f64 },

    #[error("squeezing violated at step {step}: qhat = {qhat}")]
    SqueezingViolated { step: usize, qhat: f64 },

    #[error("insufficient data: {usable} usable points, {required} required")]
    InsufficientData { usable: usize, required: usize },

    #[error("malformed input: {0}")]
    Format(String),

    #[error("version mismatch: expected {expected}, found {found}")]
    VersionMismatch { expected: String, found: String },

    #[error("checksum mismatch: stored {stored}, computed {computed}")]
    Checksum { stored: String, computed: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    /// `DimensionMismatch` unless the sizes agree.
    pub fn check_dim(expected: usize, found: usize) -> Result<()> {
        if expected == found {
            Ok(())
        } else {
            Err(Error::DimensionMismatch { expected, found })
        }
    }
}
