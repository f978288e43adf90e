use alloc::string::String;

/// Errors raised by samplers, solvers and mechanisms.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    /// The unregularized normal equations are numerically singular; the
    /// caller has to add a ridge term.
    #[error("singular system (condition estimate {condition:e}); regularize with gamma > 0")]
    Singular { condition: f64 },

    #[error("leave-one-out design without player {player} is singular")]
    SingularLeaveOneOut { player: usize },

    /// Every prior support point assigns zero likelihood to the report.
    #[error("report is incompatible with every prior support point")]
    ZeroLikelihood,

    #[error("posterior sampling gave up after {attempts} proposals")]
    PosteriorSampling { attempts: usize },
}

pub type Result<T> = core::result::Result<T, Error>;

pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Error {
    Error::InvalidParameter {
        name,
        reason: reason.into(),
    }
}

pub(crate) fn check_dim(expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(Error::DimensionMismatch { expected, got })
    }
}
