use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// A parameter is outside the domain of the operation.
    #[error("invalid `{name}`: {reason}")]
    Domain { name: &'static str, reason: String },

    /// A working point does not satisfy the steady-state equations, or two
    /// objects that must describe the same steady state do not.
    #[error("consistency check failed: {0}")]
    Consistency(String),

    #[error("fluctuation matrix is ill-conditioned (1-norm condition estimate {estimate:.3e})")]
    IllConditioned { estimate: f64 },

    #[error("rank-one update denominator is near zero (|1 + w^T D^-1 A| = {magnitude:.3e})")]
    NearSingularUpdate { magnitude: f64 },

    #[error("dense system of dimension {size} exceeds the cap of {cap}")]
    TooLarge { size: usize, cap: usize },

    #[error("classical integration diverged at step {step} (t = {time})")]
    Diverged { step: usize, time: f64 },

    #[error("internal consistency check failed: {0}")]
    Internal(String),
}

impl Error {
    pub(crate) fn domain(name: &'static str, reason: impl Into<String>) -> Self {
        Error::Domain {
            name,
            reason: reason.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
