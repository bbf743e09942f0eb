use alloc::string::String;
use alloc::vec::Vec;

/// Errors raised by the numerical routines of this crate.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("matrix entries must be finite")]
    NonFinite,

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// The Kronecker-vectorized Lyapunov system is numerically singular.
    #[error("Lyapunov system is numerically singular")]
    SingularSystem,

    #[error("no stabilizing initial gain available")]
    NoStabilizingGain,

    #[error("iteration did not converge after {iterations} iterations")]
    NotConverged { iterations: usize },

    #[error("gain is not stabilizing (A - Bk is not Hurwitz)")]
    NotStabilizing,

    /// No Riccati optimum is cached on the problem, so regret is undefined.
    #[error("problem has no cached optimum")]
    OptimumUnavailable,

    #[error("argument {0} is outside the model domain")]
    OutOfDomain(f64),

    /// The integrator could not keep the iterates inside the stabilizing set.
    #[error("flow left the stabilizing domain at t = {t}")]
    LeftDomain { t: f64 },

    #[error("trajectory does not hold factored gains")]
    NotFactored,

    #[error("no usable samples")]
    EmptySample,

    /// Every sample with positive regret has zero gradient.
    #[error("degenerate samples: zero gradient at positive regret")]
    Degenerate,

    #[error("precondition violated for inits {0:?}")]
    PreconditionViolated(Vec<usize>),
}

pub type Result<T> = core::result::Result<T, Error>;
