use thiserror::Error;

/// Errors surfaced by simulation, tuning, and table construction.
#[derive(Debug, Clone, Error, PartialEq)]
pub enum Error {
    #[error("argmax over values containing NaN")]
    NanInArgmax,

    #[error("matrix is not positive definite")]
    NotPositiveDefinite,

    #[error("IRLS did not converge within {max_iter} iterations (grad norm {grad_norm:.3e})")]
    NoConvergence { max_iter: usize, grad_norm: f64 },

    #[error("gamma = 0 yields a degenerate posterior for Thompson-sampling policies")]
    DegeneratePosterior,

    #[error("degenerate Hessian: weighted covariance is not positive definite")]
    DegenerateHessian,

    #[error("reward {0} outside [0, 1] cannot be binarized")]
    RewardOutOfRange(f64),

    #[error("budget s = {s} is below the 2L = {min} regret computations needed for L steps")]
    BudgetTooSmall { s: usize, min: usize },

    #[error("grid cell budget floor(eps * s) = 0: budget too small for grid")]
    GridBudgetTooSmall,

    #[error("arm state (s={s}, f={f}, r={r}) outside table horizon {horizon}")]
    TableHorizonExceeded { s: u32, f: u32, r: u32, horizon: u32 },

    #[error("slope estimation requires at least two points with x > 0")]
    NoPositiveGap,

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("instance {index}: {source}")]
    AtInstance {
        index: usize,
        #[source]
        source: Box<Error>,
    },
}

pub type Result<T> = std::result::Result<T, Error>;
