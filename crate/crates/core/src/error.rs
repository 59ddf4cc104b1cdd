use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// An oracle returned a non-finite value; the solve aborts rather than
    /// letting NaN poison the max-structure.
    #[error("non-finite oracle output in {context} (group {group}, piece {piece})")]
    NonFiniteOracle {
        context: &'static str,
        group: usize,
        piece: usize,
    },

    #[error("oracle contract violation: {0}")]
    OracleContract(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("feasible set is empty: {0}")]
    InfeasibleSet(String),

    /// The QP active-set loop hit its iteration cap before reaching the
    /// residual tolerance.
    #[error("QP accuracy not reached: residual {residual:.3e} > {tolerance:.3e} after {iterations} iterations")]
    QpAccuracy {
        residual: f64,
        tolerance: f64,
        iterations: usize,
        best: Vec<f64>,
    },

    /// Inner bundle solver hit its cap with a gap too large to treat the
    /// center as optimal.
    #[error("inner solver aborted: gap {gap:.3e} after {iterations} iterations (tol {tolerance:.3e})")]
    InnerAbort {
        gap: f64,
        tolerance: f64,
        iterations: usize,
    },

    /// Subproblem certifying B-stationarity is infeasible, which indicates a
    /// constraint-qualification failure at the candidate point.
    #[error("constraint qualification violation: linearized subproblem ({j},{l}) infeasible")]
    CqViolation { j: usize, l: usize },

    /// The epsilon-active product set exceeds the model cap; silent
    /// truncation would invalidate the B-stationarity certificate.
    #[error("DC active product |A_f x A_c| = {size} exceeds cap {cap}; decrease epsilon")]
    DcProductTooLarge { size: usize, cap: usize },

    #[error("empty input: {0}")]
    Empty(String),

    #[error("parse error in {path} at {location}: {message}")]
    Parse {
        path: String,
        location: String,
        message: String,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("internal error: {0}")]
    Internal(String),
}
