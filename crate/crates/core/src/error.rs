use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("Newton iteration did not converge after {iterations} iterations (residual {residual:e})")]
    NonConvergence { iterations: usize, residual: f64 },

    #[error("profile is not monotone: dv1 = {value:e} at x = {x}")]
    MonotonicityViolation { x: f64, value: f64 },

    #[error("fit window contaminated: v2 = {v2:e} at x = {x}")]
    WindowTooContaminated { x: f64, v2: f64 },

    #[error("degenerate fit: {0}")]
    DegenerateFit(String),

    #[error("grid mismatch: expected {expected} nodes, found {found}")]
    GridMismatch { expected: usize, found: usize },

    #[error("singular system: pivot {pivot:e} at row {row} (tolerance {tolerance:e})")]
    SingularSystem { row: usize, pivot: f64, tolerance: f64 },

    #[error("Gram matrix of the projection carriers is singular (det {0:e})")]
    GramSingular(f64),

    #[error("residual not resolved: r = {coarse} at N, r = {fine} at 2N")]
    ResolutionInsufficient { coarse: f64, fine: f64 },

    #[error("exact norm needs {unknowns} unknowns, budget is {budget}")]
    BudgetExceeded { unknowns: usize, budget: usize },

    #[error("inverse iteration did not converge after {iterations} iterations (last estimate {last})")]
    NoConvergence { iterations: usize, last: f64 },

    #[error("profile cache: {0}")]
    Cache(String),

    #[error("io: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// True for failures of the numerics, as opposed to bad input or IO.
    pub fn is_numerical(&self) -> bool {
        !matches!(
            self,
            Error::InvalidParameter(_) | Error::GridMismatch { .. } | Error::Cache(_) | Error::Io(_)
        )
    }
}
