use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("matrix is not symmetric positive definite (pivot {index} = {pivot:e})")]
    NotSpd { index: usize, pivot: f64 },

    #[error("matrix is not symmetric (entry ({row}, {col}) differs by {diff:e})")]
    NotSymmetric { row: usize, col: usize, diff: f64 },

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("constraint row {0} has zero norm")]
    ZeroRow(usize),

    #[error("interior witness is not strictly feasible (min slack {min_slack:e})")]
    InfeasibleWitness { min_slack: f64 },

    #[error("invalid bounds: {0}")]
    InvalidBounds(String),

    #[error("point is not strictly interior (min slack {min_slack:e})")]
    NotInterior { min_slack: f64 },

    #[error("Newton minimization did not reach decrement {tol:e} in {iterations} iterations (best decrement {decrement:e})")]
    MaxIterExceeded {
        iterations: usize,
        tol: f64,
        decrement: f64,
        best: Vec<f64>,
    },

    #[error("precondition violated: {0}")]
    PreconditionViolated(String),

    #[error("divergence detected at round {round}: decrement {decrement:e} after fallback")]
    DivergenceDetected { round: usize, decrement: f64 },

    #[error("return vector has non-positive entry at index {0}")]
    NonPositiveReturn(usize),

    #[error("prediction {0} outside (0, 1)")]
    PredictionOutOfRange(f64),

    #[error("portfolio value {0} is not positive")]
    NonPositiveWealth(f64),

    #[error("parse error: {0}")]
    Parse(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("round {round}: {source}")]
    AtRound {
        round: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("i/o error: {0}")]
    Io(String),
}

impl Error {
    pub fn at_round(self, round: usize) -> Self {
        match self {
            e @ Error::AtRound { .. } => e,
            e => Error::AtRound {
                round,
                source: Box::new(e),
            },
        }
    }

    /// Strips any round annotation.
    pub fn root(&self) -> &Error {
        match self {
            Error::AtRound { source, .. } => source.root(),
            e => e,
        }
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Io(e.to_string())
    }
}
