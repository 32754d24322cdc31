use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),

    #[error("parse error at data row {row}: {message}")]
    Parse { row: usize, message: String },

    #[error("validation error: {0}")]
    Validation(String),

    #[error("column `{0}` has zero variance over its observed entries")]
    DegenerateColumn(String),

    #[error("non-finite input in {0}")]
    NonFinite(&'static str),

    #[error("reference GLM did not converge after {iterations} iterations")]
    NonConvergence { iterations: usize, last: Vec<f64> },

    #[error("reference GLM coefficients diverge (separation suspected); refit with a ridge penalty")]
    Separation { last: Vec<f64> },

    #[error("singular design matrix: {0}")]
    Singular(String),

    #[error("all membership weights underflowed for subject {subject}")]
    Underflow { subject: usize },

    #[error("mixture weight sum underflowed at query point")]
    WeightUnderflow,

    #[error("positivity violation: conditioning event has zero mass under every cluster")]
    PositivityViolation,

    #[error("quantile bracket not found after {0} expansions")]
    BracketFailure(usize),

    #[error("degenerate trace: {0}")]
    DegenerateTrace(String),

    #[error("insufficient data: {0}")]
    Insufficient(String),

    #[error("estimand/outcome mismatch: {0}")]
    EstimandMismatch(String),

    #[error("failed at iteration {iteration}: {source}")]
    AtIteration {
        iteration: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("serialization error: {0}")]
    Serde(#[from] serde_json::Error),

    #[error("CSV error: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn at_iteration(self, iteration: usize) -> Self {
        Error::AtIteration {
            iteration,
            source: Box::new(self),
        }
    }
}
