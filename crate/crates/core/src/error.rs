use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("entry ({row}, {col}) out of range for a {n_rows}x{n_cols} matrix")]
    Index {
        row: usize,
        col: usize,
        n_rows: usize,
        n_cols: usize,
    },

    #[error("dimension mismatch in {context}: expected {expected}, got {actual}")]
    Dimension {
        context: &'static str,
        expected: usize,
        actual: usize,
    },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("invalid cluster assignment: {0}")]
    InvalidAssignment(String),

    #[error("hierarchy construction failed: {0}")]
    Hierarchy(String),

    #[error("numerical breakdown: {0}")]
    Numerical(String),

    #[error("preconditioner setup failed: {0}")]
    Setup(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("estimator error: {0}")]
    Estimator(String),

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("sampling failed at level {level}, iteration {iteration}: {source}")]
    Sampling {
        level: usize,
        iteration: usize,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn dim(context: &'static str, expected: usize, actual: usize) -> Self {
        Error::Dimension {
            context,
            expected,
            actual,
        }
    }

    pub(crate) fn at(self, level: usize, iteration: usize) -> Self {
        match self {
            e @ Error::Sampling { .. } => e,
            e => Error::Sampling {
                level,
                iteration,
                source: Box::new(e),
            },
        }
    }
}
