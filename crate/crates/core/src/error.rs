use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// A value lies outside the parameter space of the model.
    #[error("parameter domain: {0}")]
    Domain(String),

    /// The regression design is rank deficient; `columns` names the pair of
    /// design columns (0-based) found to be collinear.
    #[error("degenerate design: columns {} and {} are linearly dependent", columns.0, columns.1)]
    DegenerateDesign { columns: (usize, usize) },

    #[error("objective is not finite at the starting point")]
    BadStart,

    #[error("invalid configuration: {0}")]
    Config(String),

    /// An internal consistency check between two computational routes failed.
    #[error("numerical check failed: {0}")]
    Numerical(String),

    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
