use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("schema error: {0}")]
    Schema(String),

    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("size error: {0}")]
    Size(String),

    #[error("cannot flip group labels: {0}")]
    CannotFlip(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("undefined AUC: {0}")]
    UndefinedAuc(String),

    #[error("metric error: {0}")]
    Metric(String),

    #[error("non-finite value in {layer}: {msg}")]
    Numeric { layer: String, msg: String },

    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("degenerate group pair ({0}, {1}): empty side in batch")]
    DegeneratePair(usize, usize),

    #[error("degenerate batch: {0}")]
    DegenerateBatch(String),

    #[error("invalid input: {0}")]
    Input(String),

    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error("invariant violated: {0}")]
    Invariant(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}
