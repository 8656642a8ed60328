use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("ill-conditioned matrix: {0}")]
    IllConditioned(String),

    #[error("missing column: {0}")]
    MissingColumn(String),

    #[error("row {row}: {msg}")]
    ParseRow { row: usize, msg: String },

    #[error("constant column: {0}")]
    ConstantColumn(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("empty chain: {0}")]
    EmptyChain(String),

    #[error("sampler diagnostic: {0}")]
    Diagnostic(String),

    #[error("iteration {iteration}: {source}")]
    AtIteration {
        iteration: usize,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn at_iteration(self, iteration: usize) -> Error {
        Error::AtIteration {
            iteration,
            source: Box::new(self),
        }
    }
}
