use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid basis spec: {0}")]
    InvalidSpec(String),

    #[error("dimension mismatch in {what}: expected {expected}, got {actual}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        actual: usize,
    },

    #[error("dense size guard exceeded: {what} needs {entries} entries (limit {limit}); use a tensorized model")]
    TooLarge {
        what: &'static str,
        entries: u128,
        limit: u128,
    },

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("quadrature grid too coarse: {given} nodes per dimension, need at least {required}")]
    GridTooCoarse { given: usize, required: usize },

    #[error("all spectrum entries are zero")]
    ZeroSpectrum,

    #[error("degenerate model: every FIM trace in the batch is zero")]
    DegenerateFim,

    #[error("non-finite log-determinant at parameter sample {index}")]
    NonFiniteLogdet { index: usize },

    #[error("Gram-Schmidt breakdown after {attempts} attempts")]
    Breakdown { attempts: usize },

    #[error("non-finite loss at epoch {epoch}")]
    NonFiniteLoss { epoch: usize },

    #[error("container format: {0}")]
    Format(String),

    #[error("i/o: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
