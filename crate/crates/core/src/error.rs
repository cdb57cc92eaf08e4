use thiserror::Error;

/// Errors produced by the reconstruction library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },

    #[error(
        "mesh point {index} has norm {norm:.9}, within {margin:e} of the unit sphere; \
         boundary points produce all-zero Gram rows and only destabilise the solve"
    )]
    BoundaryMeshPoint {
        index: usize,
        norm: f64,
        margin: f64,
    },

    #[error("correlation {0} is too close to +-1 for the bivariate normal branch")]
    DegenerateCorrelation(f64),

    #[error("matrix has rank zero")]
    RankZero,

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("malformed input: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidArgument(msg.into())
}
