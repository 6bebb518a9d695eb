use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("invalid graph: {0}")]
    InvalidGraph(String),
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("steering column {0} has zero norm")]
    ZeroColumn(usize),
    #[error("{subsets} candidate supports exceed the enumeration limit of {limit}")]
    CombinatorialLimit { subsets: u128, limit: u128 },
    #[error("matrix is not positive definite")]
    NotPositiveDefinite,
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
    #[error("solver diverged after {0} iterations")]
    Diverged(usize),
    #[error("no path sample succeeded")]
    EmptyPath,
}

pub type Result<T> = std::result::Result<T, Error>;
