use thiserror::Error;

/// Errors raised across the toolkit.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("hypergeometric parameter c = {0} is a non-positive integer")]
    DegenerateC(f64),

    #[error("series did not converge after {terms} terms")]
    SeriesNonConvergence { terms: usize },

    #[error("quadrature failed to reach tolerance (estimate {estimate}, error {error})")]
    Quadrature { estimate: f64, error: f64 },

    #[error("matrix is not positive definite (pivot {pivot} at row {row})")]
    NotPositiveDefinite { row: usize, pivot: f64 },

    #[error("time ordering violated: {0}")]
    Order(String),

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("constraints infeasible: {0}")]
    Infeasible(String),

    #[error("negative forward variance {value} at t = {t}")]
    NegativeForwardVariance { t: f64, value: f64 },

    #[error("price {price} outside the no-arbitrage band [{lower}, {upper}]")]
    PriceOutOfBand { price: f64, lower: f64, upper: f64 },

    #[error("io: {0}")]
    Io(String),

    #[error("parse: {0}")]
    Parse(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Parse(e.to_string())
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Parse(e.to_string())
    }
}

pub(crate) fn domain<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Domain(msg.into()))
}
