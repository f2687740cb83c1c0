use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("parse error: {0}")]
    Parse(String),
    #[error("validation failed: {}", .0.join("; "))]
    Validation(Vec<String>),
    #[error("depth {requested} exceeds configured bound {bound}")]
    DepthExceeded { requested: usize, bound: usize },
    #[error("point {0} is outside the domain")]
    OutOfDomain(String),
    #[error("transfer operator has not been validated")]
    NotValidated,
    #[error("empty basis: no seed points")]
    EmptyBasis,
    #[error("set is not contained in the regular set: {0}")]
    NotRegular(String),
    #[error("point {0} is not in the spectrum stratum")]
    OutOfSpectrum(String),
    #[error("hypothesis violated: {0}")]
    HypothesisViolated(String),
    #[error("test function support touches an irregular point: {0}")]
    SupportViolation(String),
    #[error("system is not a local homeomorphism: {0}")]
    NotLocalHomeo(String),
    #[error("operation needs the {0} backend")]
    WrongBackend(&'static str),
    #[error("no solution: {0}")]
    NoSolution(String),
}

pub type Result<T> = std::result::Result<T, Error>;
