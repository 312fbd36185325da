use thiserror::Error;

/// Errors raised by the simulation, modelling, data and training layers.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("domain error: {0}")]
    Domain(String),
    #[error("resource error: {0}")]
    Resource(String),
    #[error("unsupported gate: {0}")]
    UnsupportedGate(String),
    #[error("optimization error: {0}")]
    Optimization(String),
    #[error("degenerate data: {0}")]
    DegenerateData(String),
    #[error("estimation error: {0}")]
    Estimation(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

macro_rules! config_err {
    ($($arg:tt)*) => { $crate::error::Error::Config(format!($($arg)*)) };
}
pub(crate) use config_err;
