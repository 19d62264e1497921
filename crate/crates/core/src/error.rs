use thiserror::Error;

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    /// A distribution parameter violates its constraints.
    #[error("invalid parameter: {0}")]
    InvalidParam(String),
    /// An argument is outside the domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),
    /// The event stream violates the arrival protocol.
    #[error("protocol error: {0}")]
    Protocol(String),
    /// The requested quantity has no closed form for these parameters.
    #[error("unsupported: {0}")]
    Unsupported(String),
    /// Threshold search could not bracket or resolve the target.
    #[error("calibration error: {0}")]
    Calibration(String),
    /// Malformed input or artifact data.
    #[error("format error: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
