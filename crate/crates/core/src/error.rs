use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("input size mismatch: expected {expected}, got {got}")]
    InputSize { expected: String, got: usize },

    #[error("invalid parameter `{name}`: {reason}")]
    Parameter { name: &'static str, reason: String },

    #[error("singular channel: |H[{bin}]| = {magnitude:e} on a data subcarrier")]
    SingularChannel { bin: usize, magnitude: f64 },

    #[error("singular MMSE normal equations (zero channel with zero noise?)")]
    SingularDesign,

    #[error("polynomial fit failed: {0}")]
    Fit(String),

    #[error("invalid geometry: {0}")]
    Geometry(String),

    #[error("PAPR is undefined for an all-zero frame")]
    UndefinedPapr,

    #[error("target BER {target:e} lies outside the simulated range [{low:e}, {high:e}]")]
    Extrapolation { target: f64, low: f64, high: f64 },

    #[error("malformed input on line {line}: {reason}")]
    Parse { line: usize, reason: String },

    #[error("i/o error: {0}")]
    Io(String),
}

impl Error {
    pub(crate) fn param(name: &'static str, reason: impl Into<String>) -> Self {
        Error::Parameter {
            name,
            reason: reason.into(),
        }
    }

    pub(crate) fn size(expected: impl Into<String>, got: usize) -> Self {
        Error::InputSize {
            expected: expected.into(),
            got,
        }
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}
