use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// A user-supplied parameter is out of range.
    #[error("invalid parameter: {0}")]
    Parameter(String),

    /// An input violates an operation's contract (e.g. no point at the origin).
    #[error("contract violation: {0}")]
    Contract(String),

    #[error("insufficient points: need {needed}, have {available}")]
    InsufficientPoints { needed: usize, available: usize },

    #[error("patch radius {radius} too small to certify (need {required})")]
    PatchTooSmall { radius: f64, required: f64 },

    /// The torus is too small for the functional's interaction range, or a
    /// stabilization radius could not be certified.
    #[error("certification failed at point {point}: {reason}")]
    Certification { point: usize, reason: String },

    #[error("numeric failure: {0}")]
    Numeric(String),

    #[error("degenerate fit: {0}")]
    DegenerateFit(String),

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("i/o error: {0}")]
    Io(String),
}

impl Error {
    pub(crate) fn param(msg: impl Into<String>) -> Self {
        Error::Parameter(msg.into())
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}
