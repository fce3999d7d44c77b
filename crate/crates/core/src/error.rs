use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid electorate: {0}")]
    InvalidElectorate(String),

    #[error("invalid precision distribution: {0}")]
    InvalidDistribution(String),

    #[error("invalid strategy profile: {0}")]
    InvalidProfile(String),

    #[error("precision {value} outside support [{lo}, {hi}]")]
    OutOfSupport { value: f64, lo: f64, hi: f64 },

    #[error("exact evaluation requires the canonical delegation directions (experts vote, non-experts delegate to experts only)")]
    NonCanonicalProfile,

    #[error("illegal action set: {0}")]
    IllegalActions(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("dataset error at line {line}: {message}")]
    Dataset { line: u64, message: String },

    #[error("i/o error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(err: std::io::Error) -> Self {
        Error::Io(err.to_string())
    }
}

impl From<csv::Error> for Error {
    fn from(err: csv::Error) -> Self {
        let line = err.position().map(|p| p.line()).unwrap_or(0);
        Error::Dataset {
            line,
            message: err.to_string(),
        }
    }
}
