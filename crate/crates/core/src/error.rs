use thiserror::Error;

/// Errors produced by instance construction, evaluation and solving.
#[derive(Debug, Error)]
pub enum Error {
    /// The instance or policy violates a structural invariant.
    #[error("invalid instance: {0}")]
    Instance(String),

    /// A file could not be parsed.
    #[error("parse error: {0}")]
    Parse(String),

    /// A caller-supplied argument is out of range.
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// A non-finite value appeared during iteration.
    #[error("numerical error at iteration {iteration}: {message}")]
    Numerical { iteration: usize, message: String },

    /// A computation would exceed its configured size guard.
    #[error("resource guard exceeded: {0}")]
    Resource(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// Process exit code for this error class.
    ///
    /// 2 input error, 3 numerical error, 4 resource guard.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Instance(_) | Error::Parse(_) | Error::InvalidArgument(_) | Error::Io(_) => 2,
            Error::Numerical { .. } => 3,
            Error::Resource(_) => 4,
        }
    }

    pub(crate) fn instance(msg: impl Into<String>) -> Self {
        Error::Instance(msg.into())
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub(crate) fn resource(msg: impl Into<String>) -> Self {
        Error::Resource(msg.into())
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Parse(e.to_string())
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Io(e.into())
    }
}
