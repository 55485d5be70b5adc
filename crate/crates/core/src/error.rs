use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// A caller-supplied parameter or configuration value is out of range.
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// Input data is malformed or inconsistent (empty corpus, bad ids,
    /// mismatched vocabularies, corrupt files).
    #[error("data error: {0}")]
    Data(String),

    /// A numerical procedure failed (non-finite values, singular matrices,
    /// non-convergence).
    #[error("numeric failure: {0}")]
    Numeric(String),

    #[error("{context}: {source}")]
    Io {
        context: String,
        #[source]
        source: std::io::Error,
    },
}

/// Coarse error category, used by the command line to pick exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Usage,
    Data,
    Numeric,
}

impl Error {
    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::InvalidArgument(_) => ErrorKind::Usage,
            Error::Data(_) | Error::Io { .. } => ErrorKind::Data,
            Error::Numeric(_) => ErrorKind::Numeric,
        }
    }

    pub(crate) fn io(context: impl Into<String>, source: std::io::Error) -> Self {
        Error::Io {
            context: context.into(),
            source,
        }
    }
}

macro_rules! invalid {
    ($($arg:tt)*) => { $crate::Error::InvalidArgument(format!($($arg)*)) };
}

macro_rules! data_err {
    ($($arg:tt)*) => { $crate::Error::Data(format!($($arg)*)) };
}

pub(crate) use data_err;
pub(crate) use invalid;
