use std::fmt;
use std::io;

/// Errors produced by the pipeline stages.
#[derive(Debug)]
pub enum Error {
    /// Invalid configuration: bad ranges, empty grammars, missing catalogs.
    Config(String),
    /// Input data violates a precondition of the operation.
    Data(String),
    /// A record in a persisted file could not be parsed.
    Parse { line: usize, message: String },
    Io(io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub(crate) fn data(msg: impl Into<String>) -> Self {
        Error::Data(msg.into())
    }

    pub(crate) fn parse(line: usize, msg: impl Into<String>) -> Self {
        Error::Parse {
            line,
            message: msg.into(),
        }
    }
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::Config(m) => write!(f, "configuration error: {}", m),
            Error::Data(m) => write!(f, "data error: {}", m),
            Error::Parse { line, message } => write!(f, "parse error at line {}: {}", line, message),
            Error::Io(e) => write!(f, "i/o error: {}", e),
        }
    }
}

impl std::error::Error for Error {
    fn source(&self) -> Option<&(dyn std::error::Error + 'static)> {
        match self {
            Error::Io(e) => Some(e),
            _ => None,
        }
    }
}

impl From<io::Error> for Error {
    fn from(e: io::Error) -> Self {
        Error::Io(e)
    }
}
