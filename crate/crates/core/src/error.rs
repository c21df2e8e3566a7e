use std::io;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("unknown example id `{0}`")]
    UnknownExample(String),

    #[error("example `{0}` was already shown")]
    DuplicateExample(String),

    #[error("invalid argument: {0}")]
    Usage(String),

    #[error("invalid problem: {0}")]
    Validation(String),

    #[error("example `{id}` is labeled {label} but the target predicts {predicted}")]
    NotRealizable {
        id: String,
        label: i8,
        predicted: i8,
    },

    #[error("all hypotheses agree on every remaining example; nothing informative to teach")]
    NothingInformative,

    #[error("parse error in {context}: {message}")]
    Parse { context: String, message: String },

    #[error(transparent)]
    Io(#[from] io::Error),
}

impl Error {
    pub fn usage(msg: impl Into<String>) -> Self {
        Self::Usage(msg.into())
    }

    pub fn validation(msg: impl Into<String>) -> Self {
        Self::Validation(msg.into())
    }

    /// True for failures caused by the filesystem rather than by the input.
    pub fn is_io(&self) -> bool {
        matches!(self, Self::Io(_))
    }
}

impl From<csv::Error> for Error {
    fn from(err: csv::Error) -> Self {
        if err.is_io_error() {
            match err.into_kind() {
                csv::ErrorKind::Io(e) => Self::Io(e),
                _ => unreachable!(),
            }
        } else {
            Self::Parse {
                context: "csv".into(),
                message: err.to_string(),
            }
        }
    }
}
