use std::path::PathBuf;

use nisp_core::Error as CoreError;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("{0}")]
    Usage(String),
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{}: {message}", path.display())]
    Parse { path: PathBuf, message: String },
    #[error("{0}")]
    Format(String),
    #[error(transparent)]
    Core(#[from] CoreError),
}

pub type Result<T> = std::result::Result<T, Error>;

pub const EXIT_USAGE: i32 = 2;
pub const EXIT_DATA: i32 = 3;
pub const EXIT_INTERNAL: i32 = 4;

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn parse(path: impl Into<PathBuf>, message: impl ToString) -> Self {
        Error::Parse {
            path: path.into(),
            message: message.to_string(),
        }
    }

    /// 2 for usage errors, 3 for bad models or data, 4 for broken internal
    /// invariants.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Usage(_) => EXIT_USAGE,
            Error::Io { .. } | Error::Parse { .. } | Error::Format(_) => EXIT_DATA,
            Error::Core(e) => match e {
                CoreError::Config(_) | CoreError::KeepOutOfRange { .. } => EXIT_USAGE,
                CoreError::Plan(_)
                | CoreError::InvalidScore(_)
                | CoreError::InvalidGraph(_)
                | CoreError::Singular => EXIT_INTERNAL,
                _ => EXIT_DATA,
            },
        }
    }
}
