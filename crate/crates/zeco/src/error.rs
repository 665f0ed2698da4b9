use std::io;
use std::path::PathBuf;

use crate::archive::ArchiveError;

/// Process exit codes of the `zeco` binary.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExitCode {
    Success = 0,
    Usage = 1,
    Data = 2,
    Internal = 3,
}

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },

    #[error("{}:{line}: {message}", path.display())]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("data error: {0}")]
    Data(String),

    #[error(transparent)]
    Archive(#[from] ArchiveError),

    #[error(transparent)]
    Core(#[from] zeco_core::Error),

    #[error("{0}")]
    Csv(#[from] csv::Error),

    #[error("internal error: {0}")]
    Internal(String),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn exit_code(&self) -> ExitCode {
        use zeco_core::Error as C;
        match self {
            Error::Config(_) => ExitCode::Usage,
            Error::Io { .. }
            | Error::Parse { .. }
            | Error::Data(_)
            | Error::Archive(_)
            | Error::Csv(_) => ExitCode::Data,
            Error::Core(C::Internal(_)) | Error::Internal(_) => ExitCode::Internal,
            Error::Core(_) => ExitCode::Data,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
