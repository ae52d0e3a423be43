use std::io;
use std::path::PathBuf;

use fairaudit_core::ErrorKind;

/// Process exit statuses.
pub mod exit {
    pub const SUCCESS: i32 = 0;
    pub const INPUT: i32 = 2;
    pub const DEGENERATE: i32 = 3;
    pub const UNSTABLE: i32 = 4;
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("{0}")]
    Input(String),
    #[error("{context}: {source}")]
    Audit {
        context: String,
        #[source]
        source: fairaudit_core::Error,
    },
    #[error(transparent)]
    Core(#[from] fairaudit_core::Error),
}

impl CliError {
    pub fn io(path: impl Into<PathBuf>, source: io::Error) -> Self {
        CliError::Io {
            path: path.into(),
            source,
        }
    }

    pub fn in_context(context: impl Into<String>, source: fairaudit_core::Error) -> Self {
        CliError::Audit {
            context: context.into(),
            source,
        }
    }

    pub fn exit_code(&self) -> i32 {
        let kind = match self {
            CliError::Io { .. } | CliError::Input(_) => return exit::INPUT,
            CliError::Audit { source, .. } | CliError::Core(source) => source.kind(),
        };
        match kind {
            ErrorKind::Input => exit::INPUT,
            ErrorKind::Degenerate => exit::DEGENERATE,
            ErrorKind::Unstable => exit::UNSTABLE,
        }
    }
}

pub type Result<T> = std::result::Result<T, CliError>;
