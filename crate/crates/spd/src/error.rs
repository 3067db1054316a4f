use std::path::{Path, PathBuf};

/// Failures of the command-line tools, classified by exit code.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    /// Bad flags, bad config values or inputs that fail validation (exit 2).
    #[error("{0}")]
    Invalid(String),
    /// Anything that went wrong while doing valid work (exit 1).
    #[error("{0}")]
    Runtime(String),
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: std::io::Error },
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Invalid(_) => 2,
            CliError::Runtime(_) | CliError::Io { .. } => 1,
        }
    }

    pub fn io(path: impl AsRef<Path>) -> impl FnOnce(std::io::Error) -> CliError {
        let path = path.as_ref().to_path_buf();
        move |source| CliError::Io { path, source }
    }

    /// Prefixes the message with the file it concerns.
    pub fn in_file(self, path: &Path) -> CliError {
        match self {
            CliError::Invalid(m) => CliError::Invalid(format!("{}: {m}", path.display())),
            CliError::Runtime(m) => CliError::Runtime(format!("{}: {m}", path.display())),
            io => io,
        }
    }
}

impl From<spd_core::Error> for CliError {
    fn from(e: spd_core::Error) -> Self {
        use spd_core::Error as E;
        match e {
            E::InvalidInput(_) | E::ShapeMismatch(_) | E::MissingClass(_) | E::Protocol(_) => {
                CliError::Invalid(e.to_string())
            }
            E::Training { .. } | E::Internal(_) => CliError::Runtime(e.to_string()),
        }
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::Invalid(format!("malformed JSON: {e}"))
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        if e.is_io_error() {
            CliError::Runtime(format!("CSV I/O failed: {e}"))
        } else {
            CliError::Invalid(format!("malformed CSV: {e}"))
        }
    }
}

pub type Result<T> = std::result::Result<T, CliError>;

macro_rules! invalid {
    ($($arg:tt)*) => {
        $crate::error::CliError::Invalid(format!($($arg)*))
    };
}

pub(crate) use invalid;
