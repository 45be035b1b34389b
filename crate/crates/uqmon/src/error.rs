use std::path::{Path, PathBuf};

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error(transparent)]
    Core(#[from] uqmon_core::Error),
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{}: {msg}", path.display())]
    Format { path: PathBuf, msg: String },
    #[error("missing {what}: {} ({hint})", path.display())]
    Missing {
        what: String,
        path: PathBuf,
        hint: String,
    },
    #[error("stale artifact: {0}")]
    Stale(String),
    #[error("invalid config: {0}")]
    Config(String),
}

impl Error {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        Error::Io {
            path: path.to_path_buf(),
            source,
        }
    }

    pub fn format(path: &Path, msg: impl Into<String>) -> Self {
        Error::Format {
            path: path.to_path_buf(),
            msg: msg.into(),
        }
    }

    pub fn missing(what: impl Into<String>, path: &Path, hint: impl Into<String>) -> Self {
        Error::Missing {
            what: what.into(),
            path: path.to_path_buf(),
            hint: hint.into(),
        }
    }

    pub fn category(&self) -> &'static str {
        match self {
            Error::Core(e) => e.category(),
            Error::Io { .. } => "io",
            Error::Format { .. } => "format",
            Error::Missing { .. } => "missing",
            Error::Stale(_) => "stale",
            Error::Config(_) => "config",
        }
    }

    /// Process exit status for the CLI.
    pub fn exit_code(&self) -> u8 {
        use uqmon_core::Error as C;
        match self {
            Error::Config(_) | Error::Core(C::Config(_) | C::DisregardedRate(_)) => 2,
            Error::Io { .. } | Error::Missing { .. } => 3,
            Error::Format { .. } => 4,
            Error::Stale(_) => 5,
            Error::Core(C::Fit(_) | C::Degenerate(_) | C::InsufficientData(_)) => 6,
            Error::Core(C::TrainingDiverged { .. }) => 7,
            Error::Core(_) => 8,
        }
    }
}
