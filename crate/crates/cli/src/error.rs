use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = CliError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{origin}:{line}: {message}")]
    ConfigSyntax {
        origin: String,
        line: usize,
        message: String,
    },
    #[error("config key {key}: {message}")]
    ConfigValue { key: String, message: String },
    #[error("{what} not found: {}", path.display())]
    MissingInput { what: &'static str, path: PathBuf },
    #[error("{0}")]
    Invalid(String),
    #[error("{context}: {source}")]
    At {
        context: String,
        #[source]
        source: nowcast_core::Error,
    },
    #[error(transparent)]
    Core(#[from] nowcast_core::Error),
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

/// Attaches file/sample/frame context to core errors.
pub trait Context<T> {
    fn context(self, f: impl FnOnce() -> String) -> Result<T>;
}

impl<T> Context<T> for std::result::Result<T, nowcast_core::Error> {
    fn context(self, f: impl FnOnce() -> String) -> Result<T> {
        self.map_err(|source| CliError::At {
            context: f(),
            source,
        })
    }
}

pub(crate) fn io_err(path: impl Into<PathBuf>) -> impl FnOnce(std::io::Error) -> CliError {
    let path = path.into();
    move |source| CliError::Io { path, source }
}
