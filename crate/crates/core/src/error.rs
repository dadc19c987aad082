use std::path::PathBuf;

/// Errors raised by the separation pipeline.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid signal: {0}")]
    InvalidSignal(String),
    #[error("invalid warping function: {0}")]
    InvalidWarping(String),
    #[error("domain error: {0}")]
    Domain(String),
    #[error("invalid spectrum: {0}")]
    InvalidSpectrum(String),
    #[error("ill-conditioned mixing at frame {frame}: condition number {condition:.3e} exceeds cap {cap:.3e}")]
    IllConditionedMixing { frame: usize, condition: f64, cap: f64 },
    #[error("configuration error: {0}")]
    Config(String),
    #[error("singular unmixing matrix: {0}")]
    SingularUnmixing(String),
    #[error("singular matrix: {0}")]
    SingularMatrix(String),
    #[error("numerical error: {0}")]
    Numerical(String),
    #[error("degenerate input: {0}")]
    DegenerateInput(String),
    #[error("degenerate reference: {0}")]
    DegenerateReference(String),
    #[error("evaluation error in {path}: {message}")]
    Eval { path: PathBuf, message: String },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {message}")]
    Format { path: PathBuf, message: String },
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }

    pub(crate) fn format(path: impl Into<PathBuf>, message: impl ToString) -> Self {
        Error::Format { path: path.into(), message: message.to_string() }
    }
}
