use std::path::PathBuf;

/// Unified error type for the crate.
///
/// Soft per-row problems in input data are *not* errors; they end up as
/// rejection counters in a `ValidationReport`. `Error` is reserved for
/// conditions that abort a run.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("configuration: {0}")]
    Config(String),

    /// Structurally broken input that cannot be skipped, e.g. a header row
    /// missing a required column.
    #[error("input format: {0}")]
    Format(String),

    /// An API was called outside its contract (mixed patients in a pair
    /// classification, empty census window, ...).
    #[error("contract violation: {0}")]
    Contract(String),

    /// No accepted records (or no surviving nodes) left to work with.
    #[error("empty result: {0}")]
    Empty(String),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }
}
