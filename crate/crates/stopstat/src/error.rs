use std::path::PathBuf;

/// Crate-wide error type.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// Network-level failure while talking to a feed endpoint. Safe to retry;
    /// the poll loop records these per batch and keeps going.
    #[error("feed fetch failed: {0}")]
    Fetch(String),

    /// The payload was not valid JSON for the documented feed schema.
    #[error("malformed payload at byte {offset} (line {line}, column {column}): {message}")]
    Parse {
        message: String,
        offset: usize,
        line: usize,
        column: usize,
    },

    /// A schema-valid feed entry violated a field invariant (coordinate
    /// bounds, empty vehicle id, non-positive fix time).
    #[error("invalid feed entry {index}: {message}")]
    InvalidEntry { index: usize, message: String },

    /// An argument outside an operation's domain (empty input, k > N, ...).
    #[error("{0}")]
    Domain(String),

    /// Point set cannot support the requested geometry (all points collinear
    /// or coincident, zero-area region).
    #[error("degenerate geometry: {0}")]
    DegenerateGeometry(String),

    /// Two inputs that must agree by key (stop id) do not.
    #[error("inconsistent inputs: {0}")]
    Consistency(String),

    /// Bad configuration value or file.
    #[error("invalid configuration: {0}")]
    Config(String),

    /// A pipeline stage failed; carries the stage name for the exit message.
    #[error("stage '{stage}' failed: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Tag an error with the pipeline stage (or CLI verb) it came from.
    pub fn stage(stage: &'static str, source: Error) -> Self {
        Error::Stage {
            stage,
            source: Box::new(source),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
