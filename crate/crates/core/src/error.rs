use std::path::PathBuf;

use crate::scene::GaussianScene;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),

    #[error("I/O error on {path}: {source}")]
    IoAt {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    /// Malformed file layout (PLY header, PNG, PFM, JSON schema).
    #[error("format error: {0}")]
    Format(String),

    /// Non-finite or otherwise invalid value at a specific element.
    #[error("data error at index {index}: {message}")]
    Data { index: usize, message: String },

    #[error("parameter error: {0}")]
    Parameter(String),

    /// Every editing mask is empty; nothing to inpaint.
    #[error("empty editing region: the box does not project into any view")]
    EmptyEditingRegion,

    /// Service unreachable, timed out or answered 5xx. Retriable.
    #[error("transport error after {attempts} attempt(s): {message}")]
    Transport { attempts: u32, message: String },

    /// Service answered, but the payload violates the wire protocol.
    #[error("protocol error: {0}")]
    Protocol(String),

    #[error("training diverged at iteration {iteration}: {message}")]
    Divergence {
        iteration: usize,
        message: String,
        /// Last scene state with finite parameters.
        checkpoint: Box<GaussianScene>,
    },

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn is_retriable(&self) -> bool {
        matches!(self, Error::Transport { .. })
    }

    pub(crate) fn io_at(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::IoAt {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn param(msg: impl Into<String>) -> Self {
        Error::Parameter(msg.into())
    }
}
