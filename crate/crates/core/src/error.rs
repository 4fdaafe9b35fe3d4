use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("face {nodes:?} is shared by more than two elements (non-manifold input)")]
    DuplicateFace { nodes: [u32; 3] },

    #[error("element {element} is degenerate (|volume| = {volume:e} <= {threshold:e})")]
    DegenerateElement {
        element: usize,
        volume: f64,
        threshold: f64,
    },

    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("{path}:{line}: node index {index} out of range (have {count} nodes)")]
    IndexOutOfRange {
        path: PathBuf,
        line: usize,
        index: i64,
        count: usize,
    },

    #[error("mesh has no boundary faces")]
    EmptyBoundary,

    #[error("parameter out of range: {0}")]
    ParamOutOfRange(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
