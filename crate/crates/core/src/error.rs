use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("parse error in {path} line {line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("validation error: {0}")]
    Validation(String),

    #[error("invalid argument: {0}")]
    Argument(String),

    #[error("word not in lexicon and no fallback configured: {0:?}")]
    OutOfVocabulary(String),

    #[error("provider error{}: {message}", fmt_indices(.indices))]
    Provider { indices: Vec<usize>, message: String },

    #[error("unparseable model output ({message}): {raw:?}")]
    Format { message: String, raw: String },

    #[error("estimation error: {0}")]
    Estimation(String),

    #[error("training diverged at epoch {epoch}: loss {loss}")]
    TrainingDivergence { epoch: usize, loss: f64 },

    #[error("degenerate variance: {0}")]
    DegenerateVariance(String),

    #[error("computation error: {0}")]
    Computation(String),

    #[error("corrupt cache entry {path} line {line}: {message}")]
    CacheCorruption {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("run aborted after {completed} of {total} items: {message}")]
    Aborted {
        completed: usize,
        total: usize,
        message: String,
    },

    #[error("manifest is invalid:\n{}", .0.join("\n"))]
    Manifest(Vec<String>),
}

fn fmt_indices(indices: &[usize]) -> String {
    if indices.is_empty() {
        String::new()
    } else {
        format!(" (items {indices:?})")
    }
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn parse(path: impl Into<PathBuf>, line: usize, message: impl Into<String>) -> Self {
        Error::Parse {
            path: path.into(),
            line,
            message: message.into(),
        }
    }

    pub(crate) fn provider(indices: Vec<usize>, message: impl Into<String>) -> Self {
        Error::Provider {
            indices,
            message: message.into(),
        }
    }
}
