use std::path::PathBuf;

/// Errors produced by the harness.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("load error: {0}")]
    Load(String),
    #[error("integrity error: {0}")]
    Integrity(String),
    #[error("format error: {0}")]
    Format(String),
    #[error("config error: {0}")]
    Config(String),
    #[error("AUC undefined: labels contain a single class")]
    UndefinedAuc,
    #[error("scoring error: {0}")]
    Scoring(String),
    #[error("ordering error: timestamp {next} does not follow {last}")]
    Ordering { last: f64, next: f64 },
    #[error("checkpoint error: {0}")]
    Checkpoint(String),
    #[error("training diverged: non-finite loss at batch {batch}")]
    Divergence {
        batch: usize,
        /// Serialized checkpoint of the last parameters that produced a finite loss.
        last_good: Option<Box<crate::trainer::Checkpoint>>,
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
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
