//! Crate-wide error type.
//!
//! Recoverable conditions (I/O, malformed files, bad configuration) surface
//! as [`Error`]. Contract violations — shape mismatches, negative entries
//! where nonnegativity is required, an ego missing from a labeling — are
//! programmer errors and panic with a descriptive message instead.

use std::path::PathBuf;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("{path}:{line}: parse error: {msg}")]
    Parse {
        path: PathBuf,
        line: usize,
        msg: String,
    },

    #[error("{path}:{line}: duplicate record for frame {frame}, pedestrian {ped}")]
    DuplicateRecord {
        path: PathBuf,
        line: usize,
        frame: i64,
        ped: i64,
    },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error("{path}: {source}")]
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

    pub(crate) fn parse(path: impl Into<PathBuf>, line: usize, msg: impl Into<String>) -> Self {
        Error::Parse {
            path: path.into(),
            line,
            msg: msg.into(),
        }
    }
}
