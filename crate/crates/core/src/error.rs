use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("hdf5 error in {path}: {message}")]
    Hdf5 { path: PathBuf, message: String },

    #[error("format error: {0}")]
    Format(String),

    #[error("invalid argument: {0}")]
    Argument(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("degenerate data: {0}")]
    DegenerateData(String),

    #[error("degenerate prototype for beam {beam}: zero norm")]
    DegeneratePrototype { beam: u8 },

    #[error("cannot sample beam {beam}: need {needed} blocks, have {available}")]
    Sampling { beam: u8, needed: usize, available: usize },

    #[error("non-finite loss at episode {episode} (episode seed {episode_seed:#018x}, parameter norm {param_norm:e})")]
    NonFiniteLoss {
        episode: usize,
        episode_seed: u64,
        param_norm: f64,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn hdf5(path: impl Into<PathBuf>, err: impl std::fmt::Display) -> Self {
        Error::Hdf5 {
            path: path.into(),
            message: err.to_string(),
        }
    }

    /// Process exit code: 2 config, 3 data, 4 numeric abort.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::Argument(_) => 2,
            Error::Io { .. }
            | Error::Hdf5 { .. }
            | Error::Format(_)
            | Error::DegenerateData(_)
            | Error::Sampling { .. } => 3,
            Error::DegeneratePrototype { .. } | Error::NonFiniteLoss { .. } => 4,
        }
    }
}
