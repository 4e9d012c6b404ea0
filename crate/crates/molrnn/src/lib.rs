//! Command-line tools around `molrnn-core`: run configuration, the binary
//! dataset cache and checkpoint formats, the external-critic client and a
//! worker pool for sampling and gradients.

mod binio;
pub mod commands;
pub mod config;
pub mod external;
pub mod formats;
pub mod report;
pub mod workers;

use std::path::PathBuf;

pub use binio::fnv1a64;
pub use config::{ConfigError, RunConfig};

#[derive(Debug, thiserror::Error)]
pub enum FormatError {
    #[error("not a {0} file")]
    Magic(&'static str),
    #[error("{kind} format version {found} is not supported (this build reads version {expected})")]
    Version {
        kind: &'static str,
        found: u16,
        expected: u16,
    },
    #[error("checksum mismatch; the file is truncated or corrupt")]
    Checksum,
    #[error("file ends early")]
    Truncated,
    #[error("corrupt file: {0}")]
    Corrupt(String),
    #[error("embedded config: {0}")]
    Config(#[from] ConfigError),
}

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{}: {source}", path.display())]
    Format { path: PathBuf, source: FormatError },
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("{}:{line}: {message}", path.display())]
    Input { path: PathBuf, line: usize, message: String },
    #[error("{0}")]
    Mismatch(String),
    #[error("{0}")]
    Empty(String),
    #[error("critic: {0}")]
    Critic(String),
    #[error("model: {0}")]
    Model(String),
    #[error(transparent)]
    External(#[from] external::ExternalError),
    #[error(transparent)]
    Rl(#[from] molrnn_core::rl::RlError),
}

impl From<molrnn_core::model::ModelError> for Error {
    fn from(e: molrnn_core::model::ModelError) -> Self {
        Error::Model(e.to_string())
    }
}
