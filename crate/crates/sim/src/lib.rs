//! Simulation harness, configuration and burst file formats around
//! `beamsync-core`.

pub mod burst_io;
pub mod config;
pub mod harness;
pub mod selftest;

use std::path::PathBuf;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    #[error(transparent)]
    Core(#[from] beamsync_core::Error),

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    /// Process exit code: 2 configuration, 3 numerical, 4 I/O.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) => 2,
            Error::Core(e) if e.is_numerical() => 3,
            Error::Core(_) => 2,
            Error::Io { .. } | Error::Csv(_) => 4,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
