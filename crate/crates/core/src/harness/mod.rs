//! Experiment harness: configuration, data collection, classifier training,
//! the open- versus closed-loop comparison, and trace I/O.

pub mod config;
pub mod demo;
pub mod experiment;
pub mod records;
pub mod stats;

use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::classifier::ClassifierError;
use crate::control::ControlError;
use crate::dmp::DmpError;
use crate::world::WorldError;

pub use config::ExperimentConfig;
pub use experiment::{Experiment, RunSummary};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("malformed data: {0}")]
    Data(String),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Dmp(#[from] DmpError),
    #[error(transparent)]
    World(#[from] WorldError),
    #[error(transparent)]
    Classifier(#[from] ClassifierError),
    #[error(transparent)]
    Control(#[from] ControlError),
}

impl HarnessError {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        Self::Io {
            path: path.to_path_buf(),
            source,
        }
    }

    /// Process exit code: 2 invalid config, 3 convergence failure, 4 I/O.
    pub fn exit_code(&self) -> i32 {
        match self {
            HarnessError::Config(_) => 2,
            HarnessError::World(WorldError::NoConvergence { .. })
            | HarnessError::Control(ControlError::Aborted { .. })
            | HarnessError::Control(ControlError::World(WorldError::NoConvergence { .. })) => 3,
            HarnessError::Io { .. } | HarnessError::Csv(_) => 4,
            _ => 1,
        }
    }
}

/// Independent RNG streams within one master seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stream {
    Collect = 1,
    Compare = 2,
    Split = 3,
    Noise = 4,
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Seed for item `id` of `stream` under `master`.
pub fn derive_seed(master: u64, stream: Stream, id: u64) -> u64 {
    splitmix64(splitmix64(splitmix64(master) ^ stream as u64) ^ id)
}

/// Writes `contents` to `path`, creating parent directories.
pub fn write_file(path: &Path, contents: &str) -> Result<(), HarnessError> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent).map_err(|e| HarnessError::io(parent, e))?;
    }
    std::fs::write(path, contents).map_err(|e| HarnessError::io(path, e))
}

pub fn read_file(path: &Path) -> Result<String, HarnessError> {
    std::fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seeds_differ_across_streams_and_ids() {
        let a = derive_seed(7, Stream::Collect, 0);
        assert_eq!(a, derive_seed(7, Stream::Collect, 0));
        assert_ne!(a, derive_seed(7, Stream::Compare, 0));
        assert_ne!(a, derive_seed(7, Stream::Collect, 1));
        assert_ne!(a, derive_seed(8, Stream::Collect, 0));
    }

    #[test]
    fn exit_codes() {
        assert_eq!(HarnessError::Config("x".into()).exit_code(), 2);
        let nc = WorldError::NoConvergence {
            residual: 1.0,
            iterations: 200,
        };
        assert_eq!(HarnessError::World(nc).exit_code(), 3);
        let io = HarnessError::io(Path::new("x"), std::io::Error::other("boom"));
        assert_eq!(io.exit_code(), 4);
    }
}
