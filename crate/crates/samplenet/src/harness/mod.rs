//! Experiment orchestration: configuration, training drivers, evaluation,
//! ablation sweeps, compute profiling, and CSV reports.
//!
//! Every run is deterministic given `(config, seed)`: data, initialization,
//! batch order, and sampling strategies all draw from ChaCha streams derived
//! by purpose-tagged hashing, and every CSV row carries the build id, the
//! config hash, and the seed. Wall-clock timings go to a separate
//! `timing.csv` so `report.csv` stays byte-reproducible.

mod checkpoints;
mod config;
mod csv;
mod eval;
mod profile;
mod train;

pub use checkpoints::{load_sampler, load_task, save_sampler, save_task};
pub use config::{ExperimentConfig, ProfileKind, WeightLossKind};
pub use csv::{build_id, Provenance};
pub use eval::{
    ablate, eval_single, evaluate, AblateRow, EvalReport, EvalRow, SamplerSource, Strategy, Sweep,
};
pub use profile::{profile_report, write_profile_csv, ArchPreset, ProfileRow};
pub use train::{
    train_sampler, train_task, RegPair, SamplerEpochLog, SamplerTrainOutcome, TaskTrainOutcome,
};

use std::path::{Path, PathBuf};

#[derive(Debug, thiserror::Error)]
pub enum HarnessError {
    #[error("config: {0}")]
    Config(String),
    #[error(transparent)]
    Data(#[from] crate::data::DataError),
    #[error(transparent)]
    Network(#[from] crate::networks::NetworkError),
    #[error(transparent)]
    Autodiff(#[from] crate::autodiff::Error),
    #[error(transparent)]
    Projection(#[from] crate::projection::ProjectionError),
    #[error(transparent)]
    Geometry(#[from] crate::geometry::GeometryError),
    #[error("training diverged (non-finite loss) at epoch {epoch}")]
    Diverged { epoch: usize },
    #[error("incompatible checkpoint: {0}")]
    Incompatible(String),
    #[error("strategy {0} needs a sampler checkpoint")]
    MissingSampler(String),
    #[error("output directory {0} is locked by another run (remove .lock if stale)")]
    LockHeld(PathBuf),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, HarnessError>;

/// Purpose-tagged seed derivation (FNV-1a over the tag and parts).
pub fn stream_seed(tag: &str, parts: &[u64]) -> u64 {
    let mut h: u64 = 0xcbf29ce484222325;
    let mut eat = |byte: u8| {
        h ^= byte as u64;
        h = h.wrapping_mul(0x100000001b3);
    };
    for b in tag.bytes() {
        eat(b);
    }
    for part in parts {
        for b in part.to_le_bytes() {
            eat(b);
        }
    }
    h
}

/// Exclusive claim on an output directory via a `.lock` file, released on
/// drop. One experiment per directory.
pub struct OutputDir {
    path: PathBuf,
    lock: PathBuf,
}

impl OutputDir {
    pub fn claim(path: &Path) -> Result<Self> {
        std::fs::create_dir_all(path)?;
        let lock = path.join(".lock");
        match std::fs::OpenOptions::new()
            .write(true)
            .create_new(true)
            .open(&lock)
        {
            Ok(_) => Ok(OutputDir {
                path: path.to_path_buf(),
                lock,
            }),
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => {
                Err(HarnessError::LockHeld(path.to_path_buf()))
            }
            Err(e) => Err(e.into()),
        }
    }

    pub fn path(&self) -> &Path {
        &self.path
    }
}

impl Drop for OutputDir {
    fn drop(&mut self) {
        let _ = std::fs::remove_file(&self.lock);
    }
}

#[cfg(test)]
mod tests;
