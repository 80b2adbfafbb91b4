//! Run orchestration: ingestion into a run directory, question replay under
//! the online constraint, policy comparison and synthetic stream generation.

use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::Serialize;
use thiserror::Error;

use crate::error::{BackendError, ConfigError, FrameError, LtmError, MemoryError};

pub mod config;
pub mod pipeline;
pub mod questions;
pub mod report;
pub mod run;
pub mod synthetic;

pub use config::{parse_boundary_policy, IngestConfig};
pub use pipeline::{MemoryPipeline, RunCheckpoint, StreamCursor};
pub use questions::{load_questions, QuestionItem, QuestionOption};
pub use report::{ComparisonReport, MemoryStats, QuestionResult, RunReport};
pub use run::{
    compare, ingest, replay, replay_frames, stats, IngestStats, PolicySource, ReplayOptions,
};
pub use synthetic::{generate, write_synthetic, GroundTruth, SceneSpec, SyntheticSpec};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("{0}")]
    Data(String),
    #[error(transparent)]
    Frame(#[from] FrameError),
    #[error(transparent)]
    Memory(#[from] MemoryError),
    #[error(transparent)]
    Ltm(#[from] LtmError),
    #[error(transparent)]
    Backend(#[from] BackendError),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl HarnessError {
    /// Process exit code: 1 config, 2 data, 3 backend.
    pub fn exit_code(&self) -> i32 {
        match self {
            HarnessError::Config(_) => 1,
            HarnessError::Backend(_) => 3,
            _ => 2,
        }
    }

    pub(crate) fn io(path: &Path) -> impl FnOnce(std::io::Error) -> HarnessError + '_ {
        move |source| HarnessError::Io {
            path: path.to_path_buf(),
            source,
        }
    }
}

pub(crate) fn write_json<T: Serialize + ?Sized>(
    path: &Path,
    value: &T,
) -> Result<(), HarnessError> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent).map_err(HarnessError::io(parent))?;
    }
    let mut text =
        serde_json::to_string_pretty(value).map_err(|e| HarnessError::Data(e.to_string()))?;
    text.push('\n');
    std::fs::write(path, text).map_err(HarnessError::io(path))
}

pub(crate) fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T, HarnessError> {
    let text = std::fs::read_to_string(path).map_err(HarnessError::io(path))?;
    serde_json::from_str(&text).map_err(|e| HarnessError::Data(format!("{}: {e}", path.display())))
}
