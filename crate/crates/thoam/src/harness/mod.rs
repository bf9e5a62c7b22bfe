//! Experiment orchestration: configuration, dataset generation, training,
//! evaluation, the modality-subset ablation, the fusion comparison, and
//! gradient checking.
//!
//! Every command is a library function; the CLI binary is a thin wrapper
//! mapping errors to exit codes (0 success, 1 validation error, 2 runtime
//! failure, 3 gradient-check failure). Report payloads never contain
//! timestamps, so a command re-run with the same config and seed writes
//! byte-identical files.

mod ablate;
mod augment;
pub mod config;
mod dataset;
mod eval;
mod gradcheck;
mod train;

use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::data::{synth, DataError};

pub use ablate::{cmd_ablate, cmd_compare_fusion, TableReport, VariantRow};
pub use augment::augment;
pub use config::{AugmentConfig, ExperimentConfig, Overrides};
pub use eval::{cmd_eval, RunReport, SplitSide};
pub use gradcheck::{cmd_gradcheck, GradCheckReport, GRADCHECK_EPS, GRADCHECK_THRESHOLD};
pub use train::{cmd_train, EpochLog, TrainOutcome};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum HarnessError {
    #[error("validation error: {0}")]
    Validation(String),
    #[error("runtime failure: {0}")]
    Runtime(String),
    #[error("gradient check failed: max relative error {max_rel_error:e}")]
    GradCheck { max_rel_error: f64 },
}

impl HarnessError {
    /// CLI exit code contract.
    pub fn exit_code(&self) -> i32 {
        match self {
            HarnessError::Validation(_) => 1,
            HarnessError::Runtime(_) => 2,
            HarnessError::GradCheck { .. } => 3,
        }
    }
}

impl From<DataError> for HarnessError {
    fn from(e: DataError) -> Self {
        match e {
            // I/O problems are runtime failures; everything else is a
            // schema/contract violation.
            DataError::Io { .. } => HarnessError::Runtime(e.to_string()),
            _ => HarnessError::Validation(e.to_string()),
        }
    }
}

/// Generate the synthetic dataset into the configured dataset directory
/// (seeded by the global config seed) and return the manifest path.
pub fn cmd_generate(cfg: &ExperimentConfig) -> Result<PathBuf, HarnessError> {
    cfg.validate()?;
    let mut synth_cfg = cfg.synth.clone();
    synth_cfg.seed = cfg.seed;
    let manifest = synth::generate(&synth_cfg, &cfg.dataset)?;
    Ok(manifest)
}

pub(crate) fn write_text(path: &Path, text: &str) -> Result<(), HarnessError> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent)
            .map_err(|e| HarnessError::Runtime(format!("cannot create {}: {e}", parent.display())))?;
    }
    std::fs::write(path, text)
        .map_err(|e| HarnessError::Runtime(format!("cannot write {}: {e}", path.display())))
}
