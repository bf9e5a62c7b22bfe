//! Ablation over modality subsets and the fusion-kind comparison. Every
//! variant trains under the same seed, split, and schedule; only the
//! modality set or fusion head differs.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::fusion::FusionKind;
use crate::ModalitySet;

use super::config::ExperimentConfig;
use super::eval::{cmd_eval, SplitSide};
use super::train::cmd_train;
use super::{write_text, HarnessError};

/// One trained-and-evaluated variant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VariantRow {
    pub variant: String,
    pub accuracy: f64,
    pub macro_auc: Option<f64>,
}

/// JSON payload of a comparison table, carrying the resolved config like
/// every other emitted report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableReport {
    pub tool_version: String,
    pub config: ExperimentConfig,
    pub rows: Vec<VariantRow>,
}

impl TableReport {
    fn new(cfg: &ExperimentConfig, rows: &[VariantRow]) -> Self {
        TableReport {
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            config: cfg.clone(),
            rows: rows.to_vec(),
        }
    }
}

fn run_variant(cfg: &ExperimentConfig, tag: &str) -> Result<VariantRow, HarnessError> {
    let outcome = cmd_train(cfg)?;
    let run = cmd_eval(cfg, &outcome.final_checkpoint, SplitSide::Test)?;
    Ok(VariantRow {
        variant: tag.to_string(),
        accuracy: run.report.accuracy,
        macro_auc: run.report.macro_auc,
    })
}

fn rows_csv(header: &str, rows: &[VariantRow]) -> String {
    let mut out = format!("{header},accuracy,macro_auc\n");
    for row in rows {
        let auc = row.macro_auc.map_or(String::new(), |a| format!("{a}"));
        writeln!(out, "{},{},{}", row.variant, row.accuracy, auc).expect("write");
    }
    out
}

/// Train and evaluate all seven non-empty modality subsets with a shared
/// seed and schedule. Returns one row per subset, unimodal first,
/// tri-modal last; also writes `ablation.json` and `ablation.csv`.
pub fn cmd_ablate(cfg: &ExperimentConfig) -> Result<Vec<VariantRow>, HarnessError> {
    cfg.validate()?;
    let mut rows = Vec::with_capacity(7);
    for subset in ModalitySet::all_non_empty() {
        let mut sub_cfg = cfg.clone();
        sub_cfg.model.modalities = subset;
        sub_cfg.model.fusion = FusionKind::Thoam;
        sub_cfg.out = cfg.out.join("ablate").join(subset.tag());
        rows.push(run_variant(&sub_cfg, &subset.label())?);
    }
    write_text(
        &cfg.out.join("ablation.json"),
        &serde_json::to_string_pretty(&TableReport::new(cfg, &rows)).expect("rows serialize"),
    )?;
    write_text(&cfg.out.join("ablation.csv"), &rows_csv("modalities", &rows))?;
    Ok(rows)
}

/// Train and evaluate the attention fusion against plain concatenation on
/// the full tri-modal input; writes `comparison.json` and `comparison.csv`.
pub fn cmd_compare_fusion(cfg: &ExperimentConfig) -> Result<Vec<VariantRow>, HarnessError> {
    cfg.validate()?;
    let mut rows = Vec::with_capacity(2);
    for (kind, tag) in [(FusionKind::Concat, "concat"), (FusionKind::Thoam, "thoam")] {
        let mut sub_cfg = cfg.clone();
        sub_cfg.model.modalities = ModalitySet::ALL;
        sub_cfg.model.fusion = kind;
        sub_cfg.out = cfg.out.join("fusion").join(tag);
        rows.push(run_variant(&sub_cfg, tag)?);
    }
    write_text(
        &cfg.out.join("comparison.json"),
        &serde_json::to_string_pretty(&TableReport::new(cfg, &rows)).expect("rows serialize"),
    )?;
    write_text(&cfg.out.join("comparison.csv"), &rows_csv("fusion", &rows))?;
    Ok(rows)
}
