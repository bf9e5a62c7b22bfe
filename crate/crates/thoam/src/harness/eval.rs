//! The evaluation command: case-level predictions by mean slice
//! probability, full metric report, and JSON/CSV emission.

use std::collections::HashSet;
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::data::{load_manifest, SplitSpec, TumorClass};
use crate::fusion::predict;
use crate::metrics::EvalReport;
use crate::model::{BatchInputs, ThoamModel};
use crate::preprocess::{PreprocessStats, TABULAR_DIM};
use crate::tensor::{Graph, Tensor};
use crate::NUM_CLASSES;

use super::config::ExperimentConfig;
use super::dataset::{prepare_cases, PreparedCase};
use super::{write_text, HarnessError};

/// Which side of the split to evaluate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SplitSide {
    Train,
    Test,
}

impl SplitSide {
    pub fn name(&self) -> &'static str {
        match self {
            SplitSide::Train => "train",
            SplitSide::Test => "test",
        }
    }
}

/// Evaluation payload with the resolved configuration embedded; serialized
/// as `report.json`. Payloads carry no timestamps, so identical runs emit
/// identical bytes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub tool_version: String,
    pub config: ExperimentConfig,
    pub split_side: SplitSide,
    pub cases: usize,
    pub report: EvalReport,
}

/// Evaluate a checkpoint on one side of the stored split. The split and
/// fitted statistics are read from the checkpoint's directory (written
/// there by the train command).
pub fn cmd_eval(
    cfg: &ExperimentConfig,
    checkpoint: &Path,
    side: SplitSide,
) -> Result<RunReport, HarnessError> {
    cfg.validate()?;
    let model = ThoamModel::load(checkpoint).map_err(|e| HarnessError::Validation(e.to_string()))?;
    if model.config != cfg.model_config() {
        return Err(HarnessError::Validation(format!(
            "checkpoint/config mismatch: checkpoint was trained with {:?}, config requests {:?}",
            model.config,
            cfg.model_config()
        )));
    }
    let run_dir = checkpoint.parent().unwrap_or_else(|| Path::new("."));
    let split = SplitSpec::load(&run_dir.join("split.json"))?;
    let stats: PreprocessStats = {
        let path = run_dir.join("stats.json");
        let text = std::fs::read_to_string(&path).map_err(|e| {
            HarnessError::Validation(format!("cannot read {}: {e}", path.display()))
        })?;
        serde_json::from_str(&text)
            .map_err(|e| HarnessError::Validation(format!("bad stats {}: {e}", path.display())))?
    };

    let records = load_manifest(&cfg.manifest_path())?;
    let ids: HashSet<&str> = match side {
        SplitSide::Train => split.train.iter().map(String::as_str).collect(),
        SplitSide::Test => split.test.iter().map(String::as_str).collect(),
    };
    if ids.is_empty() {
        return Err(HarnessError::Validation(format!(
            "{} split is empty",
            side.name()
        )));
    }
    let cases = prepare_cases(
        &records,
        &ids,
        &cfg.dataset,
        &stats,
        model.config.vocab,
        model.config.modalities.visual,
    )?;

    let mut labels = Vec::with_capacity(cases.len());
    let mut preds = Vec::with_capacity(cases.len());
    let mut scores = Vec::with_capacity(cases.len());
    let mut case_rows = String::from("id,label,predicted,confidence\n");
    for case in &cases {
        let probs = case_probabilities(&model, case)?;
        let mut class = 0;
        for (k, p) in probs.iter().enumerate() {
            if *p > probs[class] {
                class = k;
            }
        }
        writeln!(
            case_rows,
            "{},{},{},{}",
            case.id,
            TumorClass::from_index(case.label).expect("valid label").name(),
            TumorClass::from_index(class).expect("valid class").name(),
            probs[class]
        )
        .expect("write");
        labels.push(case.label);
        preds.push(class);
        scores.push(probs);
    }
    write_text(&cfg.out.join("predictions.csv"), &case_rows)?;
    let report = EvalReport::compute(&labels, &preds, &scores, &TumorClass::names())
        .map_err(|e| HarnessError::Runtime(e.to_string()))?;
    let run = RunReport {
        tool_version: env!("CARGO_PKG_VERSION").to_string(),
        config: cfg.clone(),
        split_side: side,
        cases: cases.len(),
        report,
    };
    write_report_files(&cfg.out, &run)?;
    Ok(run)
}

/// Mean of the per-slice probability vectors (a single forward pass when
/// the model has no visual modality).
fn case_probabilities(model: &ThoamModel, case: &PreparedCase) -> Result<Vec<f64>, HarnessError> {
    let subset = model.config.modalities;
    let n = if subset.visual { case.images.len() } else { 1 };
    let tabular = Tensor::new(
        vec![n, TABULAR_DIM],
        case.tabular.iter().copied().cycle().take(n * TABULAR_DIM).collect(),
    )
    .map_err(|e| HarnessError::Runtime(e.to_string()))?;
    let tokens: Vec<Vec<usize>> = std::iter::repeat(case.tokens.clone()).take(n).collect();
    let mut g = Graph::new();
    let leaves = model.leaves(&mut g);
    let logits = model
        .forward(
            &mut g,
            &leaves,
            &BatchInputs {
                images: subset.visual.then_some(case.images.as_slice()),
                tabular: subset.tabular.then_some(&tabular),
                tokens: subset.linguistic.then_some(tokens.as_slice()),
            },
        )
        .map_err(|e| HarnessError::Runtime(e.to_string()))?;
    let slice_preds = predict(g.value(logits)).map_err(|e| HarnessError::Runtime(e.to_string()))?;
    let mut mean = vec![0.0; NUM_CLASSES];
    for p in &slice_preds {
        for (m, v) in mean.iter_mut().zip(&p.probabilities) {
            *m += v;
        }
    }
    for m in &mut mean {
        *m /= slice_preds.len() as f64;
    }
    Ok(mean)
}

fn write_report_files(out: &Path, run: &RunReport) -> Result<(), HarnessError> {
    write_text(
        &out.join("report.json"),
        &serde_json::to_string_pretty(run).expect("report serializes"),
    )?;
    // ROC points, one row per threshold per class.
    let mut roc = String::from("class,threshold,fpr,tpr\n");
    for curve in &run.report.roc {
        for p in &curve.points {
            let threshold = if p.threshold.is_infinite() {
                "inf".to_string()
            } else {
                format!("{}", p.threshold)
            };
            writeln!(roc, "{},{},{},{}", curve.class, threshold, p.fpr, p.tpr).expect("write");
        }
    }
    write_text(&out.join("roc.csv"), &roc)?;

    let names = TumorClass::names();
    let header = format!("true\\pred,{}\n", names.join(","));
    let mut raw = header.clone();
    for (i, row) in run.report.confusion.iter().enumerate() {
        let cells: Vec<String> = row.iter().map(|c| c.to_string()).collect();
        writeln!(raw, "{},{}", names[i], cells.join(",")).expect("write");
    }
    write_text(&out.join("confusion.csv"), &raw)?;

    let mut norm = header;
    for (i, row) in run.report.confusion_row_normalized.rows.iter().enumerate() {
        let cells: Vec<String> = row.iter().map(|c| format!("{c}")).collect();
        writeln!(norm, "{},{}", names[i], cells.join(",")).expect("write");
    }
    write_text(&out.join("confusion_row_normalized.csv"), &norm)?;
    Ok(())
}
