//! Dataset model: case records, JSON-Lines manifest I/O, and patient-level
//! stratified splitting.
//!
//! A case bundles one patient's label, image slice files, 10-field tabular
//! record, and report text. Manifests are one JSON object per line with the
//! field names `id`, `label`, `images`, `tabular`, `report`; image paths are
//! relative to the manifest's directory. Splits are case-atomic: all slices
//! of a case land on one side.

pub mod pgm;
pub mod synth;

use std::collections::HashSet;
use std::fmt;
use std::fs;
use std::io::Write;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::preprocess::TabularRecord;
use crate::NUM_CLASSES;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DataError {
    #[error("{path}: {message}")]
    Io { path: String, message: String },
    #[error("{path}:{line}: {detail}")]
    Manifest {
        path: String,
        line: usize,
        detail: String,
    },
    #[error("duplicate case id {id:?} at line {line}")]
    DuplicateId { id: String, line: usize },
    #[error("case {id}: image {image} not found")]
    MissingImage { id: String, image: String },
    #[error("case {id}: {detail}")]
    BadCase { id: String, detail: String },
    #[error("{path}: {detail}")]
    BadImage { path: String, detail: String },
    #[error("split ratio {0} must lie strictly between 0 and 1")]
    BadRatio(f64),
    #[error("class {class} has {cases} case(s); need at least 2 to split")]
    ClassTooSmall { class: String, cases: usize },
}

/// The six tumor classes, in fixed index order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TumorClass {
    MatureCysticTeratoma,
    EndometrioticCyst,
    SerousCystadenoma,
    MucinousCystadenoma,
    ThecomaFibroma,
    HighGradeSerousCarcinoma,
}

impl TumorClass {
    pub const ALL: [TumorClass; NUM_CLASSES] = [
        TumorClass::MatureCysticTeratoma,
        TumorClass::EndometrioticCyst,
        TumorClass::SerousCystadenoma,
        TumorClass::MucinousCystadenoma,
        TumorClass::ThecomaFibroma,
        TumorClass::HighGradeSerousCarcinoma,
    ];

    pub fn index(&self) -> usize {
        Self::ALL.iter().position(|c| c == self).expect("listed")
    }

    pub fn from_index(index: usize) -> Option<TumorClass> {
        Self::ALL.get(index).copied()
    }

    /// Manifest string form (snake_case).
    pub fn name(&self) -> &'static str {
        match self {
            TumorClass::MatureCysticTeratoma => "mature_cystic_teratoma",
            TumorClass::EndometrioticCyst => "endometriotic_cyst",
            TumorClass::SerousCystadenoma => "serous_cystadenoma",
            TumorClass::MucinousCystadenoma => "mucinous_cystadenoma",
            TumorClass::ThecomaFibroma => "thecoma_fibroma",
            TumorClass::HighGradeSerousCarcinoma => "high_grade_serous_carcinoma",
        }
    }

    pub fn names() -> Vec<String> {
        Self::ALL.iter().map(|c| c.name().to_string()).collect()
    }
}

impl fmt::Display for TumorClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// One patient case.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CaseRecord {
    pub id: String,
    pub label: TumorClass,
    /// Slice files, relative to the manifest directory. At least one.
    pub images: Vec<String>,
    pub tabular: TabularRecord,
    pub report: String,
}

impl CaseRecord {
    fn validate(&self) -> Result<(), String> {
        if self.images.is_empty() {
            return Err("case has no image slices".into());
        }
        self.tabular.validate().map_err(|e| e.to_string())
    }
}

/// Load and schema-validate a JSON-Lines manifest. Every image reference
/// must resolve relative to the manifest's directory.
pub fn load_manifest(path: &Path) -> Result<Vec<CaseRecord>, DataError> {
    let text = fs::read_to_string(path).map_err(|e| DataError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    })?;
    let dir = path.parent().unwrap_or_else(|| Path::new("."));
    let mut records = Vec::new();
    let mut seen = HashSet::new();
    for (lineno, line) in text.lines().enumerate() {
        let line_num = lineno + 1;
        if line.trim().is_empty() {
            continue;
        }
        let record: CaseRecord =
            serde_json::from_str(line).map_err(|e| DataError::Manifest {
                path: path.display().to_string(),
                line: line_num,
                detail: e.to_string(),
            })?;
        record.validate().map_err(|detail| DataError::Manifest {
            path: path.display().to_string(),
            line: line_num,
            detail: format!("case {}: {detail}", record.id),
        })?;
        if !seen.insert(record.id.clone()) {
            return Err(DataError::DuplicateId {
                id: record.id,
                line: line_num,
            });
        }
        for image in &record.images {
            if !dir.join(image).is_file() {
                return Err(DataError::MissingImage {
                    id: record.id,
                    image: image.clone(),
                });
            }
        }
        records.push(record);
    }
    Ok(records)
}

/// Write a manifest, one JSON object per line, in record order.
pub fn save_manifest(path: &Path, records: &[CaseRecord]) -> Result<(), DataError> {
    let io_err = |e: std::io::Error| DataError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    };
    let mut file = fs::File::create(path).map_err(io_err)?;
    for record in records {
        let line = serde_json::to_string(record).expect("case records serialize");
        writeln!(file, "{line}").map_err(io_err)?;
    }
    Ok(())
}

/// Patient-level train/test partition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub train: Vec<String>,
    pub test: Vec<String>,
    pub seed: u64,
    pub ratio: f64,
}

impl SplitSpec {
    pub fn save(&self, path: &Path) -> Result<(), DataError> {
        fs::write(path, serde_json::to_string_pretty(self).expect("serializes")).map_err(|e| {
            DataError::Io {
                path: path.display().to_string(),
                message: e.to_string(),
            }
        })
    }

    pub fn load(path: &Path) -> Result<Self, DataError> {
        let text = fs::read_to_string(path).map_err(|e| DataError::Io {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
        serde_json::from_str(&text).map_err(|e| DataError::Io {
            path: path.display().to_string(),
            message: e.to_string(),
        })
    }
}

/// Seeded, stratified, case-atomic split. Per class the case ids are
/// shuffled and `round(ratio·n)` of them (clamped so both sides stay
/// non-empty) go to the training side.
pub fn split_by_patient(
    records: &[CaseRecord],
    ratio: f64,
    seed: u64,
) -> Result<SplitSpec, DataError> {
    if !(ratio > 0.0 && ratio < 1.0) {
        return Err(DataError::BadRatio(ratio));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut train = Vec::new();
    let mut test = Vec::new();
    for class in TumorClass::ALL {
        let mut ids: Vec<&str> = records
            .iter()
            .filter(|r| r.label == class)
            .map(|r| r.id.as_str())
            .collect();
        if ids.is_empty() {
            continue;
        }
        if ids.len() < 2 {
            return Err(DataError::ClassTooSmall {
                class: class.name().to_string(),
                cases: ids.len(),
            });
        }
        ids.shuffle(&mut rng);
        let n = ids.len();
        let take = ((ratio * n as f64).round() as usize).clamp(1, n - 1);
        train.extend(ids[..take].iter().map(|s| s.to_string()));
        test.extend(ids[take..].iter().map(|s| s.to_string()));
    }
    Ok(SplitSpec {
        train,
        test,
        seed,
        ratio,
    })
}
