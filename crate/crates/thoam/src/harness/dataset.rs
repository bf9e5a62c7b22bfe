//! Shared dataset preparation for training and evaluation: resolve a split
//! side to cases with loaded slices, transformed tabular vectors, and token
//! lists.

use std::collections::HashSet;
use std::path::Path;

use crate::data::{pgm, CaseRecord};
use crate::encoders::{tokenize, ImageSlice};
use crate::preprocess::{transform, PreprocessStats, TABULAR_DIM};

use super::HarnessError;

pub struct PreparedCase {
    pub id: String,
    pub label: usize,
    /// Loaded slices; empty when the model has no visual modality.
    pub images: Vec<ImageSlice>,
    /// Number of slices the case declares (independent of image loading).
    pub slice_count: usize,
    pub tabular: [f64; TABULAR_DIM],
    pub tokens: Vec<usize>,
}

/// Prepare the cases whose ids are in `selected`, preserving record order.
pub fn prepare_cases(
    records: &[CaseRecord],
    selected: &HashSet<&str>,
    dataset_dir: &Path,
    stats: &PreprocessStats,
    vocab: usize,
    load_images: bool,
) -> Result<Vec<PreparedCase>, HarnessError> {
    let mut out = Vec::with_capacity(selected.len());
    for record in records {
        if !selected.contains(record.id.as_str()) {
            continue;
        }
        let images = if load_images {
            record
                .images
                .iter()
                .map(|rel| pgm::read(&dataset_dir.join(rel)))
                .collect::<Result<Vec<_>, _>>()
                .map_err(HarnessError::from)?
        } else {
            Vec::new()
        };
        out.push(PreparedCase {
            id: record.id.clone(),
            label: record.label.index(),
            images,
            slice_count: record.images.len(),
            tabular: transform(&record.tabular, stats),
            tokens: tokenize(&record.report, vocab),
        });
    }
    Ok(out)
}
