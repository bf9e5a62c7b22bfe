//! Full-pipeline gradient verification: every encoder, both attention
//! stages, the decoder, and the loss, checked against central finite
//! differences on a small fixed instance.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::encoders::ImageSlice;
use crate::fusion::FusionKind;
use crate::model::{BatchInputs, ModelConfig, ThoamModel};
use crate::preprocess::TABULAR_DIM;
use crate::tensor::{grad_check, Tensor};
use crate::ModalitySet;

use super::HarnessError;

/// Relative-error threshold for a passing gradient check.
pub const GRADCHECK_THRESHOLD: f64 = 1e-4;
/// Central-difference step.
pub const GRADCHECK_EPS: f64 = 1e-5;
const COORDS_PER_PARAM: usize = 40;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    pub threshold: f64,
    pub parameters: usize,
    pub passed: bool,
}

/// Run the gradient check on a fixed seeded instance: a tri-modal model
/// with C = 8, T = 2 over a batch of 3 cases (8x8 slices, full tabular
/// rows, short token lists). Returns the report; `Err(GradCheck)` when the
/// error exceeds the threshold.
pub fn cmd_gradcheck() -> Result<GradCheckReport, HarnessError> {
    let config = ModelConfig {
        channels: 8,
        tokens: 2,
        token_dim: 4,
        vocab: 16,
        modalities: ModalitySet::ALL,
        fusion: FusionKind::Thoam,
    };
    let model = ThoamModel::init(config, 0xC0FFEE).map_err(|e| HarnessError::Runtime(e.to_string()))?;
    let mut rng = ChaCha8Rng::seed_from_u64(0xC0FFEE);
    rng.set_stream(2);

    let images: Vec<ImageSlice> = (0..3)
        .map(|_| {
            ImageSlice::new(8, 8, (0..64).map(|_| rng.gen_range(0..=255u8)).collect())
                .expect("8x8 is valid")
        })
        .collect();
    let tabular = Tensor::new(
        vec![3, TABULAR_DIM],
        (0..3 * TABULAR_DIM).map(|_| rng.gen_range(-1.5..1.5)).collect(),
    )
    .expect("shape matches");
    // Token lists that touch a spread of embedding rows, one empty.
    let tokens: Vec<Vec<usize>> = vec![vec![0, 3, 7, 11], vec![15, 2, 2], vec![5]];
    let labels = vec![1usize, 4, 0];

    let params: Vec<Tensor> = model.params().into_iter().cloned().collect();
    let parameters = params.len();
    let max_rel_error = grad_check(
        move |g, ids| {
            let leaves = model.leaves_from_ids(ids);
            let logits = model
                .forward(
                    g,
                    &leaves,
                    &BatchInputs {
                        images: Some(&images),
                        tabular: Some(&tabular),
                        tokens: Some(&tokens),
                    },
                )
                .map_err(|e| match e {
                    crate::model::ModelError::Tensor(t) => t,
                    other => panic!("unexpected forward error during gradcheck: {other}"),
                })?;
            g.cross_entropy(logits, &labels)
        },
        &params,
        GRADCHECK_EPS,
        COORDS_PER_PARAM,
    )
    .map_err(|e| HarnessError::Runtime(e.to_string()))?;

    let report = GradCheckReport {
        max_rel_error,
        threshold: GRADCHECK_THRESHOLD,
        parameters,
        passed: max_rel_error < GRADCHECK_THRESHOLD,
    };
    if report.passed {
        Ok(report)
    } else {
        Err(HarnessError::GradCheck {
            max_rel_error: report.max_rel_error,
        })
    }
}
