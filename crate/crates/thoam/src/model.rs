//! The complete trainable model: per-modality encoders plus a fusion head,
//! with JSON checkpointing.
//!
//! Parameters are enumerated in one fixed, documented order (visual conv,
//! tabular dense, text embedding, fusion projections, decoder) that the
//! trainer's gradient collection and the optimizer's state rely on.
//! Checkpoints serialize every tensor with its shape header and round-trip
//! bit-exactly.

use std::fs;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::encoders::{
    self, EncodeError, EncoderParams, ImageSlice, TabularNodes, TextNodes, VisualNodes,
};
use crate::fusion::{
    fuse_subset, FusionError, FusionKind, FusionLeaves, FusionParams, ModalityFeatures,
    ThoamParams, TokenLayout,
};
use crate::tensor::{Graph, NodeId, Tensor, TensorError};
use crate::ModalitySet;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ModelError {
    #[error("invalid model config: {0}")]
    Config(String),
    #[error("batch is missing the {0} modality")]
    MissingModality(&'static str),
    #[error("modality batch sizes disagree: {0}")]
    BatchSize(String),
    #[error("checkpoint {path}: {detail}")]
    Checkpoint { path: String, detail: String },
    #[error(transparent)]
    Encode(#[from] EncodeError),
    #[error(transparent)]
    Fusion(#[from] FusionError),
    #[error(transparent)]
    Tensor(#[from] TensorError),
}

/// Structural hyperparameters identifying a model. Checkpoints carry this
/// and refuse to evaluate under a mismatched experiment config.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelConfig {
    /// Shared feature width C.
    pub channels: usize,
    /// Tokens per sample (T); `channels = tokens · token_dim`.
    pub tokens: usize,
    pub token_dim: usize,
    /// Hashed vocabulary size of the text encoder.
    pub vocab: usize,
    pub modalities: ModalitySet,
    pub fusion: FusionKind,
}

impl ModelConfig {
    pub fn validate(&self) -> Result<(), ModelError> {
        if self.modalities.is_empty() {
            return Err(ModelError::Config("modality set must not be empty".into()));
        }
        if self.channels == 0 || self.vocab == 0 {
            return Err(ModelError::Config("channels and vocab must be positive".into()));
        }
        if self.tokens < 2 {
            return Err(ModelError::Config(format!(
                "need at least 2 tokens, got {}",
                self.tokens
            )));
        }
        if self.tokens * self.token_dim != self.channels {
            return Err(ModelError::Config(format!(
                "tokens x token_dim must equal channels: {} x {} != {}",
                self.tokens, self.token_dim, self.channels
            )));
        }
        if self.fusion == FusionKind::Concat && self.modalities.count() != 3 {
            return Err(ModelError::Config(
                "the concatenation baseline requires all three modalities".into(),
            ));
        }
        Ok(())
    }

    pub fn layout(&self) -> TokenLayout {
        TokenLayout {
            tokens: self.tokens,
            token_dim: self.token_dim,
        }
    }
}

/// All learnable parameters: encoder weights, attention-stage projections,
/// and decoder weights.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThoamModel {
    pub config: ModelConfig,
    pub encoders: EncoderParams,
    pub fusion: FusionParams,
}

impl ThoamModel {
    /// Seeded initialization of whichever encoders and fusion variant the
    /// config selects.
    pub fn init(config: ModelConfig, seed: u64) -> Result<Self, ModelError> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let encoders =
            EncoderParams::init(config.modalities, config.channels, config.vocab, &mut rng);
        let c = config.channels;
        let fusion = match (config.modalities.count(), config.fusion) {
            (3, FusionKind::Thoam) => {
                FusionParams::Thoam(ThoamParams::init(config.layout(), &mut rng))
            }
            (3, FusionKind::Concat) => FusionParams::Concat {
                decoder: crate::fusion::Decoder::init(3 * c, &mut rng),
            },
            (1, _) => FusionParams::Single {
                decoder: crate::fusion::Decoder::init(c, &mut rng),
            },
            (2, _) => FusionParams::Pair {
                layout: config.layout(),
                stage: crate::fusion::StageParams::init(config.layout(), &mut rng),
                decoder: crate::fusion::Decoder::init(2 * c, &mut rng),
            },
            _ => unreachable!("validated non-empty"),
        };
        let mut model = ThoamModel {
            config,
            encoders,
            fusion,
        };
        model.mark_trainable();
        Ok(model)
    }

    fn mark_trainable(&mut self) {
        for p in self.params_mut() {
            p.requires_grad = true;
        }
    }

    /// Parameters in the fixed documented order.
    pub fn params(&self) -> Vec<&Tensor> {
        let mut out = Vec::new();
        if let Some(v) = &self.encoders.visual {
            out.extend([&v.conv1_weight, &v.conv1_bias, &v.conv2_weight, &v.conv2_bias]);
        }
        if let Some(t) = &self.encoders.tabular {
            out.extend([&t.w1, &t.b1, &t.w2, &t.b2]);
        }
        if let Some(t) = &self.encoders.text {
            out.push(&t.embedding);
        }
        match &self.fusion {
            FusionParams::Thoam(p) => {
                out.extend([
                    &p.stage1.w_q,
                    &p.stage1.w_k,
                    &p.stage1.w_v,
                    &p.stage1.w_o,
                    &p.stage2.w_q,
                    &p.stage2.w_k,
                    &p.stage2.w_v,
                    &p.stage2.w_o,
                    &p.decoder.weight,
                    &p.decoder.bias,
                ]);
            }
            FusionParams::Concat { decoder } | FusionParams::Single { decoder } => {
                out.extend([&decoder.weight, &decoder.bias]);
            }
            FusionParams::Pair { stage, decoder, .. } => {
                out.extend([
                    &stage.w_q,
                    &stage.w_k,
                    &stage.w_v,
                    &stage.w_o,
                    &decoder.weight,
                    &decoder.bias,
                ]);
            }
        }
        out
    }

    /// Mutable view in the same order as [`ThoamModel::params`].
    pub fn params_mut(&mut self) -> Vec<&mut Tensor> {
        let mut out = Vec::new();
        if let Some(v) = &mut self.encoders.visual {
            out.extend([
                &mut v.conv1_weight,
                &mut v.conv1_bias,
                &mut v.conv2_weight,
                &mut v.conv2_bias,
            ]);
        }
        if let Some(t) = &mut self.encoders.tabular {
            out.extend([&mut t.w1, &mut t.b1, &mut t.w2, &mut t.b2]);
        }
        if let Some(t) = &mut self.encoders.text {
            out.push(&mut t.embedding);
        }
        match &mut self.fusion {
            FusionParams::Thoam(p) => {
                out.extend([
                    &mut p.stage1.w_q,
                    &mut p.stage1.w_k,
                    &mut p.stage1.w_v,
                    &mut p.stage1.w_o,
                    &mut p.stage2.w_q,
                    &mut p.stage2.w_k,
                    &mut p.stage2.w_v,
                    &mut p.stage2.w_o,
                    &mut p.decoder.weight,
                    &mut p.decoder.bias,
                ]);
            }
            FusionParams::Concat { decoder } | FusionParams::Single { decoder } => {
                out.extend([&mut decoder.weight, &mut decoder.bias]);
            }
            FusionParams::Pair { stage, decoder, .. } => {
                out.extend([
                    &mut stage.w_q,
                    &mut stage.w_k,
                    &mut stage.w_v,
                    &mut stage.w_o,
                    &mut decoder.weight,
                    &mut decoder.bias,
                ]);
            }
        }
        out
    }

    /// Insert all parameters as graph leaves, in the same fixed order.
    pub fn leaves(&self, g: &mut Graph) -> ModelLeaves {
        let visual = self.encoders.visual.as_ref().map(|v| v.leaves(g));
        let tabular = self.encoders.tabular.as_ref().map(|t| t.leaves(g));
        let text = self.encoders.text.as_ref().map(|t| t.leaves(g));
        let fusion = self.fusion.leaves(g);
        let mut ordered = Vec::new();
        if let Some(v) = &visual {
            ordered.extend([v.conv1_weight, v.conv1_bias, v.conv2_weight, v.conv2_bias]);
        }
        if let Some(t) = &tabular {
            ordered.extend([t.w1, t.b1, t.w2, t.b2]);
        }
        if let Some(t) = &text {
            ordered.push(t.embedding);
        }
        match &fusion {
            FusionLeaves::Thoam(p) => {
                ordered.extend([
                    p.stage1.w_q,
                    p.stage1.w_k,
                    p.stage1.w_v,
                    p.stage1.w_o,
                    p.stage2.w_q,
                    p.stage2.w_k,
                    p.stage2.w_v,
                    p.stage2.w_o,
                    p.decoder.weight,
                    p.decoder.bias,
                ]);
            }
            FusionLeaves::Concat { decoder } | FusionLeaves::Single { decoder } => {
                ordered.extend([decoder.weight, decoder.bias]);
            }
            FusionLeaves::Pair { stage, decoder, .. } => {
                ordered.extend([
                    stage.w_q,
                    stage.w_k,
                    stage.w_v,
                    stage.w_o,
                    decoder.weight,
                    decoder.bias,
                ]);
            }
        }
        ModelLeaves {
            visual,
            tabular,
            text,
            fusion,
            ordered,
        }
    }

    /// Rebuild the leaf bundle from already-inserted nodes in parameter
    /// order (the inverse of [`ThoamModel::leaves`]; used by gradient
    /// checking, which owns leaf insertion).
    pub fn leaves_from_ids(&self, ids: &[NodeId]) -> ModelLeaves {
        let mut iter = ids.iter().copied();
        let mut next = || iter.next().expect("id list matches parameter order");
        let visual = self.encoders.visual.as_ref().map(|_| VisualNodes {
            conv1_weight: next(),
            conv1_bias: next(),
            conv2_weight: next(),
            conv2_bias: next(),
        });
        let tabular = self.encoders.tabular.as_ref().map(|_| TabularNodes {
            w1: next(),
            b1: next(),
            w2: next(),
            b2: next(),
        });
        let text = self.encoders.text.as_ref().map(|_| TextNodes { embedding: next() });
        let fusion = match &self.fusion {
            FusionParams::Thoam(p) => FusionLeaves::Thoam(crate::fusion::ThoamLeaves {
                layout: p.layout,
                stage1: crate::fusion::StageLeaves {
                    w_q: next(),
                    w_k: next(),
                    w_v: next(),
                    w_o: next(),
                },
                stage2: crate::fusion::StageLeaves {
                    w_q: next(),
                    w_k: next(),
                    w_v: next(),
                    w_o: next(),
                },
                decoder: crate::fusion::DecoderLeaves {
                    weight: next(),
                    bias: next(),
                },
            }),
            FusionParams::Concat { .. } => FusionLeaves::Concat {
                decoder: crate::fusion::DecoderLeaves {
                    weight: next(),
                    bias: next(),
                },
            },
            FusionParams::Single { .. } => FusionLeaves::Single {
                decoder: crate::fusion::DecoderLeaves {
                    weight: next(),
                    bias: next(),
                },
            },
            FusionParams::Pair { layout, .. } => FusionLeaves::Pair {
                layout: *layout,
                stage: crate::fusion::StageLeaves {
                    w_q: next(),
                    w_k: next(),
                    w_v: next(),
                    w_o: next(),
                },
                decoder: crate::fusion::DecoderLeaves {
                    weight: next(),
                    bias: next(),
                },
            },
        };
        ModelLeaves {
            visual,
            tabular,
            text,
            fusion,
            ordered: ids.to_vec(),
        }
    }

    /// Forward pass to logits over whichever modalities the model uses.
    pub fn forward(
        &self,
        g: &mut Graph,
        leaves: &ModelLeaves,
        batch: &BatchInputs,
    ) -> Result<NodeId, ModelError> {
        let subset = self.config.modalities;
        let mut sizes: Vec<(&str, usize)> = Vec::new();
        let mut features = ModalityFeatures::default();
        if subset.visual {
            let images = batch.images.ok_or(ModelError::MissingModality("visual"))?;
            sizes.push(("visual", images.len()));
            let nodes = leaves
                .visual
                .as_ref()
                .expect("visual params exist for visual models");
            let fmap = encoders::encode_visual(g, images, nodes)?;
            features.visual = Some(g.gap(fmap)?);
        }
        if subset.tabular {
            let rows = batch.tabular.ok_or(ModelError::MissingModality("tabular"))?;
            sizes.push(("tabular", rows.shape()[0]));
            let nodes = leaves
                .tabular
                .as_ref()
                .expect("tabular params exist for tabular models");
            let input = g.leaf(rows.clone());
            features.tabular = Some(encoders::encode_tabular(g, input, nodes)?);
        }
        if subset.linguistic {
            let tokens = batch
                .tokens
                .ok_or(ModelError::MissingModality("linguistic"))?;
            sizes.push(("linguistic", tokens.len()));
            let nodes = leaves
                .text
                .as_ref()
                .expect("text params exist for linguistic models");
            features.linguistic = Some(encoders::encode_text(g, tokens, nodes)?);
        }
        if let Some(&(_, first)) = sizes.first() {
            if sizes.iter().any(|&(_, n)| n != first) {
                return Err(ModelError::BatchSize(
                    sizes
                        .iter()
                        .map(|(m, n)| format!("{m}={n}"))
                        .collect::<Vec<_>>()
                        .join(", "),
                ));
            }
        }
        Ok(fuse_subset(g, subset, &features, &leaves.fusion)?)
    }

    // ---- checkpointing ----

    pub fn save(&self, path: &Path) -> Result<(), ModelError> {
        let json = serde_json::to_string(self).expect("model serializes");
        fs::write(path, json).map_err(|e| ModelError::Checkpoint {
            path: path.display().to_string(),
            detail: e.to_string(),
        })
    }

    pub fn load(path: &Path) -> Result<Self, ModelError> {
        let text = fs::read_to_string(path).map_err(|e| ModelError::Checkpoint {
            path: path.display().to_string(),
            detail: e.to_string(),
        })?;
        let mut model: ThoamModel =
            serde_json::from_str(&text).map_err(|e| ModelError::Checkpoint {
                path: path.display().to_string(),
                detail: e.to_string(),
            })?;
        model.config.validate()?;
        model.check_shapes(path)?;
        model.mark_trainable();
        Ok(model)
    }

    /// Cross-check every tensor's shape against the structural config.
    fn check_shapes(&self, path: &Path) -> Result<(), ModelError> {
        let c = self.config.channels;
        let err = |detail: String| ModelError::Checkpoint {
            path: path.display().to_string(),
            detail,
        };
        if self.config.modalities.visual != self.encoders.visual.is_some()
            || self.config.modalities.tabular != self.encoders.tabular.is_some()
            || self.config.modalities.linguistic != self.encoders.text.is_some()
        {
            return Err(err("encoder set does not match the modality set".into()));
        }
        if let Some(v) = &self.encoders.visual {
            if v.channels() != c {
                return Err(err(format!("visual encoder emits {}, config says {c}", v.channels())));
            }
        }
        if let Some(t) = &self.encoders.tabular {
            if t.channels() != c {
                return Err(err(format!("tabular encoder emits {}, config says {c}", t.channels())));
            }
        }
        if let Some(t) = &self.encoders.text {
            if t.channels() != c || t.vocab() != self.config.vocab {
                return Err(err("text encoder table does not match config".into()));
            }
        }
        let expect_decoder = |dec: &crate::fusion::Decoder, width: usize| {
            if dec.in_dim() != width {
                Err(err(format!("decoder expects width {}, config implies {width}", dec.in_dim())))
            } else {
                Ok(())
            }
        };
        match &self.fusion {
            FusionParams::Thoam(p) => {
                if p.layout != self.config.layout() {
                    return Err(err("token layout mismatch".into()));
                }
                expect_decoder(&p.decoder, 2 * c)?;
            }
            FusionParams::Concat { decoder } => expect_decoder(decoder, 3 * c)?,
            FusionParams::Single { decoder } => expect_decoder(decoder, c)?,
            FusionParams::Pair { layout, decoder, .. } => {
                if *layout != self.config.layout() {
                    return Err(err("token layout mismatch".into()));
                }
                expect_decoder(decoder, 2 * c)?;
            }
        }
        Ok(())
    }
}

/// Graph leaves for every parameter, plus the flat order-matched list used
/// for gradient collection.
pub struct ModelLeaves {
    pub visual: Option<VisualNodes>,
    pub tabular: Option<TabularNodes>,
    pub text: Option<TextNodes>,
    pub fusion: FusionLeaves,
    pub ordered: Vec<NodeId>,
}

impl ModelLeaves {
    /// Gradients for every parameter after `backward`, in parameter order.
    pub fn gradients(&self, g: &Graph) -> Vec<Vec<f64>> {
        self.ordered
            .iter()
            .map(|id| g.grad(*id).expect("parameters require gradients").to_vec())
            .collect()
    }
}

/// Inputs for one batch; only the modalities the model consumes need to be
/// present.
#[derive(Default)]
pub struct BatchInputs<'a> {
    pub images: Option<&'a [ImageSlice]>,
    /// `[N×10]` transformed tabular rows.
    pub tabular: Option<&'a Tensor>,
    pub tokens: Option<&'a [Vec<usize>]>,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::preprocess::TABULAR_DIM;

    fn tri_config() -> ModelConfig {
        ModelConfig {
            channels: 8,
            tokens: 2,
            token_dim: 4,
            vocab: 16,
            modalities: ModalitySet::ALL,
            fusion: FusionKind::Thoam,
        }
    }

    fn tiny_batch_inputs(n: usize) -> (Vec<ImageSlice>, Tensor, Vec<Vec<usize>>, Vec<usize>) {
        let images: Vec<ImageSlice> = (0..n)
            .map(|i| {
                ImageSlice::new(8, 8, (0..64).map(|p| ((p * (i + 3)) % 256) as u8).collect())
                    .unwrap()
            })
            .collect();
        let tabular = Tensor::new(
            vec![n, TABULAR_DIM],
            (0..n * TABULAR_DIM).map(|i| (i % 7) as f64 * 0.1).collect(),
        )
        .unwrap();
        let tokens: Vec<Vec<usize>> = (0..n).map(|i| vec![i % 16, (i * 3) % 16]).collect();
        let labels: Vec<usize> = (0..n).map(|i| i % crate::NUM_CLASSES).collect();
        (images, tabular, tokens, labels)
    }

    #[test]
    fn config_validation_catches_layout_mismatch() {
        let mut cfg = tri_config();
        cfg.token_dim = 3;
        assert!(matches!(ThoamModel::init(cfg, 1), Err(ModelError::Config(_))));
        let mut cfg = tri_config();
        cfg.fusion = FusionKind::Concat;
        cfg.modalities = "vt".parse().unwrap();
        assert!(matches!(ThoamModel::init(cfg, 1), Err(ModelError::Config(_))));
    }

    #[test]
    fn init_is_deterministic_per_seed() {
        let a = ThoamModel::init(tri_config(), 42).unwrap();
        let b = ThoamModel::init(tri_config(), 42).unwrap();
        assert_eq!(a, b);
        let c = ThoamModel::init(tri_config(), 43).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn forward_produces_logits_and_backward_fills_all_grads() {
        let model = ThoamModel::init(tri_config(), 7).unwrap();
        let (images, tabular, tokens, labels) = tiny_batch_inputs(3);
        let mut g = Graph::new();
        let leaves = model.leaves(&mut g);
        let logits = model
            .forward(
                &mut g,
                &leaves,
                &BatchInputs {
                    images: Some(&images),
                    tabular: Some(&tabular),
                    tokens: Some(&tokens),
                },
            )
            .unwrap();
        assert_eq!(g.value(logits).shape(), &[3, crate::NUM_CLASSES]);
        let loss = g.cross_entropy(logits, &labels).unwrap();
        g.backward(loss).unwrap();
        let grads = leaves.gradients(&g);
        assert_eq!(grads.len(), model.params().len());
        for (grad, param) in grads.iter().zip(model.params()) {
            assert_eq!(grad.len(), param.numel());
        }
        // Something flowed into every parameter group (embedding rows used).
        assert!(grads.iter().any(|g| g.iter().any(|&v| v != 0.0)));
    }

    #[test]
    fn forward_rejects_missing_modality_and_size_mismatch() {
        let model = ThoamModel::init(tri_config(), 7).unwrap();
        let (images, tabular, tokens, _) = tiny_batch_inputs(3);
        let mut g = Graph::new();
        let leaves = model.leaves(&mut g);
        assert!(matches!(
            model.forward(
                &mut g,
                &leaves,
                &BatchInputs {
                    images: Some(&images),
                    tabular: Some(&tabular),
                    tokens: None,
                },
            ),
            Err(ModelError::MissingModality("linguistic"))
        ));
        let short_tokens = tokens[..2].to_vec();
        let mut g = Graph::new();
        let leaves = model.leaves(&mut g);
        assert!(matches!(
            model.forward(
                &mut g,
                &leaves,
                &BatchInputs {
                    images: Some(&images),
                    tabular: Some(&tabular),
                    tokens: Some(&short_tokens),
                },
            ),
            Err(ModelError::BatchSize(_))
        ));
    }

    #[test]
    fn subset_models_only_carry_their_encoders() {
        let mut cfg = tri_config();
        cfg.modalities = "tl".parse().unwrap();
        let model = ThoamModel::init(cfg, 7).unwrap();
        assert!(model.encoders.visual.is_none());
        assert!(model.encoders.tabular.is_some());
        assert!(model.encoders.text.is_some());
        assert!(matches!(model.fusion, FusionParams::Pair { .. }));
        // 4 + 1 tabular/text encoder tensors... tabular has 4, text 1,
        // pair fusion has 6.
        assert_eq!(model.params().len(), 4 + 1 + 6);
    }

    #[test]
    fn checkpoint_round_trip_is_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.json");
        let model = ThoamModel::init(tri_config(), 99).unwrap();
        model.save(&path).unwrap();
        let back = ThoamModel::load(&path).unwrap();
        for (a, b) in model.params().iter().zip(back.params()) {
            assert_eq!(a.shape(), b.shape());
            for (x, y) in a.data().iter().zip(b.data()) {
                assert_eq!(x.to_bits(), y.to_bits());
            }
        }
        // Saving the reloaded model reproduces identical bytes.
        let path2 = dir.path().join("model2.json");
        back.save(&path2).unwrap();
        assert_eq!(fs::read(&path).unwrap(), fs::read(&path2).unwrap());
    }

    #[test]
    fn load_rejects_inconsistent_checkpoint() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.json");
        let model = ThoamModel::init(tri_config(), 1).unwrap();
        let mut json: serde_json::Value =
            serde_json::from_str(&serde_json::to_string(&model).unwrap()).unwrap();
        json["config"]["channels"] = serde_json::json!(16);
        json["config"]["token_dim"] = serde_json::json!(8);
        fs::write(&path, json.to_string()).unwrap();
        assert!(matches!(
            ThoamModel::load(&path),
            Err(ModelError::Checkpoint { .. })
        ));
    }
}
