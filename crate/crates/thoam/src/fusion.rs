//! Hierarchical cross-attention fusion of the three modality features.
//!
//! Features of width C are viewed per sample as T tokens of width
//! `d = C/T`. A fusion stage projects query tokens from one modality and
//! key/value tokens from another, forms row-stochastic attention scores
//! `softmax(Q·Kᵀ/√d)` within each sample, mixes the values, and maps the
//! flattened result back to width C. Two chained stages fuse
//! visual -> tabular, then the result -> linguistic; the stage-2 output is
//! concatenated with the pooled visual features and decoded by a single
//! affine map. Attention never crosses batch samples.
//!
//! Alongside the attention path live the plain concatenation baseline and
//! the reduced variants used by the modality-subset ablation.

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::init;
use crate::tensor::{Graph, NodeId, Tensor, TensorError};
use crate::{ModalitySet, NUM_CLASSES};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FusionError {
    #[error("modality subset must not be empty")]
    EmptySubset,
    #[error("parameters built for {params} cannot serve modality subset {subset:?}")]
    ArityMismatch { subset: String, params: &'static str },
    #[error("token layout {tokens}x{token_dim} does not match feature width {channels}")]
    BadLayout {
        tokens: usize,
        token_dim: usize,
        channels: usize,
    },
    #[error("need at least 2 tokens, got {0}")]
    TooFewTokens(usize),
    #[error(transparent)]
    Tensor(#[from] TensorError),
}

/// Choice of fusion head for the tri-modal model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FusionKind {
    Thoam,
    Concat,
}

/// Per-sample token view of a width-C feature row: T tokens of width
/// `token_dim`, `T·token_dim == C`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenLayout {
    pub tokens: usize,
    pub token_dim: usize,
}

impl TokenLayout {
    pub fn new(tokens: usize, token_dim: usize) -> Result<Self, FusionError> {
        if tokens < 2 {
            return Err(FusionError::TooFewTokens(tokens));
        }
        Ok(TokenLayout { tokens, token_dim })
    }

    pub fn channels(&self) -> usize {
        self.tokens * self.token_dim
    }
}

/// Query/key/value projections (`token_dim` square) and the output
/// projection (`C` square) of one attention stage.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageParams {
    pub w_q: Tensor,
    pub w_k: Tensor,
    pub w_v: Tensor,
    pub w_o: Tensor,
}

impl StageParams {
    pub fn init<R: Rng>(layout: TokenLayout, rng: &mut R) -> Self {
        let d = layout.token_dim;
        let c = layout.channels();
        // The output projection starts at identity plus noise: the value
        // mixture passes through unchanged at step zero, which keeps
        // gradients flowing through freshly initialized stages.
        let mut w_o = init::uniform(rng, vec![c, c], c);
        for i in 0..c {
            w_o.data_mut()[i * c + i] += 1.0;
        }
        StageParams {
            w_q: init::uniform(rng, vec![d, d], d),
            w_k: init::uniform(rng, vec![d, d], d),
            w_v: init::uniform(rng, vec![d, d], d),
            w_o,
        }
    }
}

/// Affine classification head `[in_dim × NUM_CLASSES]` plus bias.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Decoder {
    pub weight: Tensor,
    pub bias: Tensor,
}

impl Decoder {
    pub fn init<R: Rng>(in_dim: usize, rng: &mut R) -> Self {
        Decoder {
            weight: init::uniform(rng, vec![in_dim, NUM_CLASSES], in_dim),
            bias: init::zeros(vec![NUM_CLASSES]),
        }
    }

    pub fn in_dim(&self) -> usize {
        self.weight.shape()[0]
    }
}

/// All learnable fusion parameters of the tri-modal attention model: two
/// stages and the 2C-input decoder.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThoamParams {
    pub layout: TokenLayout,
    pub stage1: StageParams,
    pub stage2: StageParams,
    pub decoder: Decoder,
}

impl ThoamParams {
    pub fn init<R: Rng>(layout: TokenLayout, rng: &mut R) -> Self {
        ThoamParams {
            layout,
            stage1: StageParams::init(layout, rng),
            stage2: StageParams::init(layout, rng),
            decoder: Decoder::init(2 * layout.channels(), rng),
        }
    }
}

/// Fusion parameter variants by modality arity.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum FusionParams {
    /// Three modalities, two chained attention stages.
    Thoam(ThoamParams),
    /// Three modalities, plain concatenation into a 3C decoder.
    Concat { decoder: Decoder },
    /// One modality, linear decoder on its C features.
    Single { decoder: Decoder },
    /// Two modalities, one attention stage; the stage output is
    /// concatenated with the query features before decoding (2C).
    Pair {
        layout: TokenLayout,
        stage: StageParams,
        decoder: Decoder,
    },
}

// ---- graph leaves -------------------------------------------------------

#[derive(Debug, Clone, Copy)]
pub struct StageLeaves {
    pub w_q: NodeId,
    pub w_k: NodeId,
    pub w_v: NodeId,
    pub w_o: NodeId,
}

impl StageParams {
    pub fn leaves(&self, g: &mut Graph) -> StageLeaves {
        StageLeaves {
            w_q: g.leaf(self.w_q.clone()),
            w_k: g.leaf(self.w_k.clone()),
            w_v: g.leaf(self.w_v.clone()),
            w_o: g.leaf(self.w_o.clone()),
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct DecoderLeaves {
    pub weight: NodeId,
    pub bias: NodeId,
}

impl Decoder {
    pub fn leaves(&self, g: &mut Graph) -> DecoderLeaves {
        DecoderLeaves {
            weight: g.leaf(self.weight.clone()),
            bias: g.leaf(self.bias.clone()),
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct ThoamLeaves {
    pub layout: TokenLayout,
    pub stage1: StageLeaves,
    pub stage2: StageLeaves,
    pub decoder: DecoderLeaves,
}

impl ThoamParams {
    pub fn leaves(&self, g: &mut Graph) -> ThoamLeaves {
        ThoamLeaves {
            layout: self.layout,
            stage1: self.stage1.leaves(g),
            stage2: self.stage2.leaves(g),
            decoder: self.decoder.leaves(g),
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub enum FusionLeaves {
    Thoam(ThoamLeaves),
    Concat { decoder: DecoderLeaves },
    Single { decoder: DecoderLeaves },
    Pair {
        layout: TokenLayout,
        stage: StageLeaves,
        decoder: DecoderLeaves,
    },
}

impl FusionParams {
    pub fn leaves(&self, g: &mut Graph) -> FusionLeaves {
        match self {
            FusionParams::Thoam(p) => FusionLeaves::Thoam(p.leaves(g)),
            FusionParams::Concat { decoder } => FusionLeaves::Concat {
                decoder: decoder.leaves(g),
            },
            FusionParams::Single { decoder } => FusionLeaves::Single {
                decoder: decoder.leaves(g),
            },
            FusionParams::Pair {
                layout,
                stage,
                decoder,
            } => FusionLeaves::Pair {
                layout: *layout,
                stage: stage.leaves(g),
                decoder: decoder.leaves(g),
            },
        }
    }
}

// ---- graph builders -------------------------------------------------------

/// Reshape `[N×C]` features into `[N×T×d]` tokens (row-major; flattening
/// back is the exact inverse).
pub fn to_tokens(g: &mut Graph, x: NodeId, layout: TokenLayout) -> Result<NodeId, FusionError> {
    let shape = g.value(x).shape().to_vec();
    if shape.len() != 2 || shape[1] != layout.channels() {
        return Err(FusionError::BadLayout {
            tokens: layout.tokens,
            token_dim: layout.token_dim,
            channels: shape.get(1).copied().unwrap_or(0),
        });
    }
    Ok(g.reshape(x, vec![shape[0], layout.tokens, layout.token_dim])?)
}

/// Apply a `[d×d]` projection to every token of `[N×T×d]`.
fn project_tokens(g: &mut Graph, tokens: NodeId, w: NodeId) -> Result<NodeId, TensorError> {
    let shape = g.value(tokens).shape().to_vec();
    let (n, t, d) = (shape[0], shape[1], shape[2]);
    let flat = g.reshape(tokens, vec![n * t, d])?;
    let proj = g.matmul(flat, w)?;
    g.reshape(proj, vec![n, t, d])
}

/// Nodes produced by one cross-attention stage.
#[derive(Debug, Clone, Copy)]
pub struct StageOut {
    /// Stage output, width C.
    pub output: NodeId,
    /// Row-stochastic attention scores, `[N×T×T]`.
    pub scores: NodeId,
    /// Convex value mixture `scores · V` before the output projection,
    /// `[N×T×d]`.
    pub mixed: NodeId,
}

/// One cross-attention stage: queries from `query_src`, keys and values
/// from `kv_src`, attention within each sample.
pub fn cross_attention_stage(
    g: &mut Graph,
    query_src: NodeId,
    kv_src: NodeId,
    leaves: &StageLeaves,
    layout: TokenLayout,
) -> Result<StageOut, FusionError> {
    let sq = g.value(query_src).shape().to_vec();
    let sk = g.value(kv_src).shape().to_vec();
    if sq != sk {
        return Err(FusionError::Tensor(TensorError::ShapeMismatch {
            op: "cross_attention_stage",
            lhs: sq,
            rhs: sk,
        }));
    }
    let n = sq[0];
    let c = layout.channels();
    let q_tokens = to_tokens(g, query_src, layout)?;
    let kv_tokens = to_tokens(g, kv_src, layout)?;
    let q = project_tokens(g, q_tokens, leaves.w_q)?;
    let k = project_tokens(g, kv_tokens, leaves.w_k)?;
    let v = project_tokens(g, kv_tokens, leaves.w_v)?;
    let raw = g.bmm_nt(q, k)?;
    let scaled = g.scale(raw, 1.0 / (layout.token_dim as f64).sqrt())?;
    let scores = g.softmax_rows(scaled)?;
    let mixed = g.bmm(scores, v)?;
    let flat = g.reshape(mixed, vec![n, c])?;
    let output = g.matmul(flat, leaves.w_o)?;
    Ok(StageOut {
        output,
        scores,
        mixed,
    })
}

fn decode(g: &mut Graph, x: NodeId, dec: &DecoderLeaves) -> Result<NodeId, TensorError> {
    let h = g.matmul(x, dec.weight)?;
    g.add_row_bias(h, dec.bias)
}

/// Nodes produced by the full two-stage fusion.
#[derive(Debug, Clone, Copy)]
pub struct FusionNodes {
    pub stage1: StageOut,
    pub stage2: StageOut,
    /// Stage-2 output concatenated with the pooled visual features, width 2C.
    pub output: NodeId,
    pub logits: NodeId,
}

/// Two chained stages over pooled visual, tabular, and linguistic features:
/// stage 1 fuses visual -> tabular, stage 2 fuses that result -> linguistic,
/// and the decoder reads the stage-2 output concatenated with the visual
/// features.
pub fn fuse(
    g: &mut Graph,
    fv_gap: NodeId,
    f_t: NodeId,
    f_l: NodeId,
    leaves: &ThoamLeaves,
) -> Result<FusionNodes, FusionError> {
    let stage1 = cross_attention_stage(g, fv_gap, f_t, &leaves.stage1, leaves.layout)?;
    let stage2 = cross_attention_stage(g, stage1.output, f_l, &leaves.stage2, leaves.layout)?;
    let output = g.concat_cols(stage2.output, fv_gap)?;
    let logits = decode(g, output, &leaves.decoder)?;
    Ok(FusionNodes {
        stage1,
        stage2,
        output,
        logits,
    })
}

/// Baseline fusion: concatenate the three features (width 3C) and decode.
pub fn concat_fusion(
    g: &mut Graph,
    fv_gap: NodeId,
    f_t: NodeId,
    f_l: NodeId,
    decoder: &DecoderLeaves,
) -> Result<NodeId, FusionError> {
    let vt = g.concat_cols(fv_gap, f_t)?;
    let all = g.concat_cols(vt, f_l)?;
    Ok(decode(g, all, decoder)?)
}

/// Feature nodes for the modalities present in a batch.
#[derive(Debug, Clone, Copy, Default)]
pub struct ModalityFeatures {
    pub visual: Option<NodeId>,
    pub tabular: Option<NodeId>,
    pub linguistic: Option<NodeId>,
}

/// Logits for any non-empty modality subset.
///
/// One modality decodes its features directly. Two run a single
/// cross-attention stage — the first modality in V, T, L order supplies the
/// queries (V queries T, V queries L, T queries L) — and the stage output is
/// concatenated with the query features before decoding. All three run the
/// full two-stage fusion (or the concatenation baseline, depending on the
/// parameters).
pub fn fuse_subset(
    g: &mut Graph,
    subset: ModalitySet,
    features: &ModalityFeatures,
    leaves: &FusionLeaves,
) -> Result<NodeId, FusionError> {
    if subset.is_empty() {
        return Err(FusionError::EmptySubset);
    }
    let need = |feat: Option<NodeId>, name: &'static str| {
        feat.ok_or(FusionError::ArityMismatch {
            subset: name.to_string(),
            params: "missing feature",
        })
    };
    let mismatch = |params: &'static str| FusionError::ArityMismatch {
        subset: subset.tag(),
        params,
    };
    match subset.count() {
        1 => {
            let decoder = match leaves {
                FusionLeaves::Single { decoder } => decoder,
                FusionLeaves::Thoam(_) => return Err(mismatch("thoam")),
                FusionLeaves::Concat { .. } => return Err(mismatch("concat")),
                FusionLeaves::Pair { .. } => return Err(mismatch("pair")),
            };
            let feat = if subset.visual {
                need(features.visual, "visual")?
            } else if subset.tabular {
                need(features.tabular, "tabular")?
            } else {
                need(features.linguistic, "linguistic")?
            };
            Ok(decode(g, feat, decoder)?)
        }
        2 => {
            let (layout, stage, decoder) = match leaves {
                FusionLeaves::Pair {
                    layout,
                    stage,
                    decoder,
                } => (*layout, stage, decoder),
                FusionLeaves::Thoam(_) => return Err(mismatch("thoam")),
                FusionLeaves::Concat { .. } => return Err(mismatch("concat")),
                FusionLeaves::Single { .. } => return Err(mismatch("single")),
            };
            // Query source is the first modality present in V, T, L order.
            let (query, kv) = if subset.visual && subset.tabular {
                (need(features.visual, "visual")?, need(features.tabular, "tabular")?)
            } else if subset.visual && subset.linguistic {
                (need(features.visual, "visual")?, need(features.linguistic, "linguistic")?)
            } else {
                (need(features.tabular, "tabular")?, need(features.linguistic, "linguistic")?)
            };
            let stage_out = cross_attention_stage(g, query, kv, stage, layout)?;
            let cat = g.concat_cols(stage_out.output, query)?;
            Ok(decode(g, cat, decoder)?)
        }
        _ => {
            let fv = need(features.visual, "visual")?;
            let ft = need(features.tabular, "tabular")?;
            let fl = need(features.linguistic, "linguistic")?;
            match leaves {
                FusionLeaves::Thoam(t) => Ok(fuse(g, fv, ft, fl, t)?.logits),
                FusionLeaves::Concat { decoder } => concat_fusion(g, fv, ft, fl, decoder),
                FusionLeaves::Single { .. } => Err(mismatch("single")),
                FusionLeaves::Pair { .. } => Err(mismatch("pair")),
            }
        }
    }
}

// ---- value-level forward and prediction ----------------------------------

/// Materialized fusion forward pass for inspection.
#[derive(Debug, Clone)]
pub struct FusionOutput {
    pub stage1: Tensor,
    pub fused2: Tensor,
    /// Width 2C: stage-2 output next to the pooled visual features.
    pub output: Tensor,
    pub logits: Tensor,
    pub scores1: Option<Tensor>,
    pub scores2: Option<Tensor>,
}

/// Run the full fusion over plain tensors, optionally keeping the attention
/// score matrices.
pub fn fuse_forward(
    fv_gap: &Tensor,
    f_t: &Tensor,
    f_l: &Tensor,
    params: &ThoamParams,
    with_scores: bool,
) -> Result<FusionOutput, FusionError> {
    let mut g = Graph::new();
    let fv = g.leaf(fv_gap.clone());
    let ft = g.leaf(f_t.clone());
    let fl = g.leaf(f_l.clone());
    let leaves = params.leaves(&mut g);
    let nodes = fuse(&mut g, fv, ft, fl, &leaves)?;
    Ok(FusionOutput {
        stage1: g.value(nodes.stage1.output).clone(),
        fused2: g.value(nodes.stage2.output).clone(),
        output: g.value(nodes.output).clone(),
        logits: g.value(nodes.logits).clone(),
        scores1: with_scores.then(|| g.value(nodes.stage1.scores).clone()),
        scores2: with_scores.then(|| g.value(nodes.stage2.scores).clone()),
    })
}

/// One sample's predicted class and softmax probability vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub class: usize,
    pub probabilities: Vec<f64>,
}

/// Per-row argmax (ties break to the lowest index) and stable softmax
/// probabilities over `[N×NUM_CLASSES]` logits.
pub fn predict(logits: &Tensor) -> Result<Vec<Prediction>, TensorError> {
    let shape = logits.shape();
    if shape.len() != 2 || shape[1] != NUM_CLASSES {
        return Err(TensorError::ShapeMismatch {
            op: "predict",
            lhs: shape.to_vec(),
            rhs: vec![0, NUM_CLASSES],
        });
    }
    let mut out = Vec::with_capacity(shape[0]);
    for i in 0..shape[0] {
        let row = logits.row(i);
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let exps: Vec<f64> = row.iter().map(|v| (v - max).exp()).collect();
        let sum: f64 = exps.iter().sum();
        let probabilities: Vec<f64> = exps.iter().map(|e| e / sum).collect();
        let mut class = 0;
        for (j, v) in row.iter().enumerate() {
            if *v > row[class] {
                class = j;
            }
        }
        out.push(Prediction {
            class,
            probabilities,
        });
    }
    Ok(out)
}
