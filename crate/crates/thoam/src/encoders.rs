//! Per-modality feature encoders.
//!
//! Each modality gets a small trainable network producing features of a
//! shared width `C`: a two-layer strided convolution for image slices, a
//! two-layer dense net for the 10-field tabular vector, and a mean-pooled
//! hashed-vocabulary embedding for report text. All encoders are
//! deterministic functions of (input, parameters).

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::init;
use crate::preprocess::TABULAR_DIM;
use crate::tensor::{Graph, NodeId, Tensor, TensorError};
use crate::ModalitySet;

/// Default feature width shared by all three encoders.
pub const DEFAULT_CHANNELS: usize = 64;
/// Middle channel count of the visual encoder (1 -> 8 -> C).
pub const CONV_HIDDEN: usize = 8;
/// Hidden width of the tabular encoder (10 -> 32 -> C).
pub const TAB_HIDDEN: usize = 32;
/// Default hashed vocabulary size for report tokenization.
pub const HASH_VOCAB: usize = 4096;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EncodeError {
    #[error("image {index} is {got_w}x{got_h}, batch requires {want_w}x{want_h}")]
    NonUniformBatch {
        index: usize,
        got_w: usize,
        got_h: usize,
        want_w: usize,
        want_h: usize,
    },
    #[error("empty batch")]
    EmptyBatch,
    #[error("image must be at least 8x8, got {width}x{height}")]
    ImageTooSmall { width: usize, height: usize },
    #[error("image buffer has {len} pixels, expected {width}x{height}")]
    ImageSizeMismatch {
        width: usize,
        height: usize,
        len: usize,
    },
    #[error(transparent)]
    Tensor(#[from] TensorError),
}

/// One grayscale ultrasound slice: 8-bit pixels in row-major order,
/// rescaled to [0, 1] floats when encoded.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ImageSlice {
    width: usize,
    height: usize,
    pixels: Vec<u8>,
}

impl ImageSlice {
    pub fn new(width: usize, height: usize, pixels: Vec<u8>) -> Result<Self, EncodeError> {
        if width < 8 || height < 8 {
            return Err(EncodeError::ImageTooSmall { width, height });
        }
        if pixels.len() != width * height {
            return Err(EncodeError::ImageSizeMismatch {
                width,
                height,
                len: pixels.len(),
            });
        }
        Ok(ImageSlice {
            width,
            height,
            pixels,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn pixels(&self) -> &[u8] {
        &self.pixels
    }

    pub fn to_floats(&self) -> Vec<f64> {
        self.pixels.iter().map(|&p| p as f64 / 255.0).collect()
    }
}

/// FNV-1a 64-bit hash.
pub fn fnv1a_64(bytes: &[u8]) -> u64 {
    let mut hash: u64 = 0xcbf29ce484222325;
    for &b in bytes {
        hash ^= b as u64;
        hash = hash.wrapping_mul(0x100000001b3);
    }
    hash
}

/// Deterministic report tokenization: lowercase, split on non-alphanumeric
/// runs, hash each token into `[0, vocab)` with FNV-1a 64. Empty text gives
/// an empty list.
pub fn tokenize(text: &str, vocab: usize) -> Vec<usize> {
    let lower = text.to_lowercase();
    lower
        .split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(|t| (fnv1a_64(t.as_bytes()) % vocab as u64) as usize)
        .collect()
}

/// Two strided 3x3 convolutions (channels 1 -> 8 -> C, stride 2, padding 1)
/// with ReLU after each; spatial extent shrinks by 4x overall.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VisualEncoderParams {
    pub conv1_weight: Tensor,
    pub conv1_bias: Tensor,
    pub conv2_weight: Tensor,
    pub conv2_bias: Tensor,
}

impl VisualEncoderParams {
    pub fn init<R: Rng>(channels: usize, rng: &mut R) -> Self {
        VisualEncoderParams {
            conv1_weight: init::uniform(rng, vec![CONV_HIDDEN, 1, 3, 3], 9),
            conv1_bias: init::zeros(vec![CONV_HIDDEN]),
            conv2_weight: init::uniform(rng, vec![channels, CONV_HIDDEN, 3, 3], CONV_HIDDEN * 9),
            conv2_bias: init::zeros(vec![channels]),
        }
    }

    pub fn channels(&self) -> usize {
        self.conv2_weight.shape()[0]
    }
}

/// Dense 10 -> 32 -> C with ReLU between the layers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TabularEncoderParams {
    pub w1: Tensor,
    pub b1: Tensor,
    pub w2: Tensor,
    pub b2: Tensor,
}

impl TabularEncoderParams {
    pub fn init<R: Rng>(channels: usize, rng: &mut R) -> Self {
        TabularEncoderParams {
            w1: init::uniform(rng, vec![TABULAR_DIM, TAB_HIDDEN], TABULAR_DIM),
            b1: init::zeros(vec![TAB_HIDDEN]),
            w2: init::uniform(rng, vec![TAB_HIDDEN, channels], TAB_HIDDEN),
            b2: init::zeros(vec![channels]),
        }
    }

    pub fn channels(&self) -> usize {
        self.w2.shape()[1]
    }
}

/// Hashed-vocabulary embedding table with mean pooling over tokens.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TextEncoderParams {
    pub embedding: Tensor,
}

impl TextEncoderParams {
    pub fn init<R: Rng>(vocab: usize, channels: usize, rng: &mut R) -> Self {
        TextEncoderParams {
            embedding: init::uniform(rng, vec![vocab, channels], channels),
        }
    }

    pub fn vocab(&self) -> usize {
        self.embedding.shape()[0]
    }

    pub fn channels(&self) -> usize {
        self.embedding.shape()[1]
    }
}

/// Parameter bundle for whichever modalities a model consumes. Present
/// encoders always share one feature width.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EncoderParams {
    pub visual: Option<VisualEncoderParams>,
    pub tabular: Option<TabularEncoderParams>,
    pub text: Option<TextEncoderParams>,
}

impl EncoderParams {
    pub fn init<R: Rng>(modalities: ModalitySet, channels: usize, vocab: usize, rng: &mut R) -> Self {
        EncoderParams {
            visual: modalities.visual.then(|| VisualEncoderParams::init(channels, rng)),
            tabular: modalities.tabular.then(|| TabularEncoderParams::init(channels, rng)),
            text: modalities
                .linguistic
                .then(|| TextEncoderParams::init(vocab, channels, rng)),
        }
    }
}

/// Graph leaves for the visual encoder parameters.
#[derive(Debug, Clone, Copy)]
pub struct VisualNodes {
    pub conv1_weight: NodeId,
    pub conv1_bias: NodeId,
    pub conv2_weight: NodeId,
    pub conv2_bias: NodeId,
}

impl VisualEncoderParams {
    pub fn leaves(&self, g: &mut Graph) -> VisualNodes {
        VisualNodes {
            conv1_weight: g.leaf(self.conv1_weight.clone()),
            conv1_bias: g.leaf(self.conv1_bias.clone()),
            conv2_weight: g.leaf(self.conv2_weight.clone()),
            conv2_bias: g.leaf(self.conv2_bias.clone()),
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct TabularNodes {
    pub w1: NodeId,
    pub b1: NodeId,
    pub w2: NodeId,
    pub b2: NodeId,
}

impl TabularEncoderParams {
    pub fn leaves(&self, g: &mut Graph) -> TabularNodes {
        TabularNodes {
            w1: g.leaf(self.w1.clone()),
            b1: g.leaf(self.b1.clone()),
            w2: g.leaf(self.w2.clone()),
            b2: g.leaf(self.b2.clone()),
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct TextNodes {
    pub embedding: NodeId,
}

impl TextEncoderParams {
    pub fn leaves(&self, g: &mut Graph) -> TextNodes {
        TextNodes {
            embedding: g.leaf(self.embedding.clone()),
        }
    }
}

/// Stack a uniform batch of slices into an `[N,1,H,W]` input tensor.
pub fn image_batch(images: &[ImageSlice]) -> Result<Tensor, EncodeError> {
    let first = images.first().ok_or(EncodeError::EmptyBatch)?;
    let (w, h) = (first.width(), first.height());
    let mut data = Vec::with_capacity(images.len() * w * h);
    for (index, img) in images.iter().enumerate() {
        if img.width() != w || img.height() != h {
            return Err(EncodeError::NonUniformBatch {
                index,
                got_w: img.width(),
                got_h: img.height(),
                want_w: w,
                want_h: h,
            });
        }
        data.extend(img.to_floats());
    }
    Ok(Tensor::new(vec![images.len(), 1, h, w], data)?)
}

/// Visual feature map `[N,C,H/4,W/4]` from a uniform batch of slices.
pub fn encode_visual(
    g: &mut Graph,
    images: &[ImageSlice],
    nodes: &VisualNodes,
) -> Result<NodeId, EncodeError> {
    let input = g.leaf(image_batch(images)?);
    encode_visual_from(g, input, nodes)
}

/// Visual encoder over an already-inserted `[N,1,H,W]` input node.
pub fn encode_visual_from(
    g: &mut Graph,
    input: NodeId,
    nodes: &VisualNodes,
) -> Result<NodeId, EncodeError> {
    let c1 = g.conv2d(input, nodes.conv1_weight, nodes.conv1_bias, 2, 1)?;
    let a1 = g.relu(c1)?;
    let c2 = g.conv2d(a1, nodes.conv2_weight, nodes.conv2_bias, 2, 1)?;
    Ok(g.relu(c2)?)
}

/// Tabular features `[N,C]` from a `[N,10]` input node.
pub fn encode_tabular(
    g: &mut Graph,
    input: NodeId,
    nodes: &TabularNodes,
) -> Result<NodeId, EncodeError> {
    let shape = g.value(input).shape().to_vec();
    if shape.len() != 2 || shape[1] != TABULAR_DIM {
        return Err(EncodeError::Tensor(TensorError::ShapeMismatch {
            op: "encode_tabular",
            lhs: shape,
            rhs: vec![0, TABULAR_DIM],
        }));
    }
    let h = g.matmul(input, nodes.w1)?;
    let h = g.add_row_bias(h, nodes.b1)?;
    let h = g.relu(h)?;
    let out = g.matmul(h, nodes.w2)?;
    Ok(g.add_row_bias(out, nodes.b2)?)
}

/// Text features `[N,C]`: mean of embedding rows per sample; an empty token
/// list yields a zero row.
pub fn encode_text(
    g: &mut Graph,
    token_lists: &[Vec<usize>],
    nodes: &TextNodes,
) -> Result<NodeId, EncodeError> {
    Ok(g.embed_mean(nodes.embedding, token_lists)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::grad_check;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn fnv1a_matches_published_vectors() {
        assert_eq!(fnv1a_64(b""), 0xcbf29ce484222325);
        assert_eq!(fnv1a_64(b"a"), 0xaf63dc4c8601ec8c);
        assert_eq!(fnv1a_64(b"foobar"), 0x85944171f73967e8);
    }

    #[test]
    fn tokenize_folds_case_and_punctuation() {
        let ids = tokenize("Cyst, cyst", HASH_VOCAB);
        assert_eq!(ids.len(), 2);
        assert_eq!(ids[0], ids[1]);
        // Hand-verified: fnv1a_64("a") mod 4096.
        assert_eq!(tokenize("a", HASH_VOCAB), vec![0xaf63dc4c8601ec8c_u64 as usize % 4096]);
        assert_eq!(tokenize("a", HASH_VOCAB), vec![3212]);
    }

    #[test]
    fn tokenize_empty_text() {
        assert!(tokenize("", HASH_VOCAB).is_empty());
        assert!(tokenize("  ,.;  ", HASH_VOCAB).is_empty());
    }

    #[test]
    fn tokenize_golden_sentence() {
        // Frozen id list for a fixed sentence; guards hash and splitting.
        let ids = tokenize("Round cyst with smooth wall; no solid component.", 4096);
        assert_eq!(ids, vec![1051, 3158, 745, 1295, 1557, 2810, 3220, 1312]);
    }

    #[test]
    fn image_slice_validation() {
        assert!(matches!(
            ImageSlice::new(4, 8, vec![0; 32]),
            Err(EncodeError::ImageTooSmall { .. })
        ));
        assert!(matches!(
            ImageSlice::new(8, 8, vec![0; 10]),
            Err(EncodeError::ImageSizeMismatch { .. })
        ));
        assert!(ImageSlice::new(8, 8, vec![0; 64]).is_ok());
    }

    #[test]
    fn zero_image_and_zero_bias_give_zero_feature_map() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let params = VisualEncoderParams::init(4, &mut rng);
        let img = ImageSlice::new(16, 16, vec![0; 256]).unwrap();
        let mut g = Graph::new();
        let nodes = params.leaves(&mut g);
        let out = encode_visual(&mut g, &[img], &nodes).unwrap();
        assert!(g.value(out).data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn visual_output_shape_is_quarter_resolution() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let params = VisualEncoderParams::init(16, &mut rng);
        let img = ImageSlice::new(32, 32, vec![128; 1024]).unwrap();
        let mut g = Graph::new();
        let nodes = params.leaves(&mut g);
        let out = encode_visual(&mut g, &[img], &nodes).unwrap();
        assert_eq!(g.value(out).shape(), &[1, 16, 8, 8]);
    }

    #[test]
    fn visual_rejects_non_uniform_batch() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let params = VisualEncoderParams::init(4, &mut rng);
        let a = ImageSlice::new(16, 16, vec![0; 256]).unwrap();
        let b = ImageSlice::new(8, 8, vec![0; 64]).unwrap();
        let mut g = Graph::new();
        let nodes = params.leaves(&mut g);
        assert!(matches!(
            encode_visual(&mut g, &[a, b], &nodes),
            Err(EncodeError::NonUniformBatch { index: 1, .. })
        ));
    }

    #[test]
    fn visual_gradients_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let params = VisualEncoderParams::init(3, &mut rng);
        let img = ImageSlice::new(
            8,
            8,
            (0..64).map(|i| (i * 4 % 256) as u8).collect(),
        )
        .unwrap();
        let err = grad_check(
            move |g, ids| {
                let nodes = VisualNodes {
                    conv1_weight: ids[0],
                    conv1_bias: ids[1],
                    conv2_weight: ids[2],
                    conv2_bias: ids[3],
                };
                let feat = encode_visual(g, &[img.clone()], &nodes).map_err(unwrap_tensor)?;
                let pooled = g.gap(feat)?;
                g.cross_entropy(pooled, &[1])
            },
            &[
                params.conv1_weight.clone(),
                params.conv1_bias.clone(),
                params.conv2_weight.clone(),
                params.conv2_bias.clone(),
            ],
            1e-5,
            48,
        )
        .unwrap();
        assert!(err < 1e-4, "visual encoder grad error {err}");
    }

    fn unwrap_tensor(e: EncodeError) -> crate::tensor::TensorError {
        match e {
            EncodeError::Tensor(t) => t,
            other => panic!("unexpected encode error {other:?}"),
        }
    }

    #[test]
    fn tabular_zero_input_zero_bias_gives_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let params = TabularEncoderParams::init(8, &mut rng);
        let mut g = Graph::new();
        let nodes = params.leaves(&mut g);
        let x = g.leaf(Tensor::zeros(vec![3, TABULAR_DIM]));
        let out = encode_tabular(&mut g, x, &nodes).unwrap();
        assert!(g.value(out).data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn tabular_output_shape() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let params = TabularEncoderParams::init(24, &mut rng);
        let mut g = Graph::new();
        let nodes = params.leaves(&mut g);
        let x = g.leaf(Tensor::zeros(vec![32, TABULAR_DIM]));
        let out = encode_tabular(&mut g, x, &nodes).unwrap();
        assert_eq!(g.value(out).shape(), &[32, 24]);
    }

    #[test]
    fn tabular_rejects_wrong_width() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let params = TabularEncoderParams::init(8, &mut rng);
        let mut g = Graph::new();
        let nodes = params.leaves(&mut g);
        let x = g.leaf(Tensor::zeros(vec![3, 9]));
        assert!(encode_tabular(&mut g, x, &nodes).is_err());
    }

    #[test]
    fn tabular_gradients_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let params = TabularEncoderParams::init(5, &mut rng);
        let x = crate::init::uniform(&mut rng, vec![3, TABULAR_DIM], 1).requires_grad(false);
        let err = grad_check(
            move |g, ids| {
                let nodes = TabularNodes {
                    w1: ids[0],
                    b1: ids[1],
                    w2: ids[2],
                    b2: ids[3],
                };
                let input = g.leaf(x.clone());
                let feat = encode_tabular(g, input, &nodes).map_err(unwrap_tensor)?;
                g.cross_entropy(feat, &[0, 2, 4])
            },
            &[
                params.w1.clone(),
                params.b1.clone(),
                params.w2.clone(),
                params.b2.clone(),
            ],
            1e-5,
            48,
        )
        .unwrap();
        assert!(err < 1e-4, "tabular encoder grad error {err}");
    }

    #[test]
    fn text_empty_report_is_zero_row_and_single_token_is_its_row() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let params = TextEncoderParams::init(16, 4, &mut rng);
        let mut g = Graph::new();
        let nodes = params.leaves(&mut g);
        let out = encode_text(&mut g, &[vec![], vec![7]], &nodes).unwrap();
        assert_eq!(&g.value(out).data()[..4], &[0.0; 4]);
        assert_eq!(&g.value(out).data()[4..], params.embedding.row(7));
    }

    #[test]
    fn text_is_order_invariant() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let params = TextEncoderParams::init(32, 6, &mut rng);
        let mut g = Graph::new();
        let nodes = params.leaves(&mut g);
        let a = encode_text(&mut g, &[vec![1, 5, 9, 9, 2]], &nodes).unwrap();
        let b = encode_text(&mut g, &[vec![9, 2, 5, 9, 1]], &nodes).unwrap();
        for (x, y) in g.value(a).data().iter().zip(g.value(b).data()) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn text_gradients_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let params = TextEncoderParams::init(8, 3, &mut rng);
        let err = grad_check(
            |g, ids| {
                let nodes = TextNodes { embedding: ids[0] };
                let feat =
                    encode_text(g, &[vec![0, 1, 1], vec![7], vec![]], &nodes).map_err(unwrap_tensor)?;
                g.cross_entropy(feat, &[0, 1, 2])
            },
            &[params.embedding.clone()],
            1e-5,
            48,
        )
        .unwrap();
        assert!(err < 1e-4, "text encoder grad error {err}");
    }
}
