//! Dense f64 tensors with reverse-mode automatic differentiation.
//!
//! The engine is deliberately small: row-major storage, the exact operation
//! set the encoders and fusion stages need, and a tape-style [`Graph`] that
//! records forward operations and replays them in reverse for gradients.
//! All arithmetic is 64-bit and every reduction runs in a fixed sequential
//! order, so identical inputs give bit-identical outputs.

mod gradcheck;
mod graph;

pub use gradcheck::{grad_check, numeric_grad, relative_error};
pub use graph::{Graph, NodeId};

use serde::de::Error as _;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TensorError {
    #[error("{op}: shape mismatch {lhs:?} vs {rhs:?}")]
    ShapeMismatch {
        op: &'static str,
        lhs: Vec<usize>,
        rhs: Vec<usize>,
    },
    #[error("{op}: expected rank {expected}, got shape {shape:?}")]
    RankMismatch {
        op: &'static str,
        expected: usize,
        shape: Vec<usize>,
    },
    #[error("shape {shape:?} does not fit {len} data values")]
    LengthMismatch { shape: Vec<usize>, len: usize },
    #[error("{op}: produced a non-finite value")]
    NonFinite { op: &'static str },
    #[error("label {label} out of range for {classes} classes")]
    LabelOutOfRange { label: usize, classes: usize },
    #[error("token id {token} out of range for vocabulary of {vocab}")]
    TokenOutOfRange { token: usize, vocab: usize },
    #[error("backward requires a scalar loss, got shape {shape:?}")]
    NonScalarLoss { shape: Vec<usize> },
    #[error("cannot reshape {from:?} into {to:?}")]
    BadReshape { from: Vec<usize>, to: Vec<usize> },
    #[error("{op}: invalid dimension ({detail})")]
    BadDimension { op: &'static str, detail: String },
}

/// Dense n-dimensional array of f64 in row-major order.
///
/// `grad` is populated by [`Graph::backward`] for nodes that require
/// gradients; it always has the same length as `data`.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
    pub requires_grad: bool,
    pub grad: Option<Vec<f64>>,
}

impl Tensor {
    /// Build a tensor, validating that the shape matches the data length and
    /// that every value is finite.
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Self, TensorError> {
        let numel: usize = shape.iter().product();
        if numel != data.len() {
            return Err(TensorError::LengthMismatch {
                shape,
                len: data.len(),
            });
        }
        if !data.iter().all(|v| v.is_finite()) {
            return Err(TensorError::NonFinite { op: "new" });
        }
        Ok(Tensor {
            shape,
            data,
            requires_grad: false,
            grad: None,
        })
    }

    pub fn zeros(shape: Vec<usize>) -> Self {
        let numel: usize = shape.iter().product();
        Tensor {
            shape,
            data: vec![0.0; numel],
            requires_grad: false,
            grad: None,
        }
    }

    pub fn scalar(value: f64) -> Result<Self, TensorError> {
        Tensor::new(vec![], vec![value])
    }

    /// 2-D convenience constructor from rows.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self, TensorError> {
        let n = rows.len();
        let m = rows.first().map_or(0, |r| r.len());
        let mut data = Vec::with_capacity(n * m);
        for r in rows {
            if r.len() != m {
                return Err(TensorError::ShapeMismatch {
                    op: "from_rows",
                    lhs: vec![n, m],
                    rhs: vec![n, r.len()],
                });
            }
            data.extend_from_slice(r);
        }
        Tensor::new(vec![n, m], data)
    }

    pub fn requires_grad(mut self, flag: bool) -> Self {
        self.requires_grad = flag;
        self
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    /// Mutable access for in-place parameter updates. Callers must keep the
    /// values finite.
    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn numel(&self) -> usize {
        self.data.len()
    }

    /// Row `i` of a rank-2 tensor.
    pub fn row(&self, i: usize) -> &[f64] {
        let m = self.shape[self.shape.len() - 1];
        &self.data[i * m..(i + 1) * m]
    }
}

// Checkpoints serialize tensors as {shape, data}. Values round-trip
// bit-exactly because serde_json emits the shortest representation that
// parses back to the same f64.
impl Serialize for Tensor {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        use serde::ser::SerializeStruct;
        let mut s = serializer.serialize_struct("Tensor", 2)?;
        s.serialize_field("shape", &self.shape)?;
        s.serialize_field("data", &self.data)?;
        s.end()
    }
}

impl<'de> Deserialize<'de> for Tensor {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        struct Raw {
            shape: Vec<usize>,
            data: Vec<f64>,
        }
        let raw = Raw::deserialize(deserializer)?;
        Tensor::new(raw.shape, raw.data).map_err(D::Error::custom)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn new_rejects_length_mismatch() {
        let err = Tensor::new(vec![2, 3], vec![1.0; 5]).unwrap_err();
        assert!(matches!(err, TensorError::LengthMismatch { .. }));
    }

    #[test]
    fn new_rejects_non_finite() {
        let err = Tensor::new(vec![2], vec![1.0, f64::NAN]).unwrap_err();
        assert!(matches!(err, TensorError::NonFinite { .. }));
    }

    #[test]
    fn scalar_has_one_element() {
        let t = Tensor::scalar(3.5).unwrap();
        assert_eq!(t.numel(), 1);
        assert!(t.shape().is_empty());
    }

    #[test]
    fn serde_round_trip_is_bit_exact() {
        let t = Tensor::new(vec![2, 2], vec![0.1, -2.5e-17, 1.0 / 3.0, 7e300]).unwrap();
        let json = serde_json::to_string(&t).unwrap();
        let back: Tensor = serde_json::from_str(&json).unwrap();
        assert_eq!(back.shape(), t.shape());
        for (a, b) in back.data().iter().zip(t.data()) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
    }
}
