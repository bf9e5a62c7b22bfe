//! Parameter update rules (SGD and AdamW, decoupled weight decay for AdamW)
//! and the stepped learning-rate schedule.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::tensor::Tensor;

pub const ADAM_BETA1: f64 = 0.9;
pub const ADAM_BETA2: f64 = 0.999;
pub const ADAM_EPS: f64 = 1e-8;
pub const DEFAULT_WEIGHT_DECAY: f64 = 1e-5;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum OptimError {
    #[error("expected {params} gradient buffers, got {grads}")]
    GradCountMismatch { params: usize, grads: usize },
    #[error("parameter {index} has {param_len} values but its gradient has {grad_len}")]
    GradShapeMismatch {
        index: usize,
        param_len: usize,
        grad_len: usize,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OptimKind {
    Sgd,
    AdamW,
}

/// Piecewise-constant learning-rate schedule: the rate starts at `base` and
/// is multiplied by `factor` at every milestone epoch.
///
/// Composition is carried out in exact decimal arithmetic on the shortest
/// decimal representations of `base` and `factor`, then rounded once to f64.
/// With base 1e-3 and factor 0.3 the schedule therefore yields exactly
/// 1e-3, 3e-4, 9e-5 and 2.7e-5 — the values a decimal calculation gives —
/// rather than the drifted products of repeated binary rounding.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepLr {
    pub base: f64,
    pub factor: f64,
    pub milestones: Vec<usize>,
}

impl StepLr {
    pub fn new(base: f64, factor: f64, mut milestones: Vec<usize>) -> Self {
        milestones.sort_unstable();
        StepLr {
            base,
            factor,
            milestones,
        }
    }

    /// Learning rate for a zero-based epoch index.
    pub fn lr(&self, epoch: usize) -> f64 {
        let k = self.milestones.iter().filter(|&&m| m <= epoch).count() as u32;
        if k == 0 {
            return self.base;
        }
        decimal_pow_mul(self.base, self.factor, k)
            .unwrap_or_else(|| self.base * self.factor.powi(k as i32))
    }
}

/// `base · factor^k` computed in decimal: both operands are taken at their
/// shortest decimal representation, the product is formed over integer
/// mantissas, and the result is parsed back (one correctly-rounded step).
/// Returns `None` if the mantissa arithmetic would overflow.
fn decimal_pow_mul(base: f64, factor: f64, k: u32) -> Option<f64> {
    let (mb, eb) = decimal_parts(base)?;
    let (mf, ef) = decimal_parts(factor)?;
    let mut mantissa = mb;
    let mut exponent = eb;
    for _ in 0..k {
        mantissa = mantissa.checked_mul(mf)?;
        exponent = exponent.checked_add(ef)?;
    }
    format!("{mantissa}e{exponent}").parse().ok()
}

/// Mantissa/decimal-exponent decomposition of a float's shortest decimal
/// form: 0.003 -> (3, -3), 12.5 -> (125, -1).
fn decimal_parts(x: f64) -> Option<(i128, i32)> {
    if !x.is_finite() {
        return None;
    }
    let s = format!("{x}");
    let (int_part, frac_part) = match s.split_once('.') {
        Some((i, f)) => (i, f),
        None => (s.as_str(), ""),
    };
    let mantissa: i128 = format!("{int_part}{frac_part}").parse().ok()?;
    Some((mantissa, -(frac_part.len() as i32)))
}

struct Slot {
    m: Vec<f64>,
    v: Vec<f64>,
}

/// Stateful parameter updater. Moment buffers are allocated on the first
/// step and must shape-match the parameters on every subsequent step.
/// Updates are deterministic functions of (params, grads, state).
pub struct Optimizer {
    kind: OptimKind,
    weight_decay: f64,
    momentum: f64,
    step_count: u64,
    slots: Vec<Slot>,
}

impl Optimizer {
    pub fn new(kind: OptimKind, weight_decay: f64) -> Self {
        Optimizer {
            kind,
            weight_decay,
            momentum: 0.0,
            step_count: 0,
            slots: Vec::new(),
        }
    }

    /// SGD momentum coefficient (default 0: plain gradient steps).
    pub fn with_momentum(mut self, momentum: f64) -> Self {
        self.momentum = momentum;
        self
    }

    pub fn kind(&self) -> OptimKind {
        self.kind
    }

    /// Apply one update to every parameter given its gradient and the
    /// current learning rate.
    pub fn step(
        &mut self,
        params: &mut [&mut Tensor],
        grads: &[Vec<f64>],
        lr: f64,
    ) -> Result<(), OptimError> {
        if params.len() != grads.len() {
            return Err(OptimError::GradCountMismatch {
                params: params.len(),
                grads: grads.len(),
            });
        }
        for (index, (p, g)) in params.iter().zip(grads).enumerate() {
            if p.numel() != g.len() {
                return Err(OptimError::GradShapeMismatch {
                    index,
                    param_len: p.numel(),
                    grad_len: g.len(),
                });
            }
        }
        if self.slots.is_empty() {
            self.slots = params
                .iter()
                .map(|p| Slot {
                    m: vec![0.0; p.numel()],
                    v: vec![0.0; p.numel()],
                })
                .collect();
        } else if self.slots.len() != params.len() {
            return Err(OptimError::GradCountMismatch {
                params: params.len(),
                grads: self.slots.len(),
            });
        }
        self.step_count += 1;
        match self.kind {
            OptimKind::Sgd => self.sgd_step(params, grads, lr),
            OptimKind::AdamW => self.adamw_step(params, grads, lr),
        }
        Ok(())
    }

    /// `p ← p − lr·(g + wd·p)`, with an optional momentum buffer over the
    /// decayed gradient.
    fn sgd_step(&mut self, params: &mut [&mut Tensor], grads: &[Vec<f64>], lr: f64) {
        for ((p, g), slot) in params.iter_mut().zip(grads).zip(&mut self.slots) {
            let data = p.data_mut();
            for i in 0..data.len() {
                let decayed = g[i] + self.weight_decay * data[i];
                let step = if self.momentum > 0.0 {
                    slot.m[i] = self.momentum * slot.m[i] + decayed;
                    slot.m[i]
                } else {
                    decayed
                };
                data[i] -= lr * step;
            }
        }
    }

    /// Standard AdamW with bias correction and decoupled weight decay:
    /// `p ← p − lr·(m̂/(√v̂+ε) + wd·p)`.
    fn adamw_step(&mut self, params: &mut [&mut Tensor], grads: &[Vec<f64>], lr: f64) {
        let t = self.step_count as f64;
        let bc1 = 1.0 - ADAM_BETA1.powf(t);
        let bc2 = 1.0 - ADAM_BETA2.powf(t);
        for ((p, g), slot) in params.iter_mut().zip(grads).zip(&mut self.slots) {
            let data = p.data_mut();
            for i in 0..data.len() {
                slot.m[i] = ADAM_BETA1 * slot.m[i] + (1.0 - ADAM_BETA1) * g[i];
                slot.v[i] = ADAM_BETA2 * slot.v[i] + (1.0 - ADAM_BETA2) * g[i] * g[i];
                let m_hat = slot.m[i] / bc1;
                let v_hat = slot.v[i] / bc2;
                data[i] -= lr * (m_hat / (v_hat.sqrt() + ADAM_EPS) + self.weight_decay * data[i]);
            }
        }
    }
}
