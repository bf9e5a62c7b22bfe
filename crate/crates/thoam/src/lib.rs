//! Tri-modal tumor-type classification: image, tabular, and report-text
//! encoders fused by two chained cross-attention stages, trained and
//! evaluated end to end on a seeded synthetic dataset.
//!
//! The crate is organized around the pipeline:
//!
//! - [`tensor`] — dense f64 tensors with reverse-mode autodiff
//! - [`preprocess`] — fitted tabular normalization (min-max / z-score /
//!   robust scaling) producing the 10-dimensional tabular input
//! - [`encoders`] — small trainable per-modality feature encoders
//! - [`fusion`] — the hierarchical cross-attention fusion stages, the
//!   concatenation baseline, and modality-subset variants
//! - [`model`] — the combined trainable parameter bundle and checkpoints
//! - [`optim`] — SGD / AdamW updates and the stepped learning-rate schedule
//! - [`metrics`] — accuracy, one-vs-rest AUC/ROC, sensitivity/specificity,
//!   confusion matrices
//! - [`data`] — case records, manifest I/O, patient-level splits, and the
//!   seeded synthetic generator
//! - [`harness`] — experiment configuration and the generate / train /
//!   eval / ablate / compare-fusion / gradcheck commands
//!
//! Runnable walkthroughs of each capability live under `examples/`.

pub mod data;
pub mod encoders;
pub mod fusion;
pub mod harness;
mod init;
pub mod metrics;
pub mod model;
pub mod optim;
pub mod preprocess;
pub mod tensor;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

/// Number of tumor classes in the classification task.
pub const NUM_CLASSES: usize = 6;

/// Which of the three input modalities a model consumes.
///
/// Serialized as a compact letter tag in canonical order: `"v"`, `"vt"`,
/// `"vtl"`, ... (v = visual, t = tabular, l = linguistic).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ModalitySet {
    pub visual: bool,
    pub tabular: bool,
    pub linguistic: bool,
}

impl ModalitySet {
    pub const ALL: ModalitySet = ModalitySet {
        visual: true,
        tabular: true,
        linguistic: true,
    };

    pub fn count(&self) -> usize {
        usize::from(self.visual) + usize::from(self.tabular) + usize::from(self.linguistic)
    }

    pub fn is_empty(&self) -> bool {
        self.count() == 0
    }

    /// Canonical letter tag, e.g. `"vt"`.
    pub fn tag(&self) -> String {
        let mut s = String::new();
        if self.visual {
            s.push('v');
        }
        if self.tabular {
            s.push('t');
        }
        if self.linguistic {
            s.push('l');
        }
        s
    }

    /// Human-readable label, e.g. `"V+T"`.
    pub fn label(&self) -> String {
        let mut parts = Vec::new();
        if self.visual {
            parts.push("V");
        }
        if self.tabular {
            parts.push("T");
        }
        if self.linguistic {
            parts.push("L");
        }
        parts.join("+")
    }

    /// The seven non-empty subsets, unimodal first, tri-modal last.
    pub fn all_non_empty() -> [ModalitySet; 7] {
        let m = |v, t, l| ModalitySet {
            visual: v,
            tabular: t,
            linguistic: l,
        };
        [
            m(true, false, false),
            m(false, true, false),
            m(false, false, true),
            m(true, true, false),
            m(true, false, true),
            m(false, true, true),
            m(true, true, true),
        ]
    }
}

impl FromStr for ModalitySet {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let mut set = ModalitySet {
            visual: false,
            tabular: false,
            linguistic: false,
        };
        for ch in s.chars() {
            match ch {
                'v' => set.visual = true,
                't' => set.tabular = true,
                'l' => set.linguistic = true,
                other => return Err(format!("unknown modality letter {other:?} (use v, t, l)")),
            }
        }
        if set.is_empty() {
            return Err("modality set must not be empty".into());
        }
        Ok(set)
    }
}

impl fmt::Display for ModalitySet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.tag())
    }
}

impl Serialize for ModalitySet {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(&self.tag())
    }
}

impl<'de> Deserialize<'de> for ModalitySet {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}
