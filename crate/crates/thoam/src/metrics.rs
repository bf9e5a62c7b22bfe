//! Evaluation protocol: accuracy, one-vs-rest AUC and ROC curves,
//! per-class sensitivity/specificity, and row-normalized confusion matrices.
//!
//! AUC is defined by the Mann-Whitney rank statistic (ties count one half),
//! which equals the trapezoidal area under the ROC curve; the curve export
//! is kept consistent with the rank value by property test. Metrics whose
//! denominator is empty (a class absent from the labels) surface as explicit
//! `None` markers rather than silent zeros.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MetricsError {
    #[error("empty input")]
    Empty,
    #[error("length mismatch: {preds} predictions vs {labels} labels")]
    LengthMismatch { preds: usize, labels: usize },
    #[error("class {class} out of range for {classes} classes")]
    ClassOutOfRange { class: usize, classes: usize },
}

/// Fraction of predictions that match the labels.
pub fn accuracy(preds: &[usize], labels: &[usize]) -> Result<f64, MetricsError> {
    if preds.len() != labels.len() {
        return Err(MetricsError::LengthMismatch {
            preds: preds.len(),
            labels: labels.len(),
        });
    }
    if preds.is_empty() {
        return Err(MetricsError::Empty);
    }
    let hits = preds.iter().zip(labels).filter(|(p, l)| p == l).count();
    Ok(hits as f64 / preds.len() as f64)
}

/// Square count matrix with rows indexed by true class and columns by
/// predicted class.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    classes: usize,
    counts: Vec<Vec<u64>>,
}

/// Row-normalized view of a confusion matrix. Rows of an absent class stay
/// all-zero and are flagged in `empty_rows`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormalizedConfusion {
    pub rows: Vec<Vec<f64>>,
    pub empty_rows: Vec<bool>,
}

impl ConfusionMatrix {
    pub fn from_predictions(
        preds: &[usize],
        labels: &[usize],
        classes: usize,
    ) -> Result<Self, MetricsError> {
        if preds.len() != labels.len() {
            return Err(MetricsError::LengthMismatch {
                preds: preds.len(),
                labels: labels.len(),
            });
        }
        let mut counts = vec![vec![0u64; classes]; classes];
        for (&p, &l) in preds.iter().zip(labels) {
            if p >= classes {
                return Err(MetricsError::ClassOutOfRange { class: p, classes });
            }
            if l >= classes {
                return Err(MetricsError::ClassOutOfRange { class: l, classes });
            }
            counts[l][p] += 1;
        }
        Ok(ConfusionMatrix { classes, counts })
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn counts(&self) -> &[Vec<u64>] {
        &self.counts
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    /// Divide each row by its sum; non-empty rows then sum to 1.
    pub fn row_normalized(&self) -> NormalizedConfusion {
        let mut rows = Vec::with_capacity(self.classes);
        let mut empty_rows = Vec::with_capacity(self.classes);
        for row in &self.counts {
            let sum: u64 = row.iter().sum();
            if sum == 0 {
                rows.push(vec![0.0; self.classes]);
                empty_rows.push(true);
            } else {
                rows.push(row.iter().map(|&c| c as f64 / sum as f64).collect());
                empty_rows.push(false);
            }
        }
        NormalizedConfusion { rows, empty_rows }
    }
}

/// One-vs-rest sensitivity and specificity for one class. `None` marks an
/// undefined value (zero denominator).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SenSpe {
    pub sensitivity: Option<f64>,
    pub specificity: Option<f64>,
}

/// TP/(TP+FN) and TN/(TN+FP) for `class` against the rest.
pub fn sen_spe(cm: &ConfusionMatrix, class: usize) -> Result<SenSpe, MetricsError> {
    let k = cm.classes();
    if class >= k {
        return Err(MetricsError::ClassOutOfRange { class, classes: k });
    }
    let counts = cm.counts();
    let tp = counts[class][class];
    let fn_: u64 = (0..k).filter(|&j| j != class).map(|j| counts[class][j]).sum();
    let fp: u64 = (0..k).filter(|&i| i != class).map(|i| counts[i][class]).sum();
    let tn: u64 = cm.total() - tp - fn_ - fp;
    let sensitivity = if tp + fn_ > 0 {
        Some(tp as f64 / (tp + fn_) as f64)
    } else {
        None
    };
    let specificity = if tn + fp > 0 {
        Some(tn as f64 / (tn + fp) as f64)
    } else {
        None
    };
    Ok(SenSpe {
        sensitivity,
        specificity,
    })
}

/// One-vs-rest AUC for `class` by the Mann-Whitney rank statistic: the
/// fraction of (positive, negative) pairs where the positive outscores the
/// negative, ties counting one half. Returns `None` when the class has no
/// positives or no negatives.
pub fn auc_ovr(scores: &[f64], labels: &[usize], class: usize) -> Result<Option<f64>, MetricsError> {
    if scores.len() != labels.len() {
        return Err(MetricsError::LengthMismatch {
            preds: scores.len(),
            labels: labels.len(),
        });
    }
    if scores.is_empty() {
        return Err(MetricsError::Empty);
    }
    let positives = labels.iter().filter(|&&l| l == class).count();
    let negatives = labels.len() - positives;
    if positives == 0 || negatives == 0 {
        return Ok(None);
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].partial_cmp(&scores[b]).expect("finite scores"));
    // Midranks (1-based); tied scores share the average of their ranks.
    let mut rank_sum_pos = 0.0f64;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j < order.len() && scores[order[j]] == scores[order[i]] {
            j += 1;
        }
        let midrank = (i + 1 + j) as f64 / 2.0; // average of ranks i+1 ..= j
        for &idx in &order[i..j] {
            if labels[idx] == class {
                rank_sum_pos += midrank;
            }
        }
        i = j;
    }
    let p = positives as f64;
    let n = negatives as f64;
    Ok(Some((rank_sum_pos - p * (p + 1.0) / 2.0) / (p * n)))
}

/// One point of a ROC curve. `threshold` is the lowest score still
/// classified positive at this point (`+inf` for the initial (0, 0) point).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RocPoint {
    pub threshold: f64,
    pub fpr: f64,
    pub tpr: f64,
}

/// ROC points for `class` against the rest, thresholded at every distinct
/// score in descending order. The list starts at (0, 0), ends at (1, 1),
/// and is monotone non-decreasing in both coordinates; its trapezoidal area
/// equals [`auc_ovr`]. Returns `None` when AUC is undefined.
pub fn roc_points(
    scores: &[f64],
    labels: &[usize],
    class: usize,
) -> Result<Option<Vec<RocPoint>>, MetricsError> {
    if scores.len() != labels.len() {
        return Err(MetricsError::LengthMismatch {
            preds: scores.len(),
            labels: labels.len(),
        });
    }
    if scores.is_empty() {
        return Err(MetricsError::Empty);
    }
    let positives = labels.iter().filter(|&&l| l == class).count();
    let negatives = labels.len() - positives;
    if positives == 0 || negatives == 0 {
        return Ok(None);
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].partial_cmp(&scores[a]).expect("finite scores"));
    let mut points = vec![RocPoint {
        threshold: f64::INFINITY,
        fpr: 0.0,
        tpr: 0.0,
    }];
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut i = 0;
    while i < order.len() {
        let s = scores[order[i]];
        while i < order.len() && scores[order[i]] == s {
            if labels[order[i]] == class {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        points.push(RocPoint {
            threshold: s,
            fpr: fp as f64 / negatives as f64,
            tpr: tp as f64 / positives as f64,
        });
    }
    Ok(Some(points))
}

/// Trapezoidal area under a ROC point list.
pub fn roc_trapezoid_area(points: &[RocPoint]) -> f64 {
    points
        .windows(2)
        .map(|w| (w[1].fpr - w[0].fpr) * (w[1].tpr + w[0].tpr) / 2.0)
        .sum()
}

/// Unweighted mean over classes whose AUC is defined; `None` if none are.
pub fn macro_auc(per_class: &[Option<f64>]) -> Option<f64> {
    let defined: Vec<f64> = per_class.iter().flatten().copied().collect();
    if defined.is_empty() {
        None
    } else {
        Some(defined.iter().sum::<f64>() / defined.len() as f64)
    }
}

/// Per-class metric block of an evaluation report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub class: String,
    pub auc: Option<f64>,
    pub sensitivity: Option<f64>,
    pub specificity: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RocCurve {
    pub class: String,
    pub points: Vec<RocPoint>,
}

/// Full evaluation payload: accuracy, per-class AUC/SEN/SPE, macro AUC,
/// raw and row-normalized confusion matrices, and per-class ROC points.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub samples: usize,
    pub accuracy: f64,
    pub macro_auc: Option<f64>,
    pub per_class: Vec<ClassMetrics>,
    pub confusion: Vec<Vec<u64>>,
    pub confusion_row_normalized: NormalizedConfusion,
    pub roc: Vec<RocCurve>,
}

impl EvalReport {
    /// Assemble a report from labels, hard predictions, and per-sample
    /// class-probability rows (`scores[i][k]` is sample i's score for
    /// class k).
    pub fn compute(
        labels: &[usize],
        preds: &[usize],
        scores: &[Vec<f64>],
        class_names: &[String],
    ) -> Result<Self, MetricsError> {
        let classes = class_names.len();
        let acc = accuracy(preds, labels)?;
        let cm = ConfusionMatrix::from_predictions(preds, labels, classes)?;
        let mut per_class = Vec::with_capacity(classes);
        let mut roc = Vec::with_capacity(classes);
        let mut aucs = Vec::with_capacity(classes);
        for k in 0..classes {
            let class_scores: Vec<f64> = scores.iter().map(|row| row[k]).collect();
            let auc = auc_ovr(&class_scores, labels, k)?;
            let ss = sen_spe(&cm, k)?;
            per_class.push(ClassMetrics {
                class: class_names[k].clone(),
                auc,
                sensitivity: ss.sensitivity,
                specificity: ss.specificity,
            });
            if let Some(points) = roc_points(&class_scores, labels, k)? {
                roc.push(RocCurve {
                    class: class_names[k].clone(),
                    points,
                });
            }
            aucs.push(auc);
        }
        Ok(EvalReport {
            samples: labels.len(),
            accuracy: acc,
            macro_auc: macro_auc(&aucs),
            per_class,
            confusion: cm.counts().to_vec(),
            confusion_row_normalized: cm.row_normalized(),
            roc,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Brute-force pairwise oracle for one-vs-rest AUC.
    fn auc_pairwise(scores: &[f64], labels: &[usize], class: usize) -> Option<f64> {
        let pos: Vec<f64> = scores
            .iter()
            .zip(labels)
            .filter(|(_, &l)| l == class)
            .map(|(&s, _)| s)
            .collect();
        let neg: Vec<f64> = scores
            .iter()
            .zip(labels)
            .filter(|(_, &l)| l != class)
            .map(|(&s, _)| s)
            .collect();
        if pos.is_empty() || neg.is_empty() {
            return None;
        }
        let mut num = 0.0;
        for &p in &pos {
            for &n in &neg {
                if p > n {
                    num += 1.0;
                } else if p == n {
                    num += 0.5;
                }
            }
        }
        Some(num / (pos.len() * neg.len()) as f64)
    }

    #[test]
    fn accuracy_basics() {
        assert_eq!(accuracy(&[1, 2, 3], &[1, 2, 3]).unwrap(), 1.0);
        assert_eq!(accuracy(&[0, 0], &[1, 2]).unwrap(), 0.0);
        assert_eq!(accuracy(&[1, 1, 2, 0], &[1, 1, 2, 3]).unwrap(), 0.75);
        assert!(matches!(accuracy(&[], &[]), Err(MetricsError::Empty)));
        assert!(matches!(
            accuracy(&[1], &[1, 2]),
            Err(MetricsError::LengthMismatch { .. })
        ));
    }

    #[test]
    fn confusion_perfect_is_diagonal() {
        let labels = [0, 1, 2, 3, 4, 5];
        let cm = ConfusionMatrix::from_predictions(&labels, &labels, 6).unwrap();
        for i in 0..6 {
            for j in 0..6 {
                assert_eq!(cm.counts()[i][j], u64::from(i == j));
            }
        }
    }

    #[test]
    fn confusion_single_sample() {
        let cm = ConfusionMatrix::from_predictions(&[5], &[2], 6).unwrap();
        assert_eq!(cm.counts()[2][5], 1);
        assert_eq!(cm.total(), 1);
    }

    #[test]
    fn confusion_hand_counted_case() {
        let labels = [0, 0, 1, 1, 2, 2];
        let preds = [0, 1, 1, 1, 2, 0];
        let cm = ConfusionMatrix::from_predictions(&preds, &labels, 3).unwrap();
        assert_eq!(cm.counts()[0], vec![1, 1, 0]);
        assert_eq!(cm.counts()[1], vec![0, 2, 0]);
        assert_eq!(cm.counts()[2], vec![1, 0, 1]);
    }

    #[test]
    fn confusion_rejects_out_of_range() {
        assert!(matches!(
            ConfusionMatrix::from_predictions(&[6], &[0], 6),
            Err(MetricsError::ClassOutOfRange { class: 6, .. })
        ));
    }

    #[test]
    fn row_normalization_flags_empty_rows() {
        let cm = ConfusionMatrix::from_predictions(&[0, 0, 1], &[0, 1, 1], 3).unwrap();
        let norm = cm.row_normalized();
        assert_eq!(norm.empty_rows, vec![false, false, true]);
        for (row, empty) in norm.rows.iter().zip(&norm.empty_rows) {
            let sum: f64 = row.iter().sum();
            if *empty {
                assert_eq!(sum, 0.0);
            } else {
                assert!((sum - 1.0).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn sen_spe_perfect_classifier() {
        let labels = [0, 1, 2, 0, 1, 2];
        let cm = ConfusionMatrix::from_predictions(&labels, &labels, 3).unwrap();
        for k in 0..3 {
            let ss = sen_spe(&cm, k).unwrap();
            assert_eq!(ss.sensitivity, Some(1.0));
            assert_eq!(ss.specificity, Some(1.0));
        }
    }

    #[test]
    fn sen_spe_absent_class_is_undefined() {
        let cm = ConfusionMatrix::from_predictions(&[0, 1], &[0, 1], 3).unwrap();
        let ss = sen_spe(&cm, 2).unwrap();
        assert_eq!(ss.sensitivity, None);
        assert!(ss.specificity.is_some());
    }

    #[test]
    fn sen_spe_hand_counted_case() {
        let labels = [0, 0, 1, 1, 2, 2];
        let preds = [0, 1, 1, 1, 2, 0];
        let cm = ConfusionMatrix::from_predictions(&preds, &labels, 3).unwrap();
        let ss = sen_spe(&cm, 0).unwrap();
        assert_eq!(ss.sensitivity, Some(0.5));
        assert_eq!(ss.specificity, Some(0.75));
    }

    #[test]
    fn auc_perfect_separation() {
        let labels = [1, 1, 0, 0];
        let scores = [0.9, 0.8, 0.2, 0.1];
        assert_eq!(auc_ovr(&scores, &labels, 1).unwrap(), Some(1.0));
    }

    #[test]
    fn auc_all_tied_is_half() {
        let labels = [1, 0, 1, 0];
        let scores = [0.5, 0.5, 0.5, 0.5];
        assert_eq!(auc_ovr(&scores, &labels, 1).unwrap(), Some(0.5));
    }

    #[test]
    fn auc_derived_example() {
        let labels = [1, 0, 1, 0];
        let scores = [0.6, 0.7, 0.8, 0.2];
        assert_eq!(auc_ovr(&scores, &labels, 1).unwrap(), Some(0.75));
        assert_eq!(auc_pairwise(&scores, &labels, 1), Some(0.75));
    }

    #[test]
    fn auc_single_class_is_undefined() {
        assert_eq!(auc_ovr(&[0.5, 0.6], &[1, 1], 1).unwrap(), None);
    }

    #[test]
    fn auc_matches_pairwise_oracle_exactly() {
        let mut rng = ChaCha8Rng::seed_from_u64(1234);
        for _ in 0..300 {
            let n = rng.gen_range(2..=50);
            let labels: Vec<usize> = (0..n).map(|_| rng.gen_range(0..3)).collect();
            // Quantized scores force plenty of ties.
            let scores: Vec<f64> = (0..n).map(|_| rng.gen_range(0..10) as f64 / 10.0).collect();
            for class in 0..3 {
                let got = auc_ovr(&scores, &labels, class).unwrap();
                let want = auc_pairwise(&scores, &labels, class);
                assert_eq!(got, want, "labels={labels:?} scores={scores:?} class={class}");
            }
        }
    }

    #[test]
    fn auc_invariant_under_monotone_transform() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..50 {
            let n = rng.gen_range(4..30);
            let labels: Vec<usize> = (0..n).map(|_| rng.gen_range(0..2)).collect();
            let scores: Vec<f64> = (0..n).map(|_| rng.gen_range(-3.0..3.0)).collect();
            let warped: Vec<f64> = scores.iter().map(|s| (2.0 * s).exp()).collect();
            let a = auc_ovr(&scores, &labels, 1).unwrap();
            let b = auc_ovr(&warped, &labels, 1).unwrap();
            match (a, b) {
                (Some(x), Some(y)) => assert!((x - y).abs() < 1e-12),
                (None, None) => {}
                other => panic!("definedness changed: {other:?}"),
            }
        }
    }

    #[test]
    fn auc_complement_identity() {
        // auc(scores) + auc(-scores) == 1 exactly under the tie-half rule.
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for _ in 0..100 {
            let n = rng.gen_range(4..30);
            let labels: Vec<usize> = (0..n).map(|_| rng.gen_range(0..2)).collect();
            let scores: Vec<f64> = (0..n).map(|_| rng.gen_range(0..6) as f64).collect();
            let neg: Vec<f64> = scores.iter().map(|s| -s).collect();
            if let (Some(a), Some(b)) = (
                auc_ovr(&scores, &labels, 1).unwrap(),
                auc_ovr(&neg, &labels, 1).unwrap(),
            ) {
                assert_eq!(a + b, 1.0);
            }
        }
    }

    #[test]
    fn roc_perfect_and_tied_shapes() {
        let perfect = roc_points(&[0.9, 0.8, 0.2, 0.1], &[1, 1, 0, 0], 1)
            .unwrap()
            .unwrap();
        let coords: Vec<(f64, f64)> = perfect.iter().map(|p| (p.fpr, p.tpr)).collect();
        assert_eq!(coords, vec![(0.0, 0.0), (0.0, 0.5), (0.0, 1.0), (0.5, 1.0), (1.0, 1.0)]);

        let tied = roc_points(&[0.5, 0.5, 0.5, 0.5], &[1, 0, 1, 0], 1)
            .unwrap()
            .unwrap();
        let coords: Vec<(f64, f64)> = tied.iter().map(|p| (p.fpr, p.tpr)).collect();
        assert_eq!(coords, vec![(0.0, 0.0), (1.0, 1.0)]);
    }

    #[test]
    fn roc_trapezoid_equals_auc() {
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        for _ in 0..200 {
            let n = rng.gen_range(2..=20);
            let labels: Vec<usize> = (0..n).map(|_| rng.gen_range(0..2)).collect();
            let scores: Vec<f64> = (0..n).map(|_| rng.gen_range(0..8) as f64 / 8.0).collect();
            let auc = auc_ovr(&scores, &labels, 1).unwrap();
            let points = roc_points(&scores, &labels, 1).unwrap();
            match (auc, points) {
                (Some(a), Some(p)) => {
                    let area = roc_trapezoid_area(&p);
                    assert!((a - area).abs() < 1e-9, "auc {a} vs area {area}");
                    // Monotone in both coordinates, correct endpoints.
                    assert_eq!((p[0].fpr, p[0].tpr), (0.0, 0.0));
                    assert_eq!((p.last().unwrap().fpr, p.last().unwrap().tpr), (1.0, 1.0));
                    for w in p.windows(2) {
                        assert!(w[1].fpr >= w[0].fpr && w[1].tpr >= w[0].tpr);
                    }
                }
                (None, None) => {}
                other => panic!("definedness mismatch: {other:?}"),
            }
        }
    }

    #[test]
    fn macro_auc_skips_undefined() {
        assert_eq!(macro_auc(&[Some(0.8), None, Some(0.6)]), Some(0.7));
        assert_eq!(macro_auc(&[None, None]), None);
    }

    #[test]
    fn report_fields_are_fractions() {
        let labels = vec![0, 0, 1, 1, 2, 2];
        let preds = vec![0, 1, 1, 1, 2, 0];
        let scores: Vec<Vec<f64>> = labels
            .iter()
            .map(|&l| {
                let mut row = vec![0.2; 3];
                row[l] = 0.6;
                row
            })
            .collect();
        let names: Vec<String> = (0..3).map(|i| format!("class{i}")).collect();
        let report = EvalReport::compute(&labels, &preds, &scores, &names).unwrap();
        assert!((0.0..=1.0).contains(&report.accuracy));
        for c in &report.per_class {
            for v in [c.auc, c.sensitivity, c.specificity].into_iter().flatten() {
                assert!((0.0..=1.0).contains(&v));
            }
        }
        assert_eq!(report.samples, 6);
    }
}
