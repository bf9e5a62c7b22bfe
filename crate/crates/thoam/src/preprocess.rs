//! Fitted normalization of the 10-field tabular record.
//!
//! Each field has a designated scaler: bounded quantities (age, BMI, maximum
//! diameter) use min-max scaling, CEA and AFP use a Gaussian z-score, and the
//! heavy-tailed markers (CA-125, CA-199, CA-153) use robust scaling by
//! median and interquartile range. The two symptom flags are 0/1 encoded.
//! Statistics are fitted once over a chosen population and are immutable
//! afterwards; `transform` is a pure function of (record, stats).

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PreprocessError {
    #[error("need at least 2 records to fit, got {0}")]
    TooFewRecords(usize),
    #[error("field {field} is degenerate: {reason}")]
    DegenerateField {
        field: &'static str,
        reason: String,
    },
    #[error("invalid yes/no flag {0:?}")]
    BadFlag(String),
    #[error("field {field} has invalid value {value}")]
    BadValue { field: &'static str, value: f64 },
}

/// Strict yes/no symptom flag.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum YesNo {
    Yes,
    No,
}

impl YesNo {
    pub fn as_f64(self) -> f64 {
        match self {
            YesNo::Yes => 1.0,
            YesNo::No => 0.0,
        }
    }
}

impl FromStr for YesNo {
    type Err = PreprocessError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "yes" => Ok(YesNo::Yes),
            "no" => Ok(YesNo::No),
            other => Err(PreprocessError::BadFlag(other.to_string())),
        }
    }
}

impl fmt::Display for YesNo {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            YesNo::Yes => "yes",
            YesNo::No => "no",
        })
    }
}

/// 0-1 encode a textual yes/no flag: present -> 1, absent -> 0. Anything
/// else is a schema error.
pub fn encode_binary(flag: &str) -> Result<f64, PreprocessError> {
    YesNo::from_str(flag).map(YesNo::as_f64)
}

/// One patient's 10-field examination record. Units: age in years, BMI in
/// kg/m², markers in their clinical units, maximum diameter in cm.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TabularRecord {
    pub age: f64,
    pub bmi: f64,
    pub abdominal_pain: YesNo,
    pub abdominal_bloating: YesNo,
    pub ca125: f64,
    pub cea: f64,
    pub ca199: f64,
    pub afp: f64,
    pub ca153: f64,
    pub max_diameter: f64,
}

impl TabularRecord {
    /// All numeric fields must be finite and non-negative.
    pub fn validate(&self) -> Result<(), PreprocessError> {
        for (field, value) in self.numeric_fields() {
            if !value.is_finite() || value < 0.0 {
                return Err(PreprocessError::BadValue { field, value });
            }
        }
        Ok(())
    }

    fn numeric_fields(&self) -> [(&'static str, f64); 8] {
        [
            ("age", self.age),
            ("bmi", self.bmi),
            ("ca125", self.ca125),
            ("cea", self.cea),
            ("ca199", self.ca199),
            ("afp", self.afp),
            ("ca153", self.ca153),
            ("max_diameter", self.max_diameter),
        ]
    }
}

/// Which records the statistics were fitted on. Fitting on the training
/// split only avoids test leakage; the all-samples mode normalizes over the
/// entire sample set instead.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum FitPolicy {
    #[serde(rename = "train-only")]
    TrainOnly,
    #[serde(rename = "all-samples")]
    AllSamples,
}

impl Default for FitPolicy {
    fn default() -> Self {
        FitPolicy::TrainOnly
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MinMaxStats {
    pub min: f64,
    pub max: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaussianStats {
    pub mean: f64,
    /// Population standard deviation (divide by n).
    pub std: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RobustStats {
    pub median: f64,
    pub q1: f64,
    pub q3: f64,
}

/// Fitted per-field statistics, serializable as a JSON object keyed by the
/// record field names. Reloading reproduces transforms bit-exactly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PreprocessStats {
    pub policy: FitPolicy,
    pub age: MinMaxStats,
    pub bmi: MinMaxStats,
    pub ca125: RobustStats,
    pub cea: GaussianStats,
    pub ca199: RobustStats,
    pub afp: GaussianStats,
    pub ca153: RobustStats,
    pub max_diameter: MinMaxStats,
}

/// Linear-interpolation quantile at position `p·(n-1)` over a sorted slice.
pub fn quantile(sorted: &[f64], p: f64) -> f64 {
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let pos = p * (n - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    if lo == hi {
        sorted[lo]
    } else {
        let frac = pos - lo as f64;
        sorted[lo] + frac * (sorted[hi] - sorted[lo])
    }
}

fn fit_min_max(field: &'static str, values: &[f64]) -> Result<MinMaxStats, PreprocessError> {
    let min = values.iter().cloned().fold(f64::INFINITY, f64::min);
    let max = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if max <= min {
        return Err(PreprocessError::DegenerateField {
            field,
            reason: format!("max {max} equals min {min}"),
        });
    }
    Ok(MinMaxStats { min, max })
}

fn fit_gaussian(field: &'static str, values: &[f64]) -> Result<GaussianStats, PreprocessError> {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    let std = var.sqrt();
    if std <= 0.0 {
        return Err(PreprocessError::DegenerateField {
            field,
            reason: "zero standard deviation".into(),
        });
    }
    Ok(GaussianStats { mean, std })
}

fn fit_robust(field: &'static str, values: &[f64]) -> Result<RobustStats, PreprocessError> {
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("finite values"));
    let q1 = quantile(&sorted, 0.25);
    let median = quantile(&sorted, 0.5);
    let q3 = quantile(&sorted, 0.75);
    if q3 <= q1 {
        return Err(PreprocessError::DegenerateField {
            field,
            reason: format!("interquartile range is zero (q1 = q3 = {q1})"),
        });
    }
    Ok(RobustStats { median, q1, q3 })
}

/// Fit all per-field statistics over the given records. The policy records
/// which population the caller selected; it does not filter here.
pub fn fit(records: &[TabularRecord], policy: FitPolicy) -> Result<PreprocessStats, PreprocessError> {
    if records.len() < 2 {
        return Err(PreprocessError::TooFewRecords(records.len()));
    }
    for r in records {
        r.validate()?;
    }
    let collect = |f: fn(&TabularRecord) -> f64| -> Vec<f64> { records.iter().map(f).collect() };
    Ok(PreprocessStats {
        policy,
        age: fit_min_max("age", &collect(|r| r.age))?,
        bmi: fit_min_max("bmi", &collect(|r| r.bmi))?,
        ca125: fit_robust("ca125", &collect(|r| r.ca125))?,
        cea: fit_gaussian("cea", &collect(|r| r.cea))?,
        ca199: fit_robust("ca199", &collect(|r| r.ca199))?,
        afp: fit_gaussian("afp", &collect(|r| r.afp))?,
        ca153: fit_robust("ca153", &collect(|r| r.ca153))?,
        max_diameter: fit_min_max("max_diameter", &collect(|r| r.max_diameter))?,
    })
}

/// `(x - min) / (max - min)`. Deliberately not clamped: values outside the
/// fitted population fall outside [0, 1].
pub fn min_max(x: f64, stats: &MinMaxStats) -> f64 {
    (x - stats.min) / (stats.max - stats.min)
}

/// `(x - mean) / std`.
pub fn zscore(x: f64, stats: &GaussianStats) -> f64 {
    (x - stats.mean) / stats.std
}

/// `(x - median) / (q3 - q1)`.
pub fn robust_scale(x: f64, stats: &RobustStats) -> f64 {
    (x - stats.median) / (stats.q3 - stats.q1)
}

/// Number of entries in a transformed tabular vector.
pub const TABULAR_DIM: usize = 10;

/// Apply each field's designated scaler, in the fixed order
/// [age, bmi, pain, bloating, ca125, cea, ca199, afp, ca153, max_diameter].
pub fn transform(r: &TabularRecord, stats: &PreprocessStats) -> [f64; TABULAR_DIM] {
    [
        min_max(r.age, &stats.age),
        min_max(r.bmi, &stats.bmi),
        r.abdominal_pain.as_f64(),
        r.abdominal_bloating.as_f64(),
        robust_scale(r.ca125, &stats.ca125),
        zscore(r.cea, &stats.cea),
        robust_scale(r.ca199, &stats.ca199),
        zscore(r.afp, &stats.afp),
        robust_scale(r.ca153, &stats.ca153),
        min_max(r.max_diameter, &stats.max_diameter),
    ]
}

#[cfg(test)]
mod tests {
    use super::*;

    fn record(vals: [f64; 8], pain: YesNo, bloat: YesNo) -> TabularRecord {
        TabularRecord {
            age: vals[0],
            bmi: vals[1],
            abdominal_pain: pain,
            abdominal_bloating: bloat,
            ca125: vals[2],
            cea: vals[3],
            ca199: vals[4],
            afp: vals[5],
            ca153: vals[6],
            max_diameter: vals[7],
        }
    }

    fn base_records() -> Vec<TabularRecord> {
        // ca125 takes the fixture population {1..7, 100}.
        let ca125 = [1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 100.0];
        (0..8)
            .map(|i| {
                record(
                    [
                        20.0 + i as f64 * 5.0,
                        18.0 + i as f64,
                        ca125[i],
                        1.0 + i as f64 * 0.5,
                        10.0 + i as f64,
                        2.0 + i as f64 * 0.25,
                        8.0 + i as f64,
                        3.0 + i as f64 * 0.5,
                    ],
                    if i % 2 == 0 { YesNo::Yes } else { YesNo::No },
                    YesNo::No,
                )
            })
            .collect()
    }

    #[test]
    fn fit_min_max_two_points() {
        let mut recs = base_records();
        recs.truncate(2);
        recs[0].age = 20.0;
        recs[1].age = 40.0;
        let stats = fit(&recs, FitPolicy::TrainOnly).unwrap();
        assert_eq!(stats.age.min, 20.0);
        assert_eq!(stats.age.max, 40.0);
    }

    #[test]
    fn fit_gaussian_two_point_symmetry() {
        let mut recs = base_records();
        recs.truncate(2);
        recs[0].cea = 1.0;
        recs[1].cea = 3.0;
        let stats = fit(&recs, FitPolicy::TrainOnly).unwrap();
        assert_eq!(stats.cea.mean, 2.0);
        assert_eq!(stats.cea.std, 1.0);
    }

    #[test]
    fn fit_quantiles_match_interpolation_rule() {
        // Frozen from an independent quantile script over {1..7, 100}.
        let stats = fit(&base_records(), FitPolicy::TrainOnly).unwrap();
        assert_eq!(stats.ca125.median, 4.5);
        assert_eq!(stats.ca125.q1, 2.75);
        assert_eq!(stats.ca125.q3, 6.25);
    }

    #[test]
    fn fit_rejects_degenerate_field() {
        let mut recs = base_records();
        for r in &mut recs {
            r.bmi = 22.0;
        }
        match fit(&recs, FitPolicy::TrainOnly) {
            Err(PreprocessError::DegenerateField { field, .. }) => assert_eq!(field, "bmi"),
            other => panic!("expected degenerate bmi, got {other:?}"),
        }
    }

    #[test]
    fn fit_rejects_single_record() {
        let recs = vec![base_records()[0].clone()];
        assert!(matches!(
            fit(&recs, FitPolicy::TrainOnly),
            Err(PreprocessError::TooFewRecords(1))
        ));
    }

    #[test]
    fn min_max_endpoints_and_midpoint() {
        let s = MinMaxStats { min: 0.0, max: 10.0 };
        assert_eq!(min_max(0.0, &s), 0.0);
        assert_eq!(min_max(10.0, &s), 1.0);
        assert_eq!(min_max(5.0, &s), 0.5);
    }

    #[test]
    fn zscore_center_and_unit() {
        let s = GaussianStats { mean: 5.0, std: 2.0 };
        assert_eq!(zscore(5.0, &s), 0.0);
        assert_eq!(zscore(7.0, &s), 1.0);
    }

    #[test]
    fn robust_scale_center_and_q3() {
        let s = RobustStats {
            median: 4.5,
            q1: 2.75,
            q3: 6.25,
        };
        assert_eq!(robust_scale(4.5, &s), 0.0);
        assert!((robust_scale(6.25, &s) - (6.25 - 4.5) / 3.5).abs() < 1e-15);
        // Extreme marker value stays finite and positive.
        let v = robust_scale(9000.0, &s);
        assert!(v.is_finite() && v > 0.0);
        assert!((v - 2570.1428571428573).abs() < 1e-9);
    }

    #[test]
    fn encode_binary_contract() {
        assert_eq!(encode_binary("yes").unwrap(), 1.0);
        assert_eq!(encode_binary("no").unwrap(), 0.0);
        assert!(matches!(
            encode_binary("maybe"),
            Err(PreprocessError::BadFlag(_))
        ));
    }

    #[test]
    fn transform_field_order_and_centers() {
        let recs = base_records();
        let stats = fit(&recs, FitPolicy::TrainOnly).unwrap();
        // A record sitting at each field's center maps to zero for the
        // centered scalers and to 0 at min for the min-max fields.
        let center = record(
            [
                stats.age.min,
                stats.bmi.min,
                stats.ca125.median,
                stats.cea.mean,
                stats.ca199.median,
                stats.afp.mean,
                stats.ca153.median,
                stats.max_diameter.min,
            ],
            YesNo::Yes,
            YesNo::No,
        );
        let v = transform(&center, &stats);
        assert_eq!(v, [0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn transform_round_trips_through_serialization_bit_exactly() {
        let recs = base_records();
        let stats = fit(&recs, FitPolicy::AllSamples).unwrap();
        let json = serde_json::to_string(&stats).unwrap();
        let reloaded: PreprocessStats = serde_json::from_str(&json).unwrap();
        for r in &recs {
            let a = transform(r, &stats);
            let b = transform(r, &reloaded);
            for (x, y) in a.iter().zip(&b) {
                assert_eq!(x.to_bits(), y.to_bits());
            }
        }
    }

    #[test]
    fn transform_matches_independent_pipeline() {
        // Duplicate-implementation oracle: each scaler rewritten inline.
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(42);
        let records: Vec<TabularRecord> = (0..100)
            .map(|_| {
                record(
                    [
                        rng.gen_range(18.0..80.0),
                        rng.gen_range(16.0..35.0),
                        rng.gen_range(1.0..500.0),
                        rng.gen_range(0.5..20.0),
                        rng.gen_range(2.0..200.0),
                        rng.gen_range(0.5..15.0),
                        rng.gen_range(5.0..60.0),
                        rng.gen_range(1.0..20.0),
                    ],
                    if rng.gen_bool(0.5) { YesNo::Yes } else { YesNo::No },
                    if rng.gen_bool(0.5) { YesNo::Yes } else { YesNo::No },
                )
            })
            .collect();
        let stats = fit(&records, FitPolicy::AllSamples).unwrap();

        let oracle_quantile = |values: &[f64], p: f64| -> f64 {
            let mut s = values.to_vec();
            s.sort_by(|a, b| a.partial_cmp(b).unwrap());
            let pos = p * (s.len() - 1) as f64;
            let lo = pos.floor() as usize;
            let frac = pos - lo as f64;
            if lo + 1 < s.len() {
                s[lo] * (1.0 - frac) + s[lo + 1] * frac
            } else {
                s[lo]
            }
        };
        for r in &records {
            let got = transform(r, &stats);
            let ages: Vec<f64> = records.iter().map(|x| x.age).collect();
            let amin = ages.iter().cloned().fold(f64::INFINITY, f64::min);
            let amax = ages.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            assert!((got[0] - (r.age - amin) / (amax - amin)).abs() < 1e-12);

            let ca125s: Vec<f64> = records.iter().map(|x| x.ca125).collect();
            let med = oracle_quantile(&ca125s, 0.5);
            let q1 = oracle_quantile(&ca125s, 0.25);
            let q3 = oracle_quantile(&ca125s, 0.75);
            assert!((got[4] - (r.ca125 - med) / (q3 - q1)).abs() < 1e-12);

            let ceas: Vec<f64> = records.iter().map(|x| x.cea).collect();
            let mean = ceas.iter().sum::<f64>() / 100.0;
            let std = (ceas.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / 100.0).sqrt();
            assert!((got[5] - (r.cea - mean) / std).abs() < 1e-12);
        }
    }

    #[test]
    fn scalers_are_affine_invariant() {
        // zscore(a*x + b, fit(a*X + b)) == zscore(x, fit(X)), same for the
        // other scalers, within 1e-9.
        let recs = base_records();
        let (a, b) = (3.5, 40.0);
        let scaled: Vec<TabularRecord> = recs
            .iter()
            .map(|r| {
                let mut s = r.clone();
                s.age = a * r.age + b;
                s.bmi = a * r.bmi + b;
                s.ca125 = a * r.ca125 + b;
                s.cea = a * r.cea + b;
                s.ca199 = a * r.ca199 + b;
                s.afp = a * r.afp + b;
                s.ca153 = a * r.ca153 + b;
                s.max_diameter = a * r.max_diameter + b;
                s
            })
            .collect();
        let stats = fit(&recs, FitPolicy::TrainOnly).unwrap();
        let stats_scaled = fit(&scaled, FitPolicy::TrainOnly).unwrap();
        for (r, s) in recs.iter().zip(&scaled) {
            let u = transform(r, &stats);
            let v = transform(s, &stats_scaled);
            for (x, y) in u.iter().zip(&v) {
                assert!((x - y).abs() < 1e-9, "affine invariance violated: {x} vs {y}");
            }
        }
    }

    #[test]
    fn validate_rejects_negative_and_non_finite() {
        let mut r = base_records()[0].clone();
        r.ca125 = -1.0;
        assert!(matches!(
            r.validate(),
            Err(PreprocessError::BadValue { field: "ca125", .. })
        ));
        let mut r = base_records()[0].clone();
        r.afp = f64::NAN;
        assert!(r.validate().is_err());
    }
}
