//! Property tests over the numeric invariants.

use proptest::prelude::*;

use thoam::encoders::tokenize;
use thoam::fusion::predict;
use thoam::metrics::auc_ovr;
use thoam::preprocess::{fit, transform, FitPolicy, TabularRecord, YesNo};
use thoam::tensor::{Graph, Tensor};

fn finite_vals(n: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-50.0f64..50.0, n)
}

proptest! {
    #[test]
    fn softmax_rows_are_distributions(rows in 1usize..5, cols in 1usize..7, seed in any::<u64>()) {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let data: Vec<f64> = (0..rows * cols).map(|_| rng.gen_range(-100.0..100.0)).collect();
        let mut g = Graph::new();
        let x = g.leaf(Tensor::new(vec![rows, cols], data).unwrap());
        let s = g.softmax_rows(x).unwrap();
        for row in g.value(s).data().chunks(cols) {
            let sum: f64 = row.iter().sum();
            prop_assert!((sum - 1.0).abs() < 1e-9);
            prop_assert!(row.iter().all(|v| (0.0..=1.0).contains(v)));
        }
    }

    #[test]
    fn concat_preserves_both_operands(n in 1usize..5, c1 in 0usize..6, c2 in 0usize..6,
                                      a_seed in any::<u64>()) {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(a_seed);
        let a_data: Vec<f64> = (0..n * c1).map(|_| rng.gen_range(-5.0..5.0)).collect();
        let b_data: Vec<f64> = (0..n * c2).map(|_| rng.gen_range(-5.0..5.0)).collect();
        let a = Tensor::new(vec![n, c1], a_data).unwrap();
        let b = Tensor::new(vec![n, c2], b_data).unwrap();
        let mut g = Graph::new();
        let (na, nb) = (g.leaf(a.clone()), g.leaf(b.clone()));
        let c = g.concat_cols(na, nb).unwrap();
        for i in 0..n {
            prop_assert_eq!(&g.value(c).row(i)[..c1], a.row(i));
            prop_assert_eq!(&g.value(c).row(i)[c1..], b.row(i));
        }
    }

    #[test]
    fn auc_complement_is_exactly_one(scores in finite_vals(12), labels in prop::collection::vec(0usize..2, 12)) {
        let neg: Vec<f64> = scores.iter().map(|s| -s).collect();
        if let (Ok(Some(a)), Ok(Some(b))) = (auc_ovr(&scores, &labels, 1), auc_ovr(&neg, &labels, 1)) {
            prop_assert_eq!(a + b, 1.0);
        }
    }

    #[test]
    fn predict_is_shift_invariant(row in finite_vals(6), shift in -100.0f64..100.0) {
        let logits = Tensor::from_rows(&[row.clone()]).unwrap();
        let shifted = Tensor::from_rows(&[row.iter().map(|v| v + shift).collect()]).unwrap();
        let a = predict(&logits).unwrap();
        let b = predict(&shifted).unwrap();
        prop_assert_eq!(a[0].class, b[0].class);
        let sum: f64 = a[0].probabilities.iter().sum();
        prop_assert!((sum - 1.0).abs() < 1e-9);
    }

    #[test]
    fn tokenize_is_case_and_punctuation_stable(words in prop::collection::vec("[a-z]{1,8}", 1..6)) {
        let plain = words.join(" ");
        let shouty = words.join(", ").to_uppercase();
        prop_assert_eq!(tokenize(&plain, 4096), tokenize(&shouty, 4096));
    }

    #[test]
    fn transform_is_pure_and_fixed_width(seed in any::<u64>()) {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let records: Vec<TabularRecord> = (0..8)
            .map(|_| TabularRecord {
                age: rng.gen_range(10.0..80.0),
                bmi: rng.gen_range(15.0..40.0),
                abdominal_pain: if rng.gen_bool(0.5) { YesNo::Yes } else { YesNo::No },
                abdominal_bloating: if rng.gen_bool(0.5) { YesNo::Yes } else { YesNo::No },
                ca125: rng.gen_range(1.0..500.0),
                cea: rng.gen_range(0.5..20.0),
                ca199: rng.gen_range(1.0..200.0),
                afp: rng.gen_range(0.5..20.0),
                ca153: rng.gen_range(1.0..60.0),
                max_diameter: rng.gen_range(1.0..20.0),
            })
            .collect();
        if let Ok(stats) = fit(&records, FitPolicy::TrainOnly) {
            for r in &records {
                let a = transform(r, &stats);
                let b = transform(r, &stats);
                prop_assert_eq!(a.len(), 10);
                for (x, y) in a.iter().zip(&b) {
                    prop_assert_eq!(x.to_bits(), y.to_bits());
                }
                // Fields inside the fitted population stay in [0, 1] under
                // min-max.
                prop_assert!((0.0..=1.0).contains(&a[0]));
                prop_assert!((0.0..=1.0).contains(&a[1]));
                prop_assert!((0.0..=1.0).contains(&a[9]));
            }
        }
    }
}
