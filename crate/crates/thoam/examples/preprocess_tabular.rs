//! Fit the tabular normalization statistics and transform records.
//!
//! Each field runs through its designated scaler: min-max for the bounded
//! quantities, z-score for CEA/AFP, robust scaling for the heavy-tailed
//! markers, 0/1 encoding for the symptom flags.
//!
//! ```bash
//! cargo run --example preprocess_tabular
//! ```

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thoam::data::synth::sample_tabular;
use thoam::data::TumorClass;
use thoam::preprocess::{fit, transform, FitPolicy};

fn main() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let records: Vec<_> = TumorClass::ALL
        .iter()
        .flat_map(|&class| (0..20).map(move |_| class))
        .collect::<Vec<_>>()
        .into_iter()
        .map(|class| sample_tabular(class, 0.0, &mut rng))
        .collect();

    let stats = fit(&records, FitPolicy::TrainOnly).expect("population is non-degenerate");
    println!("fitted statistics:");
    println!("  age        min {:>7.2}  max {:>7.2}", stats.age.min, stats.age.max);
    println!("  cea        mean {:>6.2}  std {:>7.2}", stats.cea.mean, stats.cea.std);
    println!(
        "  ca125      median {:>6.2}  q1 {:>6.2}  q3 {:>7.2}",
        stats.ca125.median, stats.ca125.q1, stats.ca125.q3
    );

    println!("\ntransformed vectors (order: age bmi pain bloat ca125 cea ca199 afp ca153 diam):");
    for record in records.iter().take(4) {
        let v = transform(record, &stats);
        let cells: Vec<String> = v.iter().map(|x| format!("{x:>6.2}")).collect();
        println!("  [{}]", cells.join(" "));
    }

    // The stats file is plain JSON keyed by field name and reloads
    // bit-exactly.
    let json = serde_json::to_string_pretty(&stats).unwrap();
    let reloaded = serde_json::from_str(&json).unwrap();
    let a = transform(&records[0], &stats);
    let b = transform(&records[0], &reloaded);
    assert_eq!(a, b);
    println!("\nstats serialize to JSON and reload bit-exactly ({} bytes)", json.len());
}
