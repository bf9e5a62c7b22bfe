//! Generate a small seeded synthetic dataset and look at what it contains.
//!
//! ```bash
//! cargo run --example build_dataset
//! ```

use thoam::data::synth::{generate, SynthConfig};
use thoam::data::{load_manifest, TumorClass};

fn main() {
    let dir = std::env::temp_dir().join("thoam_example_dataset");
    let cfg = SynthConfig {
        seed: 7,
        n_per_class: 5,
        ..SynthConfig::default()
    };
    let manifest = generate(&cfg, &dir).expect("generation succeeds");
    println!("wrote {}", manifest.display());

    let records = load_manifest(&manifest).expect("manifest loads");
    println!("{} cases:", records.len());
    for class in TumorClass::ALL {
        let n = records.iter().filter(|r| r.label == class).count();
        let slices: usize = records
            .iter()
            .filter(|r| r.label == class)
            .map(|r| r.images.len())
            .sum();
        println!("  {:<28} {n} cases, {slices} slices", class.name());
    }

    let sample = &records[0];
    println!("\nfirst case: {}", sample.id);
    println!("  label:    {}", sample.label);
    println!("  images:   {:?}", sample.images);
    println!(
        "  tabular:  age {:.1}, ca125 {:.1}, pain {}",
        sample.tabular.age, sample.tabular.ca125, sample.tabular.abdominal_pain
    );
    println!("  report:   {}", sample.report);
}
