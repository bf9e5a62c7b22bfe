//! Train and evaluate every non-empty modality subset on one shared seed
//! and schedule. A single seed is noisy at this dataset size; the
//! acceptance suite averages three seeds before comparing subsets.
//!
//! ```bash
//! cargo run --example ablation_grid
//! ```

use thoam::harness::{cmd_ablate, cmd_generate, ExperimentConfig};

fn main() {
    let root = std::env::temp_dir().join("thoam_example_ablation");
    let mut cfg = ExperimentConfig::default();
    cfg.dataset = root.join("data");
    cfg.out = root.join("run");
    cfg.seed = 11;
    cfg.model.channels = 32;
    cfg.model.tokens = 4;
    cfg.model.token_dim = 8;
    cfg.epochs = 150;
    cfg.optimizer.milestones = vec![45, 90, 135];
    cfg.synth = thoam::data::synth::SynthConfig::hardened(11);

    cmd_generate(&cfg).expect("generation succeeds");
    let rows = cmd_ablate(&cfg).expect("ablation succeeds");
    println!("\n{:<8} {:>8} {:>10}", "subset", "acc", "macro-auc");
    for row in &rows {
        println!(
            "{:<8} {:>8.3} {:>10}",
            row.variant,
            row.accuracy,
            row.macro_auc.map_or("--".into(), |a| format!("{a:.3}"))
        );
    }
    println!("\ntable also written to {}", cfg.out.join("ablation.csv").display());
}
