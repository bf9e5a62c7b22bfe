//! Attention fusion against the plain concatenation baseline on the same
//! data, seed, and schedule (the acceptance suite averages three seeds).
//!
//! ```bash
//! cargo run --example fusion_comparison
//! ```

use thoam::harness::{cmd_compare_fusion, cmd_generate, ExperimentConfig};

fn main() {
    let root = std::env::temp_dir().join("thoam_example_fusion");
    let mut cfg = ExperimentConfig::default();
    cfg.dataset = root.join("data");
    cfg.out = root.join("run");
    cfg.seed = 13;
    cfg.model.channels = 32;
    cfg.model.tokens = 4;
    cfg.model.token_dim = 8;
    cfg.epochs = 150;
    cfg.optimizer.milestones = vec![45, 90, 135];
    cfg.synth = thoam::data::synth::SynthConfig::hardened(13);

    cmd_generate(&cfg).expect("generation succeeds");
    let rows = cmd_compare_fusion(&cfg).expect("comparison succeeds");
    println!("\n{:<8} {:>8} {:>10}", "fusion", "acc", "macro-auc");
    for row in &rows {
        println!(
            "{:<8} {:>8.3} {:>10}",
            row.variant,
            row.accuracy,
            row.macro_auc.map_or("--".into(), |a| format!("{a:.3}"))
        );
    }
}
