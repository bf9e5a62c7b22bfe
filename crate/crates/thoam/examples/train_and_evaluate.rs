//! End-to-end: generate a small dataset, train the tri-modal model for a
//! few epochs, and evaluate on the held-out cases.
//!
//! ```bash
//! cargo run --example train_and_evaluate
//! ```

use thoam::harness::{cmd_eval, cmd_generate, cmd_train, ExperimentConfig, SplitSide};

fn main() {
    let root = std::env::temp_dir().join("thoam_example_train");
    let mut cfg = ExperimentConfig::default();
    cfg.dataset = root.join("data");
    cfg.out = root.join("run");
    cfg.seed = 7;
    cfg.model.channels = 32;
    cfg.model.tokens = 4;
    cfg.model.token_dim = 8;
    cfg.epochs = 60;
    cfg.synth.n_per_class = 20;

    cmd_generate(&cfg).expect("generation succeeds");
    let outcome = cmd_train(&cfg).expect("training succeeds");
    let last = outcome.history.last().unwrap();
    println!(
        "\nfinished {} epochs: train loss {:.4}, train acc {:.3}",
        outcome.history.len(),
        last.loss,
        last.accuracy
    );

    let run = cmd_eval(&cfg, &outcome.final_checkpoint, SplitSide::Test).expect("evaluation succeeds");
    println!(
        "test: {} cases, accuracy {:.3}, macro AUC {}",
        run.cases,
        run.report.accuracy,
        run.report
            .macro_auc
            .map_or("undefined".into(), |a| format!("{a:.3}"))
    );
    println!("\nper-class metrics:");
    for c in &run.report.per_class {
        let fmt = |v: Option<f64>| v.map_or("   --".to_string(), |x| format!("{x:.3}"));
        println!(
            "  {:<28} auc {}  sen {}  spe {}",
            c.class,
            fmt(c.auc),
            fmt(c.sensitivity),
            fmt(c.specificity)
        );
    }
    println!("\nartifacts in {}", run.config.out.display());
}
