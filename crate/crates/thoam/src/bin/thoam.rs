//! Command-line entry point. All logic lives in the library; this binary
//! parses flags, dispatches, and maps errors to exit codes:
//! 0 success, 1 validation error, 2 runtime failure, 3 gradient-check
//! failure.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use thoam::harness::{
    cmd_ablate, cmd_compare_fusion, cmd_eval, cmd_generate, cmd_gradcheck, cmd_train,
    ExperimentConfig, HarnessError, Overrides, SplitSide,
};

#[derive(Parser)]
#[command(name = "thoam", version, about = "Tri-modal attention-fusion classifier harness")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct CommonArgs {
    /// Experiment config file (JSON); defaults apply for missing fields.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override the global seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Override the output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Override the dataset directory.
    #[arg(long)]
    dataset: Option<PathBuf>,
}

impl CommonArgs {
    fn resolve(&self) -> Result<ExperimentConfig, HarnessError> {
        let base = match &self.config {
            Some(path) => ExperimentConfig::load(path)?,
            None => ExperimentConfig::default(),
        };
        Ok(base.apply(&Overrides {
            seed: self.seed,
            out: self.out.clone(),
            dataset: self.dataset.clone(),
        }))
    }
}

#[derive(Subcommand)]
enum Command {
    /// Generate the seeded synthetic dataset.
    Generate(CommonArgs),
    /// Train a model and write checkpoints plus the training log.
    Train(CommonArgs),
    /// Evaluate a checkpoint and write the metric report.
    Eval {
        #[command(flatten)]
        common: CommonArgs,
        /// Checkpoint file; defaults to <out>/checkpoint_final.json.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        /// Split side to evaluate.
        #[arg(long, default_value = "test")]
        side: String,
    },
    /// Train and evaluate all seven modality subsets.
    Ablate(CommonArgs),
    /// Train and evaluate attention fusion against concatenation.
    CompareFusion(CommonArgs),
    /// Check analytic gradients of the full pipeline against finite
    /// differences.
    Gradcheck,
}

fn run() -> Result<(), HarnessError> {
    match Cli::parse().command {
        Command::Generate(common) => {
            let cfg = common.resolve()?;
            let manifest = cmd_generate(&cfg)?;
            println!("dataset manifest: {}", manifest.display());
        }
        Command::Train(common) => {
            let cfg = common.resolve()?;
            let outcome = cmd_train(&cfg)?;
            println!("final checkpoint: {}", outcome.final_checkpoint.display());
            println!("best checkpoint:  {}", outcome.best_checkpoint.display());
        }
        Command::Eval {
            common,
            checkpoint,
            side,
        } => {
            let cfg = common.resolve()?;
            let side = match side.as_str() {
                "train" => SplitSide::Train,
                "test" => SplitSide::Test,
                other => {
                    return Err(HarnessError::Validation(format!(
                        "unknown split side {other:?} (use train or test)"
                    )))
                }
            };
            let checkpoint = checkpoint.unwrap_or_else(|| cfg.out.join("checkpoint_final.json"));
            let run = cmd_eval(&cfg, &checkpoint, side)?;
            println!(
                "cases {}  accuracy {:.4}  macro AUC {}",
                run.cases,
                run.report.accuracy,
                run.report
                    .macro_auc
                    .map_or("undefined".to_string(), |a| format!("{a:.4}"))
            );
            println!("report: {}", cfg.out.join("report.json").display());
        }
        Command::Ablate(common) => {
            let cfg = common.resolve()?;
            let rows = cmd_ablate(&cfg)?;
            println!("{:<8} {:>8}  {:>9}", "subset", "acc", "macro-auc");
            for row in rows {
                println!(
                    "{:<8} {:>8.4}  {:>9}",
                    row.variant,
                    row.accuracy,
                    row.macro_auc
                        .map_or("undefined".to_string(), |a| format!("{a:.4}"))
                );
            }
        }
        Command::CompareFusion(common) => {
            let cfg = common.resolve()?;
            let rows = cmd_compare_fusion(&cfg)?;
            println!("{:<8} {:>8}  {:>9}", "fusion", "acc", "macro-auc");
            for row in rows {
                println!(
                    "{:<8} {:>8.4}  {:>9}",
                    row.variant,
                    row.accuracy,
                    row.macro_auc
                        .map_or("undefined".to_string(), |a| format!("{a:.4}"))
                );
            }
        }
        Command::Gradcheck => {
            let report = cmd_gradcheck()?;
            println!(
                "gradient check PASS: max relative error {:e} over {} parameters (threshold {:e})",
                report.max_rel_error, report.parameters, report.threshold
            );
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run() {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            if let HarnessError::GradCheck { max_rel_error } = e {
                println!("gradient check FAIL: max relative error {max_rel_error:e}");
            }
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
