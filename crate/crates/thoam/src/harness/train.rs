//! The training command: slice-level batches with case-level labels,
//! seeded shuffling and augmentation, stepped learning rate, per-epoch
//! logging, and final/best checkpoints.

use std::collections::HashSet;
use std::fmt::Write as _;
use std::path::PathBuf;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::{load_manifest, split_by_patient};
use crate::fusion::predict;
use crate::model::{BatchInputs, ThoamModel};
use crate::optim::Optimizer;
use crate::preprocess::{fit, FitPolicy, TABULAR_DIM};
use crate::tensor::{Graph, Tensor};

use super::augment::augment;
use super::config::ExperimentConfig;
use super::dataset::{prepare_cases, PreparedCase};
use super::{write_text, HarnessError};

/// One line of the training log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub lr: f64,
    pub loss: f64,
    pub accuracy: f64,
}

pub struct TrainOutcome {
    pub history: Vec<EpochLog>,
    pub final_checkpoint: PathBuf,
    pub best_checkpoint: PathBuf,
    pub out_dir: PathBuf,
}

/// Train per the configuration and write all run artifacts (resolved
/// config, split, fitted statistics, per-epoch CSV log, final and best
/// checkpoints) into the output directory. Deterministic per seed.
pub fn cmd_train(cfg: &ExperimentConfig) -> Result<TrainOutcome, HarnessError> {
    cfg.validate()?;
    let records = load_manifest(&cfg.manifest_path())?;
    if records.is_empty() {
        return Err(HarnessError::Validation(format!(
            "dataset {} has no cases",
            cfg.dataset.display()
        )));
    }
    let split = split_by_patient(&records, cfg.split.ratio, cfg.split.seed)?;
    let train_ids: HashSet<&str> = split.train.iter().map(String::as_str).collect();

    let fit_tabulars: Vec<_> = match cfg.fit_policy {
        FitPolicy::TrainOnly => records
            .iter()
            .filter(|r| train_ids.contains(r.id.as_str()))
            .map(|r| r.tabular.clone())
            .collect(),
        FitPolicy::AllSamples => records.iter().map(|r| r.tabular.clone()).collect(),
    };
    let stats = fit(&fit_tabulars, cfg.fit_policy).map_err(|e| {
        HarnessError::Validation(format!("preprocessing fit failed: {e}"))
    })?;

    let needs_images = cfg.model.modalities.visual;
    let cases = prepare_cases(
        &records,
        &train_ids,
        &cfg.dataset,
        &stats,
        cfg.model.vocab,
        needs_images,
    )?;

    // One training sample per slice, carrying its case's tabular vector,
    // token list, and label. Subsets without the visual modality keep the
    // same sample multiplicity so runs stay comparable.
    let samples: Vec<(usize, usize)> = cases
        .iter()
        .enumerate()
        .flat_map(|(ci, c)| (0..c.slice_count).map(move |si| (ci, si)))
        .collect();
    if samples.is_empty() {
        return Err(HarnessError::Validation("training split is empty".into()));
    }

    let mut model = ThoamModel::init(cfg.model_config(), cfg.seed)
        .map_err(|e| HarnessError::Validation(e.to_string()))?;
    let mut optimizer = Optimizer::new(cfg.optimizer.kind, cfg.optimizer.weight_decay)
        .with_momentum(cfg.optimizer.momentum);
    let schedule = cfg.schedule();
    // Stream 1 of the global seed drives shuffling and augmentation;
    // stream 0 (the default) already seeded the parameters.
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(1);

    let mut history = Vec::with_capacity(cfg.epochs);
    let mut best: Option<(f64, ThoamModel)> = None;
    let mut order: Vec<usize> = (0..samples.len()).collect();
    for epoch in 0..cfg.epochs {
        let lr = schedule.lr(epoch);
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        let mut correct = 0usize;
        for chunk in order.chunks(cfg.batch_size) {
            let (loss, hits) = train_batch(&mut model, &mut optimizer, cfg, &cases, &samples, chunk, lr, &mut rng)?;
            loss_sum += loss * chunk.len() as f64;
            correct += hits;
        }
        let log = EpochLog {
            epoch,
            lr,
            loss: loss_sum / samples.len() as f64,
            accuracy: correct as f64 / samples.len() as f64,
        };
        println!(
            "epoch {:>3}  lr {:<10}  loss {:.6}  acc {:.4}",
            log.epoch, log.lr, log.loss, log.accuracy
        );
        if best.as_ref().map_or(true, |(l, _)| log.loss < *l) {
            best = Some((log.loss, model.clone()));
        }
        history.push(log);
    }

    fs_create(&cfg.out)?;
    let final_checkpoint = cfg.out.join("checkpoint_final.json");
    let best_checkpoint = cfg.out.join("checkpoint_best.json");
    model
        .save(&final_checkpoint)
        .map_err(|e| HarnessError::Runtime(e.to_string()))?;
    best.expect("at least one epoch ran")
        .1
        .save(&best_checkpoint)
        .map_err(|e| HarnessError::Runtime(e.to_string()))?;
    split.save(&cfg.out.join("split.json"))?;
    write_text(
        &cfg.out.join("stats.json"),
        &serde_json::to_string_pretty(&stats).expect("stats serialize"),
    )?;
    write_text(
        &cfg.out.join("config.json"),
        &serde_json::to_string_pretty(cfg).expect("config serializes"),
    )?;
    write_text(&cfg.out.join("train_log.csv"), &log_csv(&history))?;

    Ok(TrainOutcome {
        history,
        final_checkpoint,
        best_checkpoint,
        out_dir: cfg.out.clone(),
    })
}

#[allow(clippy::too_many_arguments)]
fn train_batch(
    model: &mut ThoamModel,
    optimizer: &mut Optimizer,
    cfg: &ExperimentConfig,
    cases: &[PreparedCase],
    samples: &[(usize, usize)],
    chunk: &[usize],
    lr: f64,
    rng: &mut ChaCha8Rng,
) -> Result<(f64, usize), HarnessError> {
    let n = chunk.len();
    let subset = cfg.model.modalities;
    let mut images = Vec::new();
    let mut tab_data = Vec::with_capacity(n * TABULAR_DIM);
    let mut tokens = Vec::with_capacity(n);
    let mut labels = Vec::with_capacity(n);
    for &idx in chunk {
        let (ci, si) = samples[idx];
        let case = &cases[ci];
        if subset.visual {
            images.push(augment(&case.images[si], &cfg.augment, rng));
        }
        tab_data.extend_from_slice(&case.tabular);
        tokens.push(case.tokens.clone());
        labels.push(case.label);
    }
    let tabular = Tensor::new(vec![n, TABULAR_DIM], tab_data)
        .map_err(|e| HarnessError::Runtime(e.to_string()))?;

    let mut g = Graph::new();
    let leaves = model.leaves(&mut g);
    let logits = model
        .forward(
            &mut g,
            &leaves,
            &BatchInputs {
                images: subset.visual.then_some(images.as_slice()),
                tabular: subset.tabular.then_some(&tabular),
                tokens: subset.linguistic.then_some(tokens.as_slice()),
            },
        )
        .map_err(|e| HarnessError::Runtime(e.to_string()))?;
    let loss = g
        .cross_entropy(logits, &labels)
        .map_err(|e| HarnessError::Runtime(e.to_string()))?;
    let loss_value = g.value(loss).data()[0];
    g.backward(loss)
        .map_err(|e| HarnessError::Runtime(e.to_string()))?;
    let grads = leaves.gradients(&g);
    let hits = predict(g.value(logits))
        .map_err(|e| HarnessError::Runtime(e.to_string()))?
        .iter()
        .zip(&labels)
        .filter(|(p, &l)| p.class == l)
        .count();
    let mut params = model.params_mut();
    optimizer
        .step(&mut params, &grads, lr)
        .map_err(|e| HarnessError::Runtime(e.to_string()))?;
    Ok((loss_value, hits))
}

fn log_csv(history: &[EpochLog]) -> String {
    let mut out = String::from("epoch,lr,train_loss,train_acc\n");
    for log in history {
        writeln!(out, "{},{},{},{}", log.epoch, log.lr, log.loss, log.accuracy)
            .expect("string write");
    }
    out
}

fn fs_create(dir: &std::path::Path) -> Result<(), HarnessError> {
    std::fs::create_dir_all(dir)
        .map_err(|e| HarnessError::Runtime(format!("cannot create {}: {e}", dir.display())))
}
