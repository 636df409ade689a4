//! Margin objective, training loop, filtered evaluation and checkpoints.

mod checkpoint;
mod eval;
mod metrics;
mod objective;

use std::path::PathBuf;

use rand::seq::SliceRandom;
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use checkpoint::{load_checkpoint, load_params, read_meta, save_checkpoint, CheckpointMeta};
pub use eval::{evaluate, tail_ranks};
pub use metrics::{filtered_rank, metrics_table, KnownTails, RankingReport, METRIC_HEADERS};
pub use objective::{average_losses, margin_loss, margin_loss_var, sample_negative};

use crate::config::Sizes;
use crate::diff::{clip_global_norm, Adam, Gradients, Graph, Mode};
use crate::error::{Error, Result};
use crate::kg::{HyperRelGraph, Statement};
use crate::models::KgcModel;

/// Graph and held-out statements seen by [`train`].
pub struct TrainData<'a> {
    /// Training graph; also the propagation graph for validation.
    pub graph: &'a HyperRelGraph,
    pub valid: &'a [Statement],
    pub known: &'a KnownTails,
}

/// Where and how to persist the best checkpoint.
#[derive(Clone, Debug)]
pub struct CheckpointTarget {
    pub dir: PathBuf,
    pub vocab_hash: String,
    pub sizes: Sizes,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Mean unit loss over the epoch.
    pub train_loss: f64,
    pub val_mrr: Option<f64>,
    /// Fusion weight after the epoch, for gated models.
    pub gate: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct History {
    pub model: String,
    pub initial_gate: Option<f64>,
    pub epochs: Vec<EpochRecord>,
    /// Epoch whose parameters were kept; 0 when no epoch improved validation.
    pub best_epoch: usize,
    pub best_val_mrr: Option<f64>,
}

impl History {
    /// Gate value before training followed by one entry per epoch.
    pub fn gate_trajectory(&self) -> Vec<f64> {
        self.initial_gate
            .into_iter()
            .chain(self.epochs.iter().filter_map(|e| e.gate))
            .collect()
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

/// Batch size from the config, or the model's default when it is zero.
pub fn batch_size(model: &dyn KgcModel) -> usize {
    match model.config().batch_size {
        0 => model.kind().default_batch_size(),
        b => b,
    }
}

/// Runs one epoch of shuffled mini-batches and returns the mean unit loss.
fn run_epoch(
    model: &mut dyn KgcModel,
    graph: &HyperRelGraph,
    adam: &mut Adam,
    rng: &mut ChaCha8Rng,
    epoch: usize,
) -> Result<f64> {
    let mut units = model.units(graph);
    if units.is_empty() {
        return Err(Error::Data("training graph has no statements".into()));
    }
    units.shuffle(rng);
    let bs = batch_size(model);
    let clip = model.config().clip;
    let mut total = 0.0;
    for (b, batch) in units.chunks(bs).enumerate() {
        let mut grads = Gradients::zeros_like(model.store());
        let inv = 1.0 / batch.len() as f64;
        for &unit in batch {
            let seed = rng.next_u64();
            let mut g = Graph::new(model.store(), Mode::Train, seed);
            let loss = model.unit_loss(&mut g, graph, unit, rng)?;
            let value = g.item(loss);
            if !value.is_finite() {
                return Err(Error::NonFiniteLoss { epoch, batch: b + 1 });
            }
            total += value;
            let scaled = g.scale(loss, inv);
            g.backward(scaled, &mut grads)?;
        }
        if !grads.is_finite() {
            return Err(Error::NonFiniteLoss { epoch, batch: b + 1 });
        }
        clip_global_norm(&mut grads, clip);
        adam.step(model.store_mut(), &grads)?;
    }
    Ok(total / units.len() as f64)
}

/// Trains for `config().epochs` epochs and keeps the parameters of the best
/// validation epoch. Without validation statements the last epoch is kept.
/// `on_epoch` sees every record as soon as it is complete.
pub fn train(
    model: &mut dyn KgcModel,
    data: &TrainData,
    target: Option<&CheckpointTarget>,
    mut on_epoch: impl FnMut(&EpochRecord),
) -> Result<History> {
    let cfg = model.config().clone();
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(1);
    let mut adam = Adam::new(model.store(), cfg.lr);
    let valid = match cfg.val_cap {
        0 => data.valid,
        cap => &data.valid[..cap.min(data.valid.len())],
    };
    let mut history = History {
        model: model.kind().to_string(),
        initial_gate: model.gate(),
        epochs: Vec::with_capacity(cfg.epochs),
        best_epoch: 0,
        best_val_mrr: None,
    };
    let mut best_store = None;
    for epoch in 1..=cfg.epochs {
        let train_loss = run_epoch(model, data.graph, &mut adam, &mut rng, epoch)?;
        let val_mrr = if valid.is_empty() {
            None
        } else {
            Some(evaluate(&*model, data.graph, valid, data.known)?.mrr)
        };
        let record = EpochRecord {
            epoch,
            train_loss,
            val_mrr,
            gate: model.gate(),
        };
        on_epoch(&record);
        let improved = match (val_mrr, history.best_val_mrr) {
            (None, _) => true,
            (Some(v), None) => v.is_finite(),
            (Some(v), Some(best)) => v > best,
        };
        if improved {
            history.best_epoch = epoch;
            history.best_val_mrr = val_mrr;
            if let Some(t) = target {
                let meta = CheckpointMeta {
                    kind: model.kind(),
                    sizes: t.sizes,
                    vocab_hash: t.vocab_hash.clone(),
                    epoch,
                    val_mrr,
                    config: cfg.clone(),
                };
                save_checkpoint(&t.dir, &*model, &meta)?;
            }
            if val_mrr.is_some() {
                best_store = Some(model.store().clone());
            }
        }
        history.epochs.push(record);
    }
    if let Some(best) = best_store {
        *model.store_mut() = best;
    }
    if history.best_epoch == 0 {
        if let Some(t) = target {
            let meta = CheckpointMeta {
                kind: model.kind(),
                sizes: t.sizes,
                vocab_hash: t.vocab_hash.clone(),
                epoch: 0,
                val_mrr: None,
                config: cfg,
            };
            save_checkpoint(&t.dir, &*model, &meta)?;
        }
    }
    Ok(history)
}
