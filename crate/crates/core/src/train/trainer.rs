//! Full-batch training of the hybrid model with early stopping.

use rand::SeedableRng;
use serde::{Deserialize, Serialize};

use super::config::OptimConfig;
use crate::autodiff::Tape;
use crate::error::{Error, Result};
use crate::gnn::{joint_loss, joint_loss_value, HybridModel, LossTargets};
use crate::graph::RoadGraph;
use crate::optim::{AdamState, Parameterized};
use crate::rng::{SeedTree, StreamRng};
use crate::tensor::DenseMatrix;

/// Supervised nodes with normalized targets; `targets.rows[i] == i`.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Supervision {
    pub nodes: Vec<usize>,
    pub targets: LossTargets,
}

impl Supervision {
    pub fn push(&mut self, node: usize, reg: f64, class: u8, weight: f64) {
        self.targets.push(self.nodes.len(), reg, class, weight);
        self.nodes.push(node);
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct History {
    /// Training-mode loss per epoch, before that epoch's update.
    pub train_loss: Vec<f64>,
    /// Eval-mode loss on the monitored set after each update.
    pub val_loss: Vec<f64>,
    /// 1-based epoch whose parameters were kept; 0 means the starting
    /// parameters (only possible when fine-tuning).
    pub best_epoch: usize,
    pub best_val_loss: f64,
    pub epochs_run: usize,
    pub stopped_early: bool,
}

/// Eval-mode joint loss of `model` on `set`.
pub fn evaluate_loss(model: &HybridModel, graph: &RoadGraph, set: &Supervision, alpha: f64, seed: u64) -> Result<f64> {
    let mut tape = Tape::new();
    let vars = model.bind(&mut tape)?;
    let out = model.forward(&mut tape, &vars, graph, &set.nodes, &mut StreamRng::seed_from_u64(seed), false)?;
    joint_loss_value(tape.value(out.reg), tape.value(out.logits), &set.targets, alpha)
}

/// Adam on the joint loss over `train`, monitoring `val` (or `train` itself
/// when `val` is empty). Stops after `patience` epochs without a strict
/// improvement and returns the best parameters seen.
#[allow(clippy::too_many_arguments)]
pub fn train_gnn(
    model: HybridModel,
    graph: &RoadGraph,
    train: &Supervision,
    val: &Supervision,
    optim: &OptimConfig,
    alpha: f64,
    seeds: &SeedTree,
    inference_seed: u64,
) -> Result<(HybridModel, History)> {
    fit_loop(model, graph, train, val, optim, alpha, seeds, inference_seed, false)
}

/// Like [`train_gnn`] from already trained parameters: the starting point
/// is scored first and is returned if no epoch beats it.
#[allow(clippy::too_many_arguments)]
pub fn fine_tune_gnn(
    model: HybridModel,
    graph: &RoadGraph,
    train: &Supervision,
    val: &Supervision,
    optim: &OptimConfig,
    alpha: f64,
    seeds: &SeedTree,
    inference_seed: u64,
) -> Result<(HybridModel, History)> {
    fit_loop(model, graph, train, val, optim, alpha, seeds, inference_seed, true)
}

#[allow(clippy::too_many_arguments)]
fn fit_loop(
    mut model: HybridModel,
    graph: &RoadGraph,
    train: &Supervision,
    val: &Supervision,
    optim: &OptimConfig,
    alpha: f64,
    seeds: &SeedTree,
    inference_seed: u64,
    score_start: bool,
) -> Result<(HybridModel, History)> {
    if train.is_empty() {
        return Err(Error::EmptyLabels);
    }
    let monitor = if val.is_empty() { train } else { val };
    let mut adam = AdamState::new(optim.lr, model.params());
    let mut rng = seeds.rng("epochs");
    let mut history = History {
        best_val_loss: f64::INFINITY,
        ..History::default()
    };
    if score_start {
        history.best_val_loss = evaluate_loss(&model, graph, monitor, alpha, inference_seed)?;
    }
    let mut best = model.clone();
    for epoch in 1..=optim.max_epochs {
        let mut tape = Tape::new();
        let vars = model.bind(&mut tape)?;
        let out = model.forward(&mut tape, &vars, graph, &train.nodes, &mut rng, true)?;
        let loss = joint_loss(&mut tape, out.reg, out.logits, &train.targets, alpha)?;
        let value = tape.value(loss).data()[0];
        if !value.is_finite() {
            return Err(Error::Divergence { epoch, loss: value });
        }
        let mut grads = tape.backward(loss)?;
        let g: Vec<DenseMatrix> = vars.iter().map(|&v| grads.take(v)).collect();
        adam.step(&mut model.params_mut(), &g)?;

        let v = evaluate_loss(&model, graph, monitor, alpha, inference_seed)?;
        if !v.is_finite() {
            return Err(Error::Divergence { epoch, loss: v });
        }
        history.train_loss.push(value);
        history.val_loss.push(v);
        history.epochs_run = epoch;
        if v < history.best_val_loss {
            history.best_val_loss = v;
            history.best_epoch = epoch;
            best = model.clone();
        }
        if epoch % 10 == 0 {
            log::info!("epoch {epoch:>4}  train {value:.5}  val {v:.5}  best {:.5}@{}", history.best_val_loss, history.best_epoch);
        }
        if epoch - history.best_epoch >= optim.patience {
            history.stopped_early = true;
            break;
        }
    }
    Ok((best, history))
}
