//! Cross-validated two-stage runs: train on 𝒢, augment, retrain on 𝒢′,
//! score the held-out labels.

use std::collections::BTreeSet;
use std::time::Instant;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::TrainConfig;
use super::metrics::{compute_metrics, Metrics};
use super::split::{split_folds, FoldSplit};
use super::trainer::{fine_tune_gnn, train_gnn, History, Supervision};
use crate::error::{Error, Result};
use crate::gnn::HybridModel;
use crate::graph::{LabelSet, RoadGraph, TargetScaler, N_CLASSES};
use crate::io::{Checkpoint, DatasetBundle, FoldSplitIds, SyntheticBlock};
use crate::rng::SeedTree;
use crate::vae::{augment, pseudo_label, train_vae, AugmentConfig, AugmentStats, AugmentedGraph, VaeModel};

/// Maps a volume to a traffic class using the smallest volume of each class
/// among `labels`; values below every class floor land in class 1.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassThresholds {
    floors: Vec<(f64, u8)>,
}

impl ClassThresholds {
    pub fn from_labels(labels: &LabelSet) -> Self {
        let mut floors: Vec<(f64, u8)> = Vec::new();
        for c in 1..=N_CLASSES as u8 {
            let min = labels
                .adb()
                .iter()
                .zip(labels.classes())
                .filter(|(_, &k)| k == c)
                .map(|(&v, _)| v)
                .fold(f64::INFINITY, f64::min);
            if min.is_finite() {
                floors.push((min, c));
            }
        }
        Self { floors }
    }

    pub fn classify(&self, v: f64) -> u8 {
        self.floors.iter().rev().find(|(floor, _)| v >= *floor).map_or(1, |&(_, c)| c)
    }
}

/// Eval-mode scores of `model` at `nodes` against the given truths.
#[allow(clippy::too_many_arguments)]
pub fn score_nodes(
    model: &HybridModel,
    scaler: &TargetScaler,
    graph: &RoadGraph,
    nodes: &[usize],
    truth_reg: &[f64],
    truth_class: &[u8],
    seed: u64,
) -> Result<Metrics> {
    let (reg, class) = pseudo_label(model, scaler, graph, nodes, seed)?;
    compute_metrics(&reg, truth_reg, &class, truth_class)
}

/// Scores on original nodes that carry no label, against generator truth.
pub fn oracle_metrics(
    model: &HybridModel,
    scaler: &TargetScaler,
    graph: &RoadGraph,
    labels: &LabelSet,
    truth: &[f64],
    seed: u64,
) -> Result<Metrics> {
    let labeled: BTreeSet<usize> = labels.indices().iter().copied().collect();
    let nodes: Vec<usize> = (0..truth.len()).filter(|i| !labeled.contains(i)).collect();
    let thresholds = ClassThresholds::from_labels(labels);
    let truth_reg: Vec<f64> = nodes.iter().map(|&i| truth[i]).collect();
    let truth_class: Vec<u8> = truth_reg.iter().map(|&v| thresholds.classify(v)).collect();
    score_nodes(model, scaler, graph, &nodes, &truth_reg, &truth_class, seed)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StageSummary {
    pub epochs_run: usize,
    pub best_epoch: usize,
    pub best_val_loss: f64,
    pub first_train_loss: f64,
    pub last_train_loss: f64,
    pub stopped_early: bool,
}

impl From<&History> for StageSummary {
    fn from(h: &History) -> Self {
        Self {
            epochs_run: h.epochs_run,
            best_epoch: h.best_epoch,
            best_val_loss: h.best_val_loss,
            first_train_loss: h.train_loss.first().copied().unwrap_or(0.0),
            last_train_loss: h.train_loss.last().copied().unwrap_or(0.0),
            stopped_early: h.stopped_early,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AuditCheck {
    pub name: String,
    pub passed: bool,
}

/// Index-set assertions that no test label reached training.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AuditReport {
    pub passed: bool,
    pub checks: Vec<AuditCheck>,
}

pub struct AuditInput<'a> {
    pub labels: &'a LabelSet,
    pub split: &'a FoldSplit,
    pub scaler: &'a TargetScaler,
    pub augmented: &'a AugmentedGraph,
    /// Every node that received a gradient in either stage.
    pub supervised: &'a [usize],
    /// Nodes monitored for early stopping.
    pub monitored: &'a [usize],
    /// Nodes the test metrics were computed on.
    pub scored: &'a [usize],
}

pub fn audit_fold(a: &AuditInput) -> AuditReport {
    let node_set = |positions: &[usize]| -> BTreeSet<usize> { positions.iter().map(|&p| a.labels.indices()[p]).collect() };
    let test = node_set(&a.split.test);
    let fit = node_set(&a.split.fit);
    let val = node_set(&a.split.validation);
    let n = a.augmented.n_original();
    let synthetic: BTreeSet<usize> = a.augmented.synthetic_indices().collect();
    let attach: BTreeSet<usize> = a.augmented.synthetic_edges.iter().map(|&(_, i)| i).collect();
    let train_adb: Vec<f64> = a.split.train().iter().map(|&p| a.labels.adb()[p]).collect();
    let refit = TargetScaler::fit(&train_adb).ok();
    let scored: BTreeSet<usize> = a.scored.iter().copied().collect();

    let checks = vec![
        ("test disjoint from fit and validation", test.is_disjoint(&fit) && test.is_disjoint(&val)),
        (
            "partition covers every label once",
            a.split.fit.len() + a.split.validation.len() + a.split.test.len() == a.labels.len()
                && fit.len() + val.len() + test.len() == a.labels.len(),
        ),
        (
            "supervised nodes are fit or synthetic",
            a.supervised.iter().all(|i| fit.contains(i) || synthetic.contains(i)),
        ),
        ("monitored nodes are validation", a.monitored.iter().all(|i| val.contains(i) || (val.is_empty() && fit.contains(i)))),
        ("pseudo-labels only on synthetic nodes", a.augmented.synthetic_indices().all(|j| j >= n) && synthetic.is_disjoint(&test)),
        ("synthetic nodes never attach to test", attach.is_disjoint(&test)),
        ("scaler fitted on training labels only", refit.as_ref() == Some(a.scaler)),
        ("scored nodes are exactly the test labels", scored == test),
    ];
    let checks: Vec<AuditCheck> = checks
        .into_iter()
        .map(|(name, passed)| AuditCheck {
            name: name.to_string(),
            passed,
        })
        .collect();
    AuditReport {
        passed: checks.iter().all(|c| c.passed),
        checks,
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FoldReport {
    pub fold: usize,
    pub inference_seed: u64,
    pub n_fit: usize,
    pub n_validation: usize,
    pub n_test: usize,
    pub test: Metrics,
    /// Unlabeled nodes against generator ground truth, when known.
    pub oracle: Option<Metrics>,
    pub stage1: StageSummary,
    pub stage2: Option<StageSummary>,
    pub augmentation: AugmentStats,
    pub audit: AuditReport,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct AugmentSummary {
    pub requested: usize,
    /// Synthetic nodes kept across folds (M′).
    pub surviving: usize,
    pub edges_added: usize,
    pub mean_survival_rate: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VaeSummary {
    pub epochs: usize,
    pub final_loss: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub arm: String,
    pub config: TrainConfig,
    pub config_fingerprint: String,
    pub schema_fingerprint: String,
    pub seed: u64,
    pub n_nodes: usize,
    pub n_labels: usize,
    pub folds: Vec<FoldReport>,
    pub mean: Metrics,
    pub std: Metrics,
    pub oracle_mean: Option<Metrics>,
    pub augmentation: AugmentSummary,
    pub vae: Option<VaeSummary>,
}

/// Wall-clock seconds, kept out of the report so reports stay reproducible.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Timing {
    pub vae_secs: f64,
    pub fold_secs: Vec<f64>,
    pub total_secs: f64,
}

#[derive(Clone, Debug)]
pub struct RunOutcome {
    pub report: RunReport,
    /// Final model of each fold.
    pub checkpoints: Vec<Checkpoint>,
    pub timing: Timing,
}

/// A VAE trained once on a dataset and shared by every fold and arm.
#[derive(Clone, Debug)]
pub struct SharedVae {
    pub model: VaeModel,
    pub summary: VaeSummary,
    pub secs: f64,
}

pub fn train_shared_vae(bundle: &DatasetBundle, config: &TrainConfig) -> Result<SharedVae> {
    let start = Instant::now();
    let root = SeedTree::new(config.seed);
    let (model, history) = train_vae(&bundle.graph, &config.vae, &root.child("vae"))?;
    Ok(SharedVae {
        model,
        summary: VaeSummary {
            epochs: history.epoch_loss.len(),
            final_loss: history.epoch_loss.last().copied().unwrap_or(0.0),
        },
        secs: start.elapsed().as_secs_f64(),
    })
}

/// Trains the VAE if the config needs one, then runs every fold.
pub fn run_pipeline(bundle: &DatasetBundle, config: &TrainConfig, jobs: usize) -> Result<RunOutcome> {
    config.validate()?;
    let vae = if config.uses_vae() {
        Some(train_shared_vae(bundle, config)?)
    } else {
        None
    };
    run_pipeline_with(bundle, config, vae.as_ref(), jobs, "custom")
}

fn supervision(labels: &LabelSet, positions: &[usize], scaler: &TargetScaler) -> Supervision {
    let mut s = Supervision::default();
    for &p in positions {
        s.push(labels.indices()[p], scaler.normalize(labels.adb()[p]), labels.classes()[p], 1.0);
    }
    s
}

struct FoldOutput {
    report: FoldReport,
    checkpoint: Checkpoint,
    secs: f64,
}

fn run_fold(
    bundle: &DatasetBundle,
    config: &TrainConfig,
    vae: Option<&SharedVae>,
    fold: usize,
    split: &FoldSplit,
) -> Result<FoldOutput> {
    let start = Instant::now();
    let labels = &bundle.labels;
    let base = &bundle.graph;
    let seeds = SeedTree::new(config.seed).child("fold").index(fold as u64);
    let inference_seed: u64 = seeds.rng("inference").random();
    let train_positions = split.train();
    let train_adb: Vec<f64> = train_positions.iter().map(|&p| labels.adb()[p]).collect();
    let scaler = TargetScaler::fit(&train_adb)?;
    let fit = supervision(labels, &split.fit, &scaler);
    let val = supervision(labels, &split.validation, &scaler);
    let alpha = config.loss.alpha;
    let d = base.n_features();

    log::info!("fold {fold}: stage 1 on {} labels", fit.len());
    let init = HybridModel::new(config.model.clone(), d, &seeds.child("init"))?;
    let (stage1, h1) = train_gnn(init, base, &fit, &val, &config.optim, alpha, &seeds.child("stage1"), inference_seed)?;

    let train_nodes: Vec<usize> = train_positions.iter().map(|&p| labels.indices()[p]).collect();
    let requested = config.augment.count.unwrap_or(train_nodes.len());
    let augmented = match vae {
        Some(v) if config.augment.enabled && requested > 0 => {
            let cfg = AugmentConfig {
                count: requested,
                tau: config.augment.tau,
                top_k: config.augment.top_k,
            };
            let a = augment(base, &train_nodes, &v.model, &stage1, &scaler, &cfg, &seeds.child("augment"), inference_seed)?;
            a.check_invariants(&train_nodes, cfg.tau, cfg.top_k)?;
            a
        }
        _ => AugmentedGraph::identity(base, 0),
    };

    let (model, graph, h2, supervised) = if augmented.n_synthetic() > 0 {
        let mut train = fit.clone();
        for (k, j) in augmented.synthetic_indices().enumerate() {
            train.push(
                j,
                scaler.normalize(augmented.pseudo_reg[k]),
                augmented.pseudo_clf[k],
                config.loss.pseudo_weight,
            );
        }
        log::info!("fold {fold}: stage 2 with {} synthetic nodes", augmented.n_synthetic());
        let (m, h) = fine_tune_gnn(
            stage1.clone(),
            &augmented.graph,
            &train,
            &val,
            &config.optim,
            alpha,
            &seeds.child("stage2"),
            inference_seed,
        )?;
        (m, &augmented.graph, Some(h), train.nodes)
    } else {
        (stage1, base, None, fit.nodes.clone())
    };

    let test_nodes: Vec<usize> = split.test.iter().map(|&p| labels.indices()[p]).collect();
    let test_reg: Vec<f64> = split.test.iter().map(|&p| labels.adb()[p]).collect();
    let test_class: Vec<u8> = split.test.iter().map(|&p| labels.classes()[p]).collect();
    let test = score_nodes(&model, &scaler, graph, &test_nodes, &test_reg, &test_class, inference_seed)?;
    let oracle = match &bundle.ground_truth {
        Some(truth) => Some(oracle_metrics(&model, &scaler, graph, labels, truth, inference_seed)?),
        None => None,
    };

    let audit = audit_fold(&AuditInput {
        labels,
        split,
        scaler: &scaler,
        augmented: &augmented,
        supervised: &supervised,
        monitored: if val.is_empty() { &fit.nodes } else { &val.nodes },
        scored: &test_nodes,
    });
    if !audit.passed {
        let failed: Vec<&str> = audit.checks.iter().filter(|c| !c.passed).map(|c| c.name.as_str()).collect();
        return Err(Error::Leakage(format!("fold {fold}: {}", failed.join("; "))));
    }

    let ids = |positions: &[usize]| positions.iter().map(|&p| base.node_id(labels.indices()[p]).to_string()).collect();
    let n = base.n_nodes();
    let synthetic = (augmented.n_synthetic() > 0).then(|| SyntheticBlock {
        ids: augmented.graph.node_ids()[n..].to_vec(),
        features: augmented.synthetic_features.clone(),
        edges: augmented
            .synthetic_edges
            .iter()
            .map(|&(j, i)| (j - n, base.node_id(i).to_string()))
            .collect(),
        pseudo_reg: augmented.pseudo_reg.clone(),
        pseudo_clf: augmented.pseudo_clf.clone(),
        seed: config.seed,
        tau: config.augment.tau,
        top_k: config.augment.top_k,
        requested: augmented.stats.requested,
        surviving: augmented.stats.surviving,
    });
    let checkpoint = Checkpoint {
        model,
        scaler,
        schema_fingerprint: bundle.schema_fingerprint(),
        inference_seed,
        split: Some(FoldSplitIds {
            fold,
            train: ids(&split.fit),
            validation: ids(&split.validation),
            test: ids(&split.test),
        }),
        synthetic,
    };
    let report = FoldReport {
        fold,
        inference_seed,
        n_fit: split.fit.len(),
        n_validation: split.validation.len(),
        n_test: split.test.len(),
        test,
        oracle,
        stage1: StageSummary::from(&h1),
        stage2: h2.as_ref().map(StageSummary::from),
        augmentation: augmented.stats,
        audit,
    };
    log::info!("fold {fold}: test MAE {:.3}  R² {:.3}  accuracy {:.3}", test.mae, test.r2, test.accuracy);
    Ok(FoldOutput {
        report,
        checkpoint,
        secs: start.elapsed().as_secs_f64(),
    })
}

/// Runs every fold with a given (possibly absent) shared VAE. `jobs > 1`
/// runs folds concurrently; results do not depend on it.
pub fn run_pipeline_with(
    bundle: &DatasetBundle,
    config: &TrainConfig,
    vae: Option<&SharedVae>,
    jobs: usize,
    arm: &str,
) -> Result<RunOutcome> {
    config.validate()?;
    let start = Instant::now();
    let root = SeedTree::new(config.seed);
    let splits = split_folds(&bundle.labels, &config.protocol, &root.child("split"))?;
    let vae = vae.filter(|_| config.uses_vae());

    let run = |f: usize| run_fold(bundle, config, vae, f, &splits[f]);
    let outputs: Vec<FoldOutput> = if jobs > 1 {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build()
            .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
        pool.install(|| (0..splits.len()).into_par_iter().map(run).collect::<Result<Vec<_>>>())?
    } else {
        (0..splits.len()).map(run).collect::<Result<Vec<_>>>()?
    };

    let tests: Vec<Metrics> = outputs.iter().map(|o| o.report.test).collect();
    let (mean, std) = Metrics::summarize(&tests);
    let oracles: Vec<Metrics> = outputs.iter().filter_map(|o| o.report.oracle).collect();
    let oracle_mean = (!oracles.is_empty()).then(|| Metrics::summarize(&oracles).0);
    let stats: Vec<&AugmentStats> = outputs.iter().map(|o| &o.report.augmentation).collect();
    let augmentation = AugmentSummary {
        requested: stats.iter().map(|s| s.requested).sum(),
        surviving: stats.iter().map(|s| s.surviving).sum(),
        edges_added: stats.iter().map(|s| s.edges_added).sum(),
        mean_survival_rate: stats.iter().map(|s| s.survival_rate).sum::<f64>() / stats.len() as f64,
    };
    let schema_fingerprint = bundle.schema_fingerprint();
    let report = RunReport {
        arm: arm.to_string(),
        config: config.clone(),
        config_fingerprint: config.fingerprint(&schema_fingerprint),
        schema_fingerprint,
        seed: config.seed,
        n_nodes: bundle.graph.n_nodes(),
        n_labels: bundle.labels.len(),
        folds: outputs.iter().map(|o| o.report.clone()).collect(),
        mean,
        std,
        oracle_mean,
        augmentation,
        vae: vae.map(|v| v.summary.clone()),
    };
    let timing = Timing {
        vae_secs: vae.map_or(0.0, |v| v.secs),
        fold_secs: outputs.iter().map(|o| o.secs).collect(),
        total_secs: start.elapsed().as_secs_f64(),
    };
    Ok(RunOutcome {
        report,
        checkpoints: outputs.into_iter().map(|o| o.checkpoint).collect(),
        timing,
    })
}
