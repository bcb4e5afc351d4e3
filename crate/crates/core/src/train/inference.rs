//! Scoring and prediction from a saved fold checkpoint.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::metrics::Metrics;
use super::pipeline::{oracle_metrics, score_nodes};
use crate::error::{Error, Result};
use crate::io::{Checkpoint, DatasetBundle};
use crate::vae::pseudo_label;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub fold: Option<usize>,
    /// Held-out labels of the checkpoint's fold, in the order they were
    /// scored during training.
    pub test: Option<Metrics>,
    /// Every labeled node, training labels included.
    pub labeled: Metrics,
    /// Unlabeled nodes against generator ground truth, when known.
    pub oracle: Option<Metrics>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub segment_id: String,
    pub adb: f64,
    pub class: u8,
}

fn label_positions(bundle: &DatasetBundle) -> HashMap<usize, usize> {
    bundle.labels.indices().iter().enumerate().map(|(p, &i)| (i, p)).collect()
}

pub fn evaluate_checkpoint(ckpt: &Checkpoint, bundle: &DatasetBundle) -> Result<Evaluation> {
    let graph = ckpt.training_graph(&bundle.graph)?;
    let labels = &bundle.labels;
    let seed = ckpt.inference_seed;
    let test = match &ckpt.split {
        Some(split) => {
            let positions = label_positions(bundle);
            let mut nodes = Vec::with_capacity(split.test.len());
            let mut reg = Vec::with_capacity(split.test.len());
            let mut class = Vec::with_capacity(split.test.len());
            for id in &split.test {
                let p = bundle
                    .graph
                    .index_of(id)
                    .and_then(|i| positions.get(&i))
                    .ok_or_else(|| Error::MissingData(format!("test segment {id:?} has no label in this dataset")))?;
                nodes.push(labels.indices()[*p]);
                reg.push(labels.adb()[*p]);
                class.push(labels.classes()[*p]);
            }
            Some(score_nodes(&ckpt.model, &ckpt.scaler, &graph, &nodes, &reg, &class, seed)?)
        }
        None => None,
    };
    let labeled = score_nodes(&ckpt.model, &ckpt.scaler, &graph, labels.indices(), labels.adb(), labels.classes(), seed)?;
    let oracle = match &bundle.ground_truth {
        Some(truth) => Some(oracle_metrics(&ckpt.model, &ckpt.scaler, &graph, labels, truth, seed)?),
        None => None,
    };
    Ok(Evaluation {
        fold: ckpt.split.as_ref().map(|s| s.fold),
        test,
        labeled,
        oracle,
    })
}

/// One prediction per original segment, in dataset order.
pub fn predict_checkpoint(ckpt: &Checkpoint, bundle: &DatasetBundle) -> Result<Vec<Prediction>> {
    let graph = ckpt.training_graph(&bundle.graph)?;
    let nodes: Vec<usize> = (0..bundle.graph.n_nodes()).collect();
    let (reg, class) = pseudo_label(&ckpt.model, &ckpt.scaler, &graph, &nodes, ckpt.inference_seed)?;
    Ok(nodes
        .iter()
        .map(|&i| Prediction {
            segment_id: bundle.graph.node_id(i).to_string(),
            adb: reg[i],
            class: class[i],
        })
        .collect())
}
