use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use super::model::VaeModel;
use crate::error::{Error, Result};
use crate::gnn::HybridModel;
use crate::graph::{RoadGraph, TargetScaler};
use crate::rng::SeedTree;
use crate::tensor::{dot, DenseMatrix};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AugmentConfig {
    /// Requested synthetic node count M.
    pub count: usize,
    pub tau: f64,
    pub top_k: usize,
}

impl Default for AugmentConfig {
    fn default() -> Self {
        Self {
            count: 0,
            tau: 0.7,
            top_k: 5,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct AugmentStats {
    pub requested: usize,
    pub surviving: usize,
    pub edges_added: usize,
    pub survival_rate: f64,
}

/// Cosine similarity; 0 when either vector has zero norm.
pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let na = dot(a, a).sqrt();
    let nb = dot(b, b).sqrt();
    if na == 0.0 || nb == 0.0 {
        return 0.0;
    }
    dot(a, b) / (na * nb)
}

/// For each synthetic row, the labeled nodes it attaches to: those with
/// cosine similarity strictly above `tau`, best `k` first (ties by smaller
/// node index). An empty list means the candidate is discarded.
pub fn attach_edges(
    synthetic: &DenseMatrix,
    graph: &RoadGraph,
    labeled: &[usize],
    tau: f64,
    k: usize,
) -> Result<Vec<Vec<(usize, f64)>>> {
    if labeled.is_empty() {
        return Err(Error::EmptyLabels);
    }
    if synthetic.rows() > 0 && synthetic.cols() != graph.n_features() {
        return Err(Error::shape("attach_edges", "synthetic feature width"));
    }
    let pool: BTreeSet<usize> = labeled.iter().copied().collect();
    if let Some(&bad) = pool.iter().find(|&&i| i >= graph.n_nodes()) {
        return Err(Error::Contract(format!("labeled index {bad} out of range")));
    }
    let x = graph.features();
    Ok((0..synthetic.rows())
        .map(|j| {
            let row = synthetic.row(j);
            let mut cands: Vec<(usize, f64)> = pool
                .iter()
                .map(|&i| (i, cosine(row, x.row(i))))
                .filter(|&(_, s)| s > tau)
                .collect();
            cands.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
            cands.truncate(k);
            cands
        })
        .collect())
}

/// Eval-mode predictions of `model` at `nodes` of `graph`: regression in
/// original units floored at 0, and the argmax class in `1..=5`.
pub fn pseudo_label(
    model: &HybridModel,
    scaler: &TargetScaler,
    graph: &RoadGraph,
    nodes: &[usize],
    seed: u64,
) -> Result<(Vec<f64>, Vec<u8>)> {
    if nodes.is_empty() {
        return Ok((Vec::new(), Vec::new()));
    }
    let (reg, probs) = model.predict(graph, nodes, seed)?;
    let reg = reg.iter().map(|&r| scaler.denormalize(r).max(0.0)).collect();
    let clf = (0..probs.rows()).map(|r| argmax_class(probs.row(r))).collect();
    Ok((reg, clf))
}

/// 1-based index of the largest entry (first on ties).
pub fn argmax_class(row: &[f64]) -> u8 {
    let mut best = 0;
    for (i, &p) in row.iter().enumerate() {
        if p > row[best] {
            best = i;
        }
    }
    best as u8 + 1
}

/// The enriched graph 𝒢′ and everything needed to audit it.
#[derive(Clone, Debug)]
pub struct AugmentedGraph {
    pub base: RoadGraph,
    pub graph: RoadGraph,
    pub synthetic_features: DenseMatrix,
    /// `(synthetic node index in 𝒢′, original labeled node)`.
    pub synthetic_edges: Vec<(usize, usize)>,
    pub pseudo_reg: Vec<f64>,
    pub pseudo_clf: Vec<u8>,
    pub stats: AugmentStats,
}

impl AugmentedGraph {
    pub fn identity(base: &RoadGraph, requested: usize) -> Self {
        Self {
            base: base.clone(),
            graph: base.clone(),
            synthetic_features: DenseMatrix::zeros(0, base.n_features()),
            synthetic_edges: Vec::new(),
            pseudo_reg: Vec::new(),
            pseudo_clf: Vec::new(),
            stats: AugmentStats {
                requested,
                ..AugmentStats::default()
            },
        }
    }

    pub fn n_original(&self) -> usize {
        self.base.n_nodes()
    }

    pub fn n_synthetic(&self) -> usize {
        self.synthetic_features.rows()
    }

    /// Indices of synthetic nodes in 𝒢′.
    pub fn synthetic_indices(&self) -> std::ops::Range<usize> {
        self.n_original()..self.graph.n_nodes()
    }

    /// Re-verifies every structural promise of the augmentation.
    pub fn check_invariants(&self, labeled: &[usize], tau: f64, k: usize) -> Result<()> {
        let fail = |m: String| Err(Error::Contract(m));
        let n = self.n_original();
        let labeled: BTreeSet<usize> = labeled.iter().copied().collect();
        if self.graph.n_nodes() != n + self.n_synthetic() {
            return fail("node count of augmented graph".into());
        }
        for i in 0..n {
            if self.graph.features().row(i) != self.base.features().row(i) {
                return fail(format!("original features changed at node {i}"));
            }
            let orig: Vec<usize> = self.graph.neighbors(i).iter().copied().filter(|&j| j < n).collect();
            if orig != self.base.neighbors(i) {
                return fail(format!("original edges changed at node {i}"));
            }
        }
        for j in self.synthetic_indices() {
            let nbrs = self.graph.neighbors(j);
            if nbrs.is_empty() || nbrs.len() > k {
                return fail(format!("synthetic node {j} has degree {}", nbrs.len()));
            }
            let row = self.graph.features().row(j);
            if row.iter().any(|v| !(0.0..=1.0).contains(v)) {
                return fail(format!("synthetic node {j} has features outside [0, 1]"));
            }
            for &i in nbrs {
                if i >= n || !labeled.contains(&i) {
                    return fail(format!("synthetic node {j} attached to non-labeled node {i}"));
                }
                let s = cosine(row, self.graph.features().row(i));
                if s <= tau {
                    return fail(format!("edge ({j}, {i}) has similarity {s} <= {tau}"));
                }
            }
        }
        if self.pseudo_reg.len() != self.n_synthetic() || self.pseudo_clf.len() != self.n_synthetic() {
            return fail("pseudo-label count".into());
        }
        if self.pseudo_reg.iter().any(|&r| r < 0.0) || self.pseudo_clf.iter().any(|&c| !(1..=5).contains(&c)) {
            return fail("pseudo-label range".into());
        }
        Ok(())
    }
}

/// Samples `config.count` synthetic rows, attaches them to `labeled`, and
/// pseudo-labels the survivors with `model` run on 𝒢′ (inference keyed by
/// `inference_seed`).
#[allow(clippy::too_many_arguments)]
pub fn augment(
    base: &RoadGraph,
    labeled: &[usize],
    vae: &VaeModel,
    model: &HybridModel,
    scaler: &TargetScaler,
    config: &AugmentConfig,
    seeds: &SeedTree,
    inference_seed: u64,
) -> Result<AugmentedGraph> {
    if config.count == 0 {
        return Ok(AugmentedGraph::identity(base, 0));
    }
    let candidates = vae.generate(config.count, &mut seeds.rng("vae_sample"))?;
    let attached = attach_edges(&candidates, base, labeled, config.tau, config.top_k)?;
    let keep: Vec<usize> = (0..attached.len()).filter(|&j| !attached[j].is_empty()).collect();
    if keep.is_empty() {
        return Ok(AugmentedGraph::identity(base, config.count));
    }
    let n = base.n_nodes();
    let features = candidates.select_rows(&keep);
    let mut edges = Vec::new();
    let mut ids = Vec::with_capacity(keep.len());
    for (pos, &j) in keep.iter().enumerate() {
        ids.push(format!("__synthetic_{j}"));
        edges.extend(attached[j].iter().map(|&(i, _)| (n + pos, i)));
    }
    let graph = base.with_appended_nodes(ids, &features, &edges)?;
    let synthetic: Vec<usize> = (n..graph.n_nodes()).collect();
    let (pseudo_reg, pseudo_clf) = pseudo_label(model, scaler, &graph, &synthetic, inference_seed)?;
    let stats = AugmentStats {
        requested: config.count,
        surviving: keep.len(),
        edges_added: edges.len(),
        survival_rate: keep.len() as f64 / config.count as f64,
    };
    Ok(AugmentedGraph {
        base: base.clone(),
        graph,
        synthetic_features: features,
        synthetic_edges: edges,
        pseudo_reg,
        pseudo_clf,
        stats,
    })
}
