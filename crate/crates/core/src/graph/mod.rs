//! Node-centric road graphs: segments are nodes, shared intersections are edges.

mod features;
mod targets;

pub use features::{encode_features, FeatureColumn, FeatureKind, FeatureSchema, RawTable};
pub use targets::{compute_adb, quantile_classes, TargetScaler, N_CLASSES};

use std::collections::{BTreeSet, HashMap};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::DenseMatrix;

/// Undirected simple graph over road segments with an encoded feature matrix.
///
/// Self-loops are never stored; layers add them transiently.
#[derive(Clone, Debug, PartialEq)]
pub struct RoadGraph {
    node_ids: Vec<String>,
    neighbors: Vec<Vec<usize>>,
    features: DenseMatrix,
    id_index: HashMap<String, usize>,
}

impl RoadGraph {
    /// Builds a graph, collapsing duplicate and reversed edges.
    ///
    /// Self-loops and out-of-range endpoints are rejected.
    pub fn new(
        node_ids: Vec<String>,
        edges: impl IntoIterator<Item = (usize, usize)>,
        features: DenseMatrix,
    ) -> Result<Self> {
        let n = node_ids.len();
        if features.rows() != n {
            return Err(Error::shape(
                "RoadGraph::new",
                format!("{} feature rows for {n} nodes", features.rows()),
            ));
        }
        let mut id_index = HashMap::with_capacity(n);
        for (i, id) in node_ids.iter().enumerate() {
            if id_index.insert(id.clone(), i).is_some() {
                return Err(Error::Schema(format!("duplicate node identifier {id:?}")));
            }
        }
        let mut sets = vec![BTreeSet::new(); n];
        for (a, b) in edges {
            if a >= n || b >= n {
                return Err(Error::Contract(format!(
                    "edge ({a}, {b}) out of range for {n} nodes"
                )));
            }
            if a == b {
                return Err(Error::Contract(format!("self-loop at node {a}")));
            }
            sets[a].insert(b);
            sets[b].insert(a);
        }
        Ok(Self {
            node_ids,
            neighbors: sets.into_iter().map(|s| s.into_iter().collect()).collect(),
            features,
            id_index,
        })
    }

    pub fn n_nodes(&self) -> usize {
        self.node_ids.len()
    }

    pub fn n_features(&self) -> usize {
        self.features.cols()
    }

    pub fn features(&self) -> &DenseMatrix {
        &self.features
    }

    pub fn node_ids(&self) -> &[String] {
        &self.node_ids
    }

    pub fn node_id(&self, i: usize) -> &str {
        &self.node_ids[i]
    }

    pub fn index_of(&self, id: &str) -> Option<usize> {
        self.id_index.get(id).copied()
    }

    /// Sorted neighbor indices of `i` (excluding `i`).
    pub fn neighbors(&self, i: usize) -> &[usize] {
        &self.neighbors[i]
    }

    pub fn degree(&self, i: usize) -> usize {
        self.neighbors[i].len()
    }

    pub fn max_degree(&self) -> usize {
        self.neighbors.iter().map(Vec::len).max().unwrap_or(0)
    }

    pub fn edge_count(&self) -> usize {
        self.neighbors.iter().map(Vec::len).sum::<usize>() / 2
    }

    /// Each undirected edge once, as `(lo, hi)` in ascending order.
    pub fn edges(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::with_capacity(self.edge_count());
        for (i, ns) in self.neighbors.iter().enumerate() {
            out.extend(ns.iter().filter(|&&j| j > i).map(|&j| (i, j)));
        }
        out
    }

    pub fn has_edge(&self, a: usize, b: usize) -> bool {
        self.neighbors[a].binary_search(&b).is_ok()
    }

    /// Dense 0/1 adjacency (tests and small-graph oracles only).
    pub fn dense_adjacency(&self) -> DenseMatrix {
        let n = self.n_nodes();
        let mut a = DenseMatrix::zeros(n, n);
        for (i, ns) in self.neighbors.iter().enumerate() {
            for &j in ns {
                a.set(i, j, 1.0);
            }
        }
        a
    }

    /// New graph with extra nodes appended after the existing ones.
    ///
    /// `new_edges` may reference both old and new node indices.
    pub fn with_appended_nodes(
        &self,
        ids: Vec<String>,
        features: &DenseMatrix,
        new_edges: &[(usize, usize)],
    ) -> Result<Self> {
        let mut all_ids = self.node_ids.clone();
        all_ids.extend(ids);
        let feats = self.features.vstack(features)?;
        let edges = self.edges().into_iter().chain(new_edges.iter().copied());
        RoadGraph::new(all_ids, edges, feats)
    }

    /// Relabels nodes: node `i` of `self` becomes node `perm[i]`.
    pub fn permuted(&self, perm: &[usize]) -> Result<Self> {
        let n = self.n_nodes();
        if perm.len() != n {
            return Err(Error::shape("permuted", "permutation length"));
        }
        let mut ids = vec![String::new(); n];
        let mut feats = DenseMatrix::zeros(n, self.n_features());
        for i in 0..n {
            ids[perm[i]] = self.node_ids[i].clone();
            feats.row_mut(perm[i]).copy_from_slice(self.features.row(i));
        }
        let edges: Vec<_> = self.edges().into_iter().map(|(a, b)| (perm[a], perm[b])).collect();
        RoadGraph::new(ids, edges, feats)
    }
}

/// The sparse labeled subset: ADB targets and their quantile traffic class.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LabelSet {
    indices: Vec<usize>,
    adb: Vec<f64>,
    classes: Vec<u8>,
}

impl LabelSet {
    /// Labels with classes derived by quantile binning of `adb`.
    pub fn new(indices: Vec<usize>, adb: Vec<f64>, n_nodes: usize) -> Result<Self> {
        let classes = quantile_classes(&adb, N_CLASSES)?;
        Self::with_classes(indices, adb, classes, n_nodes)
    }

    pub fn with_classes(
        indices: Vec<usize>,
        adb: Vec<f64>,
        classes: Vec<u8>,
        n_nodes: usize,
    ) -> Result<Self> {
        if indices.len() != adb.len() || indices.len() != classes.len() {
            return Err(Error::shape("LabelSet", "indices, adb and classes differ in length"));
        }
        if indices.len() > n_nodes {
            return Err(Error::Contract(format!(
                "{} labels for {n_nodes} nodes",
                indices.len()
            )));
        }
        let mut seen = BTreeSet::new();
        for &i in &indices {
            if i >= n_nodes || !seen.insert(i) {
                return Err(Error::Contract(format!(
                    "label index {i} duplicated or out of range"
                )));
            }
        }
        if let Some(bad) = adb.iter().find(|&&v| !(v > 0.0 && v.is_finite())) {
            return Err(Error::Contract(format!("ADB must be positive, got {bad}")));
        }
        if let Some(bad) = classes.iter().find(|&&c| !(1..=N_CLASSES as u8).contains(&c)) {
            return Err(Error::Contract(format!("traffic class {bad} outside 1..=5")));
        }
        Ok(Self {
            indices,
            adb,
            classes,
        })
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn adb(&self) -> &[f64] {
        &self.adb
    }

    pub fn classes(&self) -> &[u8] {
        &self.classes
    }

    /// Labels at the given positions (not node indices) of this set.
    pub fn subset(&self, positions: &[usize]) -> Self {
        Self {
            indices: positions.iter().map(|&p| self.indices[p]).collect(),
            adb: positions.iter().map(|&p| self.adb[p]).collect(),
            classes: positions.iter().map(|&p| self.classes[p]).collect(),
        }
    }
}

/// Edges of the line graph over `segments`: two segments are adjacent iff
/// they share an endpoint. Parallel segments collapse to a single edge.
pub fn line_graph_edges(segments: &[(usize, usize)]) -> Vec<(usize, usize)> {
    let mut incident: HashMap<usize, Vec<usize>> = HashMap::new();
    for (s, &(u, v)) in segments.iter().enumerate() {
        incident.entry(u).or_default().push(s);
        if v != u {
            incident.entry(v).or_default().push(s);
        }
    }
    let mut edges = BTreeSet::new();
    for segs in incident.values() {
        for (x, &a) in segs.iter().enumerate() {
            for &b in &segs[x + 1..] {
                if a != b {
                    edges.insert((a.min(b), a.max(b)));
                }
            }
        }
    }
    edges.into_iter().collect()
}
