//! Single-layer GCN, single-head GAT and mean-aggregator GraphSAGE.
//!
//! Each layer has a tape-level `forward` over a [`Block`] (used in training,
//! where only the receptive field of the scored nodes is computed) and a
//! whole-graph convenience wrapper returning plain values.

use std::sync::Arc;

use rand::seq::index::sample;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::block::Block;
use crate::autodiff::{Tape, Var};
use crate::error::{Error, Result};
use crate::graph::RoadGraph;
use crate::optim::glorot_uniform;
use crate::rng::SeedTree;
use crate::tensor::{DenseMatrix, SparseMatrix};

/// Block-local node position per attention edge.
pub type EdgeIndex = Arc<[usize]>;

fn check_width(op: &'static str, tape: &Tape, h: Var, rows: usize, d_in: usize) -> Result<()> {
    let (r, c) = tape.shape(h);
    if r != rows || c != d_in {
        return Err(Error::shape(
            op,
            format!("input is {r}x{c}, layer expects {rows}x{d_in}"),
        ));
    }
    Ok(())
}

/// `h_i = ReLU(Σ_{j ∈ N(i) ∪ {i}} W·h_j / √(d_i d_j))` with `d = |N| + 1`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GcnLayer {
    pub weight: DenseMatrix,
}

impl GcnLayer {
    pub fn new(d_in: usize, d_out: usize, rng: &mut impl Rng) -> Self {
        Self {
            weight: glorot_uniform(d_in, d_out, rng),
        }
    }

    pub fn d_in(&self) -> usize {
        self.weight.rows()
    }

    pub fn d_out(&self) -> usize {
        self.weight.cols()
    }

    /// Symmetric-normalized propagation operator with self-loops, `n_dst × n_src`.
    pub fn propagation(block: &Block) -> SparseMatrix {
        let rows = (0..block.n_dst())
            .map(|i| {
                let di = (block.src_degree[i] + 1) as f64;
                let mut row = Vec::with_capacity(block.neighbors[i].len() + 1);
                row.push((i, 1.0 / di));
                for &j in &block.neighbors[i] {
                    let dj = (block.src_degree[j] + 1) as f64;
                    row.push((j, 1.0 / (di * dj).sqrt()));
                }
                row
            })
            .collect();
        SparseMatrix::from_row_lists(block.n_src(), rows)
    }

    pub fn forward(&self, tape: &mut Tape, block: &Block, h_src: Var, weight: Var) -> Result<Var> {
        check_width("gcn_forward", tape, h_src, block.n_src(), self.d_in())?;
        let agg = tape.spmm(Arc::new(Self::propagation(block)), h_src)?;
        let z = tape.matmul(agg, weight)?;
        tape.relu(z)
    }
}

/// Single-head attention:
/// `e_ij = LeakyReLU(aᵀ[W h_i ‖ W h_j])`, `α_ij = softmax_j(e_ij)` over
/// `N(i) ∪ {i}`, `h_i = ReLU(Σ α_ij W h_j)`.
///
/// `attention` is the vector `a` laid out as `d_out × 2`: column 0 is the
/// half applied to the target node, column 1 the half applied to the source.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GatLayer {
    pub weight: DenseMatrix,
    pub attention: DenseMatrix,
    pub leaky_slope: f64,
}

/// Edge list of a block including self-loops: `(dst local, src local)`.
pub(crate) fn edges_with_self_loops(block: &Block) -> (Vec<usize>, Vec<usize>) {
    let mut dst = Vec::new();
    let mut src = Vec::new();
    for i in 0..block.n_dst() {
        dst.push(i);
        src.push(i);
        for &j in &block.neighbors[i] {
            dst.push(i);
            src.push(j);
        }
    }
    (dst, src)
}

impl GatLayer {
    pub fn new(d_in: usize, d_out: usize, rng: &mut impl Rng) -> Self {
        let a = glorot_uniform(2 * d_out, 1, rng);
        let mut attention = DenseMatrix::zeros(d_out, 2);
        for k in 0..d_out {
            attention.set(k, 0, a.data()[k]);
            attention.set(k, 1, a.data()[d_out + k]);
        }
        Self {
            weight: glorot_uniform(d_in, d_out, rng),
            attention,
            leaky_slope: 0.2,
        }
    }

    pub fn d_in(&self) -> usize {
        self.weight.rows()
    }

    pub fn d_out(&self) -> usize {
        self.weight.cols()
    }

    /// Returns `(output, attention coefficients per edge, edge dst, edge src)`.
    pub fn forward_with_attention(
        &self,
        tape: &mut Tape,
        block: &Block,
        h_src: Var,
        weight: Var,
        attention: Var,
    ) -> Result<(Var, Var, EdgeIndex, EdgeIndex)> {
        check_width("gat_forward", tape, h_src, block.n_src(), self.d_in())?;
        let wh = tape.matmul(h_src, weight)?;
        let scores = tape.matmul(wh, attention)?;
        let s_dst = tape.slice_cols(scores, 0, 1)?;
        let s_src = tape.slice_cols(scores, 1, 1)?;
        let (dst, src) = edges_with_self_loops(block);
        let dst: Arc<[usize]> = dst.into();
        let src: Arc<[usize]> = src.into();
        let e_dst = tape.gather_rows(s_dst, dst.clone())?;
        let e_src = tape.gather_rows(s_src, src.clone())?;
        let e = tape.add(e_dst, e_src)?;
        let e = tape.leaky_relu(e, self.leaky_slope)?;
        let alpha = tape.segment_softmax(e, dst.clone(), block.n_dst())?;
        let agg = tape.edge_aggregate(alpha, wh, dst.clone(), src.clone(), block.n_dst())?;
        let out = tape.relu(agg)?;
        Ok((out, alpha, dst, src))
    }

    pub fn forward(
        &self,
        tape: &mut Tape,
        block: &Block,
        h_src: Var,
        weight: Var,
        attention: Var,
    ) -> Result<Var> {
        Ok(self
            .forward_with_attention(tape, block, h_src, weight, attention)?
            .0)
    }
}

/// `h_i = ReLU(W · [MEAN_{j ∈ S(i)} h_j ‖ h_i])` with `S(i)` a uniform sample
/// of at most `sample_size` neighbors; an isolated node aggregates zeros.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SageLayer {
    pub weight: DenseMatrix,
    pub sample_size: usize,
}

impl SageLayer {
    pub fn new(d_in: usize, d_out: usize, sample_size: usize, rng: &mut impl Rng) -> Self {
        Self {
            weight: glorot_uniform(2 * d_in, d_out, rng),
            sample_size,
        }
    }

    pub fn d_in(&self) -> usize {
        self.weight.rows() / 2
    }

    pub fn d_out(&self) -> usize {
        self.weight.cols()
    }

    /// Mean-over-sample operator, `n_dst × n_src`.
    ///
    /// Each output node draws from its own stream keyed by `(key, node id)`,
    /// so a node's sample does not depend on which other nodes are evaluated.
    pub fn sampled_mean(&self, block: &Block, key: u64) -> SparseMatrix {
        let seeds = SeedTree::new(key);
        let rows = block
            .neighbors
            .iter()
            .zip(&block.dst)
            .map(|(nbrs, &node)| {
                let deg = nbrs.len();
                if deg == 0 {
                    return Vec::new();
                }
                let picked: Vec<usize> = if deg <= self.sample_size {
                    nbrs.clone()
                } else {
                    let mut rng = seeds.index(node as u64).rng("sage");
                    let mut idx: Vec<usize> = sample(&mut rng, deg, self.sample_size).into_vec();
                    idx.sort_unstable();
                    idx.into_iter().map(|k| nbrs[k]).collect()
                };
                let w = 1.0 / picked.len() as f64;
                picked.into_iter().map(|j| (j, w)).collect()
            })
            .collect();
        SparseMatrix::from_row_lists(block.n_src(), rows)
    }

    pub fn forward(
        &self,
        tape: &mut Tape,
        block: &Block,
        h_src: Var,
        weight: Var,
        key: u64,
    ) -> Result<Var> {
        check_width("sage_forward", tape, h_src, block.n_src(), self.d_in())?;
        let mean = tape.spmm(Arc::new(self.sampled_mean(block, key)), h_src)?;
        let own: Arc<[usize]> = (0..block.n_dst()).collect::<Vec<_>>().into();
        let own = tape.gather_rows(h_src, own)?;
        let cat = tape.concat_cols(&[mean, own])?;
        let z = tape.matmul(cat, weight)?;
        tape.relu(z)
    }
}

fn check_rows(graph: &RoadGraph, h: &DenseMatrix) -> Result<()> {
    if h.rows() != graph.n_nodes() {
        return Err(Error::shape(
            "layer forward",
            format!("{} feature rows for {} nodes", h.rows(), graph.n_nodes()),
        ));
    }
    Ok(())
}

/// Whole-graph GCN layer.
pub fn gcn_forward(graph: &RoadGraph, h: &DenseMatrix, layer: &GcnLayer) -> Result<DenseMatrix> {
    check_rows(graph, h)?;
    let block = Block::full(graph);
    let mut tape = Tape::new();
    let x = tape.constant(h.clone())?;
    let w = tape.constant(layer.weight.clone())?;
    let out = layer.forward(&mut tape, &block, x, w)?;
    Ok(tape.value(out).clone())
}

/// Per-node `(neighbor, α)` lists.
pub type AttentionRows = Vec<Vec<(usize, f64)>>;

/// Whole-graph GAT layer; also returns per-node attention rows as
/// `(neighbor, α)` lists including the self-loop.
pub fn gat_forward(
    graph: &RoadGraph,
    h: &DenseMatrix,
    layer: &GatLayer,
) -> Result<(DenseMatrix, AttentionRows)> {
    check_rows(graph, h)?;
    let block = Block::full(graph);
    let mut tape = Tape::new();
    let x = tape.constant(h.clone())?;
    let w = tape.constant(layer.weight.clone())?;
    let a = tape.constant(layer.attention.clone())?;
    let (out, alpha, dst, src) = layer.forward_with_attention(&mut tape, &block, x, w, a)?;
    let mut rows = vec![Vec::new(); graph.n_nodes()];
    for (e, &p) in tape.value(alpha).data().iter().enumerate() {
        rows[block.dst[dst[e]]].push((block.src[src[e]], p));
    }
    Ok((tape.value(out).clone(), rows))
}

/// Whole-graph GraphSAGE layer.
pub fn sage_forward(
    graph: &RoadGraph,
    h: &DenseMatrix,
    layer: &SageLayer,
    rng: &mut impl Rng,
) -> Result<DenseMatrix> {
    check_rows(graph, h)?;
    let block = Block::full(graph);
    let mut tape = Tape::new();
    let x = tape.constant(h.clone())?;
    let w = tape.constant(layer.weight.clone())?;
    let out = layer.forward(&mut tape, &block, x, w, rng.random())?;
    Ok(tape.value(out).clone())
}
