use std::collections::HashMap;

use crate::graph::RoadGraph;

/// Receptive field of one message-passing layer.
///
/// Outputs are produced for `dst` (global node ids) from inputs at `src`;
/// `dst` is always a prefix of `src`, so local row `i < dst.len()` of the
/// input is the self-feature of output row `i`.
#[derive(Clone, Debug)]
pub struct Block {
    pub dst: Vec<usize>,
    pub src: Vec<usize>,
    /// Local `src` indices of each output's neighbors, excluding itself.
    pub neighbors: Vec<Vec<usize>>,
    /// Full-graph degree |N(v)| of each `src` node.
    pub src_degree: Vec<usize>,
}

impl Block {
    /// Block whose outputs are `dst`; neighbors outside `dst` are appended to
    /// `src` in ascending id order.
    pub fn build(graph: &RoadGraph, dst: &[usize]) -> Self {
        let mut local: HashMap<usize, usize> = HashMap::with_capacity(dst.len() * 4);
        let mut src: Vec<usize> = Vec::with_capacity(dst.len() * 4);
        for &v in dst {
            local.entry(v).or_insert_with(|| {
                src.push(v);
                src.len() - 1
            });
        }
        debug_assert_eq!(src.len(), dst.len(), "dst must not repeat");
        let mut extra: Vec<usize> = dst
            .iter()
            .flat_map(|&v| graph.neighbors(v).iter().copied())
            .filter(|u| !local.contains_key(u))
            .collect();
        extra.sort_unstable();
        extra.dedup();
        for u in extra {
            local.insert(u, src.len());
            src.push(u);
        }
        let neighbors = dst
            .iter()
            .map(|&v| graph.neighbors(v).iter().map(|u| local[u]).collect())
            .collect();
        let src_degree = src.iter().map(|&v| graph.degree(v)).collect();
        Self {
            dst: dst.to_vec(),
            src,
            neighbors,
            src_degree,
        }
    }

    /// Whole-graph block: `dst == src == 0..n`.
    pub fn full(graph: &RoadGraph) -> Self {
        let all: Vec<usize> = (0..graph.n_nodes()).collect();
        Self::build(graph, &all)
    }

    pub fn n_dst(&self) -> usize {
        self.dst.len()
    }

    pub fn n_src(&self) -> usize {
        self.src.len()
    }
}

/// Chain of blocks for a `depth`-layer stack whose last layer outputs
/// `targets`. Index 0 is the input-side layer.
pub fn plan(graph: &RoadGraph, targets: &[usize], depth: usize) -> Vec<Block> {
    let mut blocks = Vec::with_capacity(depth);
    let mut dst = targets.to_vec();
    for _ in 0..depth {
        let b = Block::build(graph, &dst);
        dst = b.src.clone();
        blocks.push(b);
    }
    blocks.reverse();
    blocks
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::DenseMatrix;

    #[test]
    fn block_prefix_and_neighbors() {
        // Path 0-1-2-3.
        let ids = (0..4).map(|i| i.to_string()).collect();
        let g = RoadGraph::new(ids, [(0, 1), (1, 2), (2, 3)], DenseMatrix::zeros(4, 1)).unwrap();
        let b = Block::build(&g, &[2]);
        assert_eq!(b.src, vec![2, 1, 3]);
        assert_eq!(b.neighbors, vec![vec![1, 2]]);
        assert_eq!(b.src_degree, vec![2, 2, 1]);

        let chain = plan(&g, &[0], 2);
        assert_eq!(chain[1].dst, vec![0]);
        assert_eq!(chain[1].src, vec![0, 1]);
        assert_eq!(chain[0].dst, vec![0, 1]);
        assert_eq!(chain[0].src, vec![0, 1, 2]);
    }
}
