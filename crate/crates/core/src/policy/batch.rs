use std::rc::Rc;

use crate::autodiff::Tensor;
use crate::graph::{TrafficGraph, EDGE_FEATURES, NODE_FEATURES};
use crate::sim::VehicleKind;

use super::PolicyError;

/// Disjoint union of several graphs, laid out for the tape.
#[derive(Debug, Clone)]
pub struct GraphBatch {
    pub x: Tensor,
    pub e: Tensor,
    pub src: Rc<[usize]>,
    pub dst: Rc<[usize]>,
    /// Graph index of every node.
    pub node_graph: Rc<[usize]>,
    /// First node of every graph.
    pub offsets: Vec<usize>,
    pub sizes: Vec<usize>,
    /// Batch indices of connected-vehicle nodes, in node order.
    pub cv_nodes: Rc<[usize]>,
}

impl GraphBatch {
    /// Stacks `graphs`; `edge_features = false` zeroes every edge feature row.
    /// Every node needs at least one incoming edge.
    pub fn new(graphs: &[&TrafficGraph], edge_features: bool) -> Result<Self, PolicyError> {
        let n: usize = graphs.iter().map(|g| g.node_count()).sum();
        let m: usize = graphs.iter().map(|g| g.edge_count()).sum();
        let mut x = Vec::with_capacity(n * NODE_FEATURES);
        let mut e = Vec::with_capacity(m * EDGE_FEATURES);
        let mut src = Vec::with_capacity(m);
        let mut dst = Vec::with_capacity(m);
        let mut node_graph = Vec::with_capacity(n);
        let mut offsets = Vec::with_capacity(graphs.len());
        let mut sizes = Vec::with_capacity(graphs.len());
        let mut cv_nodes = Vec::new();
        let mut indeg = vec![0usize; n];
        let mut offset = 0;
        for (gi, g) in graphs.iter().enumerate() {
            offsets.push(offset);
            sizes.push(g.node_count());
            for row in &g.x {
                x.extend_from_slice(row);
            }
            node_graph.extend(std::iter::repeat_n(gi, g.node_count()));
            cv_nodes.extend(
                g.kinds
                    .iter()
                    .enumerate()
                    .filter(|(_, &k)| k == VehicleKind::Cv)
                    .map(|(i, _)| offset + i),
            );
            for (&(s, d), feats) in g.edges.iter().zip(&g.e) {
                src.push(offset + s);
                dst.push(offset + d);
                indeg[offset + d] += 1;
                if edge_features {
                    e.extend_from_slice(feats);
                } else {
                    e.extend_from_slice(&[0.0; EDGE_FEATURES]);
                }
            }
            offset += g.node_count();
        }
        if let Some(node) = indeg.iter().position(|&d| d == 0) {
            return Err(PolicyError::IsolatedNode { node });
        }
        Ok(Self {
            x: Tensor::new(n, NODE_FEATURES, x).expect("sized"),
            e: Tensor::new(m, EDGE_FEATURES, e).expect("sized"),
            src: src.into(),
            dst: dst.into(),
            node_graph: node_graph.into(),
            offsets,
            sizes,
            cv_nodes: cv_nodes.into(),
        })
    }

    pub fn node_count(&self) -> usize {
        self.x.rows
    }

    pub fn graph_count(&self) -> usize {
        self.sizes.len()
    }

    /// `N×1` column of `1/|graph|` per node, for per-graph mean pooling.
    pub fn inverse_sizes(&self) -> Tensor {
        Tensor::column(self.node_graph.iter().map(|&g| 1.0 / self.sizes[g] as f64).collect())
    }
}
