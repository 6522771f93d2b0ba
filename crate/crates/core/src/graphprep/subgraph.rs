// SPDX-License-Identifier: Apache-2.0

use std::collections::hash_map::Entry;
use std::collections::{HashMap, VecDeque};

use ndarray::Array2;

use super::{AttackGraph, FEATURE_WIDTH};

/// Largest distinct DRNL label; larger labels share bucket 0.
pub const DEFAULT_MAX_DRNL: usize = 50;

/// An h-hop neighbourhood around a target pair. Local nodes 0 and 1 are the
/// targets; the target edge itself is never present.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EnclosingSubgraph {
    /// Graph indices of the local nodes.
    pub nodes: Vec<u32>,
    /// Local edges `(a, b)` with `a < b`.
    pub edges: Vec<(u32, u32)>,
    /// Base feature masks, as in [`AttackGraph::feature_mask`].
    pub features: Vec<u16>,
    pub drnl: Vec<u16>,
    pub label: Option<bool>,
}

impl EnclosingSubgraph {
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Input width: base features plus one-hot labels `0..=max_drnl`.
    pub fn feature_width(max_drnl: usize) -> usize {
        FEATURE_WIDTH + max_drnl + 1
    }

    pub fn feature_matrix(&self, max_drnl: usize) -> Array2<f64> {
        let mut x = Array2::zeros((self.len(), Self::feature_width(max_drnl)));
        for (i, (&mask, &label)) in self.features.iter().zip(&self.drnl).enumerate() {
            for b in 0..FEATURE_WIDTH {
                if mask >> b & 1 == 1 {
                    x[[i, b]] = 1.0;
                }
            }
            let l = label as usize;
            x[[i, FEATURE_WIDTH + if l > max_drnl { 0 } else { l }]] = 1.0;
        }
        x
    }

    pub fn neighbor_lists(&self) -> Vec<Vec<u32>> {
        let mut adj = vec![Vec::new(); self.len()];
        for &(a, b) in &self.edges {
            adj[a as usize].push(b);
            adj[b as usize].push(a);
        }
        adj
    }
}

/// Double-radius node label from the distances to both targets.
pub fn drnl_label(du: Option<usize>, dv: Option<usize>) -> usize {
    match (du, dv) {
        (Some(0), _) | (_, Some(0)) => 1,
        (Some(du), Some(dv)) => {
            let d = du + dv;
            1 + du.min(dv) + (d / 2) * ((d / 2) + (d % 2) - 1)
        }
        _ => 0,
    }
}

fn bfs_masked(adj: &[Vec<u32>], src: usize, masked: usize) -> Vec<Option<usize>> {
    let mut dist = vec![None; adj.len()];
    dist[src] = Some(0);
    let mut queue = VecDeque::from([src]);
    while let Some(a) = queue.pop_front() {
        let d = dist[a].unwrap();
        for &b in &adj[a] {
            let b = b as usize;
            if b != masked && dist[b].is_none() {
                dist[b] = Some(d + 1);
                queue.push_back(b);
            }
        }
    }
    dist
}

/// Labels every local node; targets must be local nodes 0 and 1.
pub(crate) fn drnl_labels(adj: &[Vec<u32>], max_drnl: usize) -> Vec<u16> {
    let du = bfs_masked(adj, 0, 1);
    let dv = bfs_masked(adj, 1, 0);
    (0..adj.len())
        .map(|i| {
            let l = match i {
                0 | 1 => 1,
                _ => drnl_label(du[i], dv[i]),
            };
            if l > max_drnl {
                0
            } else {
                l as u16
            }
        })
        .collect()
}

/// Extracts the nodes within `h` hops of `u` or `v`, in breadth-first order
/// starting from the targets, and labels them.
pub fn extract_enclosing_subgraph(
    graph: &AttackGraph,
    u: u32,
    v: u32,
    h: usize,
    max_drnl: usize,
) -> EnclosingSubgraph {
    assert_ne!(u, v, "target endpoints must differ");
    let mut local: HashMap<u32, u32> = HashMap::new();
    let mut nodes = vec![u, v];
    local.insert(u, 0);
    local.insert(v, 1);
    let mut frontier = 0..2;
    for _ in 0..h {
        let start = nodes.len();
        for i in frontier.clone() {
            for &n in graph.neighbors(nodes[i]) {
                if let Entry::Vacant(e) = local.entry(n) {
                    e.insert(nodes.len() as u32);
                    nodes.push(n);
                }
            }
        }
        frontier = start..nodes.len();
        if frontier.is_empty() {
            break;
        }
    }
    let mut edges = Vec::new();
    for (a, &ga) in nodes.iter().enumerate() {
        for &gb in graph.neighbors(ga) {
            if let Some(&b) = local.get(&gb) {
                let a = a as u32;
                if a < b && !(a == 0 && b == 1) {
                    edges.push((a, b));
                }
            }
        }
    }
    edges.sort_unstable();
    let mut sub = EnclosingSubgraph {
        features: nodes.iter().map(|&n| graph.feature_mask(n)).collect(),
        nodes,
        edges,
        drnl: Vec::new(),
        label: None,
    };
    sub.drnl = drnl_labels(&sub.neighbor_lists(), max_drnl);
    sub
}
