// SPDX-License-Identifier: Apache-2.0

//! Locked netlist → undirected gate graph with candidate links.
//!
//! Nodes are the non-MUX gates. Observable wires become edges; key-gate MUX
//! data inputs become candidate links grouped in pairs. Output MUXes of a
//! switch box are transparent: a reader of an output MUX is connected to the
//! switch-box gate behind it, and the MUX's key bit follows from the pin that
//! gate sits on.

mod dataset;
mod io;
mod subgraph;

pub use dataset::{
    build_dataset, Dataset, DatasetParams, LabeledDesign, Scenario, DEFAULT_VALIDATION_FRACTION,
};
pub use io::{read_dataset, read_graph, write_dataset, write_graph};
#[cfg(test)]
pub(crate) use subgraph::drnl_labels;
pub use subgraph::{drnl_label, extract_enclosing_subgraph, EnclosingSubgraph, DEFAULT_MAX_DRNL};

use std::collections::{HashMap, HashSet};

use thiserror::Error;

use crate::key::KeyAssignment;
use crate::locking::PublicDesign;
use crate::netlist::{GateFunction, Netlist, NodeId, NodeKind};

/// One-hot gate type (8), drives-or-driven-by-PI, drives-PO.
pub const FEATURE_WIDTH: usize = 10;
const PI_FLAG: usize = 8;
const PO_FLAG: usize = 9;

#[derive(Debug, Error)]
pub enum GraphError {
    #[error("metadata does not match netlist: {0}")]
    Mismatch(String),
    #[error("dataset: {0}")]
    Dataset(String),
    #[error("line {line}: {msg}")]
    Format { line: usize, msg: String },
}

/// Undirected gate graph. Node features are stored as bit masks over the
/// [`FEATURE_WIDTH`] base features.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AttackGraph {
    adjacency: Vec<Vec<u32>>,
    features: Vec<u16>,
    node_ids: Vec<NodeId>,
    names: Vec<String>,
}

impl AttackGraph {
    pub fn with_nodes(features: Vec<u16>, node_ids: Vec<NodeId>, names: Vec<String>) -> Self {
        assert_eq!(features.len(), node_ids.len());
        assert_eq!(features.len(), names.len());
        AttackGraph {
            adjacency: vec![Vec::new(); features.len()],
            features,
            node_ids,
            names,
        }
    }

    pub fn node_count(&self) -> usize {
        self.features.len()
    }

    pub fn edge_count(&self) -> usize {
        self.adjacency.iter().map(Vec::len).sum::<usize>() / 2
    }

    pub fn neighbors(&self, u: u32) -> &[u32] {
        &self.adjacency[u as usize]
    }

    pub fn has_edge(&self, u: u32, v: u32) -> bool {
        self.adjacency[u as usize].binary_search(&v).is_ok()
    }

    /// Adds an undirected edge; self-loops and duplicates are ignored.
    pub fn add_edge(&mut self, u: u32, v: u32) -> bool {
        if u == v {
            return false;
        }
        match self.adjacency[u as usize].binary_search(&v) {
            Ok(_) => false,
            Err(pos) => {
                self.adjacency[u as usize].insert(pos, v);
                let pos = self.adjacency[v as usize].binary_search(&u).unwrap_err();
                self.adjacency[v as usize].insert(pos, u);
                true
            }
        }
    }

    /// Every edge once, as `(u, v)` with `u < v`, in sorted order.
    pub fn edges(&self) -> impl Iterator<Item = (u32, u32)> + '_ {
        self.adjacency.iter().enumerate().flat_map(|(u, ns)| {
            ns.iter()
                .filter(move |&&v| v as usize > u)
                .map(move |&v| (u as u32, v))
        })
    }

    pub fn feature_mask(&self, u: u32) -> u16 {
        self.features[u as usize]
    }

    pub fn feature_row(&self, u: u32) -> [f64; FEATURE_WIDTH] {
        let mut row = [0.0; FEATURE_WIDTH];
        for (i, r) in row.iter_mut().enumerate() {
            if self.features[u as usize] >> i & 1 == 1 {
                *r = 1.0;
            }
        }
        row
    }

    pub fn node_id(&self, u: u32) -> NodeId {
        self.node_ids[u as usize]
    }

    pub fn name(&self, u: u32) -> &str {
        &self.names[u as usize]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum LinkRole {
    A,
    B,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LinkOrigin {
    Mux { site: usize },
    Swb { swb: usize, slot: usize },
}

/// A possible wire from `driver` into `sink`. Accepting it implies the key
/// bit `key` takes `bit`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CandidateLink {
    pub driver: u32,
    pub sink: u32,
    pub group: usize,
    pub role: LinkRole,
    pub key: usize,
    pub bit: bool,
}

impl CandidateLink {
    /// Ground truth under a key. Evaluation and library labelling only.
    pub fn is_true_under(&self, key: &KeyAssignment) -> Option<bool> {
        key.get(self.key).value().map(|b| b == self.bit)
    }
}

/// Two candidates into one gate; exactly one is true.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LinkGroup {
    pub links: [usize; 2],
    pub origin: LinkOrigin,
}

/// Candidate links of one design plus the key bits fixed by structure alone.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct LinkSet {
    pub links: Vec<CandidateLink>,
    pub groups: Vec<LinkGroup>,
    /// `(key index, bit)` for output-MUX bits read off the netlist.
    pub structural_bits: Vec<(usize, bool)>,
    pub key_count: usize,
}

impl LinkSet {
    /// Truth per candidate under `key`.
    pub fn labels(&self, key: &KeyAssignment) -> Vec<bool> {
        self.links
            .iter()
            .map(|l| l.is_true_under(key).unwrap_or(false))
            .collect()
    }
}

/// Builds the attack graph of a locked design from public data.
pub fn build_attack_graph(design: PublicDesign<'_>) -> Result<(AttackGraph, LinkSet), GraphError> {
    let netlist = design.netlist;
    let meta = design.meta;
    meta.check(netlist)
        .map_err(|e| GraphError::Mismatch(e.to_string()))?;

    let mut out_mux_gate: HashMap<NodeId, NodeId> = HashMap::new();
    let mut hidden_mux: HashSet<NodeId> = HashSet::new();
    for w in &meta.swbs {
        for t in 0..2 {
            out_mux_gate.insert(w.out_muxes[t], w.gates[t]);
            hidden_mux.insert(w.route_muxes[t]);
        }
    }
    for m in &meta.muxes {
        hidden_mux.insert(m.mux);
    }

    let mut index: HashMap<NodeId, u32> = HashMap::new();
    let mut node_ids = Vec::new();
    let mut names = Vec::new();
    for id in netlist.ids() {
        let node = netlist.node(id);
        match node.gate() {
            Some(GateFunction::Mux2) => {
                if !out_mux_gate.contains_key(&id) && !hidden_mux.contains(&id) {
                    return Err(GraphError::Mismatch(format!(
                        "MUX `{}` is not described by the metadata",
                        node.name
                    )));
                }
            }
            Some(_) => {
                index.insert(id, node_ids.len() as u32);
                node_ids.push(id);
                names.push(node.name.clone());
            }
            None => {}
        }
    }

    // Signal → graph node, looking through output MUXes.
    let resolve = |sig: NodeId| -> Option<u32> {
        let g = out_mux_gate.get(&sig).copied().unwrap_or(sig);
        index.get(&g).copied()
    };

    let mut features = vec![0u16; node_ids.len()];
    for (u, &id) in node_ids.iter().enumerate() {
        let node = netlist.node(id);
        let f = node
            .gate()
            .and_then(GateFunction::feature_index)
            .unwrap_or(0);
        features[u] |= 1 << f;
        if node
            .fanin
            .iter()
            .any(|&x| netlist.node(x).kind == NodeKind::Input)
        {
            features[u] |= 1 << PI_FLAG;
        }
    }
    for &o in netlist.outputs() {
        if let Some(u) = resolve(o) {
            features[u as usize] |= 1 << PO_FLAG;
        }
    }
    let mut graph = AttackGraph::with_nodes(features, node_ids.clone(), names);
    for (v, &id) in node_ids.iter().enumerate() {
        for &x in &netlist.node(id).fanin {
            if hidden_mux.contains(&x) {
                continue;
            }
            if let Some(u) = resolve(x) {
                graph.add_edge(u, v as u32);
            }
        }
    }

    let mut set = LinkSet {
        key_count: meta.key_count,
        ..LinkSet::default()
    };
    let graph_node = |sig: NodeId, what: &str| {
        resolve(sig).ok_or_else(|| {
            GraphError::Mismatch(format!(
                "{what} input `{}` is not a gate",
                netlist.node(sig).name
            ))
        })
    };
    let push_group = |set: &mut LinkSet,
                      mux: NodeId,
                      sink: NodeId,
                      key: usize,
                      origin: LinkOrigin|
     -> Result<(), GraphError> {
        let fanin = &netlist.node(mux).fanin;
        let sink = graph_node(sink, "sink")?;
        let group = set.groups.len();
        let base = set.links.len();
        for (role, pin) in [(LinkRole::A, 1usize), (LinkRole::B, 2)] {
            set.links.push(CandidateLink {
                driver: graph_node(fanin[pin], "MUX data")?,
                sink,
                group,
                role,
                key,
                bit: pin == 2,
            });
        }
        set.groups.push(LinkGroup {
            links: [base, base + 1],
            origin,
        });
        Ok(())
    };
    for (i, m) in meta.muxes.iter().enumerate() {
        push_group(&mut set, m.mux, m.sink, m.key, LinkOrigin::Mux { site: i })?;
    }
    for (i, w) in meta.swbs.iter().enumerate() {
        for t in 0..2 {
            push_group(
                &mut set,
                w.route_muxes[t],
                w.gates[t],
                w.keys[0],
                LinkOrigin::Swb { swb: i, slot: t },
            )?;
            let o = netlist.node(w.out_muxes[t]);
            set.structural_bits
                .push((w.keys[1 + t], o.fanin[2] == w.gates[t]));
        }
    }
    Ok((graph, set))
}

/// Graph of an unlocked netlist; no candidate links.
pub fn build_plain_graph(netlist: &Netlist) -> Result<AttackGraph, GraphError> {
    let meta = crate::locking::LockMeta::empty(crate::locking::Scheme::RandomMux);
    build_attack_graph(PublicDesign {
        netlist,
        meta: &meta,
    })
    .map(|(g, _)| g)
}
