// SPDX-License-Identifier: Apache-2.0

//! Gate-level combinational netlists.
//!
//! A [`Netlist`] is a flat list of [`Node`]s addressed by [`NodeId`]. Primary
//! inputs and key inputs are nodes without fanin; every other node is a gate
//! whose fanin refers to other nodes by id. Primary outputs are references to
//! existing nodes, so a signal can be both an output and an internal net.
//!
//! Key inputs are ordinary `INPUT(..)` declarations whose name is
//! `keyinput<i>`; they are kept out of [`Netlist::inputs`] so that input
//! vectors only cover the functional primary inputs.

mod bench;
mod cycle;
mod equiv;
mod sim;

pub use bench::{parse_bench, write_bench, KEY_INPUT_PREFIX};
pub use cycle::{check_acyclic, Acyclicity};
pub use equiv::{check_equivalence, EquivReport, EXHAUSTIVE_LIMIT};
pub(crate) use sim::{exhaustive_words, lane_mask};
pub use sim::{simulate, CompiledSim};

use std::collections::HashMap;
use std::fmt;

use thiserror::Error;

use crate::key::KeyAssignment;

/// Index of a node inside its [`Netlist`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct NodeId(pub u32);

impl NodeId {
    #[inline]
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "n{}", self.0)
    }
}

/// Boolean function computed by a gate node.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum GateFunction {
    And,
    Nand,
    Or,
    Nor,
    Xor,
    Xnor,
    Not,
    Buf,
    /// `MUX(sel, in0, in1)`: `in0` when `sel` is 0, `in1` otherwise.
    Mux2,
}

impl GateFunction {
    /// The eight functions of the plain gate library, in the fixed order used
    /// for one-hot node features.
    pub const LIBRARY: [GateFunction; 8] = [
        GateFunction::And,
        GateFunction::Buf,
        GateFunction::Nand,
        GateFunction::Nor,
        GateFunction::Not,
        GateFunction::Or,
        GateFunction::Xnor,
        GateFunction::Xor,
    ];

    pub fn bench_name(self) -> &'static str {
        match self {
            GateFunction::And => "AND",
            GateFunction::Nand => "NAND",
            GateFunction::Or => "OR",
            GateFunction::Nor => "NOR",
            GateFunction::Xor => "XOR",
            GateFunction::Xnor => "XNOR",
            GateFunction::Not => "NOT",
            GateFunction::Buf => "BUF",
            GateFunction::Mux2 => "MUX",
        }
    }

    /// Case-insensitive lookup; accepts the common `BUFF` spelling.
    pub fn from_bench_name(name: &str) -> Option<Self> {
        let f = match name.to_ascii_uppercase().as_str() {
            "AND" => GateFunction::And,
            "NAND" => GateFunction::Nand,
            "OR" => GateFunction::Or,
            "NOR" => GateFunction::Nor,
            "XOR" => GateFunction::Xor,
            "XNOR" => GateFunction::Xnor,
            "NOT" | "INV" => GateFunction::Not,
            "BUF" | "BUFF" => GateFunction::Buf,
            "MUX" | "MUX2" => GateFunction::Mux2,
            _ => return None,
        };
        Some(f)
    }

    pub fn arity_ok(self, n: usize) -> bool {
        match self {
            GateFunction::Not | GateFunction::Buf => n == 1,
            GateFunction::Mux2 => n == 3,
            _ => n >= 2,
        }
    }

    /// Position in [`GateFunction::LIBRARY`]; `None` for `Mux2`.
    pub fn feature_index(self) -> Option<usize> {
        Self::LIBRARY.iter().position(|&g| g == self)
    }

    /// Two-input logic gates that may be embedded in a routing block.
    pub fn is_two_input_logic(self) -> bool {
        matches!(
            self,
            GateFunction::And
                | GateFunction::Nand
                | GateFunction::Or
                | GateFunction::Nor
                | GateFunction::Xor
                | GateFunction::Xnor
        )
    }

    /// Evaluate on 64 patterns at once.
    #[inline]
    pub fn eval_words(self, ins: &[u64]) -> u64 {
        match self {
            GateFunction::And => ins.iter().fold(!0, |a, &b| a & b),
            GateFunction::Nand => !ins.iter().fold(!0, |a, &b| a & b),
            GateFunction::Or => ins.iter().fold(0, |a, &b| a | b),
            GateFunction::Nor => !ins.iter().fold(0, |a, &b| a | b),
            GateFunction::Xor => ins.iter().fold(0, |a, &b| a ^ b),
            GateFunction::Xnor => !ins.iter().fold(0, |a, &b| a ^ b),
            GateFunction::Not => !ins[0],
            GateFunction::Buf => ins[0],
            GateFunction::Mux2 => (!ins[0] & ins[1]) | (ins[0] & ins[2]),
        }
    }
}

impl fmt::Display for GateFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.bench_name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum NodeKind {
    Input,
    /// Key input with its index in the key vector.
    Key(usize),
    Gate(GateFunction),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Node {
    pub name: String,
    pub kind: NodeKind,
    pub fanin: Vec<NodeId>,
}

impl Node {
    pub fn gate(&self) -> Option<GateFunction> {
        match self.kind {
            NodeKind::Gate(g) => Some(g),
            _ => None,
        }
    }

    pub fn is_gate(&self) -> bool {
        matches!(self.kind, NodeKind::Gate(_))
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum NetlistError {
    #[error("line {line}: syntax error: {msg}")]
    Syntax { line: usize, msg: String },
    #[error("line {line}: undeclared signal `{name}`")]
    Undeclared { line: usize, name: String },
    #[error("line {line}: {gate} cannot take {got} input(s)")]
    Arity {
        line: usize,
        gate: GateFunction,
        got: usize,
    },
    #[error("line {line}: `{name}` is defined twice")]
    Duplicate { line: usize, name: String },
    #[error("key inputs are not contiguous: missing keyinput{0}")]
    KeyGap(usize),
    #[error("combinational cycle through `{0}`")]
    Cycle(String),
    #[error("key bit {0} is unresolved but drives logic")]
    UnresolvedKey(usize),
    #[error("expected {expected} values, got {got}")]
    Width { expected: usize, got: usize },
    #[error("invalid netlist: {0}")]
    Invalid(String),
}

/// A validated combinational netlist.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Netlist {
    pub name: String,
    nodes: Vec<Node>,
    inputs: Vec<NodeId>,
    keys: Vec<NodeId>,
    outputs: Vec<NodeId>,
    by_name: HashMap<String, NodeId>,
}

impl Netlist {
    pub fn new(name: impl Into<String>) -> Self {
        Netlist {
            name: name.into(),
            nodes: Vec::new(),
            inputs: Vec::new(),
            keys: Vec::new(),
            outputs: Vec::new(),
            by_name: HashMap::new(),
        }
    }

    fn push(&mut self, node: Node) -> Result<NodeId, NetlistError> {
        if self.by_name.contains_key(&node.name) {
            return Err(NetlistError::Duplicate {
                line: 0,
                name: node.name,
            });
        }
        let id = NodeId(self.nodes.len() as u32);
        self.by_name.insert(node.name.clone(), id);
        self.nodes.push(node);
        Ok(id)
    }

    pub fn add_input(&mut self, name: impl Into<String>) -> Result<NodeId, NetlistError> {
        let id = self.push(Node {
            name: name.into(),
            kind: NodeKind::Input,
            fanin: Vec::new(),
        })?;
        self.inputs.push(id);
        Ok(id)
    }

    /// Adds `keyinput<index>`. Indices may be added in any order but must end
    /// up contiguous (checked by [`Netlist::validate`]).
    pub fn add_key_input(&mut self, index: usize) -> Result<NodeId, NetlistError> {
        let id = self.push(Node {
            name: format!("{KEY_INPUT_PREFIX}{index}"),
            kind: NodeKind::Key(index),
            fanin: Vec::new(),
        })?;
        if self.keys.len() <= index {
            self.keys.resize(index + 1, NodeId(u32::MAX));
        }
        self.keys[index] = id;
        Ok(id)
    }

    pub fn add_gate(
        &mut self,
        name: impl Into<String>,
        function: GateFunction,
        fanin: Vec<NodeId>,
    ) -> Result<NodeId, NetlistError> {
        if !function.arity_ok(fanin.len()) {
            return Err(NetlistError::Arity {
                line: 0,
                gate: function,
                got: fanin.len(),
            });
        }
        self.push(Node {
            name: name.into(),
            kind: NodeKind::Gate(function),
            fanin,
        })
    }

    pub fn add_output(&mut self, id: NodeId) {
        self.outputs.push(id);
    }

    pub fn node(&self, id: NodeId) -> &Node {
        &self.nodes[id.index()]
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn ids(&self) -> impl Iterator<Item = NodeId> + '_ {
        (0..self.nodes.len() as u32).map(NodeId)
    }

    pub fn inputs(&self) -> &[NodeId] {
        &self.inputs
    }

    /// Key inputs ordered by key index.
    pub fn keys(&self) -> &[NodeId] {
        &self.keys
    }

    pub fn outputs(&self) -> &[NodeId] {
        &self.outputs
    }

    pub fn find(&self, name: &str) -> Option<NodeId> {
        self.by_name.get(name).copied()
    }

    pub fn gate_count(&self) -> usize {
        self.nodes.iter().filter(|n| n.is_gate()).count()
    }

    /// Rewires one fanin pin. Used by transformations; the arity cannot change.
    pub fn set_fanin(&mut self, node: NodeId, pin: usize, driver: NodeId) {
        self.nodes[node.index()].fanin[pin] = driver;
    }

    /// Replaces the output reference at `position`.
    pub fn set_output(&mut self, position: usize, driver: NodeId) {
        self.outputs[position] = driver;
    }

    /// Fanout lists (sink node ids, one entry per connected pin).
    pub fn fanouts(&self) -> Vec<Vec<NodeId>> {
        let mut out = vec![Vec::new(); self.nodes.len()];
        for (i, n) in self.nodes.iter().enumerate() {
            for &f in &n.fanin {
                out[f.index()].push(NodeId(i as u32));
            }
        }
        out
    }

    /// Structural invariants: fanin references, arities, contiguous keys.
    pub fn validate(&self) -> Result<(), NetlistError> {
        let n = self.nodes.len() as u32;
        for node in &self.nodes {
            match node.kind {
                NodeKind::Gate(g) => {
                    if !g.arity_ok(node.fanin.len()) {
                        return Err(NetlistError::Arity {
                            line: 0,
                            gate: g,
                            got: node.fanin.len(),
                        });
                    }
                }
                _ => {
                    if !node.fanin.is_empty() {
                        return Err(NetlistError::Invalid(format!(
                            "input `{}` has fanin",
                            node.name
                        )));
                    }
                }
            }
            if let Some(bad) = node.fanin.iter().find(|f| f.0 >= n) {
                return Err(NetlistError::Invalid(format!(
                    "`{}` references missing node {bad}",
                    node.name
                )));
            }
        }
        if let Some(i) = self.keys.iter().position(|k| k.0 == u32::MAX) {
            return Err(NetlistError::KeyGap(i));
        }
        if let Some(bad) = self.outputs.iter().find(|f| f.0 >= n) {
            return Err(NetlistError::Invalid(format!("output references {bad}")));
        }
        Ok(())
    }

    /// Drops nodes that are not reachable backwards from an output, keeping
    /// all primary and key inputs. Node order is preserved.
    pub fn prune_dangling(&self) -> Netlist {
        let mut live = vec![false; self.nodes.len()];
        let mut stack: Vec<NodeId> = self.outputs.clone();
        while let Some(id) = stack.pop() {
            if std::mem::replace(&mut live[id.index()], true) {
                continue;
            }
            stack.extend(self.nodes[id.index()].fanin.iter().copied());
        }
        for &i in self.inputs.iter().chain(self.keys.iter()) {
            live[i.index()] = true;
        }
        let mut remap = vec![NodeId(u32::MAX); self.nodes.len()];
        let mut out = Netlist::new(self.name.clone());
        for (i, node) in self.nodes.iter().enumerate() {
            if !live[i] {
                continue;
            }
            remap[i] = NodeId(out.nodes.len() as u32);
            out.by_name.insert(node.name.clone(), remap[i]);
            out.nodes.push(node.clone());
        }
        for node in &mut out.nodes {
            for f in &mut node.fanin {
                *f = remap[f.index()];
            }
        }
        out.inputs = self.inputs.iter().map(|i| remap[i.index()]).collect();
        out.keys = self.keys.iter().map(|i| remap[i.index()]).collect();
        out.outputs = self.outputs.iter().map(|i| remap[i.index()]).collect();
        out
    }
}

impl Netlist {
    /// Replaces every MUX whose select is a resolved key bit by the data
    /// input it selects. MUXes on unresolved bits stay. Key inputs are kept
    /// so the key vector keeps its length. A loop made only of resolved MUXes
    /// is left in place.
    pub fn collapse_key_muxes(&self, key: &KeyAssignment) -> Netlist {
        let n = self.nodes.len();
        let selected = |i: usize| -> Option<NodeId> {
            let node = &self.nodes[i];
            if node.gate() != Some(GateFunction::Mux2) {
                return None;
            }
            match self.nodes[node.fanin[0].index()].kind {
                NodeKind::Key(k) if k < key.len() => key
                    .get(k)
                    .value()
                    .map(|b| node.fanin[if b { 2 } else { 1 }]),
                _ => None,
            }
        };
        let mut target: Vec<NodeId> = (0..n as u32).map(NodeId).collect();
        let mut collapsed = vec![false; n];
        for i in 0..n {
            let mut cur = NodeId(i as u32);
            let mut steps = 0;
            while let Some(next) = selected(cur.index()) {
                cur = next;
                steps += 1;
                if steps > n {
                    break;
                }
            }
            if steps <= n && cur.index() != i {
                target[i] = cur;
                collapsed[i] = true;
            }
        }
        let mut remap = vec![NodeId(u32::MAX); n];
        let mut out = Netlist::new(self.name.clone());
        for (i, node) in self.nodes.iter().enumerate() {
            if collapsed[i] {
                continue;
            }
            remap[i] = NodeId(out.nodes.len() as u32);
            out.by_name.insert(node.name.clone(), remap[i]);
            out.nodes.push(node.clone());
        }
        let map = |f: NodeId| remap[target[f.index()].index()];
        for node in &mut out.nodes {
            for f in &mut node.fanin {
                *f = map(*f);
            }
        }
        out.inputs = self.inputs.iter().map(|&i| map(i)).collect();
        out.keys = self.keys.iter().map(|&i| map(i)).collect();
        out.outputs = self.outputs.iter().map(|&i| map(i)).collect();
        out
    }
}

/// Bits aligned with [`Netlist::inputs`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct InputVector(pub Vec<bool>);

/// Bits aligned with [`Netlist::outputs`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OutputVector(pub Vec<bool>);

#[cfg(test)]
mod tests {
    use super::*;
    use crate::key::KeyBit;

    #[test]
    fn arity_rules() {
        assert!(GateFunction::Not.arity_ok(1));
        assert!(!GateFunction::Not.arity_ok(2));
        assert!(GateFunction::Mux2.arity_ok(3));
        assert!(!GateFunction::And.arity_ok(1));
        assert!(GateFunction::Xor.arity_ok(5));
    }

    #[test]
    fn feature_order_is_alphabetical() {
        let names: Vec<_> = GateFunction::LIBRARY
            .iter()
            .map(|g| g.bench_name())
            .collect();
        let mut sorted = names.clone();
        sorted.sort();
        assert_eq!(names, sorted);
        assert_eq!(GateFunction::Mux2.feature_index(), None);
    }

    #[test]
    fn mux_semantics() {
        let sel = 0b1100u64;
        let a = 0b1010u64;
        let b = 0b0110u64;
        let y = GateFunction::Mux2.eval_words(&[sel, a, b]) & 0xf;
        assert_eq!(y, 0b0110 & 0b1100 | 0b1010 & 0b0011);
    }

    #[test]
    fn key_gap_detected() {
        let mut n = Netlist::new("t");
        n.add_key_input(1).unwrap();
        assert_eq!(n.validate(), Err(NetlistError::KeyGap(0)));
    }

    #[test]
    fn prune_keeps_interface() {
        let mut n = Netlist::new("t");
        let a = n.add_input("a").unwrap();
        let b = n.add_input("b").unwrap();
        let _dead = n.add_gate("dead", GateFunction::Or, vec![a, b]).unwrap();
        let y = n.add_gate("y", GateFunction::And, vec![a, b]).unwrap();
        n.add_output(y);
        let p = n.prune_dangling();
        assert_eq!(p.len(), 3);
        assert!(p.find("dead").is_none());
        assert_eq!(p.node(p.outputs()[0]).name, "y");
    }

    #[test]
    fn collapse_resolved_muxes_only() {
        let text = "INPUT(a)\nINPUT(b)\nINPUT(keyinput0)\nINPUT(keyinput1)\nOUTPUT(y)\n\
                    m0 = MUX(keyinput0, a, b)\nm1 = MUX(keyinput1, m0, a)\ny = NOT(m1)\n";
        let n = parse_bench(text, "t").unwrap();
        let none = n.collapse_key_muxes(&KeyAssignment::unresolved(2));
        assert_eq!(none, n);
        let partial = n.collapse_key_muxes(&KeyAssignment::from_bits(vec![
            KeyBit::One,
            KeyBit::Unresolved,
        ]));
        assert!(partial.find("m0").is_none());
        let m1 = partial.find("m1").unwrap();
        assert_eq!(partial.node(partial.node(m1).fanin[1]).name, "b");
        let full = n.collapse_key_muxes(&KeyAssignment::from_bools(&[true, false]));
        assert_eq!(full.gate_count(), 1);
        let y = full.outputs()[0];
        assert_eq!(full.node(full.node(y).fanin[0]).name, "b");
        full.validate().unwrap();
    }
}
