// SPDX-License-Identifier: Apache-2.0

//! Bit-parallel two-valued simulation.
//!
//! Key bits are substituted as constants before ordering: a MUX whose select
//! is a resolved key input becomes a buffer of the selected data input, so a
//! structural cycle through the unselected input does not block simulation.

use super::{GateFunction, InputVector, Netlist, NetlistError, NodeId, NodeKind, OutputVector};
use crate::key::KeyAssignment;

#[derive(Debug, Clone, Copy)]
enum OpKind {
    Gate(GateFunction),
    Copy,
    Const(bool),
}

#[derive(Debug, Clone)]
struct Op {
    dst: u32,
    kind: OpKind,
    start: u32,
    end: u32,
}

/// A netlist lowered to a topologically ordered op list for one key.
#[derive(Debug, Clone)]
pub struct CompiledSim {
    n_nodes: usize,
    inputs: Vec<u32>,
    outputs: Vec<u32>,
    ops: Vec<Op>,
    srcs: Vec<u32>,
}

enum Eff {
    Source,
    Const(bool),
    Copy(NodeId),
    Gate(GateFunction, Vec<NodeId>),
}

impl CompiledSim {
    pub fn new(netlist: &Netlist, key: Option<&KeyAssignment>) -> Result<Self, NetlistError> {
        let key_value =
            |k: usize| key.and_then(|a| (k < a.len()).then(|| a.get(k).value()).flatten());
        let effective = |id: NodeId| -> Result<Eff, NetlistError> {
            let node = netlist.node(id);
            Ok(match node.kind {
                NodeKind::Input => Eff::Source,
                NodeKind::Key(k) => match key_value(k) {
                    Some(b) => Eff::Const(b),
                    None => return Err(NetlistError::UnresolvedKey(k)),
                },
                NodeKind::Gate(GateFunction::Mux2) => {
                    let sel = netlist.node(node.fanin[0]);
                    match sel.kind {
                        NodeKind::Key(k) => match key_value(k) {
                            Some(b) => Eff::Copy(node.fanin[if b { 2 } else { 1 }]),
                            None => return Err(NetlistError::UnresolvedKey(k)),
                        },
                        _ => Eff::Gate(GateFunction::Mux2, node.fanin.clone()),
                    }
                }
                NodeKind::Gate(g) => Eff::Gate(g, node.fanin.clone()),
            })
        };

        // DFS from outputs over effective fanins; post-order is topological.
        let n = netlist.len();
        let mut state = vec![0u8; n];
        let mut order: Vec<(NodeId, Eff)> = Vec::new();
        let mut stack: Vec<(NodeId, Vec<NodeId>, usize, Option<Eff>)> = Vec::new();
        for &root in netlist.outputs() {
            if state[root.index()] != 0 {
                continue;
            }
            let eff = effective(root)?;
            let deps = deps_of(&eff);
            state[root.index()] = 1;
            stack.push((root, deps, 0, Some(eff)));
            while let Some(top) = stack.last_mut() {
                if top.2 < top.1.len() {
                    let next = top.1[top.2];
                    top.2 += 1;
                    match state[next.index()] {
                        0 => {
                            let eff = effective(next)?;
                            let deps = deps_of(&eff);
                            state[next.index()] = 1;
                            stack.push((next, deps, 0, Some(eff)));
                        }
                        1 => return Err(NetlistError::Cycle(netlist.node(next).name.clone())),
                        _ => {}
                    }
                } else {
                    let (id, _, _, eff) = stack.pop().unwrap();
                    state[id.index()] = 2;
                    order.push((id, eff.unwrap()));
                }
            }
        }

        let mut ops = Vec::new();
        let mut srcs = Vec::new();
        for (id, eff) in order {
            let start = srcs.len() as u32;
            let kind = match eff {
                Eff::Source => continue,
                Eff::Const(b) => OpKind::Const(b),
                Eff::Copy(src) => {
                    srcs.push(src.0);
                    OpKind::Copy
                }
                Eff::Gate(g, fanin) => {
                    srcs.extend(fanin.iter().map(|f| f.0));
                    OpKind::Gate(g)
                }
            };
            ops.push(Op {
                dst: id.0,
                kind,
                start,
                end: srcs.len() as u32,
            });
        }
        Ok(CompiledSim {
            n_nodes: n,
            inputs: netlist.inputs().iter().map(|i| i.0).collect(),
            outputs: netlist.outputs().iter().map(|o| o.0).collect(),
            ops,
            srcs,
        })
    }

    pub fn num_inputs(&self) -> usize {
        self.inputs.len()
    }

    pub fn num_outputs(&self) -> usize {
        self.outputs.len()
    }

    /// Evaluates 64 patterns: `inputs[i]` holds the bits of primary input `i`.
    pub fn eval_words(&self, inputs: &[u64]) -> Vec<u64> {
        let mut values = vec![0u64; self.n_nodes];
        self.eval_into(inputs, &mut values);
        self.outputs.iter().map(|&o| values[o as usize]).collect()
    }

    /// Like [`CompiledSim::eval_words`] but reuses a caller-provided scratch
    /// buffer of length `n_nodes` and writes outputs into `out`.
    pub fn eval_words_with(&self, inputs: &[u64], scratch: &mut Vec<u64>, out: &mut Vec<u64>) {
        scratch.resize(self.n_nodes, 0);
        self.eval_into(inputs, scratch);
        out.clear();
        out.extend(self.outputs.iter().map(|&o| scratch[o as usize]));
    }

    fn eval_into(&self, inputs: &[u64], values: &mut [u64]) {
        assert_eq!(inputs.len(), self.inputs.len(), "input width");
        for (&id, &w) in self.inputs.iter().zip(inputs) {
            values[id as usize] = w;
        }
        let mut buf: Vec<u64> = Vec::with_capacity(8);
        for op in &self.ops {
            let s = &self.srcs[op.start as usize..op.end as usize];
            values[op.dst as usize] = match op.kind {
                OpKind::Const(b) => {
                    if b {
                        !0
                    } else {
                        0
                    }
                }
                OpKind::Copy => values[s[0] as usize],
                OpKind::Gate(g) => {
                    buf.clear();
                    buf.extend(s.iter().map(|&i| values[i as usize]));
                    g.eval_words(&buf)
                }
            };
        }
    }

    pub fn eval(&self, input: &InputVector) -> Result<OutputVector, NetlistError> {
        if input.0.len() != self.inputs.len() {
            return Err(NetlistError::Width {
                expected: self.inputs.len(),
                got: input.0.len(),
            });
        }
        let words: Vec<u64> = input.0.iter().map(|&b| if b { 1 } else { 0 }).collect();
        Ok(OutputVector(
            self.eval_words(&words).iter().map(|w| w & 1 == 1).collect(),
        ))
    }
}

fn deps_of(eff: &Eff) -> Vec<NodeId> {
    match eff {
        Eff::Source | Eff::Const(_) => Vec::new(),
        Eff::Copy(s) => vec![*s],
        Eff::Gate(_, f) => f.clone(),
    }
}

/// Simulates one input vector under an optional key.
pub fn simulate(
    netlist: &Netlist,
    input: &InputVector,
    key: Option<&KeyAssignment>,
) -> Result<OutputVector, NetlistError> {
    CompiledSim::new(netlist, key)?.eval(input)
}

/// Packs patterns `base..base+64` of an exhaustive sweep into input words.
pub(crate) fn exhaustive_words(n_inputs: usize, base: u64) -> Vec<u64> {
    (0..n_inputs)
        .map(|i| {
            let mut w = 0u64;
            for p in 0..64u64 {
                if ((base + p) >> i) & 1 == 1 {
                    w |= 1 << p;
                }
            }
            w
        })
        .collect()
}

/// Mask of valid lanes in the word starting at pattern `base` of a sweep of
/// `total` patterns.
pub(crate) fn lane_mask(total: u64, base: u64) -> u64 {
    let left = total - base;
    if left >= 64 {
        !0
    } else {
        (1u64 << left) - 1
    }
}
