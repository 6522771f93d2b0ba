// SPDX-License-Identifier: Apache-2.0

//! Key-gate groupings of a locked netlist and their line-oriented file form.
//!
//! ```text
//! scheme interlock
//! keys 48
//! block 8
//! swb <block> <stage> <pos> <f1> <f2> <in_i> <in_j> <ex_i> <ex_j> <route_a> <route_b> <out_i> <out_j> <k_route> <k_out_i> <k_out_j>
//! mux <mux> <key> <in0> <in1> <sink> <pin>
//! ```
//!
//! Signals are referenced by node name. Nothing in the file reveals a key
//! value.

use std::fmt::Write as _;

use super::{LockError, Scheme};
use crate::netlist::{GateFunction, Netlist, NodeId, NodeKind};

/// A random MUX key-gate as seen by reverse engineering.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MuxSite {
    pub mux: NodeId,
    pub key: usize,
    /// Data inputs in pin order (`in0` selected by key bit 0).
    pub inputs: [NodeId; 2],
    pub sink: NodeId,
    pub pin: usize,
}

/// A switch box: two relocated gates, their route MUXes and output MUXes.
///
/// `route_muxes[0]` feeds `gates[0]` and `route_muxes[1]` feeds `gates[1]`;
/// both share `keys[0]`, with swapped data inputs. `out_muxes[t]` selects
/// between `gates[t]` and the bypass `inputs[t]` under `keys[1 + t]`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Swb {
    pub block: usize,
    pub stage: usize,
    pub position: usize,
    pub gates: [NodeId; 2],
    pub inputs: [NodeId; 2],
    pub ex_inputs: [NodeId; 2],
    pub route_muxes: [NodeId; 2],
    pub out_muxes: [NodeId; 2],
    pub keys: [usize; 3],
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LockMeta {
    pub scheme: Scheme,
    pub key_count: usize,
    /// Size of each routing block, in block order.
    pub block_sizes: Vec<usize>,
    pub muxes: Vec<MuxSite>,
    pub swbs: Vec<Swb>,
}

impl LockMeta {
    pub fn empty(scheme: Scheme) -> Self {
        LockMeta {
            scheme,
            key_count: 0,
            block_sizes: Vec::new(),
            muxes: Vec::new(),
            swbs: Vec::new(),
        }
    }

    pub fn to_text(&self, netlist: &Netlist) -> String {
        let name = |id: NodeId| netlist.node(id).name.as_str();
        let mut s = String::new();
        writeln!(s, "scheme {}", self.scheme).unwrap();
        writeln!(s, "keys {}", self.key_count).unwrap();
        for b in &self.block_sizes {
            writeln!(s, "block {b}").unwrap();
        }
        for w in &self.swbs {
            writeln!(
                s,
                "swb {} {} {} {} {} {} {} {} {} {} {} {} {} {} {} {}",
                w.block,
                w.stage,
                w.position,
                name(w.gates[0]),
                name(w.gates[1]),
                name(w.inputs[0]),
                name(w.inputs[1]),
                name(w.ex_inputs[0]),
                name(w.ex_inputs[1]),
                name(w.route_muxes[0]),
                name(w.route_muxes[1]),
                name(w.out_muxes[0]),
                name(w.out_muxes[1]),
                w.keys[0],
                w.keys[1],
                w.keys[2],
            )
            .unwrap();
        }
        for m in &self.muxes {
            writeln!(
                s,
                "mux {} {} {} {} {} {}",
                name(m.mux),
                m.key,
                name(m.inputs[0]),
                name(m.inputs[1]),
                name(m.sink),
                m.pin
            )
            .unwrap();
        }
        s
    }

    /// Parses metadata and resolves every name against `netlist`.
    pub fn parse(text: &str, netlist: &Netlist) -> Result<Self, LockError> {
        let mut scheme = None;
        let mut key_count = None;
        let mut meta = LockMeta::empty(Scheme::RandomMux);
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let err = |msg: &str| LockError::Meta(format!("line {}: {msg}", i + 1));
            let f: Vec<&str> = line.split_whitespace().collect();
            let node = |s: &str| {
                netlist
                    .find(s)
                    .ok_or_else(|| err(&format!("unknown signal `{s}`")))
            };
            let num = |s: &str| {
                s.parse::<usize>()
                    .map_err(|_| err(&format!("expected a number, got `{s}`")))
            };
            match (f[0], f.len()) {
                ("scheme", 2) => {
                    scheme = Some(f[1].parse::<Scheme>().map_err(|_| err("bad scheme"))?)
                }
                ("keys", 2) => key_count = Some(num(f[1])?),
                ("block", 2) => meta.block_sizes.push(num(f[1])?),
                ("swb", 17) => meta.swbs.push(Swb {
                    block: num(f[1])?,
                    stage: num(f[2])?,
                    position: num(f[3])?,
                    gates: [node(f[4])?, node(f[5])?],
                    inputs: [node(f[6])?, node(f[7])?],
                    ex_inputs: [node(f[8])?, node(f[9])?],
                    route_muxes: [node(f[10])?, node(f[11])?],
                    out_muxes: [node(f[12])?, node(f[13])?],
                    keys: [num(f[14])?, num(f[15])?, num(f[16])?],
                }),
                ("mux", 7) => meta.muxes.push(MuxSite {
                    mux: node(f[1])?,
                    key: num(f[2])?,
                    inputs: [node(f[3])?, node(f[4])?],
                    sink: node(f[5])?,
                    pin: num(f[6])?,
                }),
                _ => return Err(err(&format!("unrecognised record `{line}`"))),
            }
        }
        meta.scheme = scheme.ok_or_else(|| LockError::Meta("missing `scheme` line".into()))?;
        meta.key_count = key_count.ok_or_else(|| LockError::Meta("missing `keys` line".into()))?;
        meta.check(netlist)?;
        Ok(meta)
    }

    /// Every referenced MUX must be a MUX selected by the named key input.
    pub fn check(&self, netlist: &Netlist) -> Result<(), LockError> {
        if self.key_count != netlist.keys().len() {
            return Err(LockError::Meta(format!(
                "{} keys declared, netlist has {}",
                self.key_count,
                netlist.keys().len()
            )));
        }
        let mux_on = |m: NodeId, key: usize| -> Result<(), LockError> {
            let node = netlist.node(m);
            let ok = node.gate() == Some(GateFunction::Mux2)
                && key < self.key_count
                && netlist.node(node.fanin[0]).kind == NodeKind::Key(key);
            if ok {
                Ok(())
            } else {
                Err(LockError::Meta(format!(
                    "`{}` is not a MUX selected by key {key}",
                    node.name
                )))
            }
        };
        for m in &self.muxes {
            mux_on(m.mux, m.key)?;
            let node = netlist.node(m.mux);
            if node.fanin[1..] != m.inputs {
                return Err(LockError::Meta(format!(
                    "`{}` data inputs differ",
                    node.name
                )));
            }
        }
        for w in &self.swbs {
            mux_on(w.route_muxes[0], w.keys[0])?;
            mux_on(w.route_muxes[1], w.keys[0])?;
            mux_on(w.out_muxes[0], w.keys[1])?;
            mux_on(w.out_muxes[1], w.keys[2])?;
            if w.block >= self.block_sizes.len() {
                return Err(LockError::Meta(format!(
                    "switch box in unknown block {}",
                    w.block
                )));
            }
        }
        Ok(())
    }
}
