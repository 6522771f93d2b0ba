// SPDX-License-Identifier: Apache-2.0

//! Key-controlled routing blocks.
//!
//! A block of size `N` has `2·log2(N) − 2` stages of `N/2` switch boxes.
//! Stage wires are numbered `2·b + slot`; output wire `w` of one stage feeds
//! input wire `rotl(w)` of the next (perfect shuffle). Each stage relocates
//! one gate of every embedded path, so utilization is 100%.
//!
//! Inside a switch box the two route MUXes share one key bit and pass the
//! two stage inputs in opposite orders, so under any key the gates receive
//! distinct inputs. Each output MUX chooses between its gate and the bypass
//! input; the order of its data pins is random.

use std::collections::HashSet;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::paths::{select_paths, TimingPath, PATH_RETRY_BUDGET};
use super::random_mux::fresh_name;
use super::{KeyRb, LockError, LockMeta, LockedDesign, Scheme, Swb};
use crate::key::KeyAssignment;
use crate::netlist::{GateFunction, Netlist, NodeId};

const PLACEMENT_TRIES: usize = 200;
const PATH_RESELECTIONS: u64 = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct InterlockConfig {
    pub keyrbs: usize,
    pub size: usize,
}

/// Stages of a routing block of size `size` (a power of two, at least 4).
pub fn stage_count(size: usize) -> usize {
    2 * size.trailing_zeros() as usize - 2
}

fn shuffle_wire(w: usize, size: usize) -> usize {
    let bits = size.trailing_zeros();
    ((w << 1) | (w >> (bits - 1))) & (size - 1)
}

/// Random choices that fix how paths traverse one block.
struct Placement {
    /// `wires[s][w]`: path index on input wire `w` of stage `s`.
    wires: Vec<Vec<usize>>,
    /// `routes[s][b]`: true when gate slot 0 takes input wire `2b + 1`.
    routes: Vec<Vec<bool>>,
}

impl Placement {
    fn random(size: usize, stages: usize, rng: &mut ChaCha8Rng) -> Self {
        let mut first: Vec<usize> = (0..size).collect();
        first.shuffle(rng);
        let mut wires = vec![first];
        let mut routes = Vec::with_capacity(stages);
        for s in 0..stages {
            let r: Vec<bool> = (0..size / 2).map(|_| rng.random()).collect();
            let mut next = vec![0; size];
            for b in 0..size / 2 {
                let (a, c) = (wires[s][2 * b], wires[s][2 * b + 1]);
                let (p0, p1) = if r[b] { (c, a) } else { (a, c) };
                next[shuffle_wire(2 * b, size)] = p0;
                next[shuffle_wire(2 * b + 1, size)] = p1;
            }
            routes.push(r);
            if s + 1 < stages {
                wires.push(next);
            }
        }
        Placement { wires, routes }
    }

    /// Gates of stage `s`, switch box `b`, in slot order.
    fn slot_paths(&self, s: usize, b: usize) -> [usize; 2] {
        let (a, c) = (self.wires[s][2 * b], self.wires[s][2 * b + 1]);
        if self.routes[s][b] {
            [c, a]
        } else {
            [a, c]
        }
    }
}

/// Driver of path `p` into stage `s`, as a gate of the original netlist.
fn path_driver(paths: &[TimingPath], p: usize, s: usize) -> NodeId {
    if s == 0 {
        paths[p].entry
    } else {
        paths[p].gates[s - 1]
    }
}

/// A wrong candidate link must not duplicate a wire that stays observable.
fn placement_ok(
    paths: &[TimingPath],
    placement: &Placement,
    adjacent: &HashSet<(NodeId, NodeId)>,
) -> bool {
    let size = paths.len();
    for s in 0..placement.routes.len() {
        for b in 0..size / 2 {
            let ins = [placement.wires[s][2 * b], placement.wires[s][2 * b + 1]];
            for p in placement.slot_paths(s, b) {
                let gate = paths[p].gates[s];
                for &q in &ins {
                    if q != p && adjacent.contains(&(path_driver(paths, q, s), gate)) {
                        return false;
                    }
                }
            }
        }
    }
    true
}

/// Locks `n_keyrbs` routing blocks of size `size` into the netlist.
pub fn lock_interlock(
    netlist: &Netlist,
    n_keyrbs: usize,
    size: usize,
    seed: u64,
) -> Result<LockedDesign, LockError> {
    if size < 4 || !size.is_power_of_two() {
        return Err(LockError::BadBlockSize(size));
    }
    if !netlist.keys().is_empty() {
        return Err(LockError::Meta("netlist is already locked".into()));
    }
    let stages = stage_count(size);
    let mut adjacent = HashSet::new();
    for id in netlist.ids() {
        for &f in &netlist.node(id).fanin {
            adjacent.insert((f, id));
            adjacent.insert((id, f));
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut chosen: Option<(Vec<TimingPath>, Vec<Placement>)> = None;
    for attempt in 0..PATH_RESELECTIONS {
        let paths = select_paths(
            netlist,
            n_keyrbs * size,
            stages,
            n_keyrbs * PATH_RETRY_BUDGET,
            seed ^ attempt.wrapping_mul(0x9e37_79b9_7f4a_7c15),
        )?;
        let mut placements = Vec::with_capacity(n_keyrbs);
        for block in paths.chunks(size) {
            let found = (0..PLACEMENT_TRIES)
                .map(|_| Placement::random(size, stages, &mut rng))
                .find(|pl| placement_ok(block, pl, &adjacent));
            match found {
                Some(pl) => placements.push(pl),
                None => break,
            }
        }
        if placements.len() == n_keyrbs {
            chosen = Some((paths, placements));
            break;
        }
    }
    let (paths, placements) = chosen
        .ok_or_else(|| LockError::Meta("no routing placement avoids observable wires".into()))?;

    let mut out = netlist.clone();
    let mut relocated: Vec<Option<NodeId>> = vec![None; netlist.len()];
    let mut bits: Vec<bool> = Vec::new();
    let mut keyrbs = Vec::with_capacity(n_keyrbs);
    let mut swbs_all = Vec::new();
    let mut pending_ex: Vec<(usize, [(NodeId, usize); 2])> = Vec::new();

    for (r, (block, pl)) in paths.chunks(size).zip(&placements).enumerate() {
        let mut swbs = Vec::with_capacity(stages * size / 2);
        // Signal currently carried by each path (entry gate, then O nodes).
        let mut carried: Vec<NodeId> = block.iter().map(|p| p.entry).collect();
        for s in 0..stages {
            let mut next_carried = carried.clone();
            for b in 0..size / 2 {
                let ins = [pl.wires[s][2 * b], pl.wires[s][2 * b + 1]];
                let sig = [carried[ins[0]], carried[ins[1]]];
                let slots = pl.slot_paths(s, b);
                let route = pl.routes[s][b];
                let k0 = bits.len();
                let keys = [k0, k0 + 1, k0 + 2];
                let key_nodes = [
                    out.add_key_input(k0)?,
                    out.add_key_input(k0 + 1)?,
                    out.add_key_input(k0 + 2)?,
                ];
                let tag = format!("krb{r}_s{s}_b{b}");
                let ra = out.add_gate(
                    fresh_name(&out, &format!("{tag}_ra")),
                    GateFunction::Mux2,
                    vec![key_nodes[0], sig[0], sig[1]],
                )?;
                let rb = out.add_gate(
                    fresh_name(&out, &format!("{tag}_rb")),
                    GateFunction::Mux2,
                    vec![key_nodes[0], sig[1], sig[0]],
                )?;
                bits.push(route);
                let routes = [ra, rb];
                let mut gates = [NodeId(0); 2];
                let mut outs = [NodeId(0); 2];
                let mut ex_pins = [(NodeId(0), 0); 2];
                for t in 0..2 {
                    let path = &block[slots[t]];
                    let gate = path.gates[s];
                    let pin = path.path_pin(netlist, s);
                    out.set_fanin(gate, pin, routes[t]);
                    let bypass = sig[t];
                    let gate_on_one: bool = rng.random();
                    let data = if gate_on_one {
                        vec![key_nodes[1 + t], bypass, gate]
                    } else {
                        vec![key_nodes[1 + t], gate, bypass]
                    };
                    let suffix = if t == 0 { "oi" } else { "oj" };
                    let o = out.add_gate(
                        fresh_name(&out, &format!("{tag}_{suffix}")),
                        GateFunction::Mux2,
                        data,
                    )?;
                    relocated[gate.index()] = Some(o);
                    next_carried[slots[t]] = o;
                    gates[t] = gate;
                    outs[t] = o;
                    ex_pins[t] = (gate, 1 - pin);
                }
                bits.push(gate_bit(&out, outs[0], gates[0]));
                bits.push(gate_bit(&out, outs[1], gates[1]));
                pending_ex.push((swbs_all.len() + swbs.len(), ex_pins));
                swbs.push(Swb {
                    block: r,
                    stage: s,
                    position: b,
                    gates,
                    inputs: sig,
                    ex_inputs: [NodeId(0); 2],
                    route_muxes: routes,
                    out_muxes: outs,
                    keys,
                });
            }
            carried = next_carried;
        }
        swbs_all.extend(swbs.iter().cloned());
        keyrbs.push(KeyRb {
            size,
            swbs,
            embedded_paths: block.to_vec(),
        });
    }

    // Every original reader of a relocated gate now reads its output MUX.
    for id in netlist.ids() {
        for pin in 0..out.node(id).fanin.len() {
            let f = out.node(id).fanin[pin];
            if let Some(o) = relocated.get(f.index()).copied().flatten() {
                out.set_fanin(id, pin, o);
            }
        }
    }
    for pos in 0..out.outputs().len() {
        let f = out.outputs()[pos];
        if let Some(o) = relocated.get(f.index()).copied().flatten() {
            out.set_output(pos, o);
        }
    }
    for (i, ex_pins) in pending_ex {
        for (t, (gate, pin)) in ex_pins.into_iter().enumerate() {
            swbs_all[i].ex_inputs[t] = out.node(gate).fanin[pin];
        }
    }
    let mut cursor = 0;
    for rb in &mut keyrbs {
        let n = rb.swbs.len();
        rb.swbs.clone_from_slice(&swbs_all[cursor..cursor + n]);
        cursor += n;
    }
    out.validate()?;

    let meta = LockMeta {
        scheme: Scheme::InterLock,
        key_count: bits.len(),
        block_sizes: vec![size; n_keyrbs],
        muxes: Vec::new(),
        swbs: swbs_all,
    };
    Ok(LockedDesign::new(
        out,
        meta,
        Vec::new(),
        keyrbs,
        KeyAssignment::from_bools(&bits),
    ))
}

/// Key bit that makes output MUX `o` pass `gate`.
fn gate_bit(netlist: &Netlist, o: NodeId, gate: NodeId) -> bool {
    netlist.node(o).fanin[2] == gate
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::netlist::{check_acyclic, check_equivalence};
    use crate::synth::random_netlist;

    #[test]
    fn stage_and_key_counts() {
        assert_eq!(stage_count(4), 2);
        assert_eq!(stage_count(8), 4);
        assert_eq!(stage_count(16), 6);
        let n = random_netlist(16, 600, 8, 3);
        let d = lock_interlock(&n, 1, 8, 1).unwrap();
        assert_eq!(d.key_count(), 48);
        assert_eq!(d.meta.swbs.len(), 16);
        assert_eq!(d.keyrbs[0].key_count(), 48);
    }

    #[test]
    fn shuffle_is_a_permutation() {
        for size in [4usize, 8, 16, 32] {
            let mut seen: Vec<usize> = (0..size).map(|w| shuffle_wire(w, size)).collect();
            seen.sort();
            assert_eq!(seen, (0..size).collect::<Vec<_>>());
        }
        assert_eq!(shuffle_wire(0b100, 8), 0b001);
        assert_eq!(shuffle_wire(0b011, 8), 0b110);
    }

    #[test]
    fn correct_key_preserves_function() {
        for seed in 0..4 {
            let n = random_netlist(12, 300, 6, 20 + seed);
            let d = lock_interlock(&n, 1, 8, seed).unwrap();
            let r = check_equivalence(&n, None, &d.netlist, Some(d.correct_key()), 0, 0).unwrap();
            assert!(r.exhaustive && r.equivalent(), "seed {seed}");
        }
    }

    #[test]
    fn collapse_restores_paths() {
        let n = random_netlist(12, 300, 6, 31);
        let d = lock_interlock(&n, 1, 8, 7).unwrap();
        let back = d.netlist.collapse_key_muxes(d.correct_key());
        assert!(check_acyclic(&back).acyclic);
        assert_eq!(back.gate_count(), n.gate_count());
        for p in &d.keyrbs[0].embedded_paths {
            let mut prev = back.find(&n.node(p.entry).name).unwrap();
            for &g in &p.gates {
                let g2 = back.find(&n.node(g).name).unwrap();
                assert!(back.node(g2).fanin.contains(&prev));
                prev = g2;
            }
        }
        for id in n.ids() {
            let node = n.node(id);
            let id2 = back.find(&node.name).unwrap();
            let names: Vec<&str> = back
                .node(id2)
                .fanin
                .iter()
                .map(|&f| back.node(f).name.as_str())
                .collect();
            let orig: Vec<&str> = node
                .fanin
                .iter()
                .map(|&f| n.node(f).name.as_str())
                .collect();
            assert_eq!(names, orig);
        }
    }

    #[test]
    fn swb_inputs_are_distinct_and_permuted() {
        let n = random_netlist(16, 600, 8, 5);
        let d = lock_interlock(&n, 1, 8, 2).unwrap();
        let key = d.correct_key();
        for w in &d.meta.swbs {
            assert_ne!(w.inputs[0], w.inputs[1]);
            let ra = d.netlist.node(w.route_muxes[0]);
            let rb = d.netlist.node(w.route_muxes[1]);
            assert_eq!(ra.fanin[1], rb.fanin[2]);
            assert_eq!(ra.fanin[2], rb.fanin[1]);
            assert!(key.get(w.keys[0]).is_resolved());
        }
    }

    #[test]
    fn multiple_blocks() {
        let n = random_netlist(24, 2500, 12, 8);
        let d = lock_interlock(&n, 3, 16, 4).unwrap();
        assert_eq!(d.key_count(), 432);
        assert_eq!(d.keyrbs.len(), 3);
        let text = d.meta.to_text(&d.netlist);
        assert_eq!(LockMeta::parse(&text, &d.netlist).unwrap(), d.meta);
    }

    #[test]
    fn bad_sizes() {
        let n = random_netlist(8, 50, 4, 1);
        assert!(matches!(
            lock_interlock(&n, 1, 6, 0),
            Err(LockError::BadBlockSize(6))
        ));
        assert!(matches!(
            lock_interlock(&n, 1, 2, 0),
            Err(LockError::BadBlockSize(2))
        ));
    }
}
