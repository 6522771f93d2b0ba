// SPDX-License-Identifier: Apache-2.0

//! Seeded synthetic netlists for tests, benches and acceptance runs.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::netlist::{GateFunction, Netlist, NodeId};

const TWO_INPUT: [GateFunction; 6] = [
    GateFunction::And,
    GateFunction::Nand,
    GateFunction::Or,
    GateFunction::Nor,
    GateFunction::Xor,
    GateFunction::Xnor,
];

/// A random acyclic netlist of mostly 2-input gates.
///
/// Fanins favour recent nodes so the circuit is deep enough for path
/// embedding. Every gate without fanout becomes an output; the last gates
/// are added as outputs until at least `min_outputs` exist.
pub fn random_netlist(inputs: usize, gates: usize, min_outputs: usize, seed: u64) -> Netlist {
    assert!(inputs >= 2, "need at least two inputs");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut n = Netlist::new(format!("rand{seed}"));
    let mut pool: Vec<NodeId> = (0..inputs)
        .map(|i| n.add_input(format!("i{i}")).unwrap())
        .collect();
    let window = (gates / 4).max(8);
    let pick = |rng: &mut ChaCha8Rng, pool: &[NodeId]| -> NodeId {
        if rng.random_bool(0.75) {
            let lo = pool.len().saturating_sub(window);
            pool[rng.random_range(lo..pool.len())]
        } else {
            pool[rng.random_range(0..pool.len())]
        }
    };
    for g in 0..gates {
        let id = if rng.random_bool(0.1) {
            let f = if rng.random_bool(0.5) {
                GateFunction::Not
            } else {
                GateFunction::Buf
            };
            let a = pick(&mut rng, &pool);
            n.add_gate(format!("g{g}"), f, vec![a]).unwrap()
        } else {
            let f = TWO_INPUT[rng.random_range(0..TWO_INPUT.len())];
            let a = pick(&mut rng, &pool);
            let mut b = pick(&mut rng, &pool);
            while b == a {
                b = pool[rng.random_range(0..pool.len())];
            }
            n.add_gate(format!("g{g}"), f, vec![a, b]).unwrap()
        };
        pool.push(id);
    }
    add_sink_outputs(&mut n, min_outputs);
    n
}

/// A random acyclic netlist with dense local reconvergence.
///
/// Most 2-input gates read a recent node `a` and one of `a`'s own fanins, so
/// each such wire lies on a triangle and stays predictable from its
/// neighbourhood when cut. Meant as a template for [`tiled_design`].
pub fn reconvergent_netlist(inputs: usize, gates: usize, min_outputs: usize, seed: u64) -> Netlist {
    assert!(inputs >= 2, "need at least two inputs");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut n = Netlist::new(format!("reconv{seed}"));
    let mut pool: Vec<NodeId> = (0..inputs)
        .map(|i| n.add_input(format!("i{i}")).unwrap())
        .collect();
    let window = 6.min(pool.len());
    for g in 0..gates {
        let lo = pool.len() - window;
        let a = pool[rng.random_range(lo..pool.len())];
        let fanin = &n.node(a).fanin;
        let b = if !fanin.is_empty() && rng.random_bool(0.95) {
            fanin[rng.random_range(0..fanin.len())]
        } else {
            let mut b = pool[rng.random_range(0..pool.len())];
            while b == a {
                b = pool[rng.random_range(0..pool.len())];
            }
            b
        };
        let f = TWO_INPUT[rng.random_range(0..TWO_INPUT.len())];
        let id = n.add_gate(format!("g{g}"), f, vec![a, b]).unwrap();
        pool.push(id);
    }
    add_sink_outputs(&mut n, min_outputs);
    n
}

fn add_sink_outputs(n: &mut Netlist, min_outputs: usize) {
    let fanouts = n.fanouts();
    let gate_ids: Vec<NodeId> = n.ids().filter(|&i| n.node(i).is_gate()).collect();
    for &g in &gate_ids {
        if fanouts[g.index()].is_empty() {
            n.add_output(g);
        }
    }
    for &g in gate_ids.iter().rev() {
        if n.outputs().len() >= min_outputs {
            break;
        }
        if !n.outputs().contains(&g) {
            n.add_output(g);
        }
    }
}

/// Chains `copies` instances of `template`. Copy `c` reads its inputs from
/// the previous copy's outputs (wrapping over them), except that input 0 of
/// every copy stays a fresh primary input so each copy remains controllable.
/// All outputs of the last copy, and every dangling gate, are outputs.
pub fn tiled_design(template: &Netlist, copies: usize, name: &str) -> Netlist {
    assert!(copies >= 1);
    assert!(template.keys().is_empty(), "template must be unlocked");
    let mut n = Netlist::new(name);
    let mut prev_outs: Vec<NodeId> = Vec::new();
    for c in 0..copies {
        let mut map = vec![NodeId(u32::MAX); template.len()];
        for (p, &pi) in template.inputs().iter().enumerate() {
            map[pi.index()] = if c == 0 || p == 0 || prev_outs.is_empty() {
                n.add_input(format!("t{c}_{}", template.node(pi).name))
                    .unwrap()
            } else {
                prev_outs[(p - 1) % prev_outs.len()]
            };
        }
        for id in template.ids() {
            let node = template.node(id);
            if let Some(f) = node.gate() {
                let fanin = node.fanin.iter().map(|x| map[x.index()]).collect();
                map[id.index()] = n.add_gate(format!("t{c}_{}", node.name), f, fanin).unwrap();
            }
        }
        prev_outs = template.outputs().iter().map(|o| map[o.index()]).collect();
    }
    add_sink_outputs(&mut n, 0);
    for o in prev_outs {
        if !n.outputs().contains(&o) {
            n.add_output(o);
        }
    }
    n
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::netlist::check_acyclic;

    #[test]
    fn random_is_valid_and_acyclic() {
        for seed in 0..10 {
            let n = random_netlist(8, 100, 4, seed);
            n.validate().unwrap();
            assert!(check_acyclic(&n).acyclic);
            assert_eq!(n.gate_count(), 100);
            assert!(n.outputs().len() >= 4);
        }
    }

    #[test]
    fn reconvergent_wires_close_triangles() {
        for seed in 0..5 {
            let n = reconvergent_netlist(6, 30, 4, seed);
            n.validate().unwrap();
            assert!(check_acyclic(&n).acyclic);
            let closing = n
                .ids()
                .filter(|&g| n.node(g).is_gate())
                .filter(|&g| {
                    let f = &n.node(g).fanin;
                    n.node(f[0]).fanin.contains(&f[1])
                })
                .count();
            assert!(closing >= 15, "seed {seed}: {closing} of 30");
        }
    }

    #[test]
    fn tiled_counts() {
        let t = random_netlist(6, 30, 4, 3);
        let d = tiled_design(&t, 5, "tile");
        d.validate().unwrap();
        assert!(check_acyclic(&d).acyclic);
        assert_eq!(d.gate_count(), 150);
        assert_eq!(d.inputs().len(), 6 + 4);
    }
}
