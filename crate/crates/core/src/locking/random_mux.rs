// SPDX-License-Identifier: Apache-2.0

use std::collections::HashSet;

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{LockError, LockMeta, LockedDesign, MuxKeyGate, MuxSite, Scheme};
use crate::key::KeyAssignment;
use crate::netlist::{check_acyclic, GateFunction, Netlist, NodeId};

const FALSE_WIRE_TRIES: usize = 10_000;

/// Inserts `key_size` 2:1 MUX key-gates on distinct gate-to-gate wires.
///
/// Each MUX receives the true driver and a false wire drawn uniformly from
/// the other original gates, in an order set by a random correct bit. False
/// wires may close structural loops.
pub fn lock_random_mux(
    netlist: &Netlist,
    key_size: usize,
    seed: u64,
) -> Result<LockedDesign, LockError> {
    if !netlist.keys().is_empty() {
        return Err(LockError::Meta("netlist is already locked".into()));
    }
    if !check_acyclic(netlist).acyclic {
        return Err(LockError::Cyclic);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let gates: Vec<NodeId> = netlist
        .ids()
        .filter(|&id| {
            netlist
                .node(id)
                .gate()
                .is_some_and(|g| g != GateFunction::Mux2)
        })
        .collect();

    // Lockable wires: a gate pin driven by another gate that feeds this sink
    // on no other pin.
    let mut wires: Vec<(NodeId, usize)> = Vec::new();
    for &sink in &gates {
        let fanin = &netlist.node(sink).fanin;
        for (pin, &d) in fanin.iter().enumerate() {
            let from_gate = netlist
                .node(d)
                .gate()
                .is_some_and(|g| g != GateFunction::Mux2);
            let repeated = fanin.iter().filter(|&&x| x == d).count() > 1;
            if from_gate && !repeated {
                wires.push((sink, pin));
            }
        }
    }
    if key_size > wires.len() {
        return Err(LockError::KeyTooLarge {
            requested: key_size,
            available: wires.len(),
        });
    }
    let mut chosen: Vec<(NodeId, usize)> = sample(&mut rng, wires.len(), key_size)
        .into_iter()
        .map(|i| wires[i])
        .collect();
    chosen.sort();

    let mut out = netlist.clone();
    let mut used_pairs: HashSet<(NodeId, NodeId)> = HashSet::new();
    let mut mux_gates = Vec::with_capacity(key_size);
    let mut sites = Vec::with_capacity(key_size);
    let mut bits = Vec::with_capacity(key_size);
    for (k, &(sink, pin)) in chosen.iter().enumerate() {
        let true_wire = netlist.node(sink).fanin[pin];
        let sink_fanin = &netlist.node(sink).fanin;
        let mut false_wire = None;
        for _ in 0..FALSE_WIRE_TRIES {
            let cand = gates[rng.random_range(0..gates.len())];
            if cand != sink && !sink_fanin.contains(&cand) && !used_pairs.contains(&(cand, sink)) {
                false_wire = Some(cand);
                break;
            }
        }
        let false_wire = false_wire.ok_or_else(|| LockError::SeedExhausted {
            sink: netlist.node(sink).name.clone(),
        })?;
        used_pairs.insert((false_wire, sink));

        let correct_bit: bool = rng.random();
        let inputs = if correct_bit {
            [false_wire, true_wire]
        } else {
            [true_wire, false_wire]
        };
        let key_node = out.add_key_input(k)?;
        let mux = out.add_gate(
            fresh_name(&out, &format!("lockmux{k}")),
            GateFunction::Mux2,
            vec![key_node, inputs[0], inputs[1]],
        )?;
        out.set_fanin(sink, pin, mux);
        mux_gates.push(MuxKeyGate {
            mux_node: mux,
            key_input: k,
            true_wire,
            false_wire,
            sink,
            pin,
            correct_bit,
        });
        sites.push(MuxSite {
            mux,
            key: k,
            inputs,
            sink,
            pin,
        });
        bits.push(correct_bit);
    }
    out.validate()?;
    let meta = LockMeta {
        scheme: Scheme::RandomMux,
        key_count: key_size,
        block_sizes: Vec::new(),
        muxes: sites,
        swbs: Vec::new(),
    };
    Ok(LockedDesign::new(
        out,
        meta,
        mux_gates,
        Vec::new(),
        KeyAssignment::from_bools(&bits),
    ))
}

pub(crate) fn fresh_name(netlist: &Netlist, base: &str) -> String {
    if netlist.find(base).is_none() {
        return base.to_string();
    }
    (1..)
        .map(|i| format!("{base}_{i}"))
        .find(|n| netlist.find(n).is_none())
        .unwrap()
}
