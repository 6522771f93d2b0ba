// SPDX-License-Identifier: Apache-2.0

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::LockError;
use crate::netlist::{check_acyclic, Netlist, NodeId};

/// Random roots tried per routing block before giving up.
pub const PATH_RETRY_BUDGET: usize = 10_000;

const EXPANSIONS_PER_ROOT: usize = 256;

/// A chain of 2-input gates where each gate reads the previous one.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TimingPath {
    /// Gate driving the first path gate; never part of any path.
    pub entry: NodeId,
    pub gates: Vec<NodeId>,
}

impl TimingPath {
    /// Pin of `gates[t]` that carries the path signal.
    pub fn path_pin(&self, netlist: &Netlist, t: usize) -> usize {
        let prev = if t == 0 {
            self.entry
        } else {
            self.gates[t - 1]
        };
        netlist
            .node(self.gates[t])
            .fanin
            .iter()
            .position(|&f| f == prev)
            .expect("path pin")
    }

    /// The other fanin of `gates[t]`.
    pub fn side_input(&self, netlist: &Netlist, t: usize) -> NodeId {
        netlist.node(self.gates[t]).fanin[1 - self.path_pin(netlist, t)]
    }
}

fn eligible(netlist: &Netlist, id: NodeId) -> bool {
    let node = netlist.node(id);
    node.gate().is_some_and(|g| g.is_two_input_logic())
        && node.fanin.len() == 2
        && node.fanin[0] != node.fanin[1]
}

/// Finds `n_paths` vertex-disjoint paths of exactly `length` 2-input gates
/// by randomized depth-first search from random roots. Entries are distinct
/// gates outside all paths. Gives up after [`PATH_RETRY_BUDGET`] roots.
pub fn select_timing_paths(
    netlist: &Netlist,
    n_paths: usize,
    length: usize,
    seed: u64,
) -> Result<Vec<TimingPath>, LockError> {
    select_paths(netlist, n_paths, length, PATH_RETRY_BUDGET, seed)
}

pub(crate) fn select_paths(
    netlist: &Netlist,
    n_paths: usize,
    length: usize,
    mut budget: usize,
    seed: u64,
) -> Result<Vec<TimingPath>, LockError> {
    if !check_acyclic(netlist).acyclic {
        return Err(LockError::Cyclic);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let infeasible = |found| LockError::PathsInfeasible {
        found,
        requested: n_paths,
        length,
    };
    let fanouts = netlist.fanouts();
    let roots: Vec<NodeId> = netlist.ids().filter(|&g| eligible(netlist, g)).collect();
    if length == 0 || roots.is_empty() {
        return if n_paths == 0 {
            Ok(Vec::new())
        } else {
            Err(infeasible(0))
        };
    }
    let mut used = vec![false; netlist.len()];
    let mut paths: Vec<TimingPath> = Vec::with_capacity(n_paths);
    while paths.len() < n_paths {
        if budget == 0 {
            return Err(infeasible(paths.len()));
        }
        budget -= 1;
        let root = roots[rng.random_range(0..roots.len())];
        if used[root.index()] {
            continue;
        }
        let entries: Vec<NodeId> = netlist
            .node(root)
            .fanin
            .iter()
            .copied()
            .filter(|&f| netlist.node(f).gate().is_some() && !used[f.index()])
            .collect();
        let Some(&entry) = entries.get(rng.random_range(0..entries.len().max(1))) else {
            continue;
        };
        if let Some(gates) = extend(netlist, &fanouts, &used, root, length, &mut rng) {
            used[entry.index()] = true;
            for g in &gates {
                used[g.index()] = true;
            }
            paths.push(TimingPath { entry, gates });
        }
    }
    Ok(paths)
}

fn extend(
    netlist: &Netlist,
    fanouts: &[Vec<NodeId>],
    used: &[bool],
    root: NodeId,
    length: usize,
    rng: &mut ChaCha8Rng,
) -> Option<Vec<NodeId>> {
    let successors = |g: NodeId, rng: &mut ChaCha8Rng| {
        let mut s: Vec<NodeId> = fanouts[g.index()]
            .iter()
            .copied()
            .filter(|&x| !used[x.index()] && eligible(netlist, x))
            .collect();
        s.sort();
        s.dedup();
        s.shuffle(rng);
        s
    };
    let mut path = vec![root];
    let mut stack = vec![successors(root, rng)];
    let mut expansions = 0;
    while path.len() < length {
        expansions += 1;
        if expansions > EXPANSIONS_PER_ROOT {
            return None;
        }
        match stack.last_mut()?.pop() {
            Some(next) => {
                stack.push(successors(next, rng));
                path.push(next);
            }
            None => {
                stack.pop();
                path.pop();
                if path.is_empty() {
                    return None;
                }
            }
        }
    }
    Some(path)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::netlist::parse_bench;
    use crate::synth::random_netlist;
    use std::collections::HashSet;

    // Independent checker: disjointness, arity and chaining.
    fn check_paths(n: &Netlist, paths: &[TimingPath], length: usize) {
        let mut seen = HashSet::new();
        for p in paths {
            assert_eq!(p.gates.len(), length);
            assert!(seen.insert(p.entry));
            assert!(n.node(p.entry).is_gate());
            let mut prev = p.entry;
            for &g in &p.gates {
                assert!(seen.insert(g), "paths overlap");
                let node = n.node(g);
                assert_eq!(node.fanin.len(), 2);
                assert!(node.gate().unwrap().is_two_input_logic());
                assert!(node.fanin.contains(&prev));
                prev = g;
            }
        }
    }

    #[test]
    fn eight_paths_of_four() {
        let n = random_netlist(16, 400, 8, 11);
        let paths = select_timing_paths(&n, 8, 4, 5).unwrap();
        assert_eq!(paths.len(), 8);
        check_paths(&n, &paths, 4);
    }

    #[test]
    fn shallow_circuit_is_infeasible() {
        let n = parse_bench(
            "INPUT(a)\nINPUT(b)\nINPUT(c)\nOUTPUT(y)\nOUTPUT(z)\n\
             x = AND(a, b)\ny = OR(x, c)\nz = XOR(x, a)\n",
            "shallow",
        )
        .unwrap();
        match select_timing_paths(&n, 1, 4, 0) {
            Err(LockError::PathsInfeasible { found: 0, .. }) => {}
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn single_gate_path() {
        let n = random_netlist(6, 30, 2, 1);
        let paths = select_timing_paths(&n, 1, 1, 0).unwrap();
        check_paths(&n, &paths, 1);
        let p = &paths[0];
        assert_ne!(p.side_input(&n, 0), p.entry);
    }
}
