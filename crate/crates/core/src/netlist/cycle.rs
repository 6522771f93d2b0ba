// SPDX-License-Identifier: Apache-2.0

use super::{Netlist, NodeId};

/// Result of a structural cycle check.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Acyclicity {
    pub acyclic: bool,
    /// One cycle, listed in fanin-to-fanout order, when `acyclic` is false.
    pub witness: Option<Vec<NodeId>>,
}

/// Checks the full directed gate graph (every fanin pin counts, including
/// both data inputs of each MUX).
pub fn check_acyclic(netlist: &Netlist) -> Acyclicity {
    let fanin = |id: NodeId| netlist.node(id).fanin.as_slice();
    match find_cycle(netlist.len(), fanin) {
        None => Acyclicity {
            acyclic: true,
            witness: None,
        },
        Some(w) => Acyclicity {
            acyclic: false,
            witness: Some(w),
        },
    }
}

/// Iterative three-colour DFS over fanin edges. Returns one cycle if any.
pub(crate) fn find_cycle<'a, F>(n: usize, fanin: F) -> Option<Vec<NodeId>>
where
    F: Fn(NodeId) -> &'a [NodeId],
{
    const WHITE: u8 = 0;
    const GREY: u8 = 1;
    const BLACK: u8 = 2;
    let mut colour = vec![WHITE; n];
    // (node, next fanin position)
    let mut stack: Vec<(NodeId, usize)> = Vec::new();
    for root in 0..n {
        if colour[root] != WHITE {
            continue;
        }
        stack.push((NodeId(root as u32), 0));
        colour[root] = GREY;
        while let Some(&mut (node, ref mut pos)) = stack.last_mut() {
            let fi = fanin(node);
            if *pos < fi.len() {
                let next = fi[*pos];
                *pos += 1;
                match colour[next.index()] {
                    WHITE => {
                        colour[next.index()] = GREY;
                        stack.push((next, 0));
                    }
                    GREY => {
                        // The stack from `next` upward is a path next <- ... <- node
                        // following fanin edges; reverse it into signal-flow order.
                        let start = stack.iter().position(|(id, _)| *id == next).unwrap();
                        let mut cyc: Vec<NodeId> =
                            stack[start..].iter().map(|(id, _)| *id).collect();
                        cyc.reverse();
                        return Some(cyc);
                    }
                    _ => {}
                }
            } else {
                colour[node.index()] = BLACK;
                stack.pop();
            }
        }
    }
    None
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::netlist::{parse_bench, GateFunction};

    #[test]
    fn unlocked_is_acyclic() {
        let n = parse_bench(
            "INPUT(a)\nINPUT(b)\nOUTPUT(z)\nx = AND(a, b)\ny = OR(x, a)\nz = XOR(x, y)\n",
            "t",
        )
        .unwrap();
        assert_eq!(
            check_acyclic(&n),
            Acyclicity {
                acyclic: true,
                witness: None
            }
        );
    }

    #[test]
    fn two_muxes_feeding_each_other() {
        let text = "INPUT(a)\nINPUT(keyinput0)\nINPUT(keyinput1)\nOUTPUT(m1)\n\
                    m1 = MUX(keyinput0, a, m2)\nm2 = MUX(keyinput1, m1, a)\n";
        let n = parse_bench(text, "t").unwrap();
        let r = check_acyclic(&n);
        assert!(!r.acyclic);
        let w = r.witness.unwrap();
        assert_eq!(w.len(), 2);
        let names: Vec<_> = w.iter().map(|id| n.node(*id).name.as_str()).collect();
        assert!(names.contains(&"m1") && names.contains(&"m2"));
        for id in &w {
            assert_eq!(n.node(*id).gate(), Some(GateFunction::Mux2));
        }
    }

    #[test]
    fn witness_is_a_real_cycle() {
        let text = "INPUT(a)\nOUTPUT(d)\nb = AND(a, d)\nc = NOT(b)\nd = OR(c, a)\n";
        let n = parse_bench(text, "t").unwrap();
        let w = check_acyclic(&n).witness.unwrap();
        for i in 0..w.len() {
            let from = w[i];
            let to = w[(i + 1) % w.len()];
            assert!(n.node(to).fanin.contains(&from));
        }
    }
}
