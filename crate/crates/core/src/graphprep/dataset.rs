// SPDX-License-Identifier: Apache-2.0

use std::collections::HashSet;
use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::subgraph::{extract_enclosing_subgraph, EnclosingSubgraph, DEFAULT_MAX_DRNL};
use super::{build_attack_graph, AttackGraph, GraphError, LinkSet};
use crate::locking::LockedDesign;

pub const DEFAULT_VALIDATION_FRACTION: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scenario {
    /// Train on the target's own observable wires.
    SelfReferencing,
    /// Also train on other designs locked by the attacker, whose keys are
    /// known.
    CircuitLibrary,
}

impl fmt::Display for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Scenario::SelfReferencing => "self",
            Scenario::CircuitLibrary => "library",
        })
    }
}

impl FromStr for Scenario {
    type Err = GraphError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "self" | "self-referencing" => Ok(Scenario::SelfReferencing),
            "library" | "circuit-library" => Ok(Scenario::CircuitLibrary),
            other => Err(GraphError::Dataset(format!("unknown scenario `{other}`"))),
        }
    }
}

/// A library design: its graph, candidate links and their known truth.
#[derive(Debug, Clone)]
pub struct LabeledDesign {
    pub graph: AttackGraph,
    pub links: LinkSet,
    pub labels: Vec<bool>,
}

impl LabeledDesign {
    pub fn from_locked(design: &LockedDesign) -> Result<Self, GraphError> {
        let (graph, links) = build_attack_graph(design.public())?;
        let labels = links.labels(design.correct_key());
        Ok(LabeledDesign {
            graph,
            links,
            labels,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DatasetParams {
    pub h: usize,
    pub validation_fraction: f64,
    pub max_drnl: usize,
    pub seed: u64,
}

impl Default for DatasetParams {
    fn default() -> Self {
        DatasetParams {
            h: 2,
            validation_fraction: DEFAULT_VALIDATION_FRACTION,
            max_drnl: DEFAULT_MAX_DRNL,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub scenario: Scenario,
    pub h: usize,
    pub max_drnl: usize,
    pub train: Vec<EnclosingSubgraph>,
    pub validation: Vec<EnclosingSubgraph>,
    /// One unlabeled sample per candidate link of the target, in link order.
    pub test: Vec<EnclosingSubgraph>,
}

fn pair(a: u32, b: u32) -> (u32, u32) {
    (a.min(b), a.max(b))
}

/// Observable edges as positives and as many sampled non-edges as negatives.
fn edge_samples(
    graph: &AttackGraph,
    links: &LinkSet,
    rng: &mut ChaCha8Rng,
) -> Vec<(u32, u32, bool)> {
    let mut out: Vec<(u32, u32, bool)> = graph.edges().map(|(a, b)| (a, b, true)).collect();
    let want = out.len();
    let n = graph.node_count() as u32;
    let blocked: HashSet<(u32, u32)> = links.links.iter().map(|l| pair(l.driver, l.sink)).collect();
    let mut taken: HashSet<(u32, u32)> = HashSet::new();
    let mut tries = 0;
    while taken.len() < want && tries < 100 * want.max(1) && n >= 2 {
        tries += 1;
        let a = rng.random_range(0..n);
        let b = rng.random_range(0..n);
        let p = pair(a, b);
        if a == b || graph.has_edge(a, b) || blocked.contains(&p) || !taken.insert(p) {
            continue;
        }
        out.push((p.0, p.1, false));
    }
    out
}

/// Assembles training, validation and test samples for a target design.
pub fn build_dataset(
    target: &AttackGraph,
    target_links: &LinkSet,
    library: &[LabeledDesign],
    scenario: Scenario,
    params: &DatasetParams,
) -> Result<Dataset, GraphError> {
    if params.h == 0 {
        return Err(GraphError::Dataset("hop count must be at least 1".into()));
    }
    if target.edge_count() == 0 {
        return Err(GraphError::Dataset("target has no observable edges".into()));
    }
    if scenario == Scenario::CircuitLibrary && library.is_empty() {
        return Err(GraphError::Dataset("circuit library is empty".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let (h, max_drnl) = (params.h, params.max_drnl);

    // (graph, u, v, label) jobs, extracted in parallel in a fixed order.
    let mut jobs: Vec<(&AttackGraph, u32, u32, bool)> =
        edge_samples(target, target_links, &mut rng)
            .into_iter()
            .map(|(a, b, y)| (target, a, b, y))
            .collect();
    if scenario == Scenario::CircuitLibrary {
        for d in library {
            jobs.extend(
                edge_samples(&d.graph, &d.links, &mut rng)
                    .into_iter()
                    .map(|(a, b, y)| (&d.graph, a, b, y)),
            );
            for (l, &y) in d.links.links.iter().zip(&d.labels) {
                jobs.push((&d.graph, l.driver, l.sink, y));
            }
        }
    }
    jobs.shuffle(&mut rng);
    let mut samples: Vec<EnclosingSubgraph> = jobs
        .par_iter()
        .map(|&(g, a, b, y)| {
            let mut s = extract_enclosing_subgraph(g, a, b, h, max_drnl);
            s.label = Some(y);
            s
        })
        .collect();
    let n_val = ((samples.len() as f64) * params.validation_fraction).round() as usize;
    let validation = samples.split_off(samples.len() - n_val.min(samples.len()));
    let test = target_links
        .links
        .par_iter()
        .map(|l| extract_enclosing_subgraph(target, l.driver, l.sink, h, max_drnl))
        .collect();
    Ok(Dataset {
        scenario,
        h,
        max_drnl,
        train: samples,
        validation,
        test,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graphprep::build_plain_graph;
    use crate::locking::lock_random_mux;
    use crate::synth::random_netlist;

    #[test]
    fn self_referencing_is_balanced() {
        let n = random_netlist(10, 150, 5, 2);
        let d = lock_random_mux(&n, 8, 3).unwrap();
        let (g, links) = build_attack_graph(d.public()).unwrap();
        let params = DatasetParams {
            validation_fraction: 0.0,
            ..DatasetParams::default()
        };
        let ds = build_dataset(&g, &links, &[], Scenario::SelfReferencing, &params).unwrap();
        let pos = ds.train.iter().filter(|s| s.label == Some(true)).count();
        let neg = ds.train.iter().filter(|s| s.label == Some(false)).count();
        assert_eq!(pos, g.edge_count());
        assert_eq!(neg, pos);
        assert_eq!(ds.test.len(), 16);
        assert!(ds.test.iter().all(|s| s.label.is_none()));
        for s in &ds.train {
            assert!(!s.edges.contains(&(0, 1)));
        }
    }

    #[test]
    fn validation_split() {
        let n = random_netlist(10, 150, 5, 2);
        let g = build_plain_graph(&n).unwrap();
        let ds = build_dataset(
            &g,
            &LinkSet::default(),
            &[],
            Scenario::SelfReferencing,
            &DatasetParams::default(),
        )
        .unwrap();
        let total = ds.train.len() + ds.validation.len();
        assert_eq!(ds.validation.len(), (total as f64 * 0.1).round() as usize);
    }

    #[test]
    fn library_adds_obfuscated_links() {
        let target = random_netlist(10, 150, 5, 2);
        let t = lock_random_mux(&target, 8, 3).unwrap();
        let (g, links) = build_attack_graph(t.public()).unwrap();
        let params = DatasetParams {
            validation_fraction: 0.0,
            ..DatasetParams::default()
        };
        let base = build_dataset(&g, &links, &[], Scenario::SelfReferencing, &params).unwrap();
        let lib: Vec<LabeledDesign> = (0..3)
            .map(|i| {
                let n = random_netlist(8, 60, 4, 100 + i);
                LabeledDesign::from_locked(&lock_random_mux(&n, 16, i).unwrap()).unwrap()
            })
            .collect();
        let ds = build_dataset(&g, &links, &lib, Scenario::CircuitLibrary, &params).unwrap();
        let lib_edges: usize = lib.iter().map(|d| d.graph.edge_count()).sum();
        let pos = ds.train.iter().filter(|s| s.label == Some(true)).count();
        let base_pos = base.train.iter().filter(|s| s.label == Some(true)).count();
        assert_eq!(pos, base_pos + lib_edges + 3 * 16);
    }

    #[test]
    fn degenerate_inputs() {
        use crate::netlist::NodeId;
        let mut g = AttackGraph::with_nodes(
            vec![1, 1],
            vec![NodeId(0), NodeId(1)],
            vec!["a".into(), "b".into()],
        );
        let p = DatasetParams::default();
        let none = LinkSet::default();
        assert!(build_dataset(&g, &none, &[], Scenario::SelfReferencing, &p).is_err());
        g.add_edge(0, 1);
        assert!(build_dataset(&g, &none, &[], Scenario::CircuitLibrary, &p).is_err());
        assert!(build_dataset(&g, &none, &[], Scenario::SelfReferencing, &p).is_ok());
    }
}
