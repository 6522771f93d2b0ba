// SPDX-License-Identifier: Apache-2.0

//! Key recovery from link scores.
//!
//! Everything here works on the attacker's view: the attack graph, its
//! candidate links and a trained model. Thresholds `th` and `up` live on a
//! grid of tenths and are stored as integers.

use std::collections::BTreeMap;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::gnn::{GnnError, GnnModel};
use crate::graphprep::{
    extract_enclosing_subgraph, AttackGraph, CandidateLink, LinkOrigin, LinkSet,
};
use crate::key::{KeyAssignment, KeyBit};
use crate::netlist::Netlist;

/// Slack on threshold comparisons.
pub const THRESHOLD_EPS: f64 = 1e-9;
/// Scores closer than this leave a random-MUX bit undeciphered.
pub const TIE_EPS: f64 = 1e-6;
/// Safety net; the loop provably ends well before this.
pub const MAX_ROUNDS: usize = 1000;

const GRID: u8 = 10;

#[derive(Debug, Error, PartialEq)]
pub enum AttackError {
    #[error(transparent)]
    Model(#[from] GnnError),
    #[error("malformed candidate grouping: {0}")]
    Grouping(String),
    #[error("accepted links disagree on key bit {0}")]
    Inconsistent(usize),
    #[error("round cap of {MAX_ROUNDS} reached")]
    RoundCap,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Termination {
    /// Every candidate link was decided.
    Completed,
    /// A conflict persisted with the ensemble already active.
    Conflict,
    /// The random-MUX single pass.
    SinglePass,
}

/// One scoring round that accepted links.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iteration: usize,
    /// Threshold in tenths.
    pub th: u8,
    /// Upper limit in tenths.
    pub up: u8,
    pub h: usize,
    pub ensemble: bool,
    /// Candidate indices accepted in this round.
    pub accepted: Vec<usize>,
    pub links_left: usize,
}

/// A change of the loop's control state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Transition {
    pub round: usize,
    pub reason: String,
    pub th: u8,
    pub up: u8,
    pub h: usize,
    pub ensemble: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttackReport {
    pub scheme: String,
    pub key_count: usize,
    pub iterations: Vec<IterationRecord>,
    pub transitions: Vec<Transition>,
    pub rounds: usize,
    pub scored_links: usize,
    pub total_links: usize,
    pub links_left: usize,
    pub solved_bits: usize,
    pub termination: Termination,
    pub runtime_ms: u64,
}

/// Probabilities for `ids` at hop count `h`, or the mean over h = 2 and 3.
fn score(
    graph: &AttackGraph,
    links: &[CandidateLink],
    ids: &[usize],
    h: usize,
    ensemble: bool,
    model: &GnnModel,
) -> Result<Vec<f64>, AttackError> {
    let at = |h: usize| -> Result<Vec<f64>, AttackError> {
        let subs: Vec<_> = ids
            .par_iter()
            .map(|&i| {
                let l = &links[i];
                extract_enclosing_subgraph(graph, l.driver, l.sink, h, model.spec.max_drnl)
            })
            .collect();
        Ok(model.predict_batch(&subs)?)
    };
    if ensemble {
        let (a, b) = (at(2)?, at(3)?);
        Ok(a.iter().zip(&b).map(|(x, y)| (x + y) / 2.0).collect())
    } else {
        at(h)
    }
}

/// Groups that must be decided together: one SwB (two gates) or one MUX.
#[derive(Debug, Clone)]
struct Unit {
    groups: Vec<usize>,
}

fn units(set: &LinkSet) -> Result<Vec<Unit>, AttackError> {
    let mut swbs: BTreeMap<usize, Vec<(usize, usize)>> = BTreeMap::new();
    let mut out = Vec::new();
    for (g, group) in set.groups.iter().enumerate() {
        for &l in &group.links {
            let link = set.links.get(l).ok_or_else(|| {
                AttackError::Grouping(format!("group {g} names missing link {l}"))
            })?;
            if link.group != g {
                return Err(AttackError::Grouping(format!(
                    "link {l} is not in group {g}"
                )));
            }
        }
        let [a, b] = group.links.map(|l| set.links[l]);
        if a.sink != b.sink || a.key != b.key || a.bit == b.bit {
            return Err(AttackError::Grouping(format!(
                "group {g} does not pair two values of one key bit into one gate"
            )));
        }
        match group.origin {
            LinkOrigin::Mux { .. } => out.push(Unit { groups: vec![g] }),
            LinkOrigin::Swb { swb, slot } => swbs.entry(swb).or_default().push((slot, g)),
        }
    }
    for (swb, mut slots) in swbs {
        slots.sort_unstable();
        if slots.iter().map(|s| s.0).ne([0, 1]) {
            return Err(AttackError::Grouping(format!(
                "SwB {swb} needs slots 0 and 1"
            )));
        }
        let (g0, g1) = (slots[0].1, slots[1].1);
        if set.links[set.groups[g0].links[0]].key != set.links[set.groups[g1].links[0]].key {
            return Err(AttackError::Grouping(format!(
                "SwB {swb} gates use different route keys"
            )));
        }
        out.push(Unit {
            groups: vec![g0, g1],
        });
    }
    Ok(out)
}

enum Filter {
    /// Key bit chosen by this unit.
    Accept(bool),
    Pass,
    Conflict,
}

/// Pairwise filter for one unit at thresholds `th`, `up` (tenths).
fn filter(unit: &Unit, set: &LinkSet, scores: &BTreeMap<usize, f64>, th: u8, up: u8) -> Filter {
    let up = up as f64 / GRID as f64 - THRESHOLD_EPS;
    let th = th as f64 / GRID as f64 - THRESHOLD_EPS;
    let mut chosen: Option<bool> = None;
    for &g in &unit.groups {
        let [ia, ib] = set.groups[g].links;
        let (la, lb) = (scores[&ia], scores[&ib]);
        if (la >= up || lb >= up) && (la - lb).abs() >= th {
            let winner = if la >= lb { ia } else { ib };
            let bit = set.links[winner].bit;
            match chosen {
                Some(b) if b != bit => return Filter::Conflict,
                _ => chosen = Some(bit),
            }
        }
    }
    chosen.map_or(Filter::Pass, Filter::Accept)
}

/// Iterative, confidence-gated completion of the attack graph.
///
/// Each round scores every undecided candidate, accepts the units whose
/// best link clears `up` with a margin of at least `th`, adds the accepted
/// links to the graph and rescoring follows. SwB gates share their route
/// key, so fixing one gate fixes its sibling.
pub fn attack_interlock(
    graph: &AttackGraph,
    set: &LinkSet,
    model: &GnnModel,
) -> Result<(KeyAssignment, AttackReport), AttackError> {
    attack_interlock_with(graph, set, |g, ids, h, ensemble| {
        score(g, &set.links, ids, h, ensemble, model)
    })
}

/// [`attack_interlock`] with a caller-supplied scorer. The scorer gets the
/// current graph, candidate indices, the hop count and the ensemble flag,
/// and returns one probability per index.
pub fn attack_interlock_with<F>(
    graph: &AttackGraph,
    set: &LinkSet,
    mut scorer: F,
) -> Result<(KeyAssignment, AttackReport), AttackError>
where
    F: FnMut(&AttackGraph, &[usize], usize, bool) -> Result<Vec<f64>, AttackError>,
{
    let start = Instant::now();
    let units = units(set)?;
    let mut graph = graph.clone();
    let mut open: Vec<usize> = (0..units.len()).collect();
    let (mut th, mut up, mut h, mut ensemble) = (0u8, GRID, 2usize, false);
    // Lowest th allowed at the current `up` after a conflict raised it;
    // without it th would bounce between two values forever.
    let mut th_floor = 0u8;
    let mut accepted: Vec<usize> = Vec::new();
    let mut iterations = Vec::new();
    let mut transitions = Vec::new();
    let mut scored_links = 0;
    let mut rounds = 0;
    let mut termination = Termination::Completed;
    let open_links = |open: &[usize]| -> Vec<usize> {
        open.iter()
            .flat_map(|&u| units[u].groups.iter().flat_map(|&g| set.groups[g].links))
            .collect()
    };
    let log = |transitions: &mut Vec<Transition>, round, reason: &str, th, up, h, ensemble| {
        transitions.push(Transition {
            round,
            reason: reason.to_string(),
            th,
            up,
            h,
            ensemble,
        })
    };

    'rounds: while !open.is_empty() {
        rounds += 1;
        if rounds > MAX_ROUNDS {
            return Err(AttackError::RoundCap);
        }
        let ids = open_links(&open);
        let s = scorer(&graph, &ids, h, ensemble)?;
        if s.len() != ids.len() {
            return Err(AttackError::Grouping(
                "scorer returned the wrong number of scores".into(),
            ));
        }
        scored_links += ids.len();
        let scores: BTreeMap<usize, f64> = ids.iter().copied().zip(s).collect();

        // Filter, raising th on conflicts while allowed.
        let (picks, done) = loop {
            let mut picks: Vec<(usize, bool)> = Vec::new();
            let mut conflict = false;
            for &u in &open {
                match filter(&units[u], set, &scores, th, up) {
                    Filter::Accept(bit) => picks.push((u, bit)),
                    Filter::Conflict => conflict = true,
                    Filter::Pass => {}
                }
            }
            if !conflict {
                break (picks, false);
            }
            if h == 2 && th != up {
                th += 1;
                th_floor = th;
                log(
                    &mut transitions,
                    rounds,
                    "conflict: raise th",
                    th,
                    up,
                    h,
                    ensemble,
                );
            } else if ensemble {
                // Non-conflicting units of this round are still kept.
                log(
                    &mut transitions,
                    rounds,
                    "conflict under ensemble: stop",
                    th,
                    up,
                    h,
                    ensemble,
                );
                break (picks, true);
            } else {
                ensemble = true;
                th = GRID;
                up = GRID;
                th_floor = 0;
                log(
                    &mut transitions,
                    rounds,
                    "conflict: enable ensemble",
                    th,
                    up,
                    h,
                    ensemble,
                );
                continue 'rounds;
            }
        };

        if picks.is_empty() {
            if done {
                termination = Termination::Conflict;
                break;
            }
            if th == 0 && up == 0 {
                // Nothing passes even with no margin; cannot happen with
                // finite scores, kept as a guard.
                termination = Termination::Conflict;
                break;
            }
            if 2 * th >= up && th > th_floor {
                th -= 1;
                log(
                    &mut transitions,
                    rounds,
                    "no links: lower th",
                    th,
                    up,
                    h,
                    ensemble,
                );
            } else {
                up -= 1;
                th = up;
                th_floor = 0;
                log(
                    &mut transitions,
                    rounds,
                    "no links: lower up",
                    th,
                    up,
                    h,
                    ensemble,
                );
            }
            continue;
        }

        let record_th = th;
        let record_up = up;
        let record_h = h;
        let mut new_links = Vec::new();
        for &(u, bit) in &picks {
            for &g in &units[u].groups {
                let l = *set.groups[g]
                    .links
                    .iter()
                    .find(|&&l| set.links[l].bit == bit)
                    .expect("groups pair both bit values");
                graph.add_edge(set.links[l].driver, set.links[l].sink);
                new_links.push(l);
            }
        }
        let decided: Vec<usize> = picks.iter().map(|p| p.0).collect();
        open.retain(|u| !decided.contains(u));
        accepted.extend(&new_links);
        iterations.push(IterationRecord {
            iteration: iterations.len() + 1,
            th: record_th,
            up: record_up,
            h: record_h,
            ensemble,
            accepted: new_links,
            links_left: open_links(&open).len(),
        });
        th_floor = 0;
        if h == 2 {
            h = 3;
            th = up;
            log(
                &mut transitions,
                rounds,
                "first acceptance: h = 3",
                th,
                up,
                h,
                ensemble,
            );
        }
        if done {
            termination = Termination::Conflict;
            break;
        }
    }

    let key = key_from_links(set, &accepted)?;
    let links_left = open_links(&open).len();
    let report = AttackReport {
        scheme: "interlock".into(),
        key_count: set.key_count,
        iterations,
        transitions,
        rounds,
        scored_links,
        total_links: set.links.len(),
        links_left,
        solved_bits: key.resolved_count(),
        termination,
        runtime_ms: start.elapsed().as_millis() as u64,
    };
    Ok((key, report))
}

/// Independent decision per MUX: the strictly higher score wins, near-ties
/// stay undeciphered.
pub fn attack_random_mux(
    graph: &AttackGraph,
    set: &LinkSet,
    model: &GnnModel,
) -> Result<(KeyAssignment, AttackReport), AttackError> {
    let start = Instant::now();
    let units = units(set)?;
    if units.iter().any(|u| u.groups.len() != 1) {
        return Err(AttackError::Grouping(
            "random-MUX attack got SwB groups".into(),
        ));
    }
    let ids: Vec<usize> = (0..set.links.len()).collect();
    let scores = score(graph, &set.links, &ids, 2, false, model)?;
    let mut accepted = Vec::new();
    for group in &set.groups {
        let [a, b] = group.links;
        if (scores[a] - scores[b]).abs() > TIE_EPS {
            accepted.push(if scores[a] > scores[b] { a } else { b });
        }
    }
    let key = key_from_links(set, &accepted)?;
    let report = AttackReport {
        scheme: "mux".into(),
        key_count: set.key_count,
        iterations: vec![IterationRecord {
            iteration: 1,
            th: 0,
            up: 0,
            h: 2,
            ensemble: false,
            accepted: accepted.clone(),
            links_left: 2 * (set.groups.len() - accepted.len()),
        }],
        transitions: Vec::new(),
        rounds: 1,
        scored_links: ids.len(),
        total_links: set.links.len(),
        links_left: 2 * (set.groups.len() - accepted.len()),
        solved_bits: key.resolved_count(),
        termination: Termination::SinglePass,
        runtime_ms: start.elapsed().as_millis() as u64,
    };
    Ok((key, report))
}

/// Key implied by accepted links plus the structurally fixed bits.
pub fn key_from_links(set: &LinkSet, accepted: &[usize]) -> Result<KeyAssignment, AttackError> {
    let mut key = KeyAssignment::unresolved(set.key_count);
    let mut put = |k: usize, b: bool| -> Result<(), AttackError> {
        if k >= key.len() {
            return Err(AttackError::Grouping(format!("key index {k} out of range")));
        }
        match key.get(k).value() {
            Some(old) if old != b => Err(AttackError::Inconsistent(k)),
            _ => {
                key.set(k, KeyBit::from_bool(b));
                Ok(())
            }
        }
    };
    for &(k, b) in &set.structural_bits {
        put(k, b)?;
    }
    for &l in accepted {
        let link = set
            .links
            .get(l)
            .ok_or_else(|| AttackError::Grouping(format!("no candidate {l}")))?;
        put(link.key, link.bit)?;
    }
    Ok(key)
}

/// Locked netlist with every resolved key MUX collapsed onto its chosen
/// input. Unresolved MUXes stay in place.
pub fn reconstruct_design(locked: &Netlist, key: &KeyAssignment) -> Netlist {
    locked.collapse_key_muxes(key)
}
