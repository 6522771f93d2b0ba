// SPDX-License-Identifier: Apache-2.0

//! Scoring an attack against the held-out key and the original design.

use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::attack::{key_from_links, AttackReport};
use crate::graphprep::LinkSet;
use crate::key::{KeyAssignment, KeyBit};
use crate::netlist::{
    exhaustive_words, lane_mask, CompiledSim, Netlist, NetlistError, EXHAUSTIVE_LIMIT,
};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("key lengths differ: recovered {recovered}, truth {truth}")]
    KeyLength { recovered: usize, truth: usize },
    #[error("interfaces differ: {0}")]
    Interface(String),
    #[error("ground-truth key has unresolved bit {0}")]
    UnresolvedTruth(usize),
    #[error(transparent)]
    Netlist(#[from] NetlistError),
    #[error("report: {0}")]
    Report(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KeyMetrics {
    pub key_count: usize,
    pub correct: usize,
    pub wrong: usize,
    pub undeciphered: usize,
    /// `(K - wrong) / K`, in percent.
    pub precision: f64,
    /// `correct / (correct + wrong)`, in percent; 100 when nothing was
    /// decided.
    pub decided_precision: f64,
    /// True when no bit was decided, so both precisions are vacuous.
    pub precision_undefined: bool,
    /// `correct / K`, in percent.
    pub accuracy: f64,
}

fn percent(num: usize, den: usize) -> f64 {
    if den == 0 {
        100.0
    } else {
        100.0 * num as f64 / den as f64
    }
}

pub fn score_key(
    recovered: &KeyAssignment,
    truth: &KeyAssignment,
) -> Result<KeyMetrics, EvalError> {
    if recovered.len() != truth.len() {
        return Err(EvalError::KeyLength {
            recovered: recovered.len(),
            truth: truth.len(),
        });
    }
    let (mut correct, mut wrong, mut undeciphered) = (0, 0, 0);
    for (i, (r, t)) in recovered.bits().iter().zip(truth.bits()).enumerate() {
        let t = t.value().ok_or(EvalError::UnresolvedTruth(i))?;
        match r.value() {
            None => undeciphered += 1,
            Some(b) if b == t => correct += 1,
            Some(_) => wrong += 1,
        }
    }
    let k = truth.len();
    Ok(KeyMetrics {
        key_count: k,
        correct,
        wrong,
        undeciphered,
        precision: percent(k - wrong, k),
        decided_precision: percent(correct, correct + wrong),
        precision_undefined: correct + wrong == 0,
        accuracy: if k == 0 { 0.0 } else { percent(correct, k) },
    })
}

/// One attack iteration judged against the truth.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRow {
    pub iteration: usize,
    pub th: f64,
    pub up: f64,
    pub h: usize,
    pub ensemble: bool,
    /// Correct link decisions.
    pub c: usize,
    /// Wrong link decisions.
    pub w: usize,
    pub precision: f64,
    /// Candidate links decided so far (accepted and their rejected pairs).
    pub links_recovered: usize,
    pub links_left: usize,
    /// Key bits resolved after this iteration, structural bits included.
    pub solved_bits: usize,
}

pub fn link_decisions(
    report: &AttackReport,
    links: &LinkSet,
    truth: &KeyAssignment,
) -> Result<Vec<IterationRow>, EvalError> {
    let mut accepted: Vec<usize> = Vec::new();
    let mut rows = Vec::new();
    for it in &report.iterations {
        let (mut c, mut w) = (0, 0);
        for &l in &it.accepted {
            let link = links
                .links
                .get(l)
                .ok_or_else(|| EvalError::Report(format!("unknown candidate {l}")))?;
            match link.is_true_under(truth) {
                Some(true) => c += 1,
                Some(false) => w += 1,
                None => return Err(EvalError::UnresolvedTruth(link.key)),
            }
        }
        accepted.extend(&it.accepted);
        let solved = key_from_links(links, &accepted)
            .map_err(|e| EvalError::Report(e.to_string()))?
            .resolved_count();
        rows.push(IterationRow {
            iteration: it.iteration,
            th: it.th as f64 / 10.0,
            up: it.up as f64 / 10.0,
            h: it.h,
            ensemble: it.ensemble,
            c,
            w,
            precision: percent(c, c + w),
            links_recovered: links.links.len() - it.links_left,
            links_left: it.links_left,
            solved_bits: solved,
        });
    }
    Ok(rows)
}

/// How unresolved key bits are filled before simulating.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub enum UnresolvedPolicy {
    /// Uniformly random per sampled key.
    #[default]
    Random,
    /// The opposite of the true value, for a worst-case figure.
    Pessimistic(KeyAssignment),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct HdParams {
    pub keys: usize,
    pub patterns: u64,
    pub seed: u64,
    /// Sweep every input pattern when there are at most 16 inputs.
    pub exhaustive_inputs: bool,
}

impl HdParams {
    pub fn desk() -> Self {
        HdParams {
            keys: 20,
            patterns: 2_000,
            seed: 0,
            exhaustive_inputs: true,
        }
    }

    pub fn full() -> Self {
        HdParams {
            keys: 100,
            patterns: 10_000,
            ..Self::desk()
        }
    }
}

impl Default for HdParams {
    fn default() -> Self {
        Self::desk()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HdResult {
    /// Mean share of differing output bits, in percent, over comparable
    /// completions. `None` when no completion could be simulated.
    pub hd_percent: Option<f64>,
    pub num_keys_sampled: usize,
    pub num_patterns: u64,
    pub exhaustive_inputs: bool,
    /// Completions were enumerated rather than sampled.
    pub exhaustive_keys: bool,
    /// Completions whose netlist had a combinational loop.
    pub incomparable: usize,
}

/// Differing output bits between two compiled designs over one pattern set.
fn differing_bits(
    a: &CompiledSim,
    b: &CompiledSim,
    n_in: usize,
    exhaustive: bool,
    total: u64,
    seed: u64,
) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut scratch, mut oa, mut ob) = (Vec::new(), Vec::new(), Vec::new());
    let mut diff = 0u64;
    let mut base = 0u64;
    while base < total {
        let words = if exhaustive {
            exhaustive_words(n_in, base)
        } else {
            (0..n_in).map(|_| rng.random::<u64>()).collect()
        };
        let mask = lane_mask(total, base);
        a.eval_words_with(&words, &mut scratch, &mut oa);
        b.eval_words_with(&words, &mut scratch, &mut ob);
        diff += oa
            .iter()
            .zip(&ob)
            .map(|(x, y)| ((x ^ y) & mask).count_ones() as u64)
            .sum::<u64>();
        base += 64;
    }
    diff
}

/// Output Hamming distance between the original design and a recovered
/// design whose unresolved key bits are completed per `policy`.
///
/// `recovered` may still hold key inputs and MUXes on unresolved bits; its
/// key vector is `key`. With `u` unresolved bits and `2^u <= params.keys`,
/// every completion is enumerated once.
pub fn hamming_distance(
    original: &Netlist,
    recovered: &Netlist,
    key: &KeyAssignment,
    policy: &UnresolvedPolicy,
    params: &HdParams,
) -> Result<HdResult, EvalError> {
    let n_in = original.inputs().len();
    if n_in != recovered.inputs().len() || original.outputs().len() != recovered.outputs().len() {
        return Err(EvalError::Interface(format!(
            "{} inputs / {} outputs vs {} / {}",
            n_in,
            original.outputs().len(),
            recovered.inputs().len(),
            recovered.outputs().len()
        )));
    }
    let base_sim = CompiledSim::new(original, None)?;
    let free = key.unresolved_indices();
    let exhaustive_keys = match policy {
        UnresolvedPolicy::Random => free.len() < 63 && (1usize << free.len()) <= params.keys.max(1),
        UnresolvedPolicy::Pessimistic(_) => true,
    };
    let completions: Vec<KeyAssignment> = match policy {
        UnresolvedPolicy::Pessimistic(truth) => {
            if truth.len() != key.len() {
                return Err(EvalError::KeyLength {
                    recovered: key.len(),
                    truth: truth.len(),
                });
            }
            let mut k = key.clone();
            for &i in &free {
                let t = truth.get(i).value().ok_or(EvalError::UnresolvedTruth(i))?;
                k.set(i, KeyBit::from_bool(!t));
            }
            vec![k]
        }
        UnresolvedPolicy::Random if exhaustive_keys => (0..1u64 << free.len())
            .map(|m| {
                let mut k = key.clone();
                for (j, &i) in free.iter().enumerate() {
                    k.set(i, KeyBit::from_bool(m >> j & 1 == 1));
                }
                k
            })
            .collect(),
        UnresolvedPolicy::Random => {
            let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
            (0..params.keys)
                .map(|_| {
                    let mut k = key.clone();
                    for &i in &free {
                        k.set(i, KeyBit::from_bool(rng.random()));
                    }
                    k
                })
                .collect()
        }
    };
    let exhaustive = params.exhaustive_inputs && n_in <= EXHAUSTIVE_LIMIT;
    let total = if exhaustive {
        1u64 << n_in
    } else {
        params.patterns
    };
    let bits_per_run = total * original.outputs().len() as u64;
    let per_key: Vec<Option<f64>> = completions
        .par_iter()
        .map(|k| -> Result<Option<f64>, EvalError> {
            let sim = match CompiledSim::new(recovered, Some(k)) {
                Ok(s) => s,
                Err(NetlistError::Cycle(_)) => return Ok(None),
                Err(e) => return Err(e.into()),
            };
            let d = differing_bits(
                &base_sim,
                &sim,
                n_in,
                exhaustive,
                total,
                params.seed ^ 0x5eed,
            );
            Ok(Some(if bits_per_run == 0 {
                0.0
            } else {
                100.0 * d as f64 / bits_per_run as f64
            }))
        })
        .collect::<Result<_, _>>()?;
    let ok: Vec<f64> = per_key.iter().flatten().copied().collect();
    Ok(HdResult {
        hd_percent: (!ok.is_empty()).then(|| ok.iter().sum::<f64>() / ok.len() as f64),
        num_keys_sampled: completions.len(),
        num_patterns: total,
        exhaustive_inputs: exhaustive,
        exhaustive_keys,
        incomparable: per_key.len() - ok.len(),
    })
}

/// Everything known about one attack run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub design: String,
    pub scheme: String,
    pub metrics: KeyMetrics,
    pub iterations: Vec<IterationRow>,
    pub hd: Option<HdResult>,
    pub attack_runtime_ms: u64,
}

const CSV_HEADER: [&str; 11] = [
    "Attack Iteration",
    "th",
    "up",
    "h",
    "C",
    "W",
    "Prec.",
    "Links Recovered",
    "Links Left",
    "Total Solved Key-bits",
    "Ensemble",
];

impl EvalReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, EvalError> {
        serde_json::from_str(text).map_err(|e| EvalError::Report(e.to_string()))
    }

    /// Per-iteration rows; a run with no iterations gives the header only.
    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(CSV_HEADER).expect("in-memory write");
        for r in &self.iterations {
            w.write_record([
                r.iteration.to_string(),
                r.th.to_string(),
                r.up.to_string(),
                r.h.to_string(),
                r.c.to_string(),
                r.w.to_string(),
                r.precision.to_string(),
                r.links_recovered.to_string(),
                r.links_left.to_string(),
                r.solved_bits.to_string(),
                r.ensemble.to_string(),
            ])
            .expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("flush")).expect("utf-8")
    }

    pub fn rows_from_csv(text: &str) -> Result<Vec<IterationRow>, EvalError> {
        let mut r = csv::Reader::from_reader(text.as_bytes());
        let header: Vec<String> = r
            .headers()
            .map_err(|e| EvalError::Report(e.to_string()))?
            .iter()
            .map(str::to_string)
            .collect();
        if header != CSV_HEADER {
            return Err(EvalError::Report("unexpected CSV header".into()));
        }
        let bad = |e: &dyn std::fmt::Display| EvalError::Report(e.to_string());
        let mut rows = Vec::new();
        for rec in r.records() {
            let rec = rec.map_err(|e| bad(&e))?;
            let f = |i: usize| rec.get(i).unwrap_or("");
            let num = |i: usize| f(i).parse::<usize>().map_err(|e| bad(&e));
            let real = |i: usize| f(i).parse::<f64>().map_err(|e| bad(&e));
            rows.push(IterationRow {
                iteration: num(0)?,
                th: real(1)?,
                up: real(2)?,
                h: num(3)?,
                c: num(4)?,
                w: num(5)?,
                precision: real(6)?,
                links_recovered: num(7)?,
                links_left: num(8)?,
                solved_bits: num(9)?,
                ensemble: f(10).parse().map_err(|e| bad(&e))?,
            });
        }
        Ok(rows)
    }

    /// Aligned text table with a summary block.
    pub fn to_text(&self) -> String {
        let m = &self.metrics;
        let mut out = String::new();
        let _ = writeln!(out, "design {}  scheme {}", self.design, self.scheme);
        let _ = writeln!(
            out,
            "K {}  correct {}  wrong {}  undeciphered {}  precision {:.2}%{}  accuracy {:.2}%",
            m.key_count,
            m.correct,
            m.wrong,
            m.undeciphered,
            m.precision,
            if m.precision_undefined {
                " (no decisions)"
            } else {
                ""
            },
            m.accuracy
        );
        if let Some(hd) = &self.hd {
            let v = hd
                .hd_percent
                .map_or("n/a".to_string(), |x| format!("{x:.4}%"));
            let _ = writeln!(
                out,
                "HD {v} over {} keys x {} patterns ({} incomparable)",
                hd.num_keys_sampled, hd.num_patterns, hd.incomparable
            );
        }
        let _ = writeln!(
            out,
            "{:>4} {:>4} {:>4} {:>3} {:>5} {:>5} {:>8} {:>9} {:>6} {:>7}",
            "iter", "th", "up", "h", "C", "W", "prec", "recovered", "left", "solved"
        );
        for r in &self.iterations {
            let h = if r.ensemble {
                "2+3".to_string()
            } else {
                r.h.to_string()
            };
            let _ = writeln!(
                out,
                "{:>4} {:>4.1} {:>4.1} {:>3} {:>5} {:>5} {:>7.2}% {:>9} {:>6} {:>7}",
                r.iteration,
                r.th,
                r.up,
                h,
                r.c,
                r.w,
                r.precision,
                r.links_recovered,
                r.links_left,
                r.solved_bits
            );
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::attack::{attack_interlock_with, reconstruct_design};
    use crate::graphprep::build_attack_graph;
    use crate::locking::{lock_interlock, lock_random_mux};
    use crate::netlist::parse_bench;
    use crate::synth::random_netlist;

    fn key(s: &str) -> KeyAssignment {
        KeyAssignment::from_bits(
            s.chars()
                .map(|c| match c {
                    '0' => KeyBit::Zero,
                    '1' => KeyBit::One,
                    _ => KeyBit::Unresolved,
                })
                .collect(),
        )
    }

    #[test]
    fn published_row_reproduced() {
        let truth = KeyAssignment::from_bools(&[true; 64]);
        let mut bits = vec![KeyBit::One; 57];
        bits.push(KeyBit::Zero);
        bits.extend([KeyBit::Unresolved; 6]);
        let m = score_key(&KeyAssignment::from_bits(bits), &truth).unwrap();
        assert_eq!((m.correct, m.wrong, m.undeciphered), (57, 1, 6));
        assert!((m.precision - 98.4375).abs() < 1e-9);
        assert!((m.accuracy - 89.0625).abs() < 1e-9);
    }

    #[test]
    fn trivial_metrics() {
        let t = key("0110");
        let m = score_key(&t, &t).unwrap();
        assert_eq!((m.precision, m.accuracy), (100.0, 100.0));
        let m = score_key(&key("XXXX"), &t).unwrap();
        assert_eq!(m.accuracy, 0.0);
        assert!(m.precision_undefined);
        assert!(score_key(&key("01"), &t).is_err());
    }

    proptest::proptest! {
        #[test]
        fn counts_partition_the_key(bits in proptest::collection::vec(0u8..3, 1..80), truth in proptest::collection::vec(proptest::bool::ANY, 80)) {
            let rec = KeyAssignment::from_bits(bits.iter().map(|b| match b { 0 => KeyBit::Zero, 1 => KeyBit::One, _ => KeyBit::Unresolved }).collect());
            let t = KeyAssignment::from_bools(&truth[..bits.len()]);
            let m = score_key(&rec, &t).unwrap();
            proptest::prop_assert_eq!(m.correct + m.wrong + m.undeciphered, bits.len());
            proptest::prop_assert_eq!(m.wrong == 0, m.precision == 100.0);
        }
    }

    const TOY: &str =
        "INPUT(a)\nINPUT(b)\nINPUT(c)\nINPUT(d)\nINPUT(e)\nINPUT(f)\nINPUT(g)\nINPUT(h)\n\
OUTPUT(o1)\nOUTPUT(o2)\nOUTPUT(o3)\n\
x1 = AND(a, b)\nx2 = OR(c, d)\nx3 = XOR(e, f)\nx4 = NAND(g, h)\n\
y1 = NOR(x1, x2)\ny2 = XNOR(x3, x4)\ny3 = AND(x2, x3)\n\
o1 = OR(y1, y2)\no2 = NAND(y2, y3)\no3 = XOR(y1, y3)\n";

    /// Straight per-pattern comparison, no bit packing.
    fn brute_hd(a: &Netlist, b: &Netlist, k: &KeyAssignment) -> f64 {
        use crate::netlist::{simulate, InputVector};
        let n = a.inputs().len();
        let mut diff = 0;
        for p in 0..1u32 << n {
            let v = InputVector((0..n).map(|i| p >> i & 1 == 1).collect());
            let x = simulate(a, &v, None).unwrap();
            let y = simulate(b, &v, Some(k)).unwrap();
            diff += x.0.iter().zip(&y.0).filter(|(p, q)| p != q).count();
        }
        100.0 * diff as f64 / ((1u64 << n) as f64 * a.outputs().len() as f64)
    }

    #[test]
    fn hd_matches_brute_force_over_completions() {
        let original = parse_bench(TOY, "toy").unwrap();
        let locked = lock_random_mux(&original, 6, 3).unwrap();
        let mut k = locked.correct_key().clone();
        k.set(1, KeyBit::Unresolved);
        k.set(4, KeyBit::Unresolved);
        let rebuilt = reconstruct_design(&locked.netlist, &k);
        let r = hamming_distance(
            &original,
            &rebuilt,
            &k,
            &UnresolvedPolicy::Random,
            &HdParams::desk(),
        )
        .unwrap();
        assert!(r.exhaustive_keys && r.exhaustive_inputs);
        assert_eq!(r.num_keys_sampled, 4);
        let mut sum = 0.0;
        let mut n = 0;
        for m in 0..4u8 {
            let mut c = k.clone();
            c.set(1, KeyBit::from_bool(m & 1 == 1));
            c.set(4, KeyBit::from_bool(m & 2 == 2));
            if crate::netlist::CompiledSim::new(&rebuilt, Some(&c)).is_ok() {
                sum += brute_hd(&original, &rebuilt, &c);
                n += 1;
            }
        }
        assert_eq!(r.incomparable, 4 - n);
        assert!((r.hd_percent.unwrap() - sum / n as f64).abs() < 1e-9);
    }

    #[test]
    fn hd_zero_for_identity_and_sampling_close_to_sweep() {
        let n = random_netlist(14, 300, 8, 5);
        let full = KeyAssignment::from_bools(&[]);
        let r =
            hamming_distance(&n, &n, &full, &UnresolvedPolicy::Random, &HdParams::desk()).unwrap();
        assert_eq!(r.hd_percent, Some(0.0));

        let d = lock_random_mux(&n, 16, 2).unwrap();
        let mut k = d.correct_key().clone();
        for i in [0, 3, 7, 9] {
            k.set(i, KeyBit::Unresolved);
        }
        let rebuilt = reconstruct_design(&d.netlist, &k);
        let sweep = hamming_distance(
            &n,
            &rebuilt,
            &k,
            &UnresolvedPolicy::Random,
            &HdParams::desk(),
        )
        .unwrap();
        let sampled = hamming_distance(
            &n,
            &rebuilt,
            &k,
            &UnresolvedPolicy::Random,
            &HdParams {
                patterns: 10_000,
                exhaustive_inputs: false,
                ..HdParams::desk()
            },
        )
        .unwrap();
        assert!(sweep.exhaustive_inputs && !sampled.exhaustive_inputs);
        assert!((sweep.hd_percent.unwrap() - sampled.hd_percent.unwrap()).abs() < 1.0);
        let worst = hamming_distance(
            &n,
            &rebuilt,
            &k,
            &UnresolvedPolicy::Pessimistic(d.correct_key().clone()),
            &HdParams::desk(),
        )
        .unwrap();
        assert_eq!(worst.num_keys_sampled, 1);
    }

    #[test]
    fn iteration_rows_and_report_round_trip() {
        let n = random_netlist(16, 400, 8, 11);
        let d = lock_interlock(&n, 1, 8, 3).unwrap();
        let (g, set) = build_attack_graph(d.public()).unwrap();
        let truth = d.correct_key().clone();
        let (k, report) = attack_interlock_with(&g, &set, |_, ids, _, _| {
            Ok(ids
                .iter()
                .map(|&i| {
                    if set.links[i].is_true_under(&truth) == Some(true) {
                        1.0
                    } else {
                        0.0
                    }
                })
                .collect())
        })
        .unwrap();
        let rows = link_decisions(&report, &set, &truth).unwrap();
        assert_eq!(rows.len(), 1);
        assert_eq!(rows[0].w, 0);
        assert_eq!(rows[0].c, set.groups.len());
        assert_eq!(rows[0].solved_bits, truth.len());
        assert_eq!(rows[0].links_left, 0);
        let ev = EvalReport {
            design: "synthetic".into(),
            scheme: "interlock".into(),
            metrics: score_key(&k, &truth).unwrap(),
            iterations: rows,
            hd: None,
            attack_runtime_ms: report.runtime_ms,
        };
        assert_eq!(EvalReport::from_json(&ev.to_json()).unwrap(), ev);
        assert_eq!(
            EvalReport::rows_from_csv(&ev.to_csv()).unwrap(),
            ev.iterations
        );
        assert!(ev.to_text().contains("precision 100.00%"));
        let empty = EvalReport {
            iterations: vec![],
            ..ev
        };
        assert_eq!(empty.to_csv().lines().count(), 1);
        assert!(EvalReport::rows_from_csv(&empty.to_csv())
            .unwrap()
            .is_empty());
    }
}
