// SPDX-License-Identifier: Apache-2.0

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::sim::{exhaustive_words, lane_mask};
use super::{CompiledSim, InputVector, Netlist, NetlistError};
use crate::key::KeyAssignment;

/// Largest input count swept exhaustively.
pub const EXHAUSTIVE_LIMIT: usize = 16;

/// Outcome of a simulation-based equivalence check.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EquivReport {
    pub patterns: u64,
    pub exhaustive: bool,
    /// First differing input pattern, if any.
    pub counterexample: Option<InputVector>,
}

impl EquivReport {
    pub fn equivalent(&self) -> bool {
        self.counterexample.is_none()
    }
}

/// Compares two designs with identical interfaces: exhaustively when the
/// input count is at most [`EXHAUSTIVE_LIMIT`], otherwise on `random_patterns`
/// seeded random inputs.
pub fn check_equivalence(
    a: &Netlist,
    key_a: Option<&KeyAssignment>,
    b: &Netlist,
    key_b: Option<&KeyAssignment>,
    random_patterns: u64,
    seed: u64,
) -> Result<EquivReport, NetlistError> {
    if a.inputs().len() != b.inputs().len() {
        return Err(NetlistError::Width {
            expected: a.inputs().len(),
            got: b.inputs().len(),
        });
    }
    if a.outputs().len() != b.outputs().len() {
        return Err(NetlistError::Width {
            expected: a.outputs().len(),
            got: b.outputs().len(),
        });
    }
    let sa = CompiledSim::new(a, key_a)?;
    let sb = CompiledSim::new(b, key_b)?;
    let n_in = a.inputs().len();
    let exhaustive = n_in <= EXHAUSTIVE_LIMIT;
    let total = if exhaustive {
        1u64 << n_in
    } else {
        random_patterns
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut base = 0u64;
    let (mut scratch, mut oa, mut ob) = (Vec::new(), Vec::new(), Vec::new());
    while base < total {
        let words = if exhaustive {
            exhaustive_words(n_in, base)
        } else {
            (0..n_in).map(|_| rng.random::<u64>()).collect()
        };
        let mask = lane_mask(total, base);
        sa.eval_words_with(&words, &mut scratch, &mut oa);
        sb.eval_words_with(&words, &mut scratch, &mut ob);
        let diff = oa.iter().zip(&ob).fold(0u64, |acc, (x, y)| acc | (x ^ y)) & mask;
        if diff != 0 {
            let lane = diff.trailing_zeros();
            let bits = words.iter().map(|w| (w >> lane) & 1 == 1).collect();
            return Ok(EquivReport {
                patterns: total,
                exhaustive,
                counterexample: Some(InputVector(bits)),
            });
        }
        base += 64;
    }
    Ok(EquivReport {
        patterns: total,
        exhaustive,
        counterexample: None,
    })
}
