// SPDX-License-Identifier: Apache-2.0

//! Key assignments and the `k<i>=<0|1|X>` key file format.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum KeyBit {
    Zero,
    One,
    Unresolved,
}

impl KeyBit {
    pub fn from_bool(b: bool) -> Self {
        if b {
            KeyBit::One
        } else {
            KeyBit::Zero
        }
    }

    pub fn value(self) -> Option<bool> {
        match self {
            KeyBit::Zero => Some(false),
            KeyBit::One => Some(true),
            KeyBit::Unresolved => None,
        }
    }

    pub fn is_resolved(self) -> bool {
        self != KeyBit::Unresolved
    }

    fn symbol(self) -> char {
        match self {
            KeyBit::Zero => '0',
            KeyBit::One => '1',
            KeyBit::Unresolved => 'X',
        }
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum KeyError {
    #[error("line {line}: expected `k<i>=<0|1|X>`, got `{text}`")]
    Syntax { line: usize, text: String },
    #[error("key index {0} appears twice")]
    Duplicate(usize),
    #[error("key indices are not contiguous: k{0} missing")]
    Gap(usize),
}

/// Map from key index `0..K` to a bit value.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct KeyAssignment {
    bits: Vec<KeyBit>,
}

impl KeyAssignment {
    pub fn unresolved(len: usize) -> Self {
        KeyAssignment {
            bits: vec![KeyBit::Unresolved; len],
        }
    }

    pub fn from_bits(bits: Vec<KeyBit>) -> Self {
        KeyAssignment { bits }
    }

    pub fn from_bools(bits: &[bool]) -> Self {
        KeyAssignment {
            bits: bits.iter().map(|&b| KeyBit::from_bool(b)).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.bits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bits.is_empty()
    }

    pub fn get(&self, index: usize) -> KeyBit {
        self.bits[index]
    }

    pub fn set(&mut self, index: usize, bit: KeyBit) {
        self.bits[index] = bit;
    }

    pub fn bits(&self) -> &[KeyBit] {
        &self.bits
    }

    pub fn resolved_count(&self) -> usize {
        self.bits.iter().filter(|b| b.is_resolved()).count()
    }

    pub fn unresolved_indices(&self) -> Vec<usize> {
        (0..self.bits.len())
            .filter(|&i| !self.bits[i].is_resolved())
            .collect()
    }

    /// Serialises to one `k<i>=<bit>` line per key bit.
    pub fn to_key_file(&self) -> String {
        self.to_string()
    }
}

impl fmt::Display for KeyAssignment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, b) in self.bits.iter().enumerate() {
            writeln!(f, "k{i}={}", b.symbol())?;
        }
        Ok(())
    }
}

impl FromStr for KeyAssignment {
    type Err = KeyError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let mut slots: Vec<Option<KeyBit>> = Vec::new();
        for (i, raw) in s.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let bad = || KeyError::Syntax {
                line: i + 1,
                text: line.to_string(),
            };
            let (lhs, rhs) = line.split_once('=').ok_or_else(bad)?;
            let index: usize = lhs
                .trim()
                .strip_prefix('k')
                .and_then(|d| d.parse().ok())
                .ok_or_else(bad)?;
            let bit = match rhs.trim() {
                "0" => KeyBit::Zero,
                "1" => KeyBit::One,
                "X" | "x" => KeyBit::Unresolved,
                _ => return Err(bad()),
            };
            if slots.len() <= index {
                slots.resize(index + 1, None);
            }
            if slots[index].replace(bit).is_some() {
                return Err(KeyError::Duplicate(index));
            }
        }
        let bits = slots
            .into_iter()
            .enumerate()
            .map(|(i, b)| b.ok_or(KeyError::Gap(i)))
            .collect::<Result<_, _>>()?;
        Ok(KeyAssignment { bits })
    }
}
