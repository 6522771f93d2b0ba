// SPDX-License-Identifier: Apache-2.0

//! MUX-based locking: random 2:1 MUX key-gates and routing blocks of switch
//! boxes that hide embedded timing paths.
//!
//! A [`LockedDesign`] carries the locked netlist, the public [`LockMeta`]
//! (MUX and switch-box groupings, as recovered by reverse engineering) and
//! the correct key. The key is only reachable through
//! [`LockedDesign::correct_key`]; attack code receives a [`PublicDesign`].

mod interlock;
mod meta;
mod paths;
mod random_mux;

pub use interlock::{lock_interlock, stage_count, InterlockConfig};
pub use meta::{LockMeta, MuxSite, Swb};
pub use paths::{select_timing_paths, TimingPath, PATH_RETRY_BUDGET};
pub use random_mux::lock_random_mux;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::key::KeyAssignment;
use crate::netlist::{Netlist, NetlistError, NodeId};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Scheme {
    RandomMux,
    InterLock,
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Scheme::RandomMux => "mux",
            Scheme::InterLock => "interlock",
        })
    }
}

impl FromStr for Scheme {
    type Err = LockError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "mux" | "random-mux" => Ok(Scheme::RandomMux),
            "interlock" => Ok(Scheme::InterLock),
            other => Err(LockError::Meta(format!("unknown scheme `{other}`"))),
        }
    }
}

#[derive(Debug, Error)]
pub enum LockError {
    #[error("key size {requested} exceeds the {available} lockable wires")]
    KeyTooLarge { requested: usize, available: usize },
    #[error("no distinct false wire available for the wire into `{sink}`")]
    SeedExhausted { sink: String },
    #[error("found only {found} of {requested} disjoint timing paths of length {length}")]
    PathsInfeasible {
        found: usize,
        requested: usize,
        length: usize,
    },
    #[error("routing block size must be a power of two and at least 4, got {0}")]
    BadBlockSize(usize),
    #[error("netlist must be acyclic before locking")]
    Cyclic,
    #[error("metadata: {0}")]
    Meta(String),
    #[error(transparent)]
    Netlist(#[from] NetlistError),
}

/// One random MUX key-gate with its ground truth.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MuxKeyGate {
    pub mux_node: NodeId,
    pub key_input: usize,
    pub true_wire: NodeId,
    pub false_wire: NodeId,
    pub sink: NodeId,
    pub pin: usize,
    pub correct_bit: bool,
}

/// A routing block: its switch boxes (stage-major) and the original timing
/// paths embedded in it, each listed from the first stage to the last.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct KeyRb {
    pub size: usize,
    pub swbs: Vec<Swb>,
    pub embedded_paths: Vec<TimingPath>,
}

impl KeyRb {
    pub fn stage_count(&self) -> usize {
        stage_count(self.size)
    }

    pub fn key_count(&self) -> usize {
        3 * self.swbs.len()
    }
}

#[derive(Debug, Clone)]
pub struct LockedDesign {
    pub netlist: Netlist,
    pub meta: LockMeta,
    pub mux_gates: Vec<MuxKeyGate>,
    pub keyrbs: Vec<KeyRb>,
    correct_key: KeyAssignment,
}

/// What an oracle-less attacker holds: the locked netlist and its
/// reverse-engineered key-gate groupings.
#[derive(Debug, Clone, Copy)]
pub struct PublicDesign<'a> {
    pub netlist: &'a Netlist,
    pub meta: &'a LockMeta,
}

impl LockedDesign {
    pub(crate) fn new(
        netlist: Netlist,
        meta: LockMeta,
        mux_gates: Vec<MuxKeyGate>,
        keyrbs: Vec<KeyRb>,
        correct_key: KeyAssignment,
    ) -> Self {
        LockedDesign {
            netlist,
            meta,
            mux_gates,
            keyrbs,
            correct_key,
        }
    }

    /// Rebuilds a design from files: the locked netlist, its metadata and the
    /// key file written at locking time.
    pub fn from_parts(
        netlist: Netlist,
        meta: LockMeta,
        correct_key: KeyAssignment,
    ) -> Result<Self, LockError> {
        if correct_key.len() != netlist.keys().len() || meta.key_count != netlist.keys().len() {
            return Err(LockError::Meta(format!(
                "key length {} does not match {} key inputs",
                correct_key.len(),
                netlist.keys().len()
            )));
        }
        Ok(LockedDesign {
            netlist,
            meta,
            mux_gates: Vec::new(),
            keyrbs: Vec::new(),
            correct_key,
        })
    }

    pub fn scheme(&self) -> Scheme {
        self.meta.scheme
    }

    pub fn key_count(&self) -> usize {
        self.netlist.keys().len()
    }

    /// Ground truth. Evaluation and library-dataset construction only.
    pub fn correct_key(&self) -> &KeyAssignment {
        &self.correct_key
    }

    pub fn public(&self) -> PublicDesign<'_> {
        PublicDesign {
            netlist: &self.netlist,
            meta: &self.meta,
        }
    }
}
