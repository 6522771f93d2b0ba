// SPDX-License-Identifier: Apache-2.0

//! Lock gate-level netlists with MUX-based obfuscation and recover the key
//! without an oracle by GNN link prediction.
//!
//! The pipeline runs [`locking`] → [`graphprep`] → [`gnn`] → [`attack`] and is
//! judged by [`evalkit`]. Only `evalkit` and dataset construction for a
//! circuit library ever read a correct key; the attack works from the public
//! view of a locked design.

pub mod attack;
pub mod evalkit;
pub mod gnn;
pub mod graphprep;
pub mod key;
pub mod locking;
pub mod netlist;
pub mod synth;

pub use key::{KeyAssignment, KeyBit};
pub use locking::{LockMeta, LockedDesign, PublicDesign, Scheme};
pub use netlist::{GateFunction, Netlist, NodeId};
