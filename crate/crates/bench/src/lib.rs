// SPDX-License-Identifier: Apache-2.0

//! Shared inputs for the criterion benchmarks in `benches/`.

use std::path::PathBuf;

use lockgraph::netlist::parse_bench;
use lockgraph::Netlist;

/// Path of a circuit in the workspace `benchmarks/` directory.
pub fn benchmark_path(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("../../benchmarks")
        .join(format!("{name}.bench"))
}

/// Parses a bundled benchmark circuit.
///
/// Panics if the file is missing or malformed; benches have no other
/// sensible recovery.
pub fn load(name: &str) -> Netlist {
    let path = benchmark_path(name);
    let text = std::fs::read_to_string(&path)
        .unwrap_or_else(|e| panic!("reading {}: {e}", path.display()));
    parse_bench(&text, name).unwrap_or_else(|e| panic!("parsing {name}: {e}"))
}
