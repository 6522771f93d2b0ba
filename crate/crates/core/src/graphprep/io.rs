// SPDX-License-Identifier: Apache-2.0

//! Line-oriented text containers for datasets and attack graphs.
//!
//! Dataset:
//!
//! ```text
//! lockgraph-dataset 1
//! scenario self
//! h 2
//! max_drnl 50
//! split train <count>
//! sample <nodes> <edges> <1|0|?>
//! n <graph index>...
//! f <feature mask>...
//! d <drnl label>...
//! e <a>-<b>...
//! ```
//!
//! Graph:
//!
//! ```text
//! lockgraph-graph 1
//! nodes <count>
//! node <index> <netlist id> <name> <feature mask>
//! edge <u> <v>
//! keys <count>
//! link <driver> <sink> <group> <A|B> <key> <0|1>
//! group <link a> <link b> mux <site> | swb <swb> <slot>
//! structural <key> <0|1>
//! ```

use std::fmt::Write as _;
use std::str::FromStr;

use super::{
    AttackGraph, CandidateLink, Dataset, EnclosingSubgraph, GraphError, LinkGroup, LinkOrigin,
    LinkRole, LinkSet, Scenario,
};
use crate::netlist::NodeId;

const DATASET_MAGIC: &str = "lockgraph-dataset 1";
const GRAPH_MAGIC: &str = "lockgraph-graph 1";

fn join<T: ToString>(items: impl IntoIterator<Item = T>) -> String {
    items
        .into_iter()
        .map(|x| x.to_string())
        .collect::<Vec<_>>()
        .join(" ")
}

pub fn write_dataset(ds: &Dataset) -> String {
    let mut s = String::new();
    writeln!(s, "{DATASET_MAGIC}").unwrap();
    writeln!(s, "scenario {}", ds.scenario).unwrap();
    writeln!(s, "h {}", ds.h).unwrap();
    writeln!(s, "max_drnl {}", ds.max_drnl).unwrap();
    for (name, split) in [
        ("train", &ds.train),
        ("validation", &ds.validation),
        ("test", &ds.test),
    ] {
        writeln!(s, "split {name} {}", split.len()).unwrap();
        for g in split {
            let label = match g.label {
                Some(true) => "1",
                Some(false) => "0",
                None => "?",
            };
            writeln!(s, "sample {} {} {label}", g.len(), g.edges.len()).unwrap();
            writeln!(s, "n {}", join(&g.nodes)).unwrap();
            writeln!(s, "f {}", join(&g.features)).unwrap();
            writeln!(s, "d {}", join(&g.drnl)).unwrap();
            writeln!(
                s,
                "e {}",
                join(g.edges.iter().map(|(a, b)| format!("{a}-{b}")))
            )
            .unwrap();
        }
    }
    s
}

struct Lines<'a> {
    inner: std::iter::Enumerate<std::str::Lines<'a>>,
    line: usize,
}

impl<'a> Lines<'a> {
    fn new(text: &'a str) -> Self {
        Lines {
            inner: text.lines().enumerate(),
            line: 0,
        }
    }

    fn err(&self, msg: impl Into<String>) -> GraphError {
        GraphError::Format {
            line: self.line,
            msg: msg.into(),
        }
    }

    fn next_line(&mut self) -> Option<&'a str> {
        for (i, l) in self.inner.by_ref() {
            let t = l.trim();
            if !t.is_empty() && !t.starts_with('#') {
                self.line = i + 1;
                return Some(t);
            }
        }
        None
    }

    fn expect(&mut self, tag: &str) -> Result<Vec<&'a str>, GraphError> {
        let l = self
            .next_line()
            .ok_or_else(|| self.err(format!("unexpected end, wanted `{tag}`")))?;
        let mut f: Vec<&str> = l.split_whitespace().collect();
        if f.first() != Some(&tag) {
            return Err(self.err(format!("expected `{tag}`, got `{l}`")));
        }
        f.remove(0);
        Ok(f)
    }

    fn num<T: FromStr>(&self, s: &str) -> Result<T, GraphError> {
        s.parse().map_err(|_| self.err(format!("bad number `{s}`")))
    }

    fn nums<T: FromStr>(&self, f: &[&str], count: usize) -> Result<Vec<T>, GraphError> {
        if f.len() != count {
            return Err(self.err(format!("expected {count} values, got {}", f.len())));
        }
        f.iter().map(|x| self.num(x)).collect()
    }
}

pub fn read_dataset(text: &str) -> Result<Dataset, GraphError> {
    let mut r = Lines::new(text);
    if r.next_line() != Some(DATASET_MAGIC) {
        return Err(r.err("not a lockgraph dataset"));
    }
    let scenario: Scenario = r
        .expect("scenario")?
        .first()
        .copied()
        .unwrap_or("")
        .parse()?;
    let f = r.expect("h")?;
    let h = r.num(f.first().copied().unwrap_or(""))?;
    let f = r.expect("max_drnl")?;
    let max_drnl = r.num(f.first().copied().unwrap_or(""))?;
    let mut splits = Vec::with_capacity(3);
    for name in ["train", "validation", "test"] {
        let f = r.expect("split")?;
        if f.len() != 2 || f[0] != name {
            return Err(r.err(format!("expected split `{name}`")));
        }
        let count: usize = r.num(f[1])?;
        let mut samples = Vec::with_capacity(count);
        for _ in 0..count {
            let f = r.expect("sample")?;
            if f.len() != 3 {
                return Err(r.err("sample header needs 3 fields"));
            }
            let n: usize = r.num(f[0])?;
            let m: usize = r.num(f[1])?;
            let label = match f[2] {
                "1" => Some(true),
                "0" => Some(false),
                "?" => None,
                other => return Err(r.err(format!("bad label `{other}`"))),
            };
            let f = r.expect("n")?;
            let nodes = r.nums(&f, n)?;
            let f = r.expect("f")?;
            let features = r.nums(&f, n)?;
            let f = r.expect("d")?;
            let drnl = r.nums(&f, n)?;
            let f = r.expect("e")?;
            if f.len() != m {
                return Err(r.err(format!("expected {m} edges")));
            }
            let mut edges = Vec::with_capacity(m);
            for e in f {
                let (a, b) = e.split_once('-').ok_or_else(|| r.err("edge must be a-b"))?;
                let (a, b): (u32, u32) = (r.num(a)?, r.num(b)?);
                if a >= b || b as usize >= n {
                    return Err(r.err(format!("bad edge `{e}`")));
                }
                edges.push((a, b));
            }
            samples.push(EnclosingSubgraph {
                nodes,
                edges,
                features,
                drnl,
                label,
            });
        }
        splits.push(samples);
    }
    let test = splits.pop().unwrap();
    let validation = splits.pop().unwrap();
    let train = splits.pop().unwrap();
    Ok(Dataset {
        scenario,
        h,
        max_drnl,
        train,
        validation,
        test,
    })
}

pub fn write_graph(graph: &AttackGraph, links: &LinkSet) -> String {
    let mut s = String::new();
    writeln!(s, "{GRAPH_MAGIC}").unwrap();
    writeln!(s, "nodes {}", graph.node_count()).unwrap();
    for u in 0..graph.node_count() as u32 {
        writeln!(
            s,
            "node {u} {} {} {}",
            graph.node_id(u).0,
            graph.name(u),
            graph.feature_mask(u)
        )
        .unwrap();
    }
    for (u, v) in graph.edges() {
        writeln!(s, "edge {u} {v}").unwrap();
    }
    writeln!(s, "keys {}", links.key_count).unwrap();
    for l in &links.links {
        let role = match l.role {
            LinkRole::A => "A",
            LinkRole::B => "B",
        };
        writeln!(
            s,
            "link {} {} {} {role} {} {}",
            l.driver, l.sink, l.group, l.key, l.bit as u8
        )
        .unwrap();
    }
    for g in &links.groups {
        let origin = match g.origin {
            LinkOrigin::Mux { site } => format!("mux {site}"),
            LinkOrigin::Swb { swb, slot } => format!("swb {swb} {slot}"),
        };
        writeln!(s, "group {} {} {origin}", g.links[0], g.links[1]).unwrap();
    }
    for &(k, b) in &links.structural_bits {
        writeln!(s, "structural {k} {}", b as u8).unwrap();
    }
    s
}

pub fn read_graph(text: &str) -> Result<(AttackGraph, LinkSet), GraphError> {
    let mut r = Lines::new(text);
    if r.next_line() != Some(GRAPH_MAGIC) {
        return Err(r.err("not a lockgraph graph"));
    }
    let f = r.expect("nodes")?;
    let n: usize = r.num(f.first().copied().unwrap_or(""))?;
    let (mut features, mut ids, mut names) = (Vec::new(), Vec::new(), Vec::new());
    for i in 0..n {
        let f = r.expect("node")?;
        if f.len() != 4 || r.num::<usize>(f[0])? != i {
            return Err(r.err("node records must be `node <i> <id> <name> <mask>` in order"));
        }
        ids.push(NodeId(r.num(f[1])?));
        names.push(f[2].to_string());
        features.push(r.num(f[3])?);
    }
    let mut graph = AttackGraph::with_nodes(features, ids, names);
    let mut links = LinkSet::default();
    let bit = |r: &Lines, s: &str| match s {
        "0" => Ok(false),
        "1" => Ok(true),
        _ => Err(r.err(format!("bad bit `{s}`"))),
    };
    while let Some(l) = r.next_line() {
        let f: Vec<&str> = l.split_whitespace().collect();
        match (f[0], f.len()) {
            ("edge", 3) => {
                let (u, v): (u32, u32) = (r.num(f[1])?, r.num(f[2])?);
                if u as usize >= n || v as usize >= n || u == v {
                    return Err(r.err(format!("bad edge `{l}`")));
                }
                graph.add_edge(u, v);
            }
            ("keys", 2) => links.key_count = r.num(f[1])?,
            ("link", 7) => {
                let (driver, sink): (u32, u32) = (r.num(f[1])?, r.num(f[2])?);
                if driver as usize >= n || sink as usize >= n {
                    return Err(r.err("link endpoint out of range"));
                }
                links.links.push(CandidateLink {
                    driver,
                    sink,
                    group: r.num(f[3])?,
                    role: match f[4] {
                        "A" => LinkRole::A,
                        "B" => LinkRole::B,
                        other => return Err(r.err(format!("bad role `{other}`"))),
                    },
                    key: r.num(f[5])?,
                    bit: bit(&r, f[6])?,
                });
            }
            ("group", 5) | ("group", 6) => {
                let origin = match (f[3], f.len()) {
                    ("mux", 5) => LinkOrigin::Mux { site: r.num(f[4])? },
                    ("swb", 6) => LinkOrigin::Swb {
                        swb: r.num(f[4])?,
                        slot: r.num(f[5])?,
                    },
                    _ => return Err(r.err(format!("bad group `{l}`"))),
                };
                links.groups.push(LinkGroup {
                    links: [r.num(f[1])?, r.num(f[2])?],
                    origin,
                });
            }
            ("structural", 3) => links.structural_bits.push((r.num(f[1])?, bit(&r, f[2])?)),
            _ => return Err(r.err(format!("unrecognised record `{l}`"))),
        }
    }
    for (i, g) in links.groups.iter().enumerate() {
        let ok = g
            .links
            .iter()
            .all(|&l| l < links.links.len() && links.links[l].group == i)
            && links.links[g.links[0]].sink == links.links[g.links[1]].sink;
        if !ok {
            return Err(GraphError::Format {
                line: 0,
                msg: format!("group {i} is malformed"),
            });
        }
    }
    if links.links.iter().any(|l| l.key >= links.key_count) {
        return Err(GraphError::Format {
            line: 0,
            msg: "link key index out of range".into(),
        });
    }
    Ok((graph, links))
}
