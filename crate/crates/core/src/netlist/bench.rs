// SPDX-License-Identifier: Apache-2.0

//! BENCH reader and writer.
//!
//! Dialect: `INPUT(x)`, `OUTPUT(y)` and `y = GATE(a, b, ...)` lines, `#`
//! comments. Gate names are case-insensitive on input and written upper-case.
//! The 2:1 multiplexer is the extension `y = MUX(sel, in0, in1)`. Inputs named
//! `keyinput<i>` are key inputs.

use std::collections::HashMap;
use std::fmt::Write as _;

use super::{GateFunction, Netlist, NetlistError, NodeId, NodeKind};

pub const KEY_INPUT_PREFIX: &str = "keyinput";

enum Line<'a> {
    Input(&'a str),
    Output(&'a str),
    Gate {
        out: &'a str,
        function: GateFunction,
        args: Vec<&'a str>,
    },
}

fn valid_name(s: &str) -> bool {
    !s.is_empty()
        && !s
            .chars()
            .any(|c| c.is_whitespace() || matches!(c, '(' | ')' | ',' | '=' | '#'))
}

fn paren_arg(rest: &str, line: usize) -> Result<&str, NetlistError> {
    let rest = rest.trim_start();
    let inner = rest
        .strip_prefix('(')
        .and_then(|r| r.trim_end().strip_suffix(')'))
        .ok_or_else(|| NetlistError::Syntax {
            line,
            msg: "expected `(name)`".into(),
        })?
        .trim();
    if !valid_name(inner) {
        return Err(NetlistError::Syntax {
            line,
            msg: format!("bad signal name `{inner}`"),
        });
    }
    Ok(inner)
}

fn parse_line(text: &str, line: usize) -> Result<Option<Line<'_>>, NetlistError> {
    let text = match text.find('#') {
        Some(i) => &text[..i],
        None => text,
    }
    .trim();
    if text.is_empty() {
        return Ok(None);
    }
    if let Some((lhs, rhs)) = text.split_once('=') {
        let out = lhs.trim();
        if !valid_name(out) {
            return Err(NetlistError::Syntax {
                line,
                msg: format!("bad signal name `{out}`"),
            });
        }
        let rhs = rhs.trim();
        let open = rhs.find('(').ok_or_else(|| NetlistError::Syntax {
            line,
            msg: "expected `GATE(...)`".into(),
        })?;
        let fname = rhs[..open].trim();
        let function =
            GateFunction::from_bench_name(fname).ok_or_else(|| NetlistError::Syntax {
                line,
                msg: format!("unknown gate `{fname}`"),
            })?;
        let body = rhs[open + 1..]
            .strip_suffix(')')
            .ok_or_else(|| NetlistError::Syntax {
                line,
                msg: "missing `)`".into(),
            })?;
        let args: Vec<&str> = body.split(',').map(str::trim).collect();
        if args.iter().any(|a| !valid_name(a)) {
            return Err(NetlistError::Syntax {
                line,
                msg: "empty or malformed gate argument".into(),
            });
        }
        if !function.arity_ok(args.len()) {
            return Err(NetlistError::Arity {
                line,
                gate: function,
                got: args.len(),
            });
        }
        return Ok(Some(Line::Gate {
            out,
            function,
            args,
        }));
    }
    let upper = text.get(..6).map(|s| s.to_ascii_uppercase());
    match upper.as_deref() {
        Some("OUTPUT") => Ok(Some(Line::Output(paren_arg(&text[6..], line)?))),
        _ if text
            .get(..5)
            .is_some_and(|p| p.eq_ignore_ascii_case("INPUT")) =>
        {
            Ok(Some(Line::Input(paren_arg(&text[5..], line)?)))
        }
        _ => Err(NetlistError::Syntax {
            line,
            msg: format!("unrecognised statement `{text}`"),
        }),
    }
}

fn key_index(name: &str) -> Option<usize> {
    let digits = name.strip_prefix(KEY_INPUT_PREFIX)?;
    if digits.is_empty() || !digits.bytes().all(|b| b.is_ascii_digit()) {
        return None;
    }
    digits.parse().ok()
}

/// Parses BENCH text into a validated netlist.
pub fn parse_bench(text: &str, name: &str) -> Result<Netlist, NetlistError> {
    let mut lines = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        if let Some(l) = parse_line(raw, i + 1)? {
            lines.push((i + 1, l));
        }
    }

    // Declaration pass: fix node ids in order of appearance.
    let mut ids: HashMap<&str, NodeId> = HashMap::new();
    let mut next = 0u32;
    for (line, l) in &lines {
        let name = match l {
            Line::Input(n) => *n,
            Line::Gate { out, .. } => *out,
            Line::Output(_) => continue,
        };
        if ids.insert(name, NodeId(next)).is_some() {
            return Err(NetlistError::Duplicate {
                line: *line,
                name: name.to_string(),
            });
        }
        next += 1;
    }

    let resolve = |name: &str, line: usize| {
        ids.get(name)
            .copied()
            .ok_or_else(|| NetlistError::Undeclared {
                line,
                name: name.to_string(),
            })
    };

    let mut netlist = Netlist::new(name);
    let mut outputs = Vec::new();
    for (line, l) in &lines {
        match l {
            Line::Input(n) => {
                let res = match key_index(n) {
                    Some(k) => netlist.add_key_input(k),
                    None => netlist.add_input(*n),
                };
                res.map_err(|e| with_line(e, *line))?;
            }
            Line::Gate {
                out,
                function,
                args,
            } => {
                let fanin = args
                    .iter()
                    .map(|a| resolve(a, *line))
                    .collect::<Result<Vec<_>, _>>()?;
                netlist
                    .add_gate(*out, *function, fanin)
                    .map_err(|e| with_line(e, *line))?;
            }
            Line::Output(n) => outputs.push(resolve(n, *line)?),
        }
    }
    for o in outputs {
        netlist.add_output(o);
    }
    netlist.validate()?;
    Ok(netlist)
}

fn with_line(e: NetlistError, line: usize) -> NetlistError {
    match e {
        NetlistError::Duplicate { name, .. } => NetlistError::Duplicate { line, name },
        NetlistError::Arity { gate, got, .. } => NetlistError::Arity { line, gate, got },
        other => other,
    }
}

/// Serialises a netlist. Inputs come first, then key inputs by index, then
/// outputs, then gates in node order.
pub fn write_bench(netlist: &Netlist) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "# {}", netlist.name);
    for &i in netlist.inputs() {
        let _ = writeln!(s, "INPUT({})", netlist.node(i).name);
    }
    for &k in netlist.keys() {
        let _ = writeln!(s, "INPUT({})", netlist.node(k).name);
    }
    for &o in netlist.outputs() {
        let _ = writeln!(s, "OUTPUT({})", netlist.node(o).name);
    }
    for node in netlist.nodes() {
        if let NodeKind::Gate(g) = node.kind {
            let args: Vec<&str> = node
                .fanin
                .iter()
                .map(|f| netlist.node(*f).name.as_str())
                .collect();
            let _ = writeln!(s, "{} = {}({})", node.name, g.bench_name(), args.join(", "));
        }
    }
    s
}
