// SPDX-License-Identifier: Apache-2.0

//! Model files.
//!
//! ```text
//! lockgraph-model 1
//! input_width 61
//! conv 32 32 32 1
//! sortpool_k 30
//! conv1d 16 32
//! kernel 5
//! dense 128
//! max_drnl 50
//! tensor <name> <dim>...
//! <row-major values>
//! ...
//! checksum <sha-256 of every preceding byte, hex>
//! ```

use std::fmt::Write as _;

use sha2::{Digest, Sha256};

use super::{GnnError, GnnModel, ModelSpec, Params};

const MAGIC: &str = "lockgraph-model 1";

fn hex_digest(bytes: &[u8]) -> String {
    Sha256::digest(bytes)
        .iter()
        .fold(String::new(), |mut s, b| {
            let _ = write!(s, "{b:02x}");
            s
        })
}

fn join<T: ToString>(xs: &[T]) -> String {
    xs.iter().map(T::to_string).collect::<Vec<_>>().join(" ")
}

pub fn write_model(model: &GnnModel) -> String {
    let s = &model.spec;
    let mut out = String::new();
    let _ = writeln!(out, "{MAGIC}");
    let _ = writeln!(out, "input_width {}", s.input_width);
    let _ = writeln!(out, "conv {}", join(&s.conv_channels));
    let _ = writeln!(out, "sortpool_k {}", s.sortpool_k);
    let _ = writeln!(out, "conv1d {}", join(&s.conv1d_channels));
    let _ = writeln!(out, "kernel {}", s.conv1d_kernel);
    let _ = writeln!(out, "dense {}", s.dense_width);
    let _ = writeln!(out, "max_drnl {}", s.max_drnl);
    for (name, shape, values) in model.params.tensors() {
        let _ = writeln!(out, "tensor {name} {}", join(&shape));
        let _ = writeln!(out, "{}", join(values));
    }
    let sum = hex_digest(out.as_bytes());
    let _ = writeln!(out, "checksum {sum}");
    out
}

fn bad(msg: impl Into<String>) -> GnnError {
    GnnError::Format(msg.into())
}

fn numbers<T: std::str::FromStr>(fields: &[&str], what: &str) -> Result<Vec<T>, GnnError> {
    fields
        .iter()
        .map(|f| {
            f.parse()
                .map_err(|_| bad(format!("bad {what} value `{f}`")))
        })
        .collect()
}

fn field<T: std::str::FromStr>(line: Option<&str>, key: &str) -> Result<Vec<T>, GnnError> {
    let line = line.ok_or_else(|| bad(format!("missing `{key}`")))?;
    let mut it = line.split_whitespace();
    if it.next() != Some(key) {
        return Err(bad(format!("expected `{key}`, found `{line}`")));
    }
    numbers(&it.collect::<Vec<_>>(), key)
}

fn one(v: Vec<usize>, key: &str) -> Result<usize, GnnError> {
    match v[..] {
        [x] => Ok(x),
        _ => Err(bad(format!("`{key}` takes one value"))),
    }
}

pub fn read_model(text: &str) -> Result<GnnModel, GnnError> {
    let body_end = text
        .rfind("checksum ")
        .ok_or_else(|| bad("missing checksum"))?;
    let (body, tail) = text.split_at(body_end);
    let claimed = tail["checksum ".len()..].trim();
    if hex_digest(body.as_bytes()) != claimed {
        return Err(bad("checksum mismatch"));
    }
    let mut lines = body.lines();
    if lines.next().map(str::trim) != Some(MAGIC) {
        return Err(bad("not a model file or unsupported version"));
    }
    let input_width = one(field(lines.next(), "input_width")?, "input_width")?;
    let conv_channels = field(lines.next(), "conv")?;
    let sortpool_k = one(field(lines.next(), "sortpool_k")?, "sortpool_k")?;
    let c1d: Vec<usize> = field(lines.next(), "conv1d")?;
    let conv1d_channels: [usize; 2] = c1d
        .try_into()
        .map_err(|_| bad("`conv1d` takes two values"))?;
    let conv1d_kernel = one(field(lines.next(), "kernel")?, "kernel")?;
    let dense_width = one(field(lines.next(), "dense")?, "dense")?;
    let max_drnl = one(field(lines.next(), "max_drnl")?, "max_drnl")?;
    let spec = ModelSpec {
        input_width,
        conv_channels,
        sortpool_k,
        conv1d_channels,
        conv1d_kernel,
        dense_width,
        max_drnl,
    };
    spec.check()?;

    let mut params = Params::zeros(&spec);
    let expected: Vec<(String, Vec<usize>)> = params
        .tensors()
        .into_iter()
        .map(|(n, s, _)| (n, s))
        .collect();
    for ((name, shape), slot) in expected.iter().zip(params.tensors_mut()) {
        let head = lines
            .next()
            .ok_or_else(|| bad(format!("missing tensor {name}")))?;
        let fields: Vec<&str> = head.split_whitespace().collect();
        if fields.len() < 2 || fields[0] != "tensor" || fields[1] != name {
            return Err(bad(format!("expected tensor {name}, found `{head}`")));
        }
        let dims: Vec<usize> = numbers(&fields[2..], "shape")?;
        if &dims != shape {
            return Err(bad(format!(
                "tensor {name} has shape {dims:?}, expected {shape:?}"
            )));
        }
        let row = lines
            .next()
            .ok_or_else(|| bad(format!("missing values for {name}")))?;
        let values: Vec<f64> = numbers(&row.split_whitespace().collect::<Vec<_>>(), name)?;
        if values.len() != slot.len() {
            return Err(bad(format!(
                "tensor {name} holds {} values, expected {}",
                values.len(),
                slot.len()
            )));
        }
        slot.copy_from_slice(&values);
    }
    if let Some(extra) = lines.find(|l| !l.trim().is_empty()) {
        return Err(bad(format!("unexpected line `{extra}`")));
    }
    Ok(GnnModel { spec, params })
}
