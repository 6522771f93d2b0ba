// SPDX-License-Identifier: Apache-2.0

//! Flat `key = value` config files, merged into the argument list so that
//! explicit flags win.

use std::path::Path;

use anyhow::{bail, Context, Result};
use clap::{ArgAction, Command};

/// Parses `key = value` lines. Blank lines and `#` comments are skipped.
pub fn parse_config(text: &str) -> Result<Vec<(String, String)>> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let Some((k, v)) = line.split_once('=') else {
            bail!(
                "config line {}: expected `key = value`, found `{line}`",
                i + 1
            );
        };
        let key = k.trim().replace('_', "-");
        if key.is_empty() {
            bail!("config line {}: empty key", i + 1);
        }
        out.push((key, v.trim().to_string()));
    }
    Ok(out)
}

/// Value of `--config` in raw arguments, if present.
fn config_path(args: &[String]) -> Option<&str> {
    let mut it = args.iter();
    while let Some(a) = it.next() {
        if a == "--" {
            break;
        }
        if a == "--config" {
            return it.next().map(String::as_str);
        }
        if let Some(p) = a.strip_prefix("--config=") {
            return Some(p);
        }
    }
    None
}

/// Index of the subcommand token, skipping global options and their values.
fn subcommand_index(cmd: &Command, args: &[String]) -> Option<usize> {
    let mut i = 1;
    while i < args.len() {
        let a = &args[i];
        if let Some(long) = a.strip_prefix("--") {
            let takes_value = !long.contains('=')
                && cmd
                    .get_arguments()
                    .find(|x| x.get_long() == Some(long))
                    .is_some_and(|x| x.get_action().takes_values());
            i += if takes_value { 2 } else { 1 };
        } else if a.starts_with('-') {
            i += 1;
        } else {
            return cmd.find_subcommand(a).map(|_| i);
        }
    }
    None
}

fn given(args: &[String], key: &str) -> bool {
    let eq = format!("--{key}=");
    args.iter()
        .take_while(|a| *a != "--")
        .any(|a| a.strip_prefix("--") == Some(key) || a.starts_with(&eq))
}

/// Inserts config-file settings after the subcommand token, skipping any
/// option already given on the command line.
pub fn merge_config(cmd: &Command, args: Vec<String>) -> Result<Vec<String>> {
    let Some(path) = config_path(&args) else {
        return Ok(args);
    };
    let text = std::fs::read_to_string(Path::new(path))
        .with_context(|| format!("reading config file {path}"))?;
    let entries = parse_config(&text)?;
    let Some(at) = subcommand_index(cmd, &args) else {
        return Ok(args);
    };
    let sub = cmd.find_subcommand(&args[at]).expect("subcommand exists");
    let mut injected = Vec::new();
    for (key, value) in entries {
        let arg = sub
            .get_arguments()
            .chain(cmd.get_arguments())
            .find(|a| a.get_long() == Some(key.as_str()))
            .with_context(|| {
                format!(
                    "config key `{key}` is not an option of `{}`",
                    sub.get_name()
                )
            })?;
        if key == "config" {
            bail!("config files cannot include other config files");
        }
        if given(&args, &key) {
            continue;
        }
        match arg.get_action() {
            ArgAction::SetTrue => match value.as_str() {
                "true" | "1" | "yes" => injected.push(format!("--{key}")),
                "false" | "0" | "no" => {}
                other => bail!("config key `{key}` expects true or false, found `{other}`"),
            },
            _ => injected.push(format!("--{key}={value}")),
        }
    }
    let mut out = args;
    out.splice(at + 1..at + 1, injected);
    Ok(out)
}
