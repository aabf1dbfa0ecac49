//! Flat `key=value` config files, spliced into the argument list ahead of the
//! command-line flags so that flags win.

use std::ffi::OsString;
use std::path::Path;

use anyhow::{bail, Context, Result};

/// Parses `key = value` lines; `#` starts a comment.
pub fn read(path: &Path) -> Result<Vec<(String, String)>> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
    let mut out = Vec::new();
    for (no, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let Some((k, v)) = line.split_once('=') else {
            bail!("{}:{}: expected key=value", path.display(), no + 1);
        };
        out.push((k.trim().replace('_', "-"), v.trim().to_string()));
    }
    Ok(out)
}

/// Inserts the config entries as flags right after the subcommand name.
pub fn splice(args: &[OsString], subcommand: &str, entries: &[(String, String)]) -> Vec<OsString> {
    let pos = args.iter().position(|a| a == subcommand).map_or(args.len(), |p| p + 1);
    let mut out: Vec<OsString> = args[..pos].to_vec();
    for (k, v) in entries {
        match v.as_str() {
            "true" => out.push(format!("--{k}").into()),
            "false" => {}
            _ => {
                out.push(format!("--{k}").into());
                out.push(v.into());
            }
        }
    }
    out.extend(args[pos..].iter().cloned());
    out
}

/// Pulls `--config <file>` or `--config=<file>` out of the raw arguments.
pub fn take_config(args: &[OsString]) -> (Vec<OsString>, Option<OsString>) {
    let mut rest = Vec::with_capacity(args.len());
    let mut config = None;
    let mut it = args.iter();
    while let Some(a) = it.next() {
        let s = a.to_string_lossy();
        if s == "--config" {
            config = it.next().cloned();
        } else if let Some(v) = s.strip_prefix("--config=") {
            config = Some(v.into());
        } else {
            rest.push(a.clone());
        }
    }
    (rest, config)
}
