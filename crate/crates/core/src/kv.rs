//! `key=value` text used by config files, checkpoint manifests and reports.

use std::collections::BTreeMap;
use std::fmt::Display;
use std::str::FromStr;

use crate::error::{Result, SrbError};

/// Parses `key=value` lines. `#` starts a comment line; blank lines are skipped.
/// Duplicate keys are an error.
pub fn parse(text: &str) -> Result<BTreeMap<String, String>> {
    let mut out = BTreeMap::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| {
            SrbError::argument(format!("line {}: expected key=value, got {line:?}", idx + 1))
        })?;
        let key = key.trim().to_string();
        if out.insert(key.clone(), value.trim().to_string()).is_some() {
            return Err(SrbError::argument(format!("line {}: duplicate key {key}", idx + 1)));
        }
    }
    Ok(out)
}

/// Parses whitespace-separated `key=value` tokens on a single line.
pub fn parse_inline(line: &str) -> Result<BTreeMap<String, String>> {
    parse(&line.split_whitespace().collect::<Vec<_>>().join("\n"))
}

pub(crate) fn value<T>(key: &str, raw: &str) -> Result<T>
where
    T: FromStr,
    T::Err: Display,
{
    raw.parse()
        .map_err(|e| SrbError::argument(format!("{key}={raw}: {e}")))
}

pub(crate) fn flag(key: &str, raw: &str) -> Result<bool> {
    match raw {
        "true" | "1" | "yes" => Ok(true),
        "false" | "0" | "no" => Ok(false),
        _ => Err(SrbError::argument(format!("{key}={raw}: expected true or false"))),
    }
}
