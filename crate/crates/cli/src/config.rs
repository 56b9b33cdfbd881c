//! Config-file plumbing for the CLI: flat TOML configs, `--set` dotted-path
//! overrides, `--vary` grid axes, and output-root resolution.
//!
//! The config schema is exactly the flat field list of
//! [`cleanstream_core::RunConfig`]; every key is optional and unknown keys
//! are rejected by name. Overrides are applied onto the parsed TOML table
//! *before* deserialization so they are type-checked against the schema like
//! file values.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use cleanstream_core::RunConfig;
use toml::{Table, Value};

/// Environment variable naming the directory every relative `output_dir`
/// is resolved against.
pub const OUT_ROOT_ENV: &str = "CLEANSTREAM_OUT_ROOT";

/// Output directory used when the config leaves `output_dir` empty.
pub const DEFAULT_OUTPUT_DIR: &str = "results";

/// Reads a flat TOML config file into a table; `None` starts from an empty
/// table (all defaults).
pub fn load_table(path: Option<&Path>) -> Result<Table> {
    match path {
        None => Ok(Table::new()),
        Some(p) => {
            let text = std::fs::read_to_string(p)
                .with_context(|| format!("cannot read config file {}", p.display()))?;
            text.parse::<Table>()
                .with_context(|| format!("cannot parse config file {}", p.display()))
        }
    }
}

/// Parses one `KEY=VALUE` override into its key path and value.
pub fn parse_set(arg: &str) -> Result<(&str, Value)> {
    let Some((key, raw)) = arg.split_once('=') else {
        bail!("override '{arg}' is not of the form KEY=VALUE");
    };
    let key = key.trim();
    if key.is_empty() {
        bail!("override '{arg}' has an empty key");
    }
    Ok((key, parse_value(raw.trim())))
}

/// Interprets an override value with TOML syntax (numbers, booleans,
/// arrays, quoted strings); anything that does not parse is taken as a
/// bare string, so `--set normalizer=clean` needs no quoting.
fn parse_value(raw: &str) -> Value {
    format!("v = {raw}")
        .parse::<Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| Value::String(raw.to_string()))
}

/// Inserts `value` at a dotted `key` path, creating intermediate tables.
/// The shipped schema is flat, so in practice the path is a single key,
/// but nested paths behave the obvious way.
pub fn apply_override(table: &mut Table, key: &str, value: Value) -> Result<()> {
    let mut parts = key.split('.').peekable();
    let mut current = table;
    while let Some(part) = parts.next() {
        if part.is_empty() {
            bail!("override key '{key}' has an empty path segment");
        }
        if parts.peek().is_none() {
            current.insert(part.to_string(), value);
            return Ok(());
        }
        current = current
            .entry(part.to_string())
            .or_insert_with(|| Value::Table(Table::new()))
            .as_table_mut()
            .with_context(|| format!("config key '{part}' in '{key}' is not a table"))?;
    }
    unreachable!("split always yields at least one part");
}

/// Deserializes a fully-assembled table into a run config, naming the
/// offending key on type errors or unknown fields.
pub fn table_to_config(table: Table) -> Result<RunConfig> {
    Value::Table(table)
        .try_into::<RunConfig>()
        .context("invalid config")
}

/// Loads a config file (optional) and applies `--set` overrides in order.
pub fn load_config(path: Option<&Path>, sets: &[String]) -> Result<RunConfig> {
    let mut table = load_table(path)?;
    for s in sets {
        let (key, value) = parse_set(s)?;
        apply_override(&mut table, key, value)?;
    }
    table_to_config(table)
}

/// One `--vary KEY=V1,V2,...` axis of a grid.
#[derive(Debug, Clone, PartialEq)]
pub struct VaryAxis {
    pub key: String,
    pub values: Vec<Value>,
}

/// Parses a `--vary` argument. Values are comma-separated at bracket depth
/// zero, so array values such as `hidden_layers=[8],[8,8]` split correctly.
pub fn parse_vary(arg: &str) -> Result<VaryAxis> {
    let Some((key, raw)) = arg.split_once('=') else {
        bail!("vary axis '{arg}' is not of the form KEY=V1,V2,...");
    };
    let key = key.trim();
    if key.is_empty() {
        bail!("vary axis '{arg}' has an empty key");
    }
    let values: Vec<Value> = split_top_level(raw)
        .into_iter()
        .map(|v| parse_value(v.trim()))
        .collect();
    if values.is_empty() {
        bail!("vary axis '{key}' lists no values");
    }
    Ok(VaryAxis {
        key: key.to_string(),
        values,
    })
}

/// Splits on commas that are not inside `[...]`.
fn split_top_level(raw: &str) -> Vec<&str> {
    let mut parts = Vec::new();
    let mut depth = 0usize;
    let mut start = 0usize;
    for (i, c) in raw.char_indices() {
        match c {
            '[' => depth += 1,
            ']' => depth = depth.saturating_sub(1),
            ',' if depth == 0 => {
                parts.push(&raw[start..i]);
                start = i + 1;
            }
            _ => {}
        }
    }
    parts.push(&raw[start..]);
    parts.retain(|p| !p.trim().is_empty());
    parts
}

/// Expands a base table across the cross product of the vary axes, first
/// axis outermost. Returns each cell's human-readable assignment label
/// alongside its table. No axes yields the base table alone.
pub fn expand_grid(base: &Table, axes: &[VaryAxis]) -> Result<Vec<(String, Table)>> {
    let mut cells = vec![(String::new(), base.clone())];
    for axis in axes {
        let mut next = Vec::with_capacity(cells.len() * axis.values.len());
        for (label, table) in &cells {
            for value in &axis.values {
                let mut t = table.clone();
                apply_override(&mut t, &axis.key, value.clone())?;
                let assignment = format!("{}={}", axis.key, display_value(value));
                let label = if label.is_empty() {
                    assignment
                } else {
                    format!("{label} {assignment}")
                };
                next.push((label, t));
            }
        }
        cells = next;
    }
    Ok(cells)
}

fn display_value(v: &Value) -> String {
    match v {
        Value::String(s) => s.clone(),
        other => other.to_string(),
    }
}

/// Resolves the effective output directory: empty configs fall back to
/// `results`, and relative paths are joined under the `CLEANSTREAM_OUT_ROOT`
/// directory when that variable is set. Absolute paths win over the root.
pub fn resolve_output_dir(configured: &str, out_root: Option<&str>) -> PathBuf {
    let dir = if configured.is_empty() {
        Path::new(DEFAULT_OUTPUT_DIR)
    } else {
        Path::new(configured)
    };
    match out_root {
        Some(root) if !root.is_empty() && dir.is_relative() => Path::new(root).join(dir),
        _ => dir.to_path_buf(),
    }
}
