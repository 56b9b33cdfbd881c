//! CSV ingest: raw string tables and shared cell-parsing rules.

use std::fs::File;
use std::io::Read;
use std::path::Path;

use crate::error::{Error, Result};

/// A CSV file read as strings: one header row plus data rows.
#[derive(Debug, Clone)]
pub struct RawTable {
    pub headers: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl RawTable {
    /// Index of the column whose trimmed name matches `name` case-insensitively.
    pub fn column_index(&self, name: &str) -> Option<usize> {
        let want = name.trim().to_ascii_lowercase();
        self.headers
            .iter()
            .position(|h| h.trim().to_ascii_lowercase() == want)
    }
}

/// Reads a comma-separated UTF-8 file with a header row into memory.
pub fn load_raw_csv(path: impl AsRef<Path>) -> Result<RawTable> {
    load_raw_csv_reader(File::open(path)?)
}

/// [`load_raw_csv`] over any reader (handy for tests).
pub fn load_raw_csv_reader(reader: impl Read) -> Result<RawTable> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(false)
        .from_reader(reader);
    let headers = rdr.headers()?.iter().map(str::to_string).collect();
    let mut rows = Vec::new();
    for record in rdr.records() {
        let record = record?;
        rows.push(record.iter().map(str::to_string).collect());
    }
    Ok(RawTable { headers, rows })
}

/// True when a cell encodes a missing value: empty, `NaN`, `Infinity`, or
/// `-Infinity` (case-insensitive, surrounding whitespace ignored).
pub fn is_missing(cell: &str) -> bool {
    let t = cell.trim();
    if t.is_empty() {
        return true;
    }
    let lower = t.to_ascii_lowercase();
    matches!(lower.as_str(), "nan" | "infinity" | "-infinity")
}

/// Parses a numeric feature cell. `Ok(None)` means missing or non-finite;
/// unparseable text is an ingest error naming the row and column.
pub fn parse_numeric_cell(cell: &str, row: usize, column: &str) -> Result<Option<f64>> {
    if is_missing(cell) {
        return Ok(None);
    }
    match cell.trim().parse::<f64>() {
        Ok(v) if v.is_finite() => Ok(Some(v)),
        Ok(_) => Ok(None),
        Err(_) => Err(Error::Ingest {
            row,
            column: column.to_string(),
            message: format!("cannot parse '{}' as a number", cell.trim()),
        }),
    }
}

/// Parses a binary class label.
///
/// Accepts `0`/`1` (also as floats), and maps textual labels: `benign` or
/// `normal` (case-insensitive) to 0, any other non-empty text to 1, so
/// attack-vs-benign columns with named attack classes collapse to binary.
pub fn parse_binary_label(cell: &str, row: usize, column: &str) -> Result<u8> {
    let t = cell.trim();
    if t.is_empty() {
        return Err(Error::Ingest {
            row,
            column: column.to_string(),
            message: "empty label".to_string(),
        });
    }
    if let Ok(v) = t.parse::<f64>() {
        if v == 0.0 {
            return Ok(0);
        }
        if v == 1.0 {
            return Ok(1);
        }
        return Err(Error::Ingest {
            row,
            column: column.to_string(),
            message: format!("numeric label '{t}' is neither 0 nor 1"),
        });
    }
    let lower = t.to_ascii_lowercase();
    if lower == "benign" || lower == "normal" {
        Ok(0)
    } else {
        Ok(1)
    }
}

/// Splits an IPv4 dotted-quad string into its four octets.
pub fn parse_ipv4_octets(cell: &str, row: usize, column: &str) -> Result<[f64; 4]> {
    let t = cell.trim();
    let mut out = [0.0; 4];
    let mut parts = t.split('.');
    for slot in &mut out {
        let part = parts.next().ok_or_else(|| malformed_ip(t, row, column))?;
        let octet: u8 = part
            .parse()
            .map_err(|_| malformed_ip(t, row, column))?;
        *slot = octet as f64;
    }
    if parts.next().is_some() {
        return Err(malformed_ip(t, row, column));
    }
    Ok(out)
}

fn malformed_ip(cell: &str, row: usize, column: &str) -> Error {
    Error::Ingest {
        row,
        column: column.to_string(),
        message: format!("malformed IPv4 address '{cell}'"),
    }
}
