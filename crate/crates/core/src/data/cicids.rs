//! CICIDS2017/2018-style preprocessing: drop the constant flag/bulk columns,
//! drop rows with missing or non-finite cells, keep everything else numeric.

use std::path::Path;

use crate::data::csv_ingest::{is_missing, parse_binary_label, RawTable};
use crate::data::FeatureMatrix;
use crate::error::{Error, Result};
use crate::matrix::Matrix;

/// Columns that are constant in the source capture and therefore dropped.
pub const CICIDS_DROPPED_COLUMNS: [&str; 10] = [
    "Bwd PSH Flags",
    "Fwd URG Flags",
    "Bwd URG Flags",
    "CWE Flag Count",
    "Fwd Avg Bytes/Bulk",
    "Fwd Avg Packets/Bulk",
    "Fwd Avg Bulk Rate",
    "Bwd Avg Bytes/Bulk",
    "Bwd Avg Packets/Bulk",
    "Bwd Avg Bulk Rate",
];

enum ColumnRole {
    Dropped,
    Numeric,
    Label,
}

struct CicidsPlan {
    roles: Vec<ColumnRole>,
    names: Vec<String>,
    features: usize,
}

impl CicidsPlan {
    fn build(headers: &[String], label_column: &str) -> Result<Self> {
        let label_want = label_column.trim().to_ascii_lowercase();
        let dropped: Vec<String> = CICIDS_DROPPED_COLUMNS
            .iter()
            .map(|c| c.to_ascii_lowercase())
            .collect();
        let mut roles = Vec::with_capacity(headers.len());
        let mut features = 0;
        let mut label_seen = false;
        for h in headers {
            let name = h.trim().to_ascii_lowercase();
            let role = if name == label_want {
                if label_seen {
                    return Err(Error::config(
                        "label_column",
                        format!("column '{label_column}' appears more than once"),
                    ));
                }
                label_seen = true;
                ColumnRole::Label
            } else if dropped.contains(&name) {
                ColumnRole::Dropped
            } else {
                features += 1;
                ColumnRole::Numeric
            };
            roles.push(role);
        }
        if !label_seen {
            return Err(Error::config(
                "label_column",
                format!("column '{label_column}' not found in header"),
            ));
        }
        Ok(CicidsPlan {
            roles,
            names: headers.iter().map(|h| h.trim().to_string()).collect(),
            features,
        })
    }

    /// Processes one record. Returns `Ok(None)` when the row must be dropped
    /// (missing or non-finite cell in a retained column); `row` is the
    /// 0-based data row index used in error messages.
    fn ingest_row<'c>(
        &self,
        cells: impl Iterator<Item = &'c str>,
        row: usize,
        features: &mut Vec<f64>,
    ) -> Result<Option<u8>> {
        let mut label = None;
        let mut count = 0;
        for (col, cell) in cells.enumerate() {
            count += 1;
            if col >= self.roles.len() {
                continue;
            }
            match self.roles[col] {
                ColumnRole::Dropped => {}
                ColumnRole::Label => label = Some(parse_binary_label(cell, row, &self.names[col])?),
                ColumnRole::Numeric => {
                    if is_missing(cell) {
                        return Ok(None);
                    }
                    match cell.trim().parse::<f64>() {
                        Ok(v) if v.is_finite() => features.push(v),
                        Ok(_) => return Ok(None),
                        Err(_) => {
                            return Err(Error::Ingest {
                                row,
                                column: self.names[col].clone(),
                                message: format!(
                                    "cannot parse '{}' as a number",
                                    cell.trim()
                                ),
                            })
                        }
                    }
                }
            }
        }
        if count != self.roles.len() {
            return Err(Error::Ingest {
                row,
                column: String::new(),
                message: format!("record has {count} cells, header has {}", self.roles.len()),
            });
        }
        Ok(Some(label.expect("plan guarantees a label column")))
    }
}

/// Preprocesses an in-memory CICIDS-style table: the ten constant columns
/// are removed, rows containing missing or non-finite cells are dropped, and
/// the remaining columns pass through as numbers (order preserved). With the
/// standard 78 feature columns this yields 68 numeric features.
pub fn preprocess_cicids(table: &RawTable, label_column: &str) -> Result<FeatureMatrix> {
    let plan = CicidsPlan::build(&table.headers, label_column)?;
    let mut values = Matrix::with_cols(plan.features);
    let mut labels = Vec::with_capacity(table.rows.len());
    let mut buf = Vec::with_capacity(plan.features);
    for (row, cells) in table.rows.iter().enumerate() {
        buf.clear();
        if let Some(label) = plan.ingest_row(cells.iter().map(String::as_str), row, &mut buf)? {
            values.push_row(&buf)?;
            labels.push(label);
        }
    }
    FeatureMatrix::new(values, labels)
}

/// Streaming variant of [`preprocess_cicids`] for multi-million-row files.
pub fn preprocess_cicids_csv(path: impl AsRef<Path>, label_column: &str) -> Result<FeatureMatrix> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(false)
        .from_path(path)?;
    let headers: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
    let plan = CicidsPlan::build(&headers, label_column)?;
    let mut values = Matrix::with_cols(plan.features);
    let mut labels = Vec::new();
    let mut buf = Vec::with_capacity(plan.features);
    let mut record = csv::StringRecord::new();
    let mut row = 0;
    while rdr.read_record(&mut record)? {
        buf.clear();
        if let Some(label) = plan.ingest_row(record.iter(), row, &mut buf)? {
            values.push_row(&buf)?;
            labels.push(label);
        }
        row += 1;
    }
    FeatureMatrix::new(values, labels)
}
