//! UNSW-NB15 preprocessing: IP decomposition plus incremental categorical
//! encoding, yielding a fully numeric 53-feature matrix.

use std::path::Path;

use crate::data::csv_ingest::{
    parse_binary_label, parse_ipv4_octets, parse_numeric_cell, RawTable,
};
use crate::data::{FeatureMatrix, StreamingLabelEncoder};
use crate::error::{Error, Result};
use crate::matrix::Matrix;

/// Categorical columns replaced by incremental integer codes (first-seen
/// order, codes never reassigned). IP address columns are handled separately.
pub const UNSW_ENCODED_COLUMNS: [&str; 7] = [
    "sport",
    "dsport",
    "proto",
    "state",
    "service",
    "ct_ftp_cmd",
    "attack_cat",
];

const IP_COLUMNS: [&str; 2] = ["srcip", "dstip"];

enum ColumnRole {
    /// IPv4 address expanded into four octet features, in place.
    Ip,
    /// Categorical column encoded via its own [`StreamingLabelEncoder`].
    Encoded(usize),
    /// Plain numeric column; missing or non-finite cells ingest as 0.0.
    Numeric,
    /// The binary class label.
    Label,
}

struct UnswPlan {
    roles: Vec<ColumnRole>,
    names: Vec<String>,
    encoders: Vec<StreamingLabelEncoder>,
    features: usize,
}

impl UnswPlan {
    fn build(headers: &[String], label_column: &str) -> Result<Self> {
        let label_want = label_column.trim().to_ascii_lowercase();
        let mut roles = Vec::with_capacity(headers.len());
        let mut encoders = Vec::new();
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
            } else if IP_COLUMNS.contains(&name.as_str()) {
                features += 4;
                ColumnRole::Ip
            } else if UNSW_ENCODED_COLUMNS.contains(&name.as_str()) {
                encoders.push(StreamingLabelEncoder::new());
                features += 1;
                ColumnRole::Encoded(encoders.len() - 1)
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
        Ok(UnswPlan {
            roles,
            names: headers.iter().map(|h| h.trim().to_string()).collect(),
            encoders,
            features,
        })
    }

    /// Processes one record into `features`; returns the row label.
    /// `row` is the 0-based data row index (header excluded), used in errors.
    fn ingest_row<'c>(
        &mut self,
        cells: impl Iterator<Item = &'c str>,
        row: usize,
        features: &mut Vec<f64>,
    ) -> Result<u8> {
        let mut label = None;
        let mut count = 0;
        for (col, cell) in cells.enumerate() {
            count += 1;
            if col >= self.roles.len() {
                continue; // caught by the count check below
            }
            let name = &self.names[col];
            match self.roles[col] {
                ColumnRole::Ip => features.extend(parse_ipv4_octets(cell, row, name)?),
                ColumnRole::Encoded(slot) => {
                    features.push(self.encoders[slot].encode(cell.trim()) as f64)
                }
                ColumnRole::Numeric => {
                    features.push(parse_numeric_cell(cell, row, name)?.unwrap_or(0.0))
                }
                ColumnRole::Label => label = Some(parse_binary_label(cell, row, name)?),
            }
        }
        if count != self.roles.len() {
            return Err(Error::Ingest {
                row,
                column: String::new(),
                message: format!("record has {count} cells, header has {}", self.roles.len()),
            });
        }
        Ok(label.expect("plan guarantees a label column"))
    }
}

/// Preprocesses an in-memory UNSW-NB15 table.
///
/// `srcip`/`dstip` expand into four octet columns each, the seven
/// categorical columns are label-encoded incrementally, and every other
/// column passes through as a number (order preserved). With the standard
/// 47 feature columns this yields 53 numeric features.
pub fn preprocess_unsw(table: &RawTable, label_column: &str) -> Result<FeatureMatrix> {
    let mut plan = UnswPlan::build(&table.headers, label_column)?;
    let mut values = Matrix::with_cols(plan.features);
    let mut labels = Vec::with_capacity(table.rows.len());
    let mut buf = Vec::with_capacity(plan.features);
    for (row, cells) in table.rows.iter().enumerate() {
        buf.clear();
        let label = plan.ingest_row(cells.iter().map(String::as_str), row, &mut buf)?;
        values.push_row(&buf)?;
        labels.push(label);
    }
    FeatureMatrix::new(values, labels)
}

/// Streaming variant of [`preprocess_unsw`] that never materializes the raw
/// string table; suitable for the multi-million-row source file.
pub fn preprocess_unsw_csv(path: impl AsRef<Path>, label_column: &str) -> Result<FeatureMatrix> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(false)
        .from_path(path)?;
    let headers: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
    let mut plan = UnswPlan::build(&headers, label_column)?;
    let mut values = Matrix::with_cols(plan.features);
    let mut labels = Vec::new();
    let mut buf = Vec::with_capacity(plan.features);
    let mut record = csv::StringRecord::new();
    let mut row = 0;
    while rdr.read_record(&mut record)? {
        buf.clear();
        let label = plan.ingest_row(record.iter(), row, &mut buf)?;
        values.push_row(&buf)?;
        labels.push(label);
        row += 1;
    }
    FeatureMatrix::new(values, labels)
}
