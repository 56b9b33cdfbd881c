//! Tabular data model: labeled feature matrices, experience streams, and
//! dataset preparation (CSV ingest, dataset-specific preprocessing, and a
//! synthetic drift generator).

mod cicids;
mod csv_ingest;
mod drift;
mod unsw;

pub use cicids::{preprocess_cicids, preprocess_cicids_csv, CICIDS_DROPPED_COLUMNS};
pub use csv_ingest::{load_raw_csv, parse_binary_label, RawTable};
pub use drift::{generate_drift_stream, DriftConfig};
pub use unsw::{preprocess_unsw, preprocess_unsw_csv, UNSW_ENCODED_COLUMNS};

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::Matrix;

/// A block of numeric feature rows with aligned binary labels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureMatrix {
    values: Matrix,
    labels: Vec<u8>,
}

impl FeatureMatrix {
    /// Bundles features and labels; labels must be 0/1 and aligned with rows.
    pub fn new(values: Matrix, labels: Vec<u8>) -> Result<Self> {
        if labels.len() != values.rows() {
            return Err(Error::shape(format!(
                "{} labels for {} feature rows",
                labels.len(),
                values.rows()
            )));
        }
        if let Some(pos) = labels.iter().position(|&l| l > 1) {
            return Err(Error::contract(format!(
                "label at row {pos} is {}, expected 0 or 1",
                labels[pos]
            )));
        }
        Ok(FeatureMatrix { values, labels })
    }

    pub fn rows(&self) -> usize {
        self.values.rows()
    }

    /// Number of feature columns.
    pub fn features(&self) -> usize {
        self.values.cols()
    }

    pub fn is_empty(&self) -> bool {
        self.rows() == 0
    }

    pub fn values(&self) -> &Matrix {
        &self.values
    }

    pub fn labels(&self) -> &[u8] {
        &self.labels
    }

    pub fn row(&self, i: usize) -> (&[f64], u8) {
        (self.values.row(i), self.labels[i])
    }

    /// Rows `[start, end)` as a new `FeatureMatrix`.
    pub fn slice_rows(&self, start: usize, end: usize) -> FeatureMatrix {
        FeatureMatrix {
            values: self.values.slice_rows(start, end),
            labels: self.labels[start..end].to_vec(),
        }
    }

    /// The listed rows, in order, as a new `FeatureMatrix`.
    pub fn gather(&self, indices: &[usize]) -> FeatureMatrix {
        FeatureMatrix {
            values: self.values.gather(indices),
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
        }
    }
}

/// One experience of a stream: a train chunk and its held-out test rows.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Experience {
    pub train: FeatureMatrix,
    pub test: FeatureMatrix,
}

/// An ordered sequence of experiences cut from one tabular stream.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExperienceStream {
    experiences: Vec<Experience>,
    chunk_size: usize,
    /// Set when the requested chunk size exceeded the stream length, so the
    /// whole stream became a single experience.
    oversized_chunk: bool,
}

impl ExperienceStream {
    pub fn from_experiences(experiences: Vec<Experience>, chunk_size: usize) -> Result<Self> {
        if experiences.is_empty() {
            return Err(Error::empty("experience stream with no experiences"));
        }
        let d = experiences[0].train.features();
        for (t, e) in experiences.iter().enumerate() {
            if e.train.features() != d || e.test.features() != d {
                return Err(Error::shape(format!(
                    "experience {t} feature count differs from experience 0 ({d})"
                )));
            }
        }
        Ok(ExperienceStream {
            experiences,
            chunk_size,
            oversized_chunk: false,
        })
    }

    pub fn experiences(&self) -> &[Experience] {
        &self.experiences
    }

    pub fn experience(&self, t: usize) -> &Experience {
        &self.experiences[t]
    }

    pub fn total_experiences(&self) -> usize {
        self.experiences.len()
    }

    pub fn chunk_size(&self) -> usize {
        self.chunk_size
    }

    /// Feature dimensionality shared by every chunk.
    pub fn feature_count(&self) -> usize {
        self.experiences[0].train.features()
    }

    /// True when the whole stream collapsed into a single oversized chunk.
    pub fn oversized_chunk(&self) -> bool {
        self.oversized_chunk
    }

    /// Every train and test block, in stream order (used by the global
    /// normalization oracle, which is allowed to read the full stream).
    pub fn all_blocks(&self) -> impl Iterator<Item = &FeatureMatrix> {
        self.experiences
            .iter()
            .flat_map(|e| [&e.train, &e.test].into_iter())
    }
}

/// Number of experiences `chunk_stream_opt` will produce for `n_rows`.
///
/// A trailing partial chunk counts only when it has at least 2 rows (so it
/// can still be split into train and test) and partial chunks are kept.
pub fn chunk_count(n_rows: usize, chunk_size: usize, drop_partial: bool) -> usize {
    let full = n_rows / chunk_size;
    let rem = n_rows % chunk_size;
    if rem >= 2 && !drop_partial {
        full + 1
    } else {
        full
    }
}

/// Cuts a stream into contiguous experiences, keeping a trailing partial
/// chunk when it has at least 2 rows.
pub fn chunk_stream(
    data: FeatureMatrix,
    chunk_size: usize,
    split_ratio: f64,
) -> Result<ExperienceStream> {
    chunk_stream_opt(data, chunk_size, split_ratio, false)
}

/// [`chunk_stream`] with an explicit policy for the trailing partial chunk.
///
/// Chunks preserve row order; each chunk is split sequentially, the first
/// `floor(split_ratio * rows)` rows for training and the remainder for test.
/// Rows are never shuffled across the split, so the held-out rows are the
/// chunk's most recent ones.
pub fn chunk_stream_opt(
    data: FeatureMatrix,
    chunk_size: usize,
    split_ratio: f64,
    drop_partial: bool,
) -> Result<ExperienceStream> {
    if data.is_empty() {
        return Err(Error::empty("cannot chunk a stream with no rows"));
    }
    if chunk_size < 2 {
        return Err(Error::config(
            "chunk_size",
            "must be at least 2 so each chunk can hold train and test rows",
        ));
    }
    if !(split_ratio > 0.0 && split_ratio < 1.0) {
        return Err(Error::config(
            "split_ratio",
            "must lie strictly between 0 and 1",
        ));
    }

    let n = data.rows();
    let oversized = chunk_size > n;
    let mut experiences = Vec::new();
    let mut start = 0;
    while start < n {
        let end = usize::min(start + chunk_size, n);
        let len = end - start;
        let is_partial = len < chunk_size;
        if is_partial && (len < 2 || drop_partial) {
            break;
        }
        let chunk = data.slice_rows(start, end);
        experiences.push(split_chunk(chunk, split_ratio, experiences.len())?);
        start = end;
    }
    if experiences.is_empty() {
        return Err(Error::config(
            "chunk_size",
            format!("no usable chunks: {n} rows with chunk_size {chunk_size} (drop_partial={drop_partial})"),
        ));
    }
    let mut stream = ExperienceStream::from_experiences(experiences, chunk_size)?;
    stream.oversized_chunk = oversized;
    Ok(stream)
}

fn split_chunk(chunk: FeatureMatrix, split_ratio: f64, index: usize) -> Result<Experience> {
    let rows = chunk.rows();
    let train_rows = (split_ratio * rows as f64).floor() as usize;
    if train_rows == 0 || train_rows == rows {
        return Err(Error::config(
            "split_ratio",
            format!(
                "chunk {index} with {rows} rows splits into {train_rows} train rows; \
                 both sides need at least one row"
            ),
        ));
    }
    Ok(Experience {
        train: chunk.slice_rows(0, train_rows),
        test: chunk.slice_rows(train_rows, rows),
    })
}

/// Incremental categorical encoder: each distinct string gets the next free
/// integer code in first-seen order, and codes are never reassigned.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct StreamingLabelEncoder {
    codes: HashMap<String, u32>,
}

impl StreamingLabelEncoder {
    pub fn new() -> Self {
        Self::default()
    }

    /// Code for `value`, assigning the next free code on first sight.
    pub fn encode(&mut self, value: &str) -> u32 {
        let next = self.codes.len() as u32;
        *self.codes.entry(value.to_string()).or_insert(next)
    }

    /// Number of distinct categories seen so far.
    pub fn len(&self) -> usize {
        self.codes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.codes.is_empty()
    }
}
