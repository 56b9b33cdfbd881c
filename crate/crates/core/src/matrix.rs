//! Minimal row-major `f64` matrix used for feature data and activations.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Dense row-major matrix of `f64` values.
///
/// This is deliberately small: the crate needs contiguous rows for the model
/// and per-column statistics for the normalizers, nothing more.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    /// Builds a matrix from a flat row-major buffer.
    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::shape(format!(
                "matrix buffer holds {} values, expected {rows}x{cols}={}",
                data.len(),
                rows * cols
            )));
        }
        Ok(Matrix { rows, cols, data })
    }

    /// Builds a matrix from row slices; all rows must share one length.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, |r| r.len());
        let mut data = Vec::with_capacity(rows.len() * cols);
        for (i, r) in rows.iter().enumerate() {
            if r.len() != cols {
                return Err(Error::shape(format!(
                    "row {i} has {} values, expected {cols}",
                    r.len()
                )));
            }
            data.extend_from_slice(r);
        }
        Ok(Matrix {
            rows: rows.len(),
            cols,
            data,
        })
    }

    /// All-zero matrix.
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    /// Empty matrix with a fixed column count, ready for [`Matrix::push_row`].
    pub fn with_cols(cols: usize) -> Self {
        Matrix {
            rows: 0,
            cols,
            data: Vec::new(),
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn is_empty(&self) -> bool {
        self.rows == 0
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn push_row(&mut self, row: &[f64]) -> Result<()> {
        if row.len() != self.cols {
            return Err(Error::shape(format!(
                "pushed row has {} values, expected {}",
                row.len(),
                self.cols
            )));
        }
        self.data.extend_from_slice(row);
        self.rows += 1;
        Ok(())
    }

    /// New matrix holding the listed rows, in the given order.
    pub fn gather(&self, indices: &[usize]) -> Matrix {
        let mut out = Matrix::with_cols(self.cols);
        out.data.reserve(indices.len() * self.cols);
        for &i in indices {
            out.data.extend_from_slice(self.row(i));
            out.rows += 1;
        }
        out
    }

    /// Rows `[start, end)` as a new matrix.
    pub fn slice_rows(&self, start: usize, end: usize) -> Matrix {
        Matrix {
            rows: end - start,
            cols: self.cols,
            data: self.data[start * self.cols..end * self.cols].to_vec(),
        }
    }

    /// Per-column minimum. Errors on an empty matrix.
    pub fn col_min(&self) -> Result<Vec<f64>> {
        self.col_fold("col_min", f64::INFINITY, f64::min)
    }

    /// Per-column maximum. Errors on an empty matrix.
    pub fn col_max(&self) -> Result<Vec<f64>> {
        self.col_fold("col_max", f64::NEG_INFINITY, f64::max)
    }

    fn col_fold(&self, what: &str, init: f64, f: fn(f64, f64) -> f64) -> Result<Vec<f64>> {
        if self.rows == 0 {
            return Err(Error::empty(format!("{what} on a matrix with no rows")));
        }
        let mut acc = vec![init; self.cols];
        for r in 0..self.rows {
            for (a, &v) in acc.iter_mut().zip(self.row(r)) {
                *a = f(*a, v);
            }
        }
        Ok(acc)
    }

    /// Per-column mean. Errors on an empty matrix.
    pub fn col_mean(&self) -> Result<Vec<f64>> {
        if self.rows == 0 {
            return Err(Error::empty("col_mean on a matrix with no rows"));
        }
        let mut acc = vec![0.0; self.cols];
        for r in 0..self.rows {
            for (a, &v) in acc.iter_mut().zip(self.row(r)) {
                *a += v;
            }
        }
        let n = self.rows as f64;
        for a in &mut acc {
            *a /= n;
        }
        Ok(acc)
    }

    /// Per-column population standard deviation. Errors on an empty matrix.
    pub fn col_std(&self) -> Result<Vec<f64>> {
        let mean = self.col_mean()?;
        let mut acc = vec![0.0; self.cols];
        for r in 0..self.rows {
            for ((a, &m), &v) in acc.iter_mut().zip(&mean).zip(self.row(r)) {
                let d = v - m;
                *a += d * d;
            }
        }
        let n = self.rows as f64;
        for a in &mut acc {
            *a = (*a / n).sqrt();
        }
        Ok(acc)
    }
}
