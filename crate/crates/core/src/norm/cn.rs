//! Continual z-score normalization with exponentially blended statistics.

use serde::{Deserialize, Serialize};

use crate::data::FeatureMatrix;
use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::norm::Normalizer;

/// Z-scoring against running per-feature mean/std estimates.
///
/// The first update bootstraps the state directly from the chunk; later
/// updates blend `state = (1 - lambda) * state + lambda * chunk_stat`, so
/// `lambda` is the weight of the *new* chunk. Standard deviations are the
/// population kind and are blended directly (not through variances).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CnNormalizer {
    mean: Vec<f64>,
    std: Vec<f64>,
    lambda: f64,
    eps: f64,
    initialized: bool,
    version: u64,
}

impl CnNormalizer {
    pub fn new(features: usize, lambda: f64, eps: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&lambda) {
            return Err(Error::contract(format!(
                "blend weight lambda {lambda} outside [0, 1]"
            )));
        }
        Ok(CnNormalizer {
            mean: vec![0.0; features],
            std: vec![0.0; features],
            lambda,
            eps,
            initialized: false,
            version: 0,
        })
    }

    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    pub fn std(&self) -> &[f64] {
        &self.std
    }
}

impl Normalizer for CnNormalizer {
    fn update(&mut self, train: &FeatureMatrix) -> Result<()> {
        if train.is_empty() {
            return Err(Error::empty("z-score update on an empty chunk"));
        }
        if train.features() != self.mean.len() {
            return Err(Error::shape(format!(
                "normalizer covers {} features, chunk has {}",
                self.mean.len(),
                train.features()
            )));
        }
        let chunk_mean = train.values().col_mean()?;
        let chunk_std = train.values().col_std()?;
        if self.initialized {
            for j in 0..self.mean.len() {
                self.mean[j] = (1.0 - self.lambda) * self.mean[j] + self.lambda * chunk_mean[j];
                self.std[j] = (1.0 - self.lambda) * self.std[j] + self.lambda * chunk_std[j];
            }
        } else {
            self.mean = chunk_mean;
            self.std = chunk_std;
            self.initialized = true;
        }
        self.version += 1;
        Ok(())
    }

    fn transform(&self, x: &Matrix) -> Result<Matrix> {
        if !self.initialized {
            return Err(Error::contract(
                "z-score normalization used before its first update",
            ));
        }
        if x.cols() != self.mean.len() {
            return Err(Error::shape(format!(
                "normalizer covers {} features, matrix has {} columns",
                self.mean.len(),
                x.cols()
            )));
        }
        let mut out = x.clone();
        for i in 0..out.rows() {
            let row = out.row_mut(i);
            for j in 0..row.len() {
                row[j] = (row[j] - self.mean[j]) / (self.std[j] + self.eps);
            }
        }
        Ok(out)
    }

    fn state_version(&self) -> u64 {
        self.version
    }

    fn name(&self) -> &'static str {
        "cn"
    }
}
