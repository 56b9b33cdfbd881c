//! Synthetic tabular stream with an abrupt, controllable scale shift.
//!
//! Each class draws features from its own Gaussian cluster; from a chosen
//! experience onward every feature is multiplied by a constant factor. That
//! reproduces the failure mode where a stream's value range jumps by orders
//! of magnitude while the class structure stays the same.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::data::{Experience, ExperienceStream, FeatureMatrix};
use crate::error::{Error, Result};
use crate::matrix::Matrix;

/// Configuration for [`generate_drift_stream`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DriftConfig {
    pub n_experiences: usize,
    pub rows_per_experience: usize,
    pub n_features: usize,
    /// First experience index whose rows are multiplied by `scale_factor`.
    /// An index at or past `n_experiences` means no jump ever happens.
    pub scale_jump_at: usize,
    pub scale_factor: f64,
    /// Probability that a row belongs to class 1.
    pub class_balance: f64,
    /// Sequential train fraction within each experience.
    pub split_ratio: f64,
    pub seed: u64,
}

impl Default for DriftConfig {
    fn default() -> Self {
        DriftConfig {
            n_experiences: 6,
            rows_per_experience: 20_000,
            n_features: 20,
            scale_jump_at: 3,
            scale_factor: 100.0,
            class_balance: 0.3,
            split_ratio: 0.8,
            seed: 0,
        }
    }
}

impl DriftConfig {
    /// Checks every field, naming the offending one on failure.
    pub fn validate(&self) -> Result<()> {
        if self.n_experiences == 0 {
            return Err(Error::config("n_experiences", "must be at least 1"));
        }
        if self.rows_per_experience < 2 {
            return Err(Error::config("rows_per_experience", "must be at least 2"));
        }
        if self.n_features == 0 {
            return Err(Error::config("n_features", "must be at least 1"));
        }
        if !(self.scale_factor.is_finite() && self.scale_factor > 0.0) {
            return Err(Error::config("scale_factor", "must be finite and positive"));
        }
        if !(self.class_balance > 0.0 && self.class_balance < 1.0) {
            return Err(Error::config(
                "class_balance",
                "must lie strictly between 0 and 1",
            ));
        }
        if !(self.split_ratio > 0.0 && self.split_ratio < 1.0) {
            return Err(Error::config(
                "split_ratio",
                "must lie strictly between 0 and 1",
            ));
        }
        Ok(())
    }
}

/// Generates a deterministic per-class Gaussian stream with a scale jump.
///
/// With `scale_factor = 1` every experience is drawn from one unchanging
/// distribution. All draws flow from a single seeded generator, so the same
/// config always produces the identical stream.
pub fn generate_drift_stream(cfg: &DriftConfig) -> Result<ExperienceStream> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);

    // Per-feature cluster geometry: class 0 centers, class separations, and
    // shared spreads. Drawn once so every experience shares the structure.
    // Separations are large relative to each feature's value range so the
    // class signal survives even when re-normalization squeezes a chunk into
    // a small fraction of the fitted interval.
    let d = cfg.n_features;
    let mean0: Vec<f64> = (0..d).map(|_| rng.random_range(1.0..2.0)).collect();
    let delta: Vec<f64> = (0..d).map(|_| rng.random_range(2.0..3.0)).collect();
    let sigma: Vec<f64> = (0..d).map(|_| rng.random_range(0.3..0.5)).collect();

    let mut experiences = Vec::with_capacity(cfg.n_experiences);
    for e in 0..cfg.n_experiences {
        let scale = if e >= cfg.scale_jump_at {
            cfg.scale_factor
        } else {
            1.0
        };
        let mut values = Matrix::with_cols(d);
        let mut labels = Vec::with_capacity(cfg.rows_per_experience);
        let mut row = vec![0.0; d];
        for _ in 0..cfg.rows_per_experience {
            let label = u8::from(rng.random::<f64>() < cfg.class_balance);
            for j in 0..d {
                let z: f64 = rng.sample(StandardNormal);
                let mean = mean0[j] + f64::from(label) * delta[j];
                row[j] = (mean + sigma[j] * z) * scale;
            }
            values.push_row(&row)?;
            labels.push(label);
        }
        let chunk = FeatureMatrix::new(values, labels)?;
        let train_rows = (cfg.split_ratio * chunk.rows() as f64).floor() as usize;
        if train_rows == 0 || train_rows == chunk.rows() {
            return Err(Error::config(
                "split_ratio",
                format!(
                    "{} rows per experience split into {train_rows} train rows; \
                     both sides need at least one row",
                    chunk.rows()
                ),
            ));
        }
        experiences.push(Experience {
            train: chunk.slice_rows(0, train_rows),
            test: chunk.slice_rows(train_rows, chunk.rows()),
        });
    }
    ExperienceStream::from_experiences(experiences, cfg.rows_per_experience)
}
