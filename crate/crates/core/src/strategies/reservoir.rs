//! Uniform reservoir sampling buffer and replay mixing.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::FeatureMatrix;
use crate::error::{Error, Result};
use crate::matrix::Matrix;

/// Fixed-capacity buffer holding a uniform sample of every row ever offered.
///
/// Classic reservoir sampling: the first `capacity` offers fill the buffer;
/// afterwards the `n`-th offered item replaces a uniformly random slot with
/// probability `capacity / n`. At any point each item seen so far is
/// retained with equal probability.
#[derive(Debug, Clone)]
pub struct ReservoirBuffer {
    capacity: usize,
    rows: Vec<Vec<f64>>,
    labels: Vec<u8>,
    seen: u64,
    rng: ChaCha8Rng,
    rng_seed: u64,
}

/// Serializable image of a [`ReservoirBuffer`], exact to the bit.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ReservoirState {
    pub capacity: usize,
    pub rows: Vec<Vec<f64>>,
    pub labels: Vec<u8>,
    pub seen: u64,
    pub rng_seed: u64,
    pub rng_word_pos: u128,
}

impl ReservoirBuffer {
    pub fn new(capacity: usize, seed: u64) -> Result<Self> {
        if capacity == 0 {
            return Err(Error::contract("reservoir capacity must be at least 1"));
        }
        Ok(ReservoirBuffer {
            capacity,
            rows: Vec::new(),
            labels: Vec::new(),
            seen: 0,
            rng: ChaCha8Rng::seed_from_u64(seed),
            rng_seed: seed,
        })
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// Total number of rows ever offered.
    pub fn seen_count(&self) -> u64 {
        self.seen
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.rows
    }

    pub fn labels(&self) -> &[u8] {
        &self.labels
    }

    /// Offers one raw row to the reservoir.
    pub fn offer(&mut self, row: &[f64], label: u8) {
        self.seen += 1;
        if self.rows.len() < self.capacity {
            self.rows.push(row.to_vec());
            self.labels.push(label);
            return;
        }
        let j = self.rng.random_range(0..self.seen);
        if (j as usize) < self.capacity {
            self.rows[j as usize].clear();
            self.rows[j as usize].extend_from_slice(row);
            self.labels[j as usize] = label;
        }
    }

    /// Offers every row of a block, in row order.
    pub fn offer_block(&mut self, block: &FeatureMatrix) {
        for i in 0..block.rows() {
            let (row, label) = block.row(i);
            self.offer(row, label);
        }
    }

    /// Mixes replayed rows into a current raw batch: the output keeps the
    /// current rows first, followed by `floor(replay_fraction * batch_rows)`
    /// uniform draws (with replacement) from the buffer. An empty buffer or
    /// a zero draw count returns the current batch unchanged.
    pub fn replay_mix(
        &mut self,
        current: &FeatureMatrix,
        replay_fraction: f64,
    ) -> Result<FeatureMatrix> {
        if !(replay_fraction.is_finite() && replay_fraction >= 0.0) {
            return Err(Error::contract(format!(
                "replay fraction {replay_fraction} must be finite and non-negative"
            )));
        }
        let draws = (replay_fraction * current.rows() as f64).floor() as usize;
        if draws == 0 || self.rows.is_empty() {
            return Ok(current.clone());
        }
        self.check_dim(current.features())?;
        let mut values = Matrix::with_cols(current.features());
        let mut labels = Vec::with_capacity(current.rows() + draws);
        for i in 0..current.rows() {
            let (row, label) = current.row(i);
            values.push_row(row)?;
            labels.push(label);
        }
        for _ in 0..draws {
            let k = self.rng.random_range(0..self.rows.len());
            values.push_row(&self.rows[k])?;
            labels.push(self.labels[k]);
        }
        FeatureMatrix::new(values, labels)
    }

    /// Up to `n` distinct stored rows, uniformly sampled (all of them when
    /// the buffer holds fewer), as a raw feature block.
    pub fn sample_reference_block(&mut self, n: usize) -> Result<Option<FeatureMatrix>> {
        if self.rows.is_empty() || n == 0 {
            return Ok(None);
        }
        let take = n.min(self.rows.len());
        let indices = rand::seq::index::sample(&mut self.rng, self.rows.len(), take);
        let mut values = Matrix::with_cols(self.rows[0].len());
        let mut labels = Vec::with_capacity(take);
        for k in indices {
            values.push_row(&self.rows[k])?;
            labels.push(self.labels[k]);
        }
        Ok(Some(FeatureMatrix::new(values, labels)?))
    }

    fn check_dim(&self, features: usize) -> Result<()> {
        match self.rows.first() {
            Some(r) if r.len() != features => Err(Error::shape(format!(
                "buffer rows have {} features, batch has {features}",
                r.len()
            ))),
            _ => Ok(()),
        }
    }

    /// Bit-exact serializable image (generator position included).
    pub fn to_state(&self) -> ReservoirState {
        ReservoirState {
            capacity: self.capacity,
            rows: self.rows.clone(),
            labels: self.labels.clone(),
            seen: self.seen,
            rng_seed: self.rng_seed,
            rng_word_pos: self.rng.get_word_pos(),
        }
    }

    pub fn from_state(state: ReservoirState) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(state.rng_seed);
        rng.set_word_pos(state.rng_word_pos);
        if state.rows.len() != state.labels.len() {
            return Err(Error::shape(format!(
                "{} buffered rows vs {} labels",
                state.rows.len(),
                state.labels.len()
            )));
        }
        Ok(ReservoirBuffer {
            capacity: state.capacity,
            rows: state.rows,
            labels: state.labels,
            seen: state.seen,
            rng: rng,
            rng_seed: state.rng_seed,
        })
    }
}
