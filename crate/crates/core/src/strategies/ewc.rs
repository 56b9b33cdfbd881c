//! Quadratic weight anchoring with diagonal importance estimates.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::FeatureMatrix;
use crate::error::{Error, Result};
use crate::nn::{FlatGradient, MlpModel};

/// Penalty state: an anchor parameter vector and a per-parameter importance
/// weight, consolidated at task boundaries.
///
/// The importance of parameter `k` is estimated as the mean over sampled
/// rows of the squared single-row loss gradient. Each consolidation *adds*
/// the new importance estimate to the accumulated one and replaces the
/// anchor with the current parameters, so every past task keeps pulling on
/// the weights it cared about.
///
/// The penalty added to the loss is `(lambda / 2) * sum_k imp_k *
/// (theta_k - anchor_k)^2` and its gradient `lambda * imp_k * (theta_k -
/// anchor_k)` is added to the data gradient each step.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EwcState {
    lambda: f64,
    fisher_sample: usize,
    anchor: Option<Vec<f64>>,
    importance: Option<Vec<f64>>,
    rng_seed: u64,
    rng_word_pos: u128,
    #[serde(skip, default = "default_rng")]
    rng: ChaCha8Rng,
}

fn default_rng() -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(0)
}

impl EwcState {
    /// `lambda` scales the penalty; `fisher_sample` caps how many rows the
    /// importance estimate averages over.
    pub fn new(lambda: f64, fisher_sample: usize, seed: u64) -> Result<Self> {
        if !(lambda.is_finite() && lambda >= 0.0) {
            return Err(Error::contract(format!(
                "penalty strength {lambda} must be finite and non-negative"
            )));
        }
        if fisher_sample == 0 {
            return Err(Error::contract("importance sample size must be at least 1"));
        }
        Ok(EwcState {
            lambda,
            fisher_sample,
            anchor: None,
            importance: None,
            rng_seed: seed,
            rng_word_pos: 0,
            rng: ChaCha8Rng::seed_from_u64(seed),
        })
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn is_consolidated(&self) -> bool {
        self.anchor.is_some()
    }

    pub fn anchor(&self) -> Option<&[f64]> {
        self.anchor.as_deref()
    }

    pub fn importance(&self) -> Option<&[f64]> {
        self.importance.as_deref()
    }

    /// Restores the deterministic sampling stream after deserialization.
    pub fn restore_rng(&mut self) {
        self.rng = ChaCha8Rng::seed_from_u64(self.rng_seed);
        self.rng.set_word_pos(self.rng_word_pos);
    }

    /// Records the generator position so serialization is bit-exact.
    pub fn checkpoint_rng(&mut self) {
        self.rng_word_pos = self.rng.get_word_pos();
    }

    /// Consolidates at a task boundary: estimates per-parameter importance
    /// from single-row gradients on (at most `fisher_sample`) rows of the
    /// given block, adds it to any accumulated importance, and re-anchors
    /// at the model's current parameters.
    ///
    /// `block` must already be in model-input space (normalized the same
    /// way training batches are).
    pub fn consolidate(&mut self, model: &mut MlpModel, block: &FeatureMatrix) -> Result<()> {
        if block.is_empty() {
            return Err(Error::empty("importance estimation block"));
        }
        let n = block.rows();
        let take = self.fisher_sample.min(n);
        let indices: Vec<usize> = if take == n {
            (0..n).collect()
        } else {
            rand::seq::index::sample(&mut self.rng, n, take).into_vec()
        };
        let mut sum_sq = vec![0.0; model.param_count()];
        for &i in &indices {
            let (row, label) = block.row(i);
            let single = FeatureMatrix::new(
                crate::matrix::Matrix::from_rows(&[row.to_vec()])?,
                vec![label],
            )?;
            let (_, grad) = model.backward(single.values(), single.labels())?;
            for (acc, g) in sum_sq.iter_mut().zip(grad.as_slice()) {
                *acc += g * g;
            }
        }
        let scale = 1.0 / take as f64;
        for v in &mut sum_sq {
            *v *= scale;
        }
        match &mut self.importance {
            Some(existing) => {
                if existing.len() != sum_sq.len() {
                    return Err(Error::shape(format!(
                        "importance has {} entries, model has {}",
                        existing.len(),
                        sum_sq.len()
                    )));
                }
                for (e, v) in existing.iter_mut().zip(&sum_sq) {
                    *e += v;
                }
            }
            None => self.importance = Some(sum_sq),
        }
        self.anchor = Some(model.flat_params());
        Ok(())
    }

    /// Adds the penalty gradient to `grad` in place and returns the penalty
    /// value. Before the first consolidation this is a no-op returning 0.
    pub fn apply_penalty(&self, params: &[f64], grad: &mut FlatGradient) -> Result<f64> {
        let (anchor, importance) = match (&self.anchor, &self.importance) {
            (Some(a), Some(f)) => (a, f),
            _ => return Ok(0.0),
        };
        if params.len() != anchor.len() || grad.len() != anchor.len() {
            return Err(Error::shape(format!(
                "penalty over {} anchored parameters applied to {} parameters / {} gradient entries",
                anchor.len(),
                params.len(),
                grad.len()
            )));
        }
        let g = grad.as_mut_slice();
        let mut penalty = 0.0;
        for k in 0..params.len() {
            let diff = params[k] - anchor[k];
            penalty += importance[k] * diff * diff;
            g[k] += self.lambda * importance[k] * diff;
        }
        Ok(0.5 * self.lambda * penalty)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matrix::Matrix;

    fn tiny_model(seed: u64) -> MlpModel {
        MlpModel::new(&[2, 2, 1], 0.0, seed).unwrap()
    }

    fn tiny_block() -> FeatureMatrix {
        FeatureMatrix::new(
            Matrix::from_rows(&[
                vec![0.2, -0.4],
                vec![1.0, 0.5],
                vec![-0.3, 0.8],
            ])
            .unwrap(),
            vec![0, 1, 0],
        )
        .unwrap()
    }

    #[test]
    fn importance_is_mean_of_squared_single_row_gradients() {
        let mut model = tiny_model(0);
        let block = tiny_block();
        let mut hand = vec![0.0; model.param_count()];
        for i in 0..block.rows() {
            let (row, label) = block.row(i);
            let single = FeatureMatrix::new(
                Matrix::from_rows(&[row.to_vec()]).unwrap(),
                vec![label],
            )
            .unwrap();
            let (_, g) = model.backward(single.values(), single.labels()).unwrap();
            for (h, gi) in hand.iter_mut().zip(g.as_slice()) {
                *h += gi * gi / 3.0;
            }
        }
        let mut state = EwcState::new(1.0, 100, 0).unwrap();
        state.consolidate(&mut model, &block).unwrap();
        let imp = state.importance().unwrap();
        for (a, b) in imp.iter().zip(&hand) {
            assert!((a - b).abs() <= 1e-12 * b.abs().max(1.0), "{a} vs {b}");
        }
        assert_eq!(state.anchor().unwrap(), model.flat_params().as_slice());
    }

    #[test]
    fn penalty_at_the_anchor_is_zero() {
        let mut model = tiny_model(1);
        let mut state = EwcState::new(50.0, 100, 0).unwrap();
        state.consolidate(&mut model, &tiny_block()).unwrap();
        let params = model.flat_params();
        let mut grad = FlatGradient::zeros(params.len());
        let penalty = state.apply_penalty(&params, &mut grad).unwrap();
        assert_eq!(penalty, 0.0);
        assert!(grad.as_slice().iter().all(|&g| g == 0.0));
    }

    #[test]
    fn penalty_value_and_gradient_match_hand_computation() {
        // one parameter: anchor 0, importance 2, lambda 1, theta 3
        // penalty = 0.5 * 1 * 2 * 3^2 = 9; gradient = 1 * 2 * 3 = 6
        let mut state = EwcState::new(1.0, 1, 0).unwrap();
        state.anchor = Some(vec![0.0]);
        state.importance = Some(vec![2.0]);
        let mut grad = FlatGradient::from_vec(vec![0.5]);
        let penalty = state.apply_penalty(&[3.0], &mut grad).unwrap();
        assert_eq!(penalty, 9.0);
        assert_eq!(grad.as_slice(), &[6.5]);
    }

    #[test]
    fn before_consolidation_the_penalty_is_inert() {
        let state = EwcState::new(100.0, 10, 0).unwrap();
        let mut grad = FlatGradient::from_vec(vec![1.0, 2.0]);
        let penalty = state.apply_penalty(&[5.0, -5.0], &mut grad).unwrap();
        assert_eq!(penalty, 0.0);
        assert_eq!(grad.as_slice(), &[1.0, 2.0]);
    }

    #[test]
    fn successive_consolidations_sum_importances_and_move_the_anchor() {
        let mut model = tiny_model(2);
        let block = tiny_block();
        let mut state = EwcState::new(1.0, 100, 0).unwrap();
        state.consolidate(&mut model, &block).unwrap();
        let first = state.importance().unwrap().to_vec();

        // nudge the parameters, consolidate again
        let mut params = model.flat_params();
        for p in &mut params {
            *p += 0.1;
        }
        model.set_flat_params(&params).unwrap();
        state.consolidate(&mut model, &block).unwrap();

        let second = state.importance().unwrap();
        // summed importance strictly dominates either single estimate
        for (s, f) in second.iter().zip(&first) {
            assert!(s >= f);
        }
        assert_eq!(state.anchor().unwrap(), params.as_slice());
    }

    #[test]
    fn sample_cap_limits_the_rows_used() {
        // cap 1: importance equals one row's squared gradient exactly
        let mut model = tiny_model(3);
        let block = tiny_block();
        let mut state = EwcState::new(1.0, 1, 7).unwrap();
        state.consolidate(&mut model, &block).unwrap();
        let imp = state.importance().unwrap();
        let mut matched = false;
        for i in 0..block.rows() {
            let (row, label) = block.row(i);
            let single = FeatureMatrix::new(
                Matrix::from_rows(&[row.to_vec()]).unwrap(),
                vec![label],
            )
            .unwrap();
            let (_, g) = model.backward(single.values(), single.labels()).unwrap();
            let row_match = imp
                .iter()
                .zip(g.as_slice())
                .all(|(a, b)| (a - b * b).abs() <= 1e-12 * (b * b).max(1.0));
            matched |= row_match;
        }
        assert!(matched, "importance should equal some single row's squared gradient");
    }

    #[test]
    fn rng_checkpoint_roundtrips_through_serde() {
        let mut model = tiny_model(4);
        let block = tiny_block();
        let mut state = EwcState::new(1.0, 2, 11).unwrap();
        state.consolidate(&mut model, &block).unwrap();
        state.checkpoint_rng();
        let json = serde_json::to_string(&state).unwrap();
        let mut restored: EwcState = serde_json::from_str(&json).unwrap();
        restored.restore_rng();
        // both make the same next sampling decisions
        state.consolidate(&mut model, &block).unwrap();
        restored.consolidate(&mut model, &block).unwrap();
        assert_eq!(state.importance().unwrap(), restored.importance().unwrap());
    }

    #[test]
    fn invalid_construction_is_rejected() {
        assert!(EwcState::new(-1.0, 10, 0).is_err());
        assert!(EwcState::new(f64::NAN, 10, 0).is_err());
        assert!(EwcState::new(1.0, 0, 0).is_err());
    }
}
