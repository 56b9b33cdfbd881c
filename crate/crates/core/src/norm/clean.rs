//! Adaptive min-max normalization: exponentially smoothed bound estimates
//! plus a trainable diagonal affine stage.

use serde::{Deserialize, Serialize};

use crate::data::FeatureMatrix;
use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::nn::ScalingLayer;
use crate::norm::{minmax_transform, MinMaxBounds, Normalizer};

/// Min-max scaling against running bound estimates, then `w ⊙ x̂ + b`.
///
/// Bound estimates start at `max = 1`, `min = 0` and track each chunk via
/// `estimate = (1 - momentum) * chunk_bound + momentum * estimate`, so
/// `momentum` (`eta`) is the weight of the *previous* estimate and values
/// near 1 adapt slowly. The affine stage starts as the identity and is meant
/// to be trained jointly with the model: the training loop attaches it to
/// the model as the input-scaling layer (see
/// [`crate::nn::MlpModel::attach_input_scaling`]), feeds the model
/// [`CleanNormalizer::model_input`] output, and copies the trained
/// parameters back here via [`Normalizer::sync_scaling`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CleanNormalizer {
    bounds: MinMaxBounds,
    momentum: f64,
    eps_den: f64,
    scaling: ScalingLayer,
    version: u64,
}

impl CleanNormalizer {
    pub fn new(features: usize, momentum: f64, eps_den: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&momentum) {
            return Err(Error::contract(format!(
                "momentum {momentum} outside [0, 1]"
            )));
        }
        Ok(CleanNormalizer {
            bounds: MinMaxBounds {
                min: vec![0.0; features],
                max: vec![1.0; features],
            },
            momentum,
            eps_den,
            scaling: ScalingLayer::identity(features),
            version: 0,
        })
    }

    /// Current smoothed bound estimates.
    pub fn bounds(&self) -> &MinMaxBounds {
        &self.bounds
    }

    /// Only the min-max stage, against the smoothed bounds.
    pub fn scale_to_estimated_bounds(&self, x: &Matrix) -> Result<Matrix> {
        minmax_transform(x, &self.bounds, self.eps_den)
    }
}

impl Normalizer for CleanNormalizer {
    /// Blends the chunk's per-feature bounds into the running estimates.
    fn update(&mut self, train: &FeatureMatrix) -> Result<()> {
        if train.is_empty() {
            return Err(Error::empty("bound estimate update on an empty chunk"));
        }
        if train.features() != self.bounds.len() {
            return Err(Error::shape(format!(
                "normalizer covers {} features, chunk has {}",
                self.bounds.len(),
                train.features()
            )));
        }
        let chunk_min = train.values().col_min()?;
        let chunk_max = train.values().col_max()?;
        let keep = self.momentum;
        for j in 0..self.bounds.len() {
            self.bounds.max[j] = (1.0 - keep) * chunk_max[j] + keep * self.bounds.max[j];
            self.bounds.min[j] = (1.0 - keep) * chunk_min[j] + keep * self.bounds.min[j];
        }
        self.version += 1;
        Ok(())
    }

    /// Min-max against the estimated bounds, then the affine stage.
    fn transform(&self, x: &Matrix) -> Result<Matrix> {
        self.scaling.apply(&self.scale_to_estimated_bounds(x)?)
    }

    /// Excludes the affine stage: the model applies it internally as its
    /// attached input-scaling layer during joint training.
    fn model_input(&self, x: &Matrix) -> Result<Matrix> {
        self.scale_to_estimated_bounds(x)
    }

    fn state_version(&self) -> u64 {
        self.version
    }

    fn scaling(&self) -> Option<&ScalingLayer> {
        Some(&self.scaling)
    }

    fn sync_scaling(&mut self, layer: &ScalingLayer) -> Result<()> {
        if layer.dim() != self.scaling.dim() {
            return Err(Error::shape(format!(
                "scaling layer over {} features synced into normalizer covering {}",
                layer.dim(),
                self.scaling.dim()
            )));
        }
        self.scaling = layer.clone();
        Ok(())
    }

    fn name(&self) -> &'static str {
        "clean"
    }
}
