//! Stream normalizers behind one stateful contract.
//!
//! Each normalizer consumes the train chunk of every experience through
//! [`Normalizer::update`] and offers a pure [`Normalizer::transform`]. Test
//! data is always transformed with the state as it stood after the current
//! experience's updates — never with future state. The four schemes:
//!
//! * [`GlobalNormalizer`] — min-max bounds fitted once over the union of
//!   *all* chunks, train and test alike. It reads the future, so it is an
//!   upper-bound oracle and is flagged as such in run outputs.
//! * [`LocalNormalizer`] — memoryless per-chunk min-max: each update
//!   replaces the bounds with the current train chunk's.
//! * [`CnNormalizer`] — z-scoring with exponentially blended mean/std.
//! * [`CleanNormalizer`] — min-max against exponentially smoothed bound
//!   estimates, followed by a trainable diagonal affine stage.

mod clean;
mod cn;

pub use clean::CleanNormalizer;
pub use cn::CnNormalizer;

use serde::{Deserialize, Serialize};

use crate::data::FeatureMatrix;
use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::nn::ScalingLayer;

/// Per-feature minimum/maximum pairs for min-max scaling.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MinMaxBounds {
    pub min: Vec<f64>,
    pub max: Vec<f64>,
}

impl MinMaxBounds {
    /// Validates `min.len() == max.len()` and `min <= max` per feature.
    pub fn new(min: Vec<f64>, max: Vec<f64>) -> Result<Self> {
        if min.len() != max.len() {
            return Err(Error::shape(format!(
                "{} minima vs {} maxima",
                min.len(),
                max.len()
            )));
        }
        if let Some(j) = (0..min.len()).find(|&j| min[j] > max[j]) {
            return Err(Error::contract(format!(
                "feature {j}: min {} exceeds max {}",
                min[j], max[j]
            )));
        }
        Ok(MinMaxBounds { min, max })
    }

    /// Bounds of one data block.
    pub fn from_block(block: &Matrix) -> Result<Self> {
        Ok(MinMaxBounds {
            min: block.col_min()?,
            max: block.col_max()?,
        })
    }

    /// Widens these bounds to cover another block.
    pub fn absorb(&mut self, block: &Matrix) -> Result<()> {
        if block.cols() != self.min.len() {
            return Err(Error::shape(format!(
                "bounds cover {} features, block has {}",
                self.min.len(),
                block.cols()
            )));
        }
        for (m, v) in self.min.iter_mut().zip(block.col_min()?) {
            *m = m.min(v);
        }
        for (m, v) in self.max.iter_mut().zip(block.col_max()?) {
            *m = m.max(v);
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.min.len()
    }

    pub fn is_empty(&self) -> bool {
        self.min.is_empty()
    }
}

/// Min-max scaling: `(x - min) / max(max - min, eps_den)`, elementwise per
/// feature. Outputs are *not* clipped, so values outside the fitted range
/// map outside `[0, 1]`; a degenerate feature (`max == min`) maps to 0.
pub fn minmax_transform(x: &Matrix, bounds: &MinMaxBounds, eps_den: f64) -> Result<Matrix> {
    if x.cols() != bounds.len() {
        return Err(Error::shape(format!(
            "bounds cover {} features, matrix has {} columns",
            bounds.len(),
            x.cols()
        )));
    }
    let denom: Vec<f64> = bounds
        .max
        .iter()
        .zip(&bounds.min)
        .map(|(&hi, &lo)| (hi - lo).max(eps_den))
        .collect();
    let mut out = x.clone();
    for i in 0..out.rows() {
        let row = out.row_mut(i);
        for j in 0..row.len() {
            row[j] = (row[j] - bounds.min[j]) / denom[j];
        }
    }
    Ok(out)
}

/// Stateful normalization contract shared by all four schemes.
pub trait Normalizer {
    /// Folds the current experience's train chunk into the state.
    fn update(&mut self, train: &FeatureMatrix) -> Result<()>;

    /// Full normalization function. Pure: never mutates state.
    fn transform(&self, x: &Matrix) -> Result<Matrix>;

    /// The representation fed to the model by the training loop.
    ///
    /// Defaults to [`Normalizer::transform`]. [`CleanNormalizer`] overrides
    /// this to return only its min-max stage, because its affine stage lives
    /// *inside* the model (as the attached input-scaling layer) so that the
    /// stage's parameters receive gradients; feeding `transform` output to
    /// such a model would apply the affine stage twice.
    fn model_input(&self, x: &Matrix) -> Result<Matrix> {
        self.transform(x)
    }

    /// Monotone counter, bumped once per `update`; evaluation code stamps
    /// the version it used so protocol fidelity can be asserted.
    fn state_version(&self) -> u64;

    /// Trainable affine handles (only the EMA min-max scheme has them).
    fn scaling(&self) -> Option<&ScalingLayer> {
        None
    }

    /// Copies trained affine parameters back into the normalizer state (the
    /// model owns the authoritative copy during training). No-op for
    /// schemes without trainable parameters.
    fn sync_scaling(&mut self, layer: &ScalingLayer) -> Result<()> {
        let _ = layer;
        Ok(())
    }

    /// Stable name used in logs and output tables.
    fn name(&self) -> &'static str;
}

/// Upper-bound oracle: min-max bounds over the union of every chunk in the
/// stream, train *and* test, fitted before any training happens.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GlobalNormalizer {
    bounds: MinMaxBounds,
    eps_den: f64,
    version: u64,
}

impl GlobalNormalizer {
    /// Fits over every block yielded by the iterator.
    pub fn fit<'a>(
        blocks: impl IntoIterator<Item = &'a FeatureMatrix>,
        eps_den: f64,
    ) -> Result<Self> {
        let mut bounds: Option<MinMaxBounds> = None;
        for block in blocks {
            if block.is_empty() {
                continue;
            }
            match &mut bounds {
                None => bounds = Some(MinMaxBounds::from_block(block.values())?),
                Some(b) => b.absorb(block.values())?,
            }
        }
        let bounds = bounds.ok_or_else(|| Error::empty("global fit over zero rows"))?;
        Ok(GlobalNormalizer {
            bounds,
            eps_den,
            version: 0,
        })
    }

    pub fn bounds(&self) -> &MinMaxBounds {
        &self.bounds
    }
}

impl Normalizer for GlobalNormalizer {
    /// The oracle already saw everything at fit time; updates only advance
    /// the state version so the evaluation protocol can stamp states
    /// uniformly across schemes.
    fn update(&mut self, _train: &FeatureMatrix) -> Result<()> {
        self.version += 1;
        Ok(())
    }

    fn transform(&self, x: &Matrix) -> Result<Matrix> {
        minmax_transform(x, &self.bounds, self.eps_den)
    }

    fn state_version(&self) -> u64 {
        self.version
    }

    fn name(&self) -> &'static str {
        "global-oracle"
    }
}

/// Memoryless per-chunk min-max scaling.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocalNormalizer {
    bounds: Option<MinMaxBounds>,
    eps_den: f64,
    version: u64,
}

impl LocalNormalizer {
    pub fn new(eps_den: f64) -> Self {
        LocalNormalizer {
            bounds: None,
            eps_den,
            version: 0,
        }
    }

    pub fn bounds(&self) -> Option<&MinMaxBounds> {
        self.bounds.as_ref()
    }
}

impl Normalizer for LocalNormalizer {
    /// Replaces the bounds with the current chunk's own min/max — no memory
    /// of earlier chunks survives.
    fn update(&mut self, train: &FeatureMatrix) -> Result<()> {
        if train.is_empty() {
            return Err(Error::empty("local normalization update on an empty chunk"));
        }
        self.bounds = Some(MinMaxBounds::from_block(train.values())?);
        self.version += 1;
        Ok(())
    }

    fn transform(&self, x: &Matrix) -> Result<Matrix> {
        let bounds = self.bounds.as_ref().ok_or_else(|| {
            Error::contract("local normalization used before its first update")
        })?;
        minmax_transform(x, bounds, self.eps_den)
    }

    fn state_version(&self) -> u64 {
        self.version
    }

    fn name(&self) -> &'static str {
        "local"
    }
}

/// Runtime-selected normalizer with the same contract surface.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub enum AnyNormalizer {
    Global(GlobalNormalizer),
    Local(LocalNormalizer),
    Cn(CnNormalizer),
    Clean(CleanNormalizer),
}

impl Normalizer for AnyNormalizer {
    fn update(&mut self, train: &FeatureMatrix) -> Result<()> {
        match self {
            AnyNormalizer::Global(n) => n.update(train),
            AnyNormalizer::Local(n) => n.update(train),
            AnyNormalizer::Cn(n) => n.update(train),
            AnyNormalizer::Clean(n) => n.update(train),
        }
    }

    fn transform(&self, x: &Matrix) -> Result<Matrix> {
        match self {
            AnyNormalizer::Global(n) => n.transform(x),
            AnyNormalizer::Local(n) => n.transform(x),
            AnyNormalizer::Cn(n) => n.transform(x),
            AnyNormalizer::Clean(n) => n.transform(x),
        }
    }

    fn model_input(&self, x: &Matrix) -> Result<Matrix> {
        match self {
            AnyNormalizer::Global(n) => n.model_input(x),
            AnyNormalizer::Local(n) => n.model_input(x),
            AnyNormalizer::Cn(n) => n.model_input(x),
            AnyNormalizer::Clean(n) => n.model_input(x),
        }
    }

    fn state_version(&self) -> u64 {
        match self {
            AnyNormalizer::Global(n) => n.state_version(),
            AnyNormalizer::Local(n) => n.state_version(),
            AnyNormalizer::Cn(n) => n.state_version(),
            AnyNormalizer::Clean(n) => n.state_version(),
        }
    }

    fn scaling(&self) -> Option<&ScalingLayer> {
        match self {
            AnyNormalizer::Clean(n) => n.scaling(),
            _ => None,
        }
    }

    fn sync_scaling(&mut self, layer: &ScalingLayer) -> Result<()> {
        match self {
            AnyNormalizer::Clean(n) => n.sync_scaling(layer),
            _ => Ok(()),
        }
    }

    fn name(&self) -> &'static str {
        match self {
            AnyNormalizer::Global(n) => n.name(),
            AnyNormalizer::Local(n) => n.name(),
            AnyNormalizer::Cn(n) => n.name(),
            AnyNormalizer::Clean(n) => n.name(),
        }
    }
}
