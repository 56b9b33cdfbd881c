//! Bit-exact serialization of full training state, used for the diagnostic
//! dump written when a run aborts and for deterministic resume.
//!
//! Everything that influences future behavior is captured: model parameters
//! and generator position, optimizer moments, normalizer statistics, the
//! replay buffer contents, and anchoring state. Values round-trip through
//! JSON exactly (the shortest-representation float encoding is lossless for
//! every finite `f64`).

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::nn::{AdamState, MlpModel};
use crate::norm::AnyNormalizer;
use crate::strategies::{EwcState, ReservoirState};

/// Bumped whenever the snapshot layout changes incompatibly.
pub const SNAPSHOT_FORMAT_VERSION: u32 = 1;

/// Everything needed to rebuild an [`MlpModel`] exactly, including the
/// position of its dropout-mask generator.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModelSnapshot {
    pub dims: Vec<usize>,
    pub dropout: f64,
    pub has_scaling: bool,
    pub params: Vec<f64>,
    pub rng_seed: u64,
    pub rng_word_pos: u128,
}

impl ModelSnapshot {
    pub fn capture(model: &MlpModel) -> Self {
        let (rng_seed, rng_word_pos) = model.rng_state();
        ModelSnapshot {
            dims: model.dims().to_vec(),
            dropout: model.dropout(),
            has_scaling: model.has_scaling(),
            params: model.flat_params(),
            rng_seed,
            rng_word_pos,
        }
    }

    pub fn restore(&self) -> Result<MlpModel> {
        let mut model = MlpModel::new(&self.dims, self.dropout, self.rng_seed)?;
        if self.has_scaling {
            model.attach_input_scaling();
        }
        model.set_flat_params(&self.params)?;
        model.set_rng_word_pos(self.rng_word_pos);
        Ok(model)
    }
}

/// Full state of a run at a step boundary.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunSnapshot {
    pub format_version: u32,
    pub normalizer_name: String,
    pub strategy_name: String,
    pub experience: usize,
    pub epoch: usize,
    pub model: ModelSnapshot,
    pub optimizer: AdamState,
    pub normalizer: AnyNormalizer,
    pub buffer: Option<ReservoirState>,
    pub anchoring: Option<EwcState>,
}

impl RunSnapshot {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// Parses a snapshot and restores the skipped generator inside the
    /// anchoring state, if present.
    pub fn from_json(json: &str) -> Result<Self> {
        let mut snapshot: RunSnapshot = serde_json::from_str(json)?;
        if let Some(ewc) = &mut snapshot.anchoring {
            ewc.restore_rng();
        }
        Ok(snapshot)
    }

    pub fn write_to(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn read_from(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}
