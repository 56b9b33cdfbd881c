//! Continual learning on tabular data streams.
//!
//! A data stream is consumed as an ordered sequence of *experiences* (chunks
//! with a train/test split). Four normalization schemes — an all-knowing
//! global oracle, per-chunk local scaling, EMA z-scoring, and EMA min-max
//! scaling with a jointly trained affine layer — can be combined with four
//! forgetting-mitigation strategies (plain finetuning, reservoir replay,
//! gradient projection, and quadratic weight consolidation) on a from-scratch
//! MLP binary classifier. The [`harness`] module wires everything into
//! config-driven, reproducible experiments with per-experience metrics.
//!
//! Everything numeric is `f64` and every random decision flows from explicit
//! seeds, so a run repeated with the same config is bit-identical.

pub mod data;
pub mod error;
pub mod harness;
pub mod matrix;
pub mod metrics;
pub mod nn;
pub mod norm;
pub mod snapshot;
pub mod strategies;

pub use data::{
    chunk_count, chunk_stream, chunk_stream_opt, generate_drift_stream, DriftConfig, Experience,
    ExperienceStream, FeatureMatrix, StreamingLabelEncoder,
};
pub use error::{Error, Result};
pub use harness::{run_experiment, run_grid, run_on_stream, RunConfig, RunLog};
pub use matrix::Matrix;
pub use metrics::{accuracy, auroc, AccuracyMatrix, ScoredPredictions};
pub use nn::{threshold, AdamState, FlatGradient, MlpModel, ScalingLayer};
pub use norm::{
    minmax_transform, AnyNormalizer, CleanNormalizer, CnNormalizer, GlobalNormalizer,
    LocalNormalizer, MinMaxBounds, Normalizer,
};
pub use strategies::{agem_project, EwcState, ReservoirBuffer};
