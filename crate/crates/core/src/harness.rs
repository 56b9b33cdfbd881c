//! Config-driven experiment runner.
//!
//! A run walks an [`ExperienceStream`] in order. For each experience the
//! normalizer absorbs the train chunk, the model trains for a fixed number
//! of epochs under the chosen forgetting-mitigation strategy, and the full
//! metric suite is evaluated at every epoch boundary on every test set seen
//! so far — always through the *current* normalizer state. End-of-experience
//! accuracies populate the lower-triangular accuracy matrix that the
//! forgetting metrics are defined over.
//!
//! Outputs are a long-format metric CSV (one value per row) and a JSON
//! summary holding the accuracy matrix, per-cell AUROCs, wall-clock, and the
//! resolved config echo. The CSV contains no timing, so a repeated run with
//! the same config and seed reproduces it bit for bit.

use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::{
    chunk_stream_opt, generate_drift_stream, preprocess_cicids_csv, preprocess_unsw_csv,
    DriftConfig, ExperienceStream, FeatureMatrix,
};
use crate::error::{Error, Result};
use crate::metrics::{accuracy, auroc, AccuracyMatrix, ScoredPredictions};
use crate::nn::{threshold, AdamState, MlpModel};
use crate::norm::{
    AnyNormalizer, CleanNormalizer, CnNormalizer, GlobalNormalizer, LocalNormalizer, Normalizer,
};
use crate::snapshot::{ModelSnapshot, RunSnapshot, SNAPSHOT_FORMAT_VERSION};
use crate::strategies::{agem_project, EwcState, ReservoirBuffer};

/// Flat, fully-defaulted run description. Every field can be set from a
/// key-value config file or a dotted-path command-line override.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    // data source
    /// "synthetic", "unsw", or "cicids".
    pub dataset: String,
    /// CSV path for the csv-backed datasets; ignored for "synthetic".
    pub data_path: String,
    /// Name of the binary label column in the CSV.
    pub label_column: String,
    /// Rows per experience chunk for csv-backed datasets.
    pub chunk_size: usize,
    /// Leading fraction of each chunk used for training.
    pub split_ratio: f64,
    /// Drop a trailing partial chunk instead of keeping it.
    pub drop_partial: bool,

    // synthetic generator
    pub n_experiences: usize,
    pub rows_per_experience: usize,
    pub n_features: usize,
    pub scale_jump_at: usize,
    pub scale_factor: f64,
    pub class_balance: f64,
    pub data_seed: u64,

    // normalizer
    /// "global", "local", "cn", or "clean".
    pub normalizer: String,
    /// Weight on the previous bound estimate in the adaptive min-max EMA.
    pub clean_momentum: f64,
    /// Weight on the new chunk statistics in the z-score EMA.
    pub cn_lambda: f64,
    /// Floor for min-max denominators.
    pub eps_den: f64,
    /// Additive stabilizer for z-score denominators.
    pub cn_eps: f64,

    // strategy
    /// "finetune", "reservoir", "agem", or "ewc".
    pub strategy: String,
    /// Replay buffer capacity in rows.
    pub buffer_capacity: usize,
    /// Replayed rows per batch, as a fraction of the batch size.
    pub replay_fraction: f64,
    /// Quadratic-penalty strength.
    pub ewc_lambda: f64,
    /// Row cap for the importance estimate at each consolidation.
    pub fisher_sample: usize,
    /// Row cap for the per-step reference gradient batch.
    pub reference_batch: usize,

    // model
    pub hidden_layers: Vec<usize>,
    pub dropout: f64,
    /// Decision threshold on the predicted probability.
    pub kappa: f64,

    // training
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub shuffle: bool,
    pub seed: u64,

    // output
    /// Directory for emitted results and abort snapshots ("" = temp dir
    /// for snapshots, no result files unless a caller passes a directory).
    pub output_dir: String,
    /// File-name stem for emitted results ("" derives
    /// `{normalizer}-{strategy}-seed{seed}`).
    pub run_name: String,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            dataset: "synthetic".into(),
            data_path: String::new(),
            label_column: "label".into(),
            chunk_size: 500_000,
            split_ratio: 0.8,
            drop_partial: false,
            n_experiences: 6,
            rows_per_experience: 20_000,
            n_features: 20,
            scale_jump_at: 3,
            scale_factor: 100.0,
            class_balance: 0.3,
            data_seed: 0,
            normalizer: "clean".into(),
            clean_momentum: 0.9,
            cn_lambda: 0.1,
            eps_den: 1e-8,
            cn_eps: 1e-8,
            strategy: "finetune".into(),
            buffer_capacity: 5_000,
            replay_fraction: 0.5,
            ewc_lambda: 100.0,
            fisher_sample: 10_000,
            reference_batch: 1024,
            hidden_layers: vec![128, 128, 128, 128],
            dropout: 0.5,
            kappa: 0.5,
            epochs: 20,
            batch_size: 20_000,
            learning_rate: 1e-3,
            shuffle: true,
            seed: 0,
            output_dir: String::new(),
            run_name: String::new(),
        }
    }
}

const NORMALIZERS: [&str; 4] = ["global", "local", "cn", "clean"];
const STRATEGIES: [&str; 4] = ["finetune", "reservoir", "agem", "ewc"];

impl RunConfig {
    /// Checks every field, naming the offending one on failure.
    pub fn validate(&self) -> Result<()> {
        match self.dataset.as_str() {
            "synthetic" => self.drift_config().validate()?,
            "unsw" | "cicids" => {
                if self.data_path.is_empty() {
                    return Err(Error::config(
                        "data_path",
                        format!("required for dataset '{}'", self.dataset),
                    ));
                }
                if self.chunk_size < 2 {
                    return Err(Error::config("chunk_size", "must be at least 2"));
                }
                if !(self.split_ratio > 0.0 && self.split_ratio < 1.0) {
                    return Err(Error::config("split_ratio", "must lie strictly in (0, 1)"));
                }
            }
            other => {
                return Err(Error::config(
                    "dataset",
                    format!("unknown dataset '{other}' (expected synthetic, unsw, or cicids)"),
                ))
            }
        }
        if !NORMALIZERS.contains(&self.normalizer.as_str()) {
            return Err(Error::config(
                "normalizer",
                format!(
                    "unknown normalizer '{}' (expected one of {})",
                    self.normalizer,
                    NORMALIZERS.join(", ")
                ),
            ));
        }
        if !STRATEGIES.contains(&self.strategy.as_str()) {
            return Err(Error::config(
                "strategy",
                format!(
                    "unknown strategy '{}' (expected one of {})",
                    self.strategy,
                    STRATEGIES.join(", ")
                ),
            ));
        }
        if !(0.0..=1.0).contains(&self.clean_momentum) {
            return Err(Error::config("clean_momentum", "must lie in [0, 1]"));
        }
        if !(0.0..=1.0).contains(&self.cn_lambda) {
            return Err(Error::config("cn_lambda", "must lie in [0, 1]"));
        }
        if !(self.eps_den.is_finite() && self.eps_den > 0.0) {
            return Err(Error::config("eps_den", "must be finite and positive"));
        }
        if !(self.cn_eps.is_finite() && self.cn_eps > 0.0) {
            return Err(Error::config("cn_eps", "must be finite and positive"));
        }
        if self.buffer_capacity == 0 {
            return Err(Error::config("buffer_capacity", "must be at least 1"));
        }
        if !(self.replay_fraction.is_finite() && self.replay_fraction >= 0.0) {
            return Err(Error::config(
                "replay_fraction",
                "must be finite and non-negative",
            ));
        }
        if !(self.ewc_lambda.is_finite() && self.ewc_lambda >= 0.0) {
            return Err(Error::config("ewc_lambda", "must be finite and non-negative"));
        }
        if self.fisher_sample == 0 {
            return Err(Error::config("fisher_sample", "must be at least 1"));
        }
        if self.reference_batch == 0 {
            return Err(Error::config("reference_batch", "must be at least 1"));
        }
        if self.hidden_layers.iter().any(|&w| w == 0) {
            return Err(Error::config("hidden_layers", "layer widths must be positive"));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::config("dropout", "must lie in [0, 1)"));
        }
        if !(0.0..=1.0).contains(&self.kappa) {
            return Err(Error::config("kappa", "must lie in [0, 1]"));
        }
        if self.epochs == 0 {
            return Err(Error::config("epochs", "must be at least 1"));
        }
        if self.batch_size == 0 {
            return Err(Error::config("batch_size", "must be at least 1"));
        }
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return Err(Error::config("learning_rate", "must be finite and positive"));
        }
        Ok(())
    }

    /// File-name stem for emitted results.
    pub fn resolved_run_name(&self) -> String {
        if self.run_name.is_empty() {
            format!("{}-{}-seed{}", self.normalizer, self.strategy, self.seed)
        } else {
            self.run_name.clone()
        }
    }

    fn drift_config(&self) -> DriftConfig {
        DriftConfig {
            n_experiences: self.n_experiences,
            rows_per_experience: self.rows_per_experience,
            n_features: self.n_features,
            scale_jump_at: self.scale_jump_at,
            scale_factor: self.scale_factor,
            class_balance: self.class_balance,
            split_ratio: self.split_ratio,
            seed: self.data_seed,
        }
    }
}

/// Builds the experience stream a config describes.
pub fn build_stream(cfg: &RunConfig) -> Result<ExperienceStream> {
    match cfg.dataset.as_str() {
        "synthetic" => generate_drift_stream(&cfg.drift_config()),
        "unsw" => {
            let data = preprocess_unsw_csv(&cfg.data_path, &cfg.label_column)?;
            chunk_stream_opt(data, cfg.chunk_size, cfg.split_ratio, cfg.drop_partial)
        }
        "cicids" => {
            let data = preprocess_cicids_csv(&cfg.data_path, &cfg.label_column)?;
            chunk_stream_opt(data, cfg.chunk_size, cfg.split_ratio, cfg.drop_partial)
        }
        other => Err(Error::config("dataset", format!("unknown dataset '{other}'"))),
    }
}

/// One metric value in the long-format log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricRecord {
    pub experience: usize,
    pub epoch: usize,
    pub metric: String,
    pub value: f64,
}

/// Everything a run produced. All fields except `wall_clock_seconds` are
/// bit-identical across repeats of the same config and seed.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunLog {
    pub run_name: String,
    /// Display name of the normalizer ("global-oracle", "local", "cn", "clean").
    pub normalizer: String,
    pub strategy: String,
    pub seed: u64,
    /// True when the normalizer was fitted on the full stream, including
    /// test data — an upper-bound reference, not a deployable scheme.
    pub oracle_normalizer: bool,
    /// Per-epoch metric curves in emission order.
    pub records: Vec<MetricRecord>,
    /// End-of-experience accuracies, lower-triangular.
    pub accuracy: AccuracyMatrix,
    /// End-of-experience AUROCs; `None` where undefined (single-class split).
    pub auroc_cells: Vec<Vec<Option<f64>>>,
    /// Normalizer state version in effect during each experience.
    pub normalizer_versions: Vec<u64>,
    pub wall_clock_seconds: Vec<f64>,
    /// The exact config that produced this log.
    pub config_echo: RunConfig,
}

impl RunLog {
    pub fn n_experiences(&self) -> usize {
        self.accuracy.n_experiences()
    }

    /// Mean accuracy over all test sets at the final experience.
    pub fn final_average_accuracy(&self) -> Result<f64> {
        self.accuracy.average_accuracy(self.n_experiences() - 1)
    }

    /// Mean forgetting at the final experience (`None` for a 1-experience run).
    pub fn final_average_forgetting(&self) -> Result<Option<f64>> {
        self.accuracy.average_forgetting(self.n_experiences() - 1)
    }

    /// Mean of the defined per-cell AUROCs at the final experience.
    pub fn final_average_auroc(&self) -> Option<f64> {
        let last = self.auroc_cells.last()?;
        let defined: Vec<f64> = last.iter().flatten().copied().collect();
        if defined.is_empty() {
            None
        } else {
            Some(defined.iter().sum::<f64>() / defined.len() as f64)
        }
    }

    /// Equality over every reproducible field (timing excluded).
    pub fn same_results(&self, other: &RunLog) -> bool {
        self.run_name == other.run_name
            && self.normalizer == other.normalizer
            && self.strategy == other.strategy
            && self.seed == other.seed
            && self.oracle_normalizer == other.oracle_normalizer
            && self.records == other.records
            && self.accuracy == other.accuracy
            && self.auroc_cells == other.auroc_cells
            && self.normalizer_versions == other.normalizer_versions
            && self.config_echo == other.config_echo
    }
}

/// Bumped whenever the JSON summary layout changes incompatibly.
pub const SUMMARY_FORMAT_VERSION: u32 = 1;

/// The JSON summary artifact: identity, headline numbers, both triangular
/// matrices, timing, and the config echo.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunSummary {
    pub format_version: u32,
    pub run_name: String,
    pub normalizer: String,
    pub strategy: String,
    pub seed: u64,
    pub oracle_normalizer: bool,
    pub n_experiences: usize,
    pub final_average_accuracy: f64,
    pub final_average_forgetting: Option<f64>,
    pub final_average_auroc: Option<f64>,
    pub accuracy_matrix: AccuracyMatrix,
    pub auroc_matrix: Vec<Vec<Option<f64>>>,
    pub normalizer_versions: Vec<u64>,
    pub wall_clock_seconds: Vec<f64>,
    pub config: RunConfig,
}

impl RunSummary {
    pub fn from_log(log: &RunLog) -> Result<Self> {
        Ok(RunSummary {
            format_version: SUMMARY_FORMAT_VERSION,
            run_name: log.run_name.clone(),
            normalizer: log.normalizer.clone(),
            strategy: log.strategy.clone(),
            seed: log.seed,
            oracle_normalizer: log.oracle_normalizer,
            n_experiences: log.n_experiences(),
            final_average_accuracy: log.final_average_accuracy()?,
            final_average_forgetting: log.final_average_forgetting()?,
            final_average_auroc: log.final_average_auroc(),
            accuracy_matrix: log.accuracy.clone(),
            auroc_matrix: log.auroc_cells.clone(),
            normalizer_versions: log.normalizer_versions.clone(),
            wall_clock_seconds: log.wall_clock_seconds.clone(),
            config: log.config_echo.clone(),
        })
    }

    pub fn read_from(path: &Path) -> Result<Self> {
        Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
    }
}

/// Validates the config, builds its dataset, and runs it.
pub fn run_experiment(cfg: &RunConfig) -> Result<RunLog> {
    cfg.validate()?;
    let stream = build_stream(cfg)?;
    run_on_stream(&stream, cfg)
}

/// Runs each config in order, one outcome per config. Runs share nothing,
/// so each log is identical to running its config alone, and one failing
/// run never aborts the others.
pub fn run_grid(configs: &[RunConfig]) -> Vec<Result<RunLog>> {
    configs.iter().map(run_experiment).collect()
}

// Decorrelated per-component seeds derived from the run seed.
const SALT_MODEL: u64 = 1;
const SALT_SHUFFLE: u64 = 2;
const SALT_BUFFER: u64 = 3;
const SALT_FISHER: u64 = 4;

fn derive_seed(seed: u64, salt: u64) -> u64 {
    let mut z = seed ^ salt.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

enum StrategyState {
    Finetune,
    Reservoir(ReservoirBuffer),
    Agem(ReservoirBuffer),
    Ewc(EwcState),
}

fn build_normalizer(cfg: &RunConfig, stream: &ExperienceStream) -> Result<AnyNormalizer> {
    let d = stream.feature_count();
    Ok(match cfg.normalizer.as_str() {
        "global" => AnyNormalizer::Global(GlobalNormalizer::fit(stream.all_blocks(), cfg.eps_den)?),
        "local" => AnyNormalizer::Local(LocalNormalizer::new(cfg.eps_den)),
        "cn" => AnyNormalizer::Cn(CnNormalizer::new(d, cfg.cn_lambda, cfg.cn_eps)?),
        "clean" => AnyNormalizer::Clean(CleanNormalizer::new(d, cfg.clean_momentum, cfg.eps_den)?),
        other => {
            return Err(Error::config(
                "normalizer",
                format!("unknown normalizer '{other}'"),
            ))
        }
    })
}

fn build_strategy(cfg: &RunConfig) -> Result<StrategyState> {
    Ok(match cfg.strategy.as_str() {
        "finetune" => StrategyState::Finetune,
        "reservoir" => StrategyState::Reservoir(ReservoirBuffer::new(
            cfg.buffer_capacity,
            derive_seed(cfg.seed, SALT_BUFFER),
        )?),
        "agem" => StrategyState::Agem(ReservoirBuffer::new(
            cfg.buffer_capacity,
            derive_seed(cfg.seed, SALT_BUFFER),
        )?),
        "ewc" => StrategyState::Ewc(EwcState::new(
            cfg.ewc_lambda,
            cfg.fisher_sample,
            derive_seed(cfg.seed, SALT_FISHER),
        )?),
        other => {
            return Err(Error::config(
                "strategy",
                format!("unknown strategy '{other}'"),
            ))
        }
    })
}

/// Best recorded accuracy on test set `t_prime` over matrix rows before `t`.
fn historical_best(matrix: &AccuracyMatrix, t: usize, t_prime: usize) -> Option<f64> {
    let mut best: Option<f64> = None;
    for s in t_prime..t {
        if let Some(v) = matrix.cell(s, t_prime) {
            best = Some(best.map_or(v, |b: f64| b.max(v)));
        }
    }
    best
}

struct AbortContext<'a> {
    cfg: &'a RunConfig,
    experience: usize,
    epoch: usize,
}

/// Writes a full diagnostic snapshot and wraps the cause in a run-abort error.
fn abort_run(
    ctx: &AbortContext,
    message: String,
    model: &MlpModel,
    optimizer: &AdamState,
    normalizer: &mut AnyNormalizer,
    strategy: &mut StrategyState,
) -> Error {
    if let Some(layer) = model.scaling() {
        let _ = normalizer.sync_scaling(layer);
    }
    let (buffer, anchoring) = match strategy {
        StrategyState::Finetune => (None, None),
        StrategyState::Reservoir(b) | StrategyState::Agem(b) => (Some(b.to_state()), None),
        StrategyState::Ewc(e) => {
            e.checkpoint_rng();
            (None, Some(e.clone()))
        }
    };
    let snapshot = RunSnapshot {
        format_version: SNAPSHOT_FORMAT_VERSION,
        normalizer_name: normalizer.name().to_string(),
        strategy_name: ctx.cfg.strategy.clone(),
        experience: ctx.experience,
        epoch: ctx.epoch,
        model: ModelSnapshot::capture(model),
        optimizer: optimizer.clone(),
        normalizer: normalizer.clone(),
        buffer,
        anchoring,
    };
    let dir = if ctx.cfg.output_dir.is_empty() {
        std::env::temp_dir()
    } else {
        PathBuf::from(&ctx.cfg.output_dir)
    };
    let path = dir.join(format!("{}-abort.json", ctx.cfg.resolved_run_name()));
    let written = std::fs::create_dir_all(&dir).is_ok() && snapshot.write_to(&path).is_ok();
    Error::RunAborted {
        message,
        snapshot: written.then(|| path.display().to_string()),
    }
}

/// Executes the full protocol on an already-built stream.
pub fn run_on_stream(stream: &ExperienceStream, cfg: &RunConfig) -> Result<RunLog> {
    cfg.validate()?;
    let d = stream.feature_count();
    let total = stream.total_experiences();

    let mut normalizer = build_normalizer(cfg, stream)?;
    let mut strategy = build_strategy(cfg)?;

    let mut dims = Vec::with_capacity(cfg.hidden_layers.len() + 2);
    dims.push(d);
    dims.extend_from_slice(&cfg.hidden_layers);
    dims.push(1);
    let mut model = MlpModel::new(&dims, cfg.dropout, derive_seed(cfg.seed, SALT_MODEL))?;
    if matches!(normalizer, AnyNormalizer::Clean(_)) {
        model.attach_input_scaling();
    }
    let mut optimizer = AdamState::new(model.param_count(), cfg.learning_rate);
    let mut shuffle_rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, SALT_SHUFFLE));

    let mut records = Vec::new();
    let mut matrix = AccuracyMatrix::new(total)?;
    let mut auroc_cells: Vec<Vec<Option<f64>>> = (0..total).map(|t| vec![None; t + 1]).collect();
    let mut normalizer_versions = Vec::with_capacity(total);
    let mut wall_clock = Vec::with_capacity(total);

    for t in 0..total {
        let started = Instant::now();
        let train = &stream.experience(t).train;
        normalizer.update(train)?;
        normalizer_versions.push(normalizer.state_version());

        // The normalizer is frozen until the next experience, so every test
        // set seen so far can be normalized once and reused across epochs.
        let mut test_inputs = Vec::with_capacity(t + 1);
        for t_prime in 0..=t {
            test_inputs.push(normalizer.model_input(stream.experience(t_prime).test.values())?);
        }

        let n_rows = train.rows();
        let mut order: Vec<usize> = (0..n_rows).collect();

        for epoch in 0..cfg.epochs {
            let ctx = AbortContext {
                cfg,
                experience: t,
                epoch,
            };
            if cfg.shuffle {
                order.shuffle(&mut shuffle_rng);
            }

            let mut loss_sum = 0.0;
            let mut steps = 0usize;
            for batch_indices in order.chunks(cfg.batch_size) {
                let raw = train.gather(batch_indices);
                let step_loss = match train_step(
                    cfg,
                    &raw,
                    &mut model,
                    &mut optimizer,
                    &normalizer,
                    &mut strategy,
                ) {
                    Ok(loss) => loss,
                    Err(Error::NonFinite { index, context }) => {
                        return Err(abort_run(
                            &ctx,
                            format!("non-finite value at index {index}: {context}"),
                            &model,
                            &optimizer,
                            &mut normalizer,
                            &mut strategy,
                        ))
                    }
                    Err(e) => return Err(e),
                };
                if !step_loss.is_finite() {
                    return Err(abort_run(
                        &ctx,
                        format!("training loss became {step_loss} at experience {t}, epoch {epoch}"),
                        &model,
                        &optimizer,
                        &mut normalizer,
                        &mut strategy,
                    ));
                }
                loss_sum += step_loss;
                steps += 1;
            }

            if let Some(layer) = model.scaling() {
                normalizer.sync_scaling(layer)?;
            }

            // full evaluation pass over every test set seen so far
            let last_epoch = epoch + 1 == cfg.epochs;
            let mut accs = Vec::with_capacity(t + 1);
            let mut aurocs: Vec<Option<f64>> = Vec::with_capacity(t + 1);
            for t_prime in 0..=t {
                let labels = stream.experience(t_prime).test.labels();
                let probs = model.forward(&test_inputs[t_prime])?;
                let preds: Vec<u8> = probs.iter().map(|&p| threshold(p, cfg.kappa)).collect();
                accs.push(accuracy(&preds, labels)?);
                let scored = ScoredPredictions::new(probs, labels.to_vec())?;
                aurocs.push(match auroc(&scored) {
                    Ok(v) => Some(v),
                    Err(Error::AurocUndefined) => None,
                    Err(e) => return Err(e),
                });
            }

            for t_prime in 0..=t {
                records.push(MetricRecord {
                    experience: t,
                    epoch,
                    metric: format!("accuracy_exp{t_prime}"),
                    value: accs[t_prime],
                });
            }
            for t_prime in 0..=t {
                if let Some(v) = aurocs[t_prime] {
                    records.push(MetricRecord {
                        experience: t,
                        epoch,
                        metric: format!("auroc_exp{t_prime}"),
                        value: v,
                    });
                }
            }
            let mut forgetting_sum = 0.0;
            let mut forgetting_n = 0usize;
            for t_prime in 0..t {
                if let Some(best) = historical_best(&matrix, t, t_prime) {
                    let value = best - accs[t_prime];
                    records.push(MetricRecord {
                        experience: t,
                        epoch,
                        metric: format!("forgetting_exp{t_prime}"),
                        value,
                    });
                    forgetting_sum += value;
                    forgetting_n += 1;
                }
            }
            records.push(MetricRecord {
                experience: t,
                epoch,
                metric: "average_accuracy".into(),
                value: accs.iter().sum::<f64>() / accs.len() as f64,
            });
            if forgetting_n > 0 {
                records.push(MetricRecord {
                    experience: t,
                    epoch,
                    metric: "average_forgetting".into(),
                    value: forgetting_sum / forgetting_n as f64,
                });
            }
            let defined: Vec<f64> = aurocs.iter().flatten().copied().collect();
            if !defined.is_empty() {
                records.push(MetricRecord {
                    experience: t,
                    epoch,
                    metric: "average_auroc".into(),
                    value: defined.iter().sum::<f64>() / defined.len() as f64,
                });
            }
            records.push(MetricRecord {
                experience: t,
                epoch,
                metric: "train_loss".into(),
                value: loss_sum / steps as f64,
            });

            if last_epoch {
                for t_prime in 0..=t {
                    matrix.record(t, t_prime, accs[t_prime])?;
                    auroc_cells[t][t_prime] = aurocs[t_prime];
                }
            }
        }

        // end-of-experience bookkeeping
        match &mut strategy {
            StrategyState::Finetune => {}
            StrategyState::Reservoir(buffer) | StrategyState::Agem(buffer) => {
                buffer.offer_block(train);
            }
            StrategyState::Ewc(state) => {
                let normalized =
                    FeatureMatrix::new(normalizer.model_input(train.values())?, train.labels().to_vec())?;
                state.consolidate(&mut model, &normalized)?;
            }
        }
        wall_clock.push(started.elapsed().as_secs_f64());
    }

    Ok(RunLog {
        run_name: cfg.resolved_run_name(),
        normalizer: normalizer.name().to_string(),
        strategy: cfg.strategy.clone(),
        seed: cfg.seed,
        oracle_normalizer: matches!(normalizer, AnyNormalizer::Global(_)),
        records,
        accuracy: matrix,
        auroc_cells,
        normalizer_versions,
        wall_clock_seconds: wall_clock,
        config_echo: cfg.clone(),
    })
}

/// One gradient step under the active strategy; returns the optimized loss.
fn train_step(
    cfg: &RunConfig,
    raw_batch: &FeatureMatrix,
    model: &mut MlpModel,
    optimizer: &mut AdamState,
    normalizer: &AnyNormalizer,
    strategy: &mut StrategyState,
) -> Result<f64> {
    let (loss, grad) = match strategy {
        StrategyState::Finetune => {
            let x = normalizer.model_input(raw_batch.values())?;
            model.backward(&x, raw_batch.labels())?
        }
        StrategyState::Reservoir(buffer) => {
            let mixed = buffer.replay_mix(raw_batch, cfg.replay_fraction)?;
            let x = normalizer.model_input(mixed.values())?;
            model.backward(&x, mixed.labels())?
        }
        StrategyState::Agem(buffer) => {
            let x = normalizer.model_input(raw_batch.values())?;
            let (loss, mut grad) = model.backward(&x, raw_batch.labels())?;
            if let Some(reference) = buffer.sample_reference_block(cfg.reference_batch)? {
                let xr = normalizer.model_input(reference.values())?;
                let (_, ref_grad) = model.backward(&xr, reference.labels())?;
                agem_project(&mut grad, &ref_grad)?;
            }
            (loss, grad)
        }
        StrategyState::Ewc(state) => {
            let x = normalizer.model_input(raw_batch.values())?;
            let (data_loss, mut grad) = model.backward(&x, raw_batch.labels())?;
            let params = model.flat_params();
            let penalty = state.apply_penalty(&params, &mut grad)?;
            (data_loss + penalty, grad)
        }
    };
    let mut params = model.flat_params();
    optimizer.step(&mut params, &grad)?;
    model.set_flat_params(&params)?;
    Ok(loss)
}

/// Writes the long-format metric CSV:
/// `experience, epoch, normalizer, strategy, metric, value`.
///
/// Values are written in the shortest representation that parses back to
/// the identical `f64`, so the file is both human-readable and lossless.
pub fn write_metric_csv(log: &RunLog, path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["experience", "epoch", "normalizer", "strategy", "metric", "value"])?;
    for r in &log.records {
        w.write_record([
            r.experience.to_string(),
            r.epoch.to_string(),
            log.normalizer.clone(),
            log.strategy.clone(),
            r.metric.clone(),
            r.value.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Reads a metric CSV back into records (normalizer and strategy columns
/// are validated for consistency and returned alongside).
pub fn read_metric_csv(path: &Path) -> Result<(String, String, Vec<MetricRecord>)> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_path(path)?;
    let mut normalizer = String::new();
    let mut strategy = String::new();
    let mut records = Vec::new();
    for (i, row) in rdr.records().enumerate() {
        let row = row?;
        let field = |j: usize| -> Result<&str> {
            row.get(j).ok_or_else(|| {
                Error::shape(format!("metric csv row {i} has fewer than 6 fields"))
            })
        };
        let parse_err = |what: &str, v: &str| {
            Error::shape(format!("metric csv row {i}: cannot parse {what} '{v}'"))
        };
        let experience: usize = field(0)?
            .parse()
            .map_err(|_| parse_err("experience", field(0).unwrap_or("")))?;
        let epoch: usize = field(1)?
            .parse()
            .map_err(|_| parse_err("epoch", field(1).unwrap_or("")))?;
        let norm = field(2)?.to_string();
        let strat = field(3)?.to_string();
        if normalizer.is_empty() {
            normalizer = norm;
            strategy = strat;
        } else if norm != normalizer || strat != strategy {
            return Err(Error::contract(format!(
                "metric csv row {i} mixes runs: ({norm}, {strat}) vs ({normalizer}, {strategy})"
            )));
        }
        let metric = field(4)?.to_string();
        let value: f64 = field(5)?
            .parse()
            .map_err(|_| parse_err("value", field(5).unwrap_or("")))?;
        records.push(MetricRecord {
            experience,
            epoch,
            metric,
            value,
        });
    }
    Ok((normalizer, strategy, records))
}

/// Writes the metric CSV and JSON summary for a run into `dir`; returns
/// `(csv_path, json_path)`.
pub fn emit_results(log: &RunLog, dir: &Path) -> Result<(PathBuf, PathBuf)> {
    std::fs::create_dir_all(dir)?;
    let stem = &log.run_name;
    let csv_path = dir.join(format!("{stem}.csv"));
    let json_path = dir.join(format!("{stem}.json"));
    write_metric_csv(log, &csv_path)?;
    let summary = RunSummary::from_log(log)?;
    std::fs::write(&json_path, serde_json::to_string_pretty(&summary)?)?;
    Ok((csv_path, json_path))
}

/// One row of the cross-run comparison table: final headline metrics
/// averaged over every completed run (seed) of a (normalizer, strategy)
/// pair, with failed runs counted rather than dropped.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ComparisonRow {
    pub normalizer: String,
    pub strategy: String,
    pub completed: usize,
    pub failed: usize,
    pub final_average_accuracy: Option<f64>,
    pub final_average_forgetting: Option<f64>,
    pub final_average_auroc: Option<f64>,
}

/// Groups summaries by (normalizer, strategy) and averages their headline
/// metrics, sorted by normalizer then strategy. `failures` lists the
/// (normalizer, strategy) of runs that did not complete; a pair whose runs
/// all failed still gets a row (with empty metric cells) so failures stay
/// visible in the table.
pub fn aggregate_summaries(
    summaries: &[RunSummary],
    failures: &[(String, String)],
) -> Vec<ComparisonRow> {
    let mut keys: Vec<(String, String)> = summaries
        .iter()
        .map(|s| (s.normalizer.clone(), s.strategy.clone()))
        .chain(failures.iter().cloned())
        .collect();
    keys.sort();
    keys.dedup();

    let mean = |values: Vec<f64>| -> Option<f64> {
        if values.is_empty() {
            None
        } else {
            Some(values.iter().sum::<f64>() / values.len() as f64)
        }
    };

    keys.into_iter()
        .map(|(normalizer, strategy)| {
            let group: Vec<&RunSummary> = summaries
                .iter()
                .filter(|s| s.normalizer == normalizer && s.strategy == strategy)
                .collect();
            let failed = failures
                .iter()
                .filter(|(n, s)| *n == normalizer && *s == strategy)
                .count();
            let accuracy = group.iter().map(|s| s.final_average_accuracy).collect();
            let forgetting = group
                .iter()
                .filter_map(|s| s.final_average_forgetting)
                .collect();
            let auroc_values = group.iter().filter_map(|s| s.final_average_auroc).collect();
            ComparisonRow {
                normalizer,
                strategy,
                completed: group.len(),
                failed,
                final_average_accuracy: mean(accuracy),
                final_average_forgetting: mean(forgetting),
                final_average_auroc: mean(auroc_values),
            }
        })
        .collect()
}

/// Writes the comparison table as CSV; absent cells stay empty, never 0.
pub fn write_comparison_csv(rows: &[ComparisonRow], path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record([
        "normalizer",
        "strategy",
        "completed",
        "failed",
        "final_average_accuracy",
        "final_average_forgetting",
        "final_average_auroc",
    ])?;
    let cell = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
    for r in rows {
        w.write_record([
            r.normalizer.clone(),
            r.strategy.clone(),
            r.completed.to_string(),
            r.failed.to_string(),
            cell(r.final_average_accuracy),
            cell(r.final_average_forgetting),
            cell(r.final_average_auroc),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Small-but-real config: 2 experiences of 120 rows, 3 features,
    /// a 1-hidden-layer net, 2 epochs. Runs in milliseconds.
    fn tiny_config() -> RunConfig {
        RunConfig {
            n_experiences: 2,
            rows_per_experience: 120,
            n_features: 3,
            scale_jump_at: 1,
            scale_factor: 10.0,
            hidden_layers: vec![8],
            dropout: 0.0,
            epochs: 2,
            batch_size: 32,
            learning_rate: 1e-2,
            ..RunConfig::default()
        }
    }

    #[test]
    fn records_cover_every_metric_for_every_epoch() {
        let log = run_experiment(&tiny_config()).unwrap();
        let count = |t: usize, e: usize, m: &str| {
            log.records
                .iter()
                .filter(|r| r.experience == t && r.epoch == e && r.metric == m)
                .count()
        };
        for e in 0..2 {
            // experience 0: one test set, no forgetting yet
            assert_eq!(count(0, e, "accuracy_exp0"), 1);
            assert_eq!(count(0, e, "auroc_exp0"), 1);
            assert_eq!(count(0, e, "average_accuracy"), 1);
            assert_eq!(count(0, e, "average_auroc"), 1);
            assert_eq!(count(0, e, "train_loss"), 1);
            assert_eq!(count(0, e, "average_forgetting"), 0);
            // experience 1: both test sets plus forgetting on set 0
            assert_eq!(count(1, e, "accuracy_exp0"), 1);
            assert_eq!(count(1, e, "accuracy_exp1"), 1);
            assert_eq!(count(1, e, "auroc_exp0"), 1);
            assert_eq!(count(1, e, "auroc_exp1"), 1);
            assert_eq!(count(1, e, "forgetting_exp0"), 1);
            assert_eq!(count(1, e, "average_forgetting"), 1);
            assert_eq!(count(1, e, "average_accuracy"), 1);
            assert_eq!(count(1, e, "average_auroc"), 1);
            assert_eq!(count(1, e, "train_loss"), 1);
        }
    }

    #[test]
    fn same_config_and_seed_reproduce_the_log_bit_for_bit() {
        let cfg = tiny_config();
        let a = run_experiment(&cfg).unwrap();
        let b = run_experiment(&cfg).unwrap();
        assert!(a.same_results(&b));
        // bitwise on the metric values, not just approximate
        for (ra, rb) in a.records.iter().zip(&b.records) {
            assert_eq!(ra.value.to_bits(), rb.value.to_bits());
        }
        // a different seed changes the outcome
        let mut cfg2 = cfg;
        cfg2.seed = 1;
        let c = run_experiment(&cfg2).unwrap();
        assert!(!a.same_results(&c));
    }

    #[test]
    fn every_strategy_and_normalizer_completes_a_tiny_run() {
        for strategy in STRATEGIES {
            for normalizer in NORMALIZERS {
                let mut cfg = tiny_config();
                cfg.strategy = strategy.into();
                cfg.normalizer = normalizer.into();
                cfg.buffer_capacity = 64;
                cfg.reference_batch = 16;
                cfg.fisher_sample = 16;
                let log = run_experiment(&cfg)
                    .unwrap_or_else(|e| panic!("{normalizer}+{strategy}: {e}"));
                assert_eq!(log.n_experiences(), 2);
                assert!(log.final_average_accuracy().unwrap() > 0.0);
                assert_eq!(log.oracle_normalizer, normalizer == "global");
            }
        }
    }

    #[test]
    fn normalizer_versions_advance_once_per_experience() {
        let mut cfg = tiny_config();
        cfg.n_experiences = 3;
        for normalizer in NORMALIZERS {
            cfg.normalizer = normalizer.into();
            let log = run_experiment(&cfg).unwrap();
            assert_eq!(log.normalizer_versions, vec![1, 2, 3], "{normalizer}");
        }
    }

    #[test]
    fn grid_results_match_solo_runs_and_empty_grid_is_empty() {
        let mut a = tiny_config();
        a.normalizer = "local".into();
        let mut b = tiny_config();
        b.strategy = "reservoir".into();
        b.buffer_capacity = 64;
        let grid = run_grid(&[a.clone(), b.clone()]);
        assert_eq!(grid.len(), 2);
        assert!(grid[0].as_ref().unwrap().same_results(&run_experiment(&a).unwrap()));
        assert!(grid[1].as_ref().unwrap().same_results(&run_experiment(&b).unwrap()));
        assert!(run_grid(&[]).is_empty());
    }

    #[test]
    fn one_failing_run_does_not_abort_the_grid() {
        let good = tiny_config();
        let mut bad = tiny_config();
        bad.epochs = 0;
        let grid = run_grid(&[good.clone(), bad, good]);
        assert_eq!(grid.len(), 3);
        assert!(grid[0].is_ok());
        assert!(grid[1].is_err());
        assert!(grid[2].is_ok());
        assert!(grid[0]
            .as_ref()
            .unwrap()
            .same_results(grid[2].as_ref().unwrap()));
    }

    #[test]
    fn invalid_fields_are_reported_by_name() {
        let cases: Vec<(RunConfig, &str)> = vec![
            (
                RunConfig {
                    dataset: "imagenet".into(),
                    ..tiny_config()
                },
                "dataset",
            ),
            (
                RunConfig {
                    normalizer: "batchnorm".into(),
                    ..tiny_config()
                },
                "normalizer",
            ),
            (
                RunConfig {
                    strategy: "icarl".into(),
                    ..tiny_config()
                },
                "strategy",
            ),
            (
                RunConfig {
                    epochs: 0,
                    ..tiny_config()
                },
                "epochs",
            ),
            (
                RunConfig {
                    dropout: 1.0,
                    ..tiny_config()
                },
                "dropout",
            ),
            (
                RunConfig {
                    learning_rate: -1.0,
                    ..tiny_config()
                },
                "learning_rate",
            ),
            (
                RunConfig {
                    dataset: "unsw".into(),
                    data_path: String::new(),
                    ..tiny_config()
                },
                "data_path",
            ),
            (
                RunConfig {
                    class_balance: 0.0,
                    ..tiny_config()
                },
                "class_balance",
            ),
        ];
        for (cfg, field) in cases {
            let err = run_experiment(&cfg).unwrap_err().to_string();
            assert!(err.contains(field), "expected '{field}' in: {err}");
        }
    }

    #[test]
    fn accuracy_matrix_holds_the_last_epoch_values() {
        let log = run_experiment(&tiny_config()).unwrap();
        let last_epoch = 1; // epochs = 2
        for t in 0..2 {
            for t_prime in 0..=t {
                let from_records = log
                    .records
                    .iter()
                    .find(|r| {
                        r.experience == t
                            && r.epoch == last_epoch
                            && r.metric == format!("accuracy_exp{t_prime}")
                    })
                    .unwrap()
                    .value;
                assert_eq!(
                    log.accuracy.get(t, t_prime).unwrap().to_bits(),
                    from_records.to_bits()
                );
            }
        }
    }

    #[test]
    fn adaptive_normalizer_attaches_a_scaling_layer_and_others_do_not() {
        let stream = build_stream(&tiny_config()).unwrap();
        for normalizer in NORMALIZERS {
            let mut cfg = tiny_config();
            cfg.normalizer = normalizer.into();
            let norm = build_normalizer(&cfg, &stream).unwrap();
            assert_eq!(norm.scaling().is_some(), normalizer == "clean");
        }
    }

    #[test]
    fn csv_and_json_outputs_round_trip_the_matrix_exactly() {
        let dir = tempfile::tempdir().unwrap();
        let log = run_experiment(&tiny_config()).unwrap();
        let (csv_path, json_path) = emit_results(&log, dir.path()).unwrap();

        let summary = RunSummary::read_from(&json_path).unwrap();
        let (normalizer, strategy, records) = read_metric_csv(&csv_path).unwrap();
        assert_eq!(normalizer, log.normalizer);
        assert_eq!(strategy, log.strategy);
        assert_eq!(records, log.records);

        // rebuild the accuracy matrix from the CSV's last-epoch rows and
        // compare to the JSON matrix bit for bit
        let last_epoch = log.config_echo.epochs - 1;
        for t in 0..log.n_experiences() {
            for t_prime in 0..=t {
                let from_csv = records
                    .iter()
                    .find(|r| {
                        r.experience == t
                            && r.epoch == last_epoch
                            && r.metric == format!("accuracy_exp{t_prime}")
                    })
                    .unwrap()
                    .value;
                let from_json = summary.accuracy_matrix.get(t, t_prime).unwrap();
                assert_eq!(from_csv.to_bits(), from_json.to_bits());
            }
        }
    }

    #[test]
    fn rerunning_the_config_echo_reproduces_the_run() {
        let log = run_experiment(&tiny_config()).unwrap();
        let again = run_experiment(&log.config_echo).unwrap();
        assert!(log.same_results(&again));
    }

    #[test]
    fn diverging_run_aborts_with_a_diagnostic_snapshot() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = tiny_config();
        // an absurd learning rate overflows the hidden activations after one
        // optimizer step, so the second step sees a non-finite loss/gradient
        cfg.learning_rate = 1e155;
        cfg.epochs = 4;
        cfg.hidden_layers = vec![8, 8];
        cfg.output_dir = dir.path().display().to_string();
        let err = run_experiment(&cfg).unwrap_err();
        match err {
            Error::RunAborted { snapshot, .. } => {
                let path = PathBuf::from(snapshot.expect("snapshot path"));
                assert!(path.exists());
                let snap = RunSnapshot::read_from(&path).unwrap();
                assert_eq!(snap.format_version, SNAPSHOT_FORMAT_VERSION);
                assert_eq!(snap.model.dims, vec![3, 8, 8, 1]);
                // the default normalizer is the adaptive one, so the model
                // carries a scaling layer whose trained parameters must have
                // been synced into the captured normalizer state
                assert!(snap.model.has_scaling);
                let scaling = snap.normalizer.scaling().expect("synced scaling state");
                assert_eq!(scaling.weights.as_slice(), &snap.model.params[0..3]);
                assert_eq!(scaling.biases.as_slice(), &snap.model.params[3..6]);
            }
            other => panic!("expected an aborted run, got: {other}"),
        }
    }

    #[test]
    fn comparison_table_averages_over_seeds_and_keeps_failures_visible() {
        let mut logs = Vec::new();
        for seed in [0, 1] {
            let mut cfg = tiny_config();
            cfg.seed = seed;
            logs.push(run_experiment(&cfg).unwrap());
        }
        let summaries: Vec<RunSummary> =
            logs.iter().map(|l| RunSummary::from_log(l).unwrap()).collect();
        let failures = vec![("local".to_string(), "ewc".to_string())];
        let table = aggregate_summaries(&summaries, &failures);
        assert_eq!(table.len(), 2);
        assert_eq!(table[0].normalizer, "clean");
        assert_eq!(table[0].strategy, "finetune");
        assert_eq!(table[0].completed, 2);
        assert_eq!(table[0].failed, 0);
        let hand = (summaries[0].final_average_accuracy + summaries[1].final_average_accuracy) / 2.0;
        assert!((table[0].final_average_accuracy.unwrap() - hand).abs() < 1e-15);
        // the all-failed pair still appears, with empty metric cells
        assert_eq!(table[1].normalizer, "local");
        assert_eq!(table[1].strategy, "ewc");
        assert_eq!(table[1].completed, 0);
        assert_eq!(table[1].failed, 1);
        assert_eq!(table[1].final_average_accuracy, None);

        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("comparison.csv");
        write_comparison_csv(&table, &path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 3);
        assert!(lines[1].starts_with("clean,finetune,2,0,"));
        // absent cells are empty, never zero
        assert_eq!(lines[2], "local,ewc,0,1,,,");
    }

    #[test]
    fn derived_seeds_decorrelate_components() {
        let a = derive_seed(0, SALT_MODEL);
        let b = derive_seed(0, SALT_SHUFFLE);
        let c = derive_seed(0, SALT_BUFFER);
        assert_ne!(a, b);
        assert_ne!(b, c);
        assert_ne!(a, c);
        assert_eq!(derive_seed(7, SALT_MODEL), derive_seed(7, SALT_MODEL));
    }
}
