//! Mini-batch training with per-epoch dev evaluation.
//!
//! The visit order of epoch `e` is a pure function of `(seed, e)`. At every
//! evaluation point the head is scored on the dev split (micro-F1 at 0.5) and
//! the best checkpoint is kept; on ties the earlier one wins.

use std::time::Instant;

use rand::seq::SliceRandom;
use rand::RngCore;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::Dataset;
use crate::heads::{BundleError, Head, HeadError, Mode, ModelBundle, Thresholds};
use crate::metrics::{evaluate, MetricsError, MetricsReport, ThresholdPolicy, Truth};
use crate::objective::{loss_total, HeadOutputs, LossReport, ObjectiveConfig, ObjectiveError, Targets};
use crate::optimizer::{AdamW, AdamWConfig, OptimError, ParamBlock};
use crate::rng;

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("invalid training config: {0}")]
    Config(String),
    #[error("training data: {0}")]
    Data(String),
    #[error("non-finite loss at step {step}")]
    NonFiniteLoss { step: usize },
    #[error("step {step}: {source}")]
    Optim {
        step: usize,
        #[source]
        source: OptimError,
    },
    #[error(transparent)]
    Objective(#[from] ObjectiveError),
    #[error(transparent)]
    Head(#[from] HeadError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error(transparent)]
    Bundle(#[from] BundleError),
}

/// When the dev split is scored.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EvalEvery {
    Epoch,
    /// Every `n` optimizer steps, and after the final step.
    Steps(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    /// Inverted-dropout rate applied to embeddings during training.
    pub dropout: f64,
    pub objective: ObjectiveConfig,
    pub optimizer: AdamWConfig,
    /// Final coefficient of the evidential KL term, reached after one epoch.
    pub evidential_kl_max: f64,
    pub eval_every: EvalEvery,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 5,
            batch_size: 16,
            seed: 42,
            dropout: 0.1,
            objective: ObjectiveConfig::default(),
            optimizer: AdamWConfig::default(),
            evidential_kl_max: 0.1,
            eval_every: EvalEvery::Epoch,
        }
    }
}

impl TrainConfig {
    pub fn for_mode(mode: Mode) -> Self {
        let mut cfg = Self::default();
        cfg.objective.mode = mode;
        cfg
    }

    pub fn mode(&self) -> Mode {
        self.objective.mode
    }

    pub fn validate(&self) -> Result<(), TrainError> {
        if self.epochs == 0 {
            return Err(TrainError::Config("epochs must be ≥ 1".into()));
        }
        if self.batch_size == 0 {
            return Err(TrainError::Config("batch_size must be ≥ 1".into()));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(TrainError::Config(format!("dropout must lie in [0, 1), got {}", self.dropout)));
        }
        if !(self.evidential_kl_max >= 0.0 && self.evidential_kl_max.is_finite()) {
            return Err(TrainError::Config(format!("evidential_kl_max must be ≥ 0, got {}", self.evidential_kl_max)));
        }
        if self.eval_every == EvalEvery::Steps(0) {
            return Err(TrainError::Config("eval_every steps must be ≥ 1".into()));
        }
        self.objective.validate()?;
        self.optimizer.validate().map_err(|e| TrainError::Config(e.to_string()))?;
        Ok(())
    }

    pub fn steps_per_epoch(&self, n: usize) -> usize {
        n.div_ceil(self.batch_size)
    }
}

/// Visit order for one epoch.
pub fn epoch_permutation(seed: u64, epoch: usize, n: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng::stream(seed, rng::STREAM_SHUFFLE_BASE + epoch as u64));
    order
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub epoch: usize,
    /// 1-based optimizer step.
    pub step: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub grad_norm: f64,
    pub evidential_kl: f64,
    #[serde(flatten)]
    pub loss: LossReport,
}

/// One dev evaluation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRecord {
    pub epoch: usize,
    /// Optimizer steps taken so far.
    pub step: usize,
    /// Mean training loss since the previous evaluation.
    pub mean_loss: f64,
    pub is_best: bool,
    /// Wall-clock seconds since the previous evaluation.
    pub wall_seconds: f64,
    pub dev: MetricsReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum LogEvent {
    Step(StepRecord),
    Eval(EvalRecord),
}

/// Everything that happened during one training run, in order.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainLog {
    pub events: Vec<LogEvent>,
    /// Step of the selected checkpoint.
    pub best_step: usize,
    pub best_epoch: usize,
    pub best_dev_micro_f1: f64,
}

impl TrainLog {
    pub fn steps(&self) -> impl Iterator<Item = &StepRecord> {
        self.events.iter().filter_map(|e| match e {
            LogEvent::Step(s) => Some(s),
            LogEvent::Eval(_) => None,
        })
    }

    pub fn evals(&self) -> impl Iterator<Item = &EvalRecord> {
        self.events.iter().filter_map(|e| match e {
            LogEvent::Eval(r) => Some(r),
            LogEvent::Step(_) => None,
        })
    }

    /// Per-step training losses, in order.
    pub fn loss_stream(&self) -> Vec<f64> {
        self.steps().map(|s| s.loss.total).collect()
    }

    /// One JSON object per line.
    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for e in &self.events {
            out.push_str(&serde_json::to_string(e).expect("log events serialize"));
            out.push('\n');
        }
        out
    }
}

fn dev_report(head: &Head, dev: &Dataset) -> Result<MetricsReport, TrainError> {
    let inputs: Vec<&[f64]> = dev.instances().iter().map(|x| x.h.as_slice()).collect();
    let probs = head.predict_proba_batch(&inputs)?;
    Ok(evaluate(&Truth::from_dataset(dev), &probs, ThresholdPolicy::Fixed, &Thresholds::Global(0.5))?)
}

fn check_compatible(train: &Dataset, dev: &Dataset) -> Result<(), TrainError> {
    if train.is_empty() || dev.is_empty() {
        return Err(TrainError::Data("train and dev splits must be non-empty".into()));
    }
    if train.space() != dev.space() {
        return Err(TrainError::Data("train and dev use different label spaces".into()));
    }
    if train.dim() != dev.dim() {
        return Err(TrainError::Data(format!("train embeddings have dimension {}, dev {}", train.dim(), dev.dim())));
    }
    Ok(())
}

/// Trains a fresh head and returns the best-on-dev checkpoint.
///
/// The bundle carries threshold 0.5 and the serialized `cfg`; threshold
/// tuning is a separate step.
pub fn train(train: &Dataset, dev: &Dataset, cfg: &TrainConfig) -> Result<(ModelBundle, TrainLog), TrainError> {
    cfg.validate()?;
    check_compatible(train, dev)?;
    let (n, k, d) = (train.len(), train.num_labels(), train.dim());
    let per_epoch = cfg.steps_per_epoch(n);
    let mut head = Head::init(cfg.mode(), k, d, cfg.seed);
    let rows = head.affine().b.len();
    let mut opt = AdamW::new(cfg.optimizer, cfg.epochs * per_epoch, &[rows * d, rows])
        .map_err(|e| TrainError::Config(e.to_string()))?;
    let mut dropout_rng = rng::stream(cfg.seed, rng::STREAM_DROPOUT);
    let keep_scale = 1.0 / (1.0 - cfg.dropout);

    let mut log = TrainLog { best_dev_micro_f1: f64::NEG_INFINITY, ..TrainLog::default() };
    let mut best_head = head.clone();
    let mut step = 0usize;
    let total_steps = cfg.epochs * per_epoch;
    let instances = train.instances();
    let mut loss_sum = 0.0;
    let mut batches = 0usize;
    let mut clock = Instant::now();

    for epoch in 0..cfg.epochs {
        let order = epoch_permutation(cfg.seed, epoch, n);
        for (b, batch) in order.chunks(cfg.batch_size).enumerate() {
            let dropped: Vec<Vec<f64>> = batch
                .iter()
                .map(|&i| {
                    let h = &instances[i].h;
                    if cfg.dropout == 0.0 {
                        return h.clone();
                    }
                    h.iter()
                        .map(|&x| {
                            let u = rng::unit_interval(dropout_rng.next_u64());
                            if u < cfg.dropout {
                                0.0
                            } else {
                                x * keep_scale
                            }
                        })
                        .collect()
                })
                .collect();
            let inputs: Vec<&[f64]> = dropped.iter().map(Vec::as_slice).collect();
            let y: Vec<bool> = batch.iter().flat_map(|&i| instances[i].y.iter().copied()).collect();
            let m: Vec<bool> = batch.iter().flat_map(|&i| instances[i].m.iter().copied()).collect();
            let targets = Targets::new(k, &y, &m)?;

            let mut obj = cfg.objective;
            obj.evidential_kl = cfg.evidential_kl_max * (step as f64 / per_epoch as f64).min(1.0);
            let raw = head.outputs_batch(&inputs)?;
            let outputs = match cfg.mode() {
                Mode::Evidential => HeadOutputs::Evidence(&raw),
                _ => HeadOutputs::Logits(&raw),
            };
            let (report, upstream) = loss_total(outputs, &targets, &obj);
            step += 1;
            if !report.total.is_finite() {
                return Err(TrainError::NonFiniteLoss { step });
            }
            let mut grads = head.backward(&inputs, &upstream)?;
            let affine = head.affine_mut();
            let (lr, grad_norm) = opt
                .step(&mut [
                    ParamBlock { name: "weight", values: &mut affine.w, grad: &mut grads.w, decay: true },
                    ParamBlock { name: "bias", values: &mut affine.b, grad: &mut grads.b, decay: false },
                ])
                .map_err(|source| TrainError::Optim { step, source })?;
            loss_sum += report.total;
            batches += 1;
            log.events.push(LogEvent::Step(StepRecord {
                epoch,
                step,
                batch_size: batch.len(),
                lr,
                grad_norm,
                evidential_kl: obj.evidential_kl,
                loss: report,
            }));

            let due = match cfg.eval_every {
                EvalEvery::Epoch => b + 1 == per_epoch,
                EvalEvery::Steps(every) => step.is_multiple_of(every) || step == total_steps,
            };
            if due {
                let dev_eval = dev_report(&head, dev)?;
                let is_best = dev_eval.micro_f1 > log.best_dev_micro_f1;
                if is_best {
                    log.best_dev_micro_f1 = dev_eval.micro_f1;
                    log.best_epoch = epoch;
                    log.best_step = step;
                    best_head = head.clone();
                }
                log.events.push(LogEvent::Eval(EvalRecord {
                    epoch,
                    step,
                    mean_loss: loss_sum / batches as f64,
                    is_best,
                    wall_seconds: clock.elapsed().as_secs_f64(),
                    dev: dev_eval,
                }));
                loss_sum = 0.0;
                batches = 0;
                clock = Instant::now();
            }
        }
    }

    let config = serde_json::to_string(cfg).expect("config serializes");
    let bundle = ModelBundle::new(cfg.mode(), best_head, train.space().clone(), Thresholds::Global(0.5), config)?;
    Ok((bundle, log))
}

/// Result of one seed in a multi-seed run.
#[derive(Debug, Clone)]
pub struct SeedRun {
    pub seed: u64,
    pub bundle: ModelBundle,
    pub log: TrainLog,
    /// Dev report of the selected checkpoint.
    pub dev: MetricsReport,
}

/// Independent runs of `cfg`, one per seed, in the given order.
pub fn run_seeds(
    train_set: &Dataset,
    dev: &Dataset,
    cfg: &TrainConfig,
    seeds: &[u64],
) -> Result<Vec<SeedRun>, TrainError> {
    if seeds.is_empty() {
        return Err(TrainError::Config("at least one seed is required".into()));
    }
    seeds
        .iter()
        .map(|&seed| {
            let (bundle, log) = train(train_set, dev, &TrainConfig { seed, ..*cfg })?;
            let dev = dev_report(&bundle.head, dev)?;
            Ok(SeedRun { seed, bundle, log, dev })
        })
        .collect()
}
