//! Ambiguity-weighted, mask-aware multi-label learning on precomputed
//! sentence embeddings.
//!
//! The crate is organised the way an experiment flows:
//!
//! - [`dataset`]: label spaces, masked instances, file formats, mask simulation
//!   and the synthetic logistic generator.
//! - [`heads`]: the linear sigmoid head, the evidential Beta head, and the
//!   `AMLM` model-bundle format.
//! - [`objective`]: stable BCE, observed-label entropy, ambiguity weights, the
//!   masked and PU losses and their gradients.
//! - [`optimizer`]: AdamW with linear warmup/decay and global-norm clipping.
//! - [`trainer`]: the mini-batch loop with dev-set checkpoint selection.
//! - [`metrics`]: HL, RL, Jaccard, micro/macro F1, AP and threshold tuning.
//! - [`analysis`]: entropy stratification, label-wise uncertainty, seed
//!   aggregation and cosine nearest neighbours.

pub mod analysis;
pub mod dataset;
pub mod heads;
pub mod metrics;
pub mod objective;
pub mod optimizer;
pub mod special;
pub mod trainer;

mod rng;

pub use dataset::{Dataset, LabelSpace, MaskedInstance, Split};
pub use heads::{Head, Mode, ModelBundle, Thresholds};
pub use metrics::{MetricsReport, ThresholdPolicy, Truth};
pub use objective::{LossReport, ObjectiveConfig};
pub use optimizer::AdamWConfig;
pub use trainer::{TrainConfig, TrainLog};
