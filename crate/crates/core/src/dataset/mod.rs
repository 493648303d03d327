//! Domain types for partially labelled multi-label data.
//!
//! A [`Dataset`] is an immutable list of [`MaskedInstance`]s that share one
//! [`LabelSpace`] and one embedding dimension. Each instance carries a label
//! vector `y` and an observation mask `m`; `y[k]` is meaningless wherever
//! `m[k]` is false and every loss and metric in this crate ignores it there.

mod io;
mod synthetic;

use std::collections::HashSet;
use std::fmt;
use std::str::FromStr;

use rand::RngCore;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rng;

pub use io::{
    load_dataset, read_embeddings, read_label_space, read_texts, save_dataset, write_embeddings, write_labels,
    write_texts, EmbeddingFormat, EmbeddingTable,
};
pub use synthetic::{generate_synthetic, SyntheticConfig, TrueParams, AMBIGUITY_MIX};

/// The 11-emotion inventory used by the SemEval-2018 E-C task, in canonical
/// column order.
pub const EMOTIONS: [&str; 11] = [
    "anger",
    "anticipation",
    "disgust",
    "fear",
    "joy",
    "love",
    "optimism",
    "pessimism",
    "sadness",
    "surprise",
    "trust",
];

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}: {msg}")]
    Parse { path: String, line: usize, msg: String },
    #[error("invalid label space: {0}")]
    InvalidLabelSpace(String),
    #[error("unknown label column '{0}'")]
    UnknownLabel(String),
    #[error("label columns {found:?} do not match the label space {expected:?}")]
    LabelColumnMismatch { found: Vec<String>, expected: Vec<String> },
    #[error("invalid label cell '{cell}' for id {id} (expected 0, 1 or ?)")]
    BadCell { id: String, cell: String },
    #[error("dimension mismatch for id {id}: expected {expected}, got {got}")]
    DimensionMismatch { id: String, expected: usize, got: usize },
    #[error("missing embedding for id {0}")]
    MissingEmbedding(String),
    #[error("missing labels for id {0}")]
    MissingLabels(String),
    #[error("duplicate id {0}")]
    DuplicateId(String),
    #[error("dataset is empty")]
    Empty,
    #[error("observation rate must lie in (0, 1], got {0}")]
    InvalidRate(f64),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("malformed embeddings file {path}: {msg}")]
    BadEmbeddings { path: String, msg: String },
}

/// Ordered, duplicate-free list of label names.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<String>", into = "Vec<String>")]
pub struct LabelSpace {
    names: Vec<String>,
}

impl LabelSpace {
    pub fn new<S: Into<String>>(names: impl IntoIterator<Item = S>) -> Result<Self, DatasetError> {
        let names: Vec<String> = names.into_iter().map(Into::into).collect();
        if names.is_empty() {
            return Err(DatasetError::InvalidLabelSpace("no labels".into()));
        }
        let mut seen = HashSet::new();
        for name in &names {
            if name.is_empty() || name.contains(['\t', '\n', '\r']) {
                return Err(DatasetError::InvalidLabelSpace(format!("bad label name {name:?}")));
            }
            if !seen.insert(name.as_str()) {
                return Err(DatasetError::InvalidLabelSpace(format!("duplicate label {name}")));
            }
        }
        Ok(Self { names })
    }

    /// The canonical 11-emotion inventory.
    pub fn emotions() -> Self {
        Self::new(EMOTIONS).expect("static inventory is valid")
    }

    /// The first `k` emotions, continuing with `label_<i>` beyond eleven.
    pub fn with_len(k: usize) -> Result<Self, DatasetError> {
        Self::new((0..k).map(|i| match EMOTIONS.get(i) {
            Some(name) => name.to_string(),
            None => format!("label_{i}"),
        }))
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }
}

impl TryFrom<Vec<String>> for LabelSpace {
    type Error = DatasetError;

    fn try_from(names: Vec<String>) -> Result<Self, Self::Error> {
        Self::new(names)
    }
}

impl From<LabelSpace> for Vec<String> {
    fn from(space: LabelSpace) -> Self {
        space.names
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Validation,
    Test,
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Split::Train => "train",
            Split::Validation => "validation",
            Split::Test => "test",
        })
    }
}

impl FromStr for Split {
    type Err = DatasetError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "train" => Ok(Split::Train),
            "validation" | "dev" => Ok(Split::Validation),
            "test" => Ok(Split::Test),
            other => Err(DatasetError::InvalidArgument(format!("unknown split '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MaskedInstance {
    pub id: String,
    /// Free-form language tag, e.g. `EN`. Empty when unknown.
    pub lang: String,
    pub h: Vec<f64>,
    pub y: Vec<bool>,
    pub m: Vec<bool>,
    /// Raw text, only used when rendering explanations.
    pub text: Option<String>,
}

impl MaskedInstance {
    pub fn observed_count(&self) -> usize {
        self.m.iter().filter(|&&m| m).count()
    }

    /// Names of labels that are observed and positive.
    pub fn positive_labels<'a>(&self, space: &'a LabelSpace) -> Vec<&'a str> {
        space
            .names()
            .iter()
            .zip(self.y.iter().zip(&self.m))
            .filter(|(_, (&y, &m))| y && m)
            .map(|(name, _)| name.as_str())
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    space: LabelSpace,
    dim: usize,
    instances: Vec<MaskedInstance>,
    split: Split,
}

impl Dataset {
    pub fn new(
        space: LabelSpace,
        dim: usize,
        instances: Vec<MaskedInstance>,
        split: Split,
    ) -> Result<Self, DatasetError> {
        if instances.is_empty() {
            return Err(DatasetError::Empty);
        }
        if dim == 0 {
            return Err(DatasetError::InvalidArgument("embedding dimension must be ≥ 1".into()));
        }
        let k = space.len();
        let mut ids = HashSet::with_capacity(instances.len());
        for inst in &instances {
            if inst.h.len() != dim {
                return Err(DatasetError::DimensionMismatch { id: inst.id.clone(), expected: dim, got: inst.h.len() });
            }
            if inst.y.len() != k || inst.m.len() != k {
                return Err(DatasetError::InvalidArgument(format!(
                    "instance {} has {} labels / {} mask cells, label space has {k}",
                    inst.id,
                    inst.y.len(),
                    inst.m.len()
                )));
            }
            if !ids.insert(inst.id.as_str()) {
                return Err(DatasetError::DuplicateId(inst.id.clone()));
            }
        }
        Ok(Self { space, dim, instances, split })
    }

    pub fn space(&self) -> &LabelSpace {
        &self.space
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn num_labels(&self) -> usize {
        self.space.len()
    }

    pub fn len(&self) -> usize {
        self.instances.len()
    }

    pub fn is_empty(&self) -> bool {
        self.instances.is_empty()
    }

    pub fn instances(&self) -> &[MaskedInstance] {
        &self.instances
    }

    pub fn split(&self) -> Split {
        self.split
    }

    pub fn with_split(mut self, split: Split) -> Self {
        self.split = split;
        self
    }

    pub fn is_fully_observed(&self) -> bool {
        self.instances.iter().all(|i| i.m.iter().all(|&m| m))
    }

    /// Row-major N×K label matrix.
    pub fn label_matrix(&self) -> Vec<bool> {
        self.instances.iter().flat_map(|i| i.y.iter().copied()).collect()
    }

    /// Row-major N×K observation mask.
    pub fn mask_matrix(&self) -> Vec<bool> {
        self.instances.iter().flat_map(|i| i.m.iter().copied()).collect()
    }

    /// Fraction of observed label cells.
    pub fn observed_fraction(&self) -> f64 {
        let observed: usize = self.instances.iter().map(MaskedInstance::observed_count).sum();
        observed as f64 / (self.len() * self.num_labels()) as f64
    }

    /// New dataset holding the given instances, in the given order.
    pub fn subset(&self, indices: &[usize], split: Split) -> Result<Self, DatasetError> {
        let instances = indices
            .iter()
            .map(|&i| {
                self.instances
                    .get(i)
                    .cloned()
                    .ok_or_else(|| DatasetError::InvalidArgument(format!("index {i} out of range")))
            })
            .collect::<Result<Vec<_>, _>>()?;
        Self::new(self.space.clone(), self.dim, instances, split)
    }

    /// Contiguous train / validation / test partition by instance order.
    pub fn partition(&self, train_fraction: f64, dev_fraction: f64) -> Result<(Self, Self, Self), DatasetError> {
        if !(train_fraction > 0.0 && dev_fraction > 0.0 && train_fraction + dev_fraction < 1.0) {
            return Err(DatasetError::InvalidArgument(format!(
                "bad partition fractions {train_fraction}/{dev_fraction}"
            )));
        }
        let n = self.len();
        let n_train = (n as f64 * train_fraction).round() as usize;
        let n_dev = (n as f64 * dev_fraction).round() as usize;
        if n_train == 0 || n_dev == 0 || n_train + n_dev >= n {
            return Err(DatasetError::InvalidArgument(format!(
                "{n} instances are too few for a {train_fraction}/{dev_fraction} partition"
            )));
        }
        let idx: Vec<usize> = (0..n).collect();
        Ok((
            self.subset(&idx[..n_train], Split::Train)?,
            self.subset(&idx[n_train..n_train + n_dev], Split::Validation)?,
            self.subset(&idx[n_train + n_dev..], Split::Test)?,
        ))
    }

    /// Attaches raw texts by id; ids without a text keep `None`.
    pub fn attach_texts(&mut self, texts: &std::collections::HashMap<String, String>) {
        for inst in &mut self.instances {
            if let Some(t) = texts.get(&inst.id) {
                inst.text = Some(t.clone());
            }
        }
    }

    pub fn set_lang(&mut self, lang: &str) {
        for inst in &mut self.instances {
            inst.lang = lang.to_string();
        }
    }
}

/// Hides label cells independently with probability `1 - rho`.
///
/// Cell `(i, k)` draws its own uniform from a counter-based stream keyed by
/// `(seed, i·K + k)`, so the outcome for one cell does not depend on any other.
/// Cells that are already unobserved stay unobserved.
pub fn simulate_mask(data: &Dataset, rho: f64, seed: u64) -> Result<Dataset, DatasetError> {
    if !(rho > 0.0 && rho <= 1.0) {
        return Err(DatasetError::InvalidRate(rho));
    }
    let k = data.num_labels();
    let mut gen = rng::stream(seed, rng::STREAM_MASK);
    let mut out = data.clone();
    for (i, inst) in out.instances.iter_mut().enumerate() {
        for (j, m) in inst.m.iter_mut().enumerate() {
            gen.set_word_pos(2 * (i * k + j) as u128);
            let u = rng::unit_interval(gen.next_u64());
            *m = *m && u < rho;
        }
    }
    Ok(out)
}
