//! `AMLM` model files.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! "AMLM" | u8 version=1 | u8 mode | u32 K | u32 d | u8 threshold flag
//! | thresholds f32 × (1 or K) | weights f32 × (rows·d) | bias f32 × rows
//! | u32 json length | json bytes
//! ```
//!
//! The threshold flag is `0` for one global threshold and `1` for K per-label
//! thresholds. `rows` is K for the linear head and 2K for the evidential head.
//! The trailing JSON object holds `labels` (the label names) and `config`
//! (the training configuration snapshot, kept verbatim).

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::value::RawValue;
use thiserror::Error;

use super::{EvidentialHead, Head, HeadError, LinearHead, Mode};
use crate::dataset::{Dataset, LabelSpace};

pub const MODEL_MAGIC: &[u8; 4] = b"AMLM";
pub const MODEL_VERSION: u8 = 0x01;

#[derive(Debug, Error)]
pub enum BundleError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("bad magic: not a model file")]
    BadMagic,
    #[error("unsupported model version {0}")]
    Version(u8),
    #[error("truncated model file")]
    Truncated,
    #[error("unknown mode byte {0:#04x}")]
    BadMode(u8),
    #[error("bad threshold flag {0}")]
    BadThresholdFlag(u8),
    #[error("{0} trailing bytes after model")]
    TrailingBytes(usize),
    #[error("model metadata: {0}")]
    Metadata(String),
    #[error("thresholds must lie in (0, 1) and number 1 or K: {0}")]
    BadThresholds(String),
    #[error("mode {mode} does not match the head type")]
    ModeHeadMismatch { mode: Mode },
    #[error(transparent)]
    Head(#[from] HeadError),
}

/// Decision thresholds applied to label probabilities (`ŷ = p ≥ t`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Thresholds {
    Global(f64),
    PerLabel(Vec<f64>),
}

impl Thresholds {
    pub fn for_label(&self, k: usize) -> f64 {
        match self {
            Thresholds::Global(t) => *t,
            Thresholds::PerLabel(ts) => ts[k],
        }
    }

    pub fn values(&self) -> Vec<f64> {
        match self {
            Thresholds::Global(t) => vec![*t],
            Thresholds::PerLabel(ts) => ts.clone(),
        }
    }

    fn validate(&self, k: usize) -> Result<(), BundleError> {
        let vals = self.values();
        if let Thresholds::PerLabel(ts) = self {
            if ts.len() != k {
                return Err(BundleError::BadThresholds(format!("{} values for K={k}", ts.len())));
            }
        }
        if let Some(t) = vals.iter().find(|t| !(**t > 0.0 && **t < 1.0)) {
            return Err(BundleError::BadThresholds(format!("{t}")));
        }
        Ok(())
    }
}

/// A trained head together with everything needed to apply it.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelBundle {
    pub mode: Mode,
    pub head: Head,
    pub space: LabelSpace,
    pub thresholds: Thresholds,
    /// JSON text of the training configuration, stored verbatim.
    pub config: String,
}

#[derive(Serialize)]
struct MetadataOut<'a> {
    labels: &'a [String],
    config: &'a RawValue,
}

#[derive(Deserialize)]
struct MetadataIn {
    labels: Vec<String>,
    config: Box<RawValue>,
}

impl ModelBundle {
    pub fn new(
        mode: Mode,
        head: Head,
        space: LabelSpace,
        thresholds: Thresholds,
        config: String,
    ) -> Result<Self, BundleError> {
        match (&head, mode) {
            (Head::Linear(_), Mode::Baseline | Mode::Ambiguity) | (Head::Evidential(_), Mode::Evidential) => {}
            _ => return Err(BundleError::ModeHeadMismatch { mode }),
        }
        if head.num_labels() != space.len() {
            return Err(BundleError::Metadata(format!(
                "head has {} labels, label space has {}",
                head.num_labels(),
                space.len()
            )));
        }
        thresholds.validate(space.len())?;
        RawValue::from_string(config.clone()).map_err(|e| BundleError::Metadata(e.to_string()))?;
        Ok(Self { mode, head, space, thresholds, config })
    }

    pub fn num_labels(&self) -> usize {
        self.space.len()
    }

    pub fn dim(&self) -> usize {
        self.head.dim()
    }

    /// Label probabilities for every instance of `data`, `N × K`.
    pub fn predict_proba(&self, data: &Dataset) -> Result<Vec<f64>, HeadError> {
        let inputs: Vec<&[f64]> = data.instances().iter().map(|i| i.h.as_slice()).collect();
        self.head.predict_proba_batch(&inputs)
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>, BundleError> {
        let k = self.space.len();
        let d = self.head.dim();
        let mut out = Vec::new();
        out.extend_from_slice(MODEL_MAGIC);
        out.push(MODEL_VERSION);
        out.push(self.mode.as_byte());
        out.extend_from_slice(&(k as u32).to_le_bytes());
        out.extend_from_slice(&(d as u32).to_le_bytes());
        out.push(match self.thresholds {
            Thresholds::Global(_) => 0,
            Thresholds::PerLabel(_) => 1,
        });
        let affine = self.head.affine();
        for v in self.thresholds.values().iter().chain(&affine.w).chain(&affine.b) {
            out.extend_from_slice(&(*v as f32).to_le_bytes());
        }
        let config = RawValue::from_string(self.config.clone()).map_err(|e| BundleError::Metadata(e.to_string()))?;
        let meta = serde_json::to_vec(&MetadataOut { labels: self.space.names(), config: &config })
            .map_err(|e| BundleError::Metadata(e.to_string()))?;
        out.extend_from_slice(&(meta.len() as u32).to_le_bytes());
        out.extend_from_slice(&meta);
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, BundleError> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(4)? != MODEL_MAGIC {
            return Err(BundleError::BadMagic);
        }
        let version = r.u8()?;
        if version != MODEL_VERSION {
            return Err(BundleError::Version(version));
        }
        let mode_byte = r.u8()?;
        let mode = Mode::from_byte(mode_byte).ok_or(BundleError::BadMode(mode_byte))?;
        let k = r.u32()? as usize;
        let d = r.u32()? as usize;
        let flag = r.u8()?;
        let thresholds = match flag {
            0 => Thresholds::Global(r.f32s(1)?[0]),
            1 => Thresholds::PerLabel(r.f32s(k)?),
            other => return Err(BundleError::BadThresholdFlag(other)),
        };
        let rows = if mode == Mode::Evidential { 2 * k } else { k };
        let w = r.f32s(rows.checked_mul(d).ok_or(BundleError::Truncated)?)?;
        let b = r.f32s(rows)?;
        let meta_len = r.u32()? as usize;
        let meta: MetadataIn =
            serde_json::from_slice(r.take(meta_len)?).map_err(|e| BundleError::Metadata(e.to_string()))?;
        if r.pos != bytes.len() {
            return Err(BundleError::TrailingBytes(bytes.len() - r.pos));
        }
        let space = LabelSpace::new(meta.labels).map_err(|e| BundleError::Metadata(e.to_string()))?;
        let head = match mode {
            Mode::Baseline | Mode::Ambiguity => Head::Linear(LinearHead::from_parts(k, d, w, b)?),
            Mode::Evidential => Head::Evidential(EvidentialHead::from_parts(k, d, w, b)?),
        };
        Self::new(mode, head, space, thresholds, meta.config.get().to_string())
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], BundleError> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len()).ok_or(BundleError::Truncated)?;
        let out = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    fn u8(&mut self) -> Result<u8, BundleError> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> Result<u32, BundleError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn f32s(&mut self, n: usize) -> Result<Vec<f64>, BundleError> {
        let raw = self.take(n.checked_mul(4).ok_or(BundleError::Truncated)?)?;
        Ok(raw.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64).collect())
    }
}

pub fn save_model(bundle: &ModelBundle, path: impl AsRef<Path>) -> Result<(), BundleError> {
    let path = path.as_ref();
    fs::write(path, bundle.to_bytes()?).map_err(|source| BundleError::Io { path: path.display().to_string(), source })
}

pub fn load_model(path: impl AsRef<Path>) -> Result<ModelBundle, BundleError> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|source| BundleError::Io { path: path.display().to_string(), source })?;
    ModelBundle::from_bytes(&bytes)
}
