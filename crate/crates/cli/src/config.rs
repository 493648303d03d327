//! Flat `key=value` run configuration.
//!
//! Every key can come from a config file or from a flag of the same name
//! (`--lambda-pu` or `--lambda_pu`); flags win. The effective configuration
//! renders back to canonical text, which is what gets hashed.

use std::collections::BTreeMap;
use std::path::PathBuf;

use ambiml_core::dataset::Split;
use ambiml_core::trainer::EvalEvery;
use ambiml_core::{Mode, ThresholdPolicy};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("unknown config key '{0}'")]
    UnknownKey(String),
    #[error("invalid value '{value}' for '{key}': {msg}")]
    Value { key: String, value: String, msg: String },
    #[error("{path}:{line}: {msg}")]
    Syntax { path: String, line: usize, msg: String },
}

/// Parsing and canonical rendering of one config value.
pub trait ConfigValue: Sized {
    fn parse_value(s: &str) -> Result<Self, String>;
    fn render(&self) -> String;
}

macro_rules! via_from_str {
    ($($t:ty),*) => {$(
        impl ConfigValue for $t {
            fn parse_value(s: &str) -> Result<Self, String> {
                s.parse().map_err(|e| format!("{e}"))
            }
            fn render(&self) -> String {
                self.to_string()
            }
        }
    )*};
}

via_from_str!(usize, u64, f64, String, Mode, ThresholdPolicy, Split);

impl ConfigValue for bool {
    fn parse_value(s: &str) -> Result<Self, String> {
        match s {
            "true" | "1" | "yes" | "on" => Ok(true),
            "false" | "0" | "no" | "off" => Ok(false),
            _ => Err("expected true or false".into()),
        }
    }
    fn render(&self) -> String {
        self.to_string()
    }
}

impl ConfigValue for PathBuf {
    fn parse_value(s: &str) -> Result<Self, String> {
        if s.is_empty() {
            return Err("empty path".into());
        }
        Ok(PathBuf::from(s))
    }
    fn render(&self) -> String {
        self.display().to_string()
    }
}

/// `none` or a value.
impl<T: ConfigValue> ConfigValue for Option<T> {
    fn parse_value(s: &str) -> Result<Self, String> {
        if s == "none" {
            Ok(None)
        } else {
            T::parse_value(s).map(Some)
        }
    }
    fn render(&self) -> String {
        self.as_ref().map_or_else(|| "none".to_string(), T::render)
    }
}

/// Comma-separated list; the empty string is the empty list.
impl<T: ConfigValue> ConfigValue for Vec<T> {
    fn parse_value(s: &str) -> Result<Self, String> {
        if s.trim().is_empty() {
            return Ok(Vec::new());
        }
        s.split(',').map(|p| T::parse_value(p.trim())).collect()
    }
    fn render(&self) -> String {
        self.iter().map(T::render).collect::<Vec<_>>().join(",")
    }
}

impl ConfigValue for EvalEvery {
    fn parse_value(s: &str) -> Result<Self, String> {
        match s {
            "epoch" => Ok(EvalEvery::Epoch),
            n => n.parse().map(EvalEvery::Steps).map_err(|_| "expected 'epoch' or a step count".into()),
        }
    }
    fn render(&self) -> String {
        match self {
            EvalEvery::Epoch => "epoch".into(),
            EvalEvery::Steps(n) => n.to_string(),
        }
    }
}

macro_rules! run_config {
    ($( $(#[doc = $doc:literal])* $key:ident : $ty:ty = $default:expr; )*) => {
        #[derive(Debug, Clone, PartialEq)]
        pub struct RunConfig {
            $( $(#[doc = $doc])* pub $key: $ty, )*
        }

        impl Default for RunConfig {
            fn default() -> Self {
                Self { $( $key: $default, )* }
            }
        }

        /// Every key with its help text, in declaration order.
        pub const KEYS: &[(&str, &str)] = &[ $( (stringify!($key), concat!($($doc),*)), )* ];

        impl RunConfig {
            pub fn set(&mut self, key: &str, value: &str) -> Result<(), ConfigError> {
                match key {
                    $( stringify!($key) => {
                        self.$key = <$ty as ConfigValue>::parse_value(value).map_err(|msg| ConfigError::Value {
                            key: key.to_string(),
                            value: value.to_string(),
                            msg,
                        })?;
                    } )*
                    other => return Err(ConfigError::UnknownKey(other.to_string())),
                }
                Ok(())
            }

            /// Effective values in canonical form, sorted by key.
            pub fn entries(&self) -> BTreeMap<String, String> {
                let mut out = BTreeMap::new();
                $( out.insert(stringify!($key).to_string(), ConfigValue::render(&self.$key)); )*
                out
            }
        }
    };
}

run_config! {
    /// Directory holding `<split>.labels.tsv`, `<split>.emb` and optionally `texts.tsv`.
    data_dir: PathBuf = PathBuf::from("data");
    /// Root under which run directories are created.
    out_dir: PathBuf = PathBuf::from("runs");
    /// Model file for evaluate and analyze.
    model: Option<PathBuf> = None;
    /// Training mode: baseline, ambiguity or evidential.
    mode: Mode = Mode::Ambiguity;
    /// Modes swept by ablate.
    modes: Vec<Mode> = Mode::ALL.to_vec();
    /// Ambiguity temperature.
    tau: f64 = 2.0;
    /// Weight of the PU term.
    lambda_pu: f64 = 0.1;
    /// Enable the PU term on unobserved labels.
    pu: bool = false;
    /// Probability clamp used in entropies.
    epsilon: f64 = 1e-7;
    /// Final coefficient of the evidential KL regulariser.
    evidential_kl: f64 = 0.1;
    /// Peak learning rate.
    lr: f64 = 2e-5;
    beta1: f64 = 0.9;
    beta2: f64 = 0.999;
    adam_eps: f64 = 1e-8;
    weight_decay: f64 = 0.01;
    warmup_ratio: f64 = 0.06;
    /// Global gradient-norm limit, or none.
    clip_norm: Option<f64> = Some(1.0);
    epochs: usize = 5;
    batch_size: usize = 16;
    /// Dropout rate on input embeddings.
    dropout: f64 = 0.1;
    /// Dev evaluation cadence: epoch or a step count.
    eval_every: EvalEvery = EvalEvery::Epoch;
    /// Seed for training, synthesis and masking.
    seed: u64 = 42;
    /// Seeds swept by ablate.
    seeds: Vec<u64> = vec![42, 123, 2025];
    /// Threshold policies: fixed_0.5, global_tuned, per_label_tuned.
    policy: Vec<ThresholdPolicy> = vec![ThresholdPolicy::Fixed];
    /// Split scored by evaluate and analyze.
    split: Split = Split::Test;
    /// Number of entropy bins.
    bins: usize = 5;
    /// Neighbours per query.
    k: usize = 1;
    /// Query ids for nn; empty means every instance of the split.
    queries: Vec<String> = Vec::new();
    /// Synthetic instance count.
    n: usize = 2000;
    /// Synthetic embedding dimension.
    d: usize = 16;
    /// Synthetic label count.
    num_labels: usize = 4;
    /// Fraction of synthetic instances mixed toward p = 0.5.
    ambiguity_fraction: f64 = 0.0;
    /// Multiplier on the synthetic ground-truth parameters.
    logit_scale: f64 = 1.0;
    /// Probability that a training label stays observed.
    rho: f64 = 1.0;
    train_fraction: f64 = 0.7;
    dev_fraction: f64 = 0.15;
    /// Embedding file form written by synth: binary or text.
    embedding_format: String = "binary".to_string();
}

impl RunConfig {
    /// Applies `key=value` lines; `#` starts a comment.
    pub fn apply_text(&mut self, text: &str, origin: &str) -> Result<(), ConfigError> {
        let mut seen = std::collections::HashSet::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let syntax = |msg: String| ConfigError::Syntax { path: origin.to_string(), line: lineno + 1, msg };
            let (key, value) = line.split_once('=').ok_or_else(|| syntax("expected key=value".into()))?;
            let key = key.trim();
            if !seen.insert(key.to_string()) {
                return Err(syntax(format!("duplicate key '{key}'")));
            }
            self.set(key, value.trim()).map_err(|e| syntax(e.to_string()))?;
        }
        Ok(())
    }

    /// Canonical text: one sorted `key=value` line per key.
    pub fn canonical(&self) -> String {
        self.entries().iter().map(|(k, v)| format!("{k}={v}\n")).collect()
    }

    pub fn check(&self) -> Result<(), ConfigError> {
        let bad = |key: &str, value: String, msg: &str| ConfigError::Value { key: key.into(), value, msg: msg.into() };
        if !matches!(self.embedding_format.as_str(), "binary" | "text") {
            return Err(bad("embedding_format", self.embedding_format.clone(), "expected binary or text"));
        }
        if self.policy.is_empty() {
            return Err(bad("policy", String::new(), "at least one policy is required"));
        }
        if self.bins == 0 {
            return Err(bad("bins", self.bins.to_string(), "must be ≥ 1"));
        }
        if self.k == 0 {
            return Err(bad("k", self.k.to_string(), "must be ≥ 1"));
        }
        Ok(())
    }
}

/// Flag spelling of a key.
pub fn flag_name(key: &str) -> String {
    key.replace('_', "-")
}
