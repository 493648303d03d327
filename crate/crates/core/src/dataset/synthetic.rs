use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::{Dataset, DatasetError, LabelSpace, MaskedInstance, Split};
use crate::heads::sigmoid;
use crate::rng;

/// Weight of 0.5 in the mixture applied to ambiguous instances:
/// `p = AMBIGUITY_MIX·0.5 + (1 − AMBIGUITY_MIX)·p*`.
pub const AMBIGUITY_MIX: f64 = 0.8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SyntheticConfig {
    pub n: usize,
    pub d: usize,
    pub k: usize,
    pub ambiguity_fraction: f64,
    pub seed: u64,
    /// Multiplies the ground-truth parameters. At 1.0 the logits have roughly
    /// unit variance; larger values make the labels close to separable.
    pub logit_scale: f64,
}

impl SyntheticConfig {
    pub fn new(n: usize, d: usize, k: usize, ambiguity_fraction: f64, seed: u64) -> Self {
        Self { n, d, k, ambiguity_fraction, seed, logit_scale: 1.0 }
    }

    pub fn with_logit_scale(mut self, scale: f64) -> Self {
        self.logit_scale = scale;
        self
    }
}

/// Ground truth behind a synthetic dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrueParams {
    pub k: usize,
    pub d: usize,
    /// K×d, row-major.
    pub w: Vec<f64>,
    pub b: Vec<f64>,
    /// Which instances had their label probabilities pulled toward 0.5.
    pub ambiguous: Vec<bool>,
    /// N×K label probabilities actually used for sampling.
    pub probs: Vec<f64>,
}

impl TrueParams {
    pub fn logits(&self, h: &[f64]) -> Vec<f64> {
        (0..self.k)
            .map(|k| {
                let row = &self.w[k * self.d..(k + 1) * self.d];
                row.iter().zip(h).map(|(w, x)| w * x).sum::<f64>() + self.b[k]
            })
            .collect()
    }
}

/// Samples a fully observed dataset from a logistic ground truth.
///
/// `W*` and `b*` are standard normal scaled by `logit_scale/√d`, `h` is
/// standard normal, and `y_k ~ Bernoulli(σ(W*h + b*)_k)`. A randomly chosen
/// `ambiguity_fraction` of instances sample from probabilities mixed toward
/// 0.5 instead, which gives them high label entropy.
pub fn generate_synthetic(cfg: &SyntheticConfig) -> Result<(Dataset, TrueParams), DatasetError> {
    let SyntheticConfig { n, d, k, ambiguity_fraction, seed, logit_scale } = *cfg;
    if n == 0 || d == 0 || k == 0 {
        return Err(DatasetError::InvalidArgument("n, d and K must all be ≥ 1".into()));
    }
    if !(0.0..=1.0).contains(&ambiguity_fraction) {
        return Err(DatasetError::InvalidArgument(format!(
            "ambiguity fraction {ambiguity_fraction} is outside [0, 1]"
        )));
    }
    if !(logit_scale.is_finite() && logit_scale > 0.0) {
        return Err(DatasetError::InvalidArgument(format!("bad logit scale {logit_scale}")));
    }

    let scale = logit_scale / (d as f64).sqrt();
    let mut param_rng = rng::stream(seed, rng::STREAM_SYNTH_PARAMS);
    let normal = |r: &mut rand_chacha::ChaCha8Rng| -> f64 { r.sample(StandardNormal) };
    let w: Vec<f64> = (0..k * d).map(|_| normal(&mut param_rng) * scale).collect();
    let b: Vec<f64> = (0..k).map(|_| normal(&mut param_rng) * scale).collect();

    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng::stream(seed, rng::STREAM_SYNTH_AMBIGUOUS));
    let n_ambiguous = (ambiguity_fraction * n as f64).round() as usize;
    let mut ambiguous = vec![false; n];
    for &i in &order[..n_ambiguous] {
        ambiguous[i] = true;
    }

    let mut input_rng = rng::stream(seed, rng::STREAM_SYNTH_INPUTS);
    let mut label_rng = rng::stream(seed, rng::STREAM_SYNTH_LABELS);
    let space = LabelSpace::with_len(k)?;
    let mut truth = TrueParams { k, d, w, b, ambiguous, probs: Vec::with_capacity(n * k) };
    let mut instances = Vec::with_capacity(n);
    for i in 0..n {
        let h: Vec<f64> = (0..d).map(|_| normal(&mut input_rng)).collect();
        let mut y = Vec::with_capacity(k);
        for z in truth.logits(&h) {
            let mut p = sigmoid(z);
            if truth.ambiguous[i] {
                p = AMBIGUITY_MIX * 0.5 + (1.0 - AMBIGUITY_MIX) * p;
            }
            truth.probs.push(p);
            y.push(label_rng.random::<f64>() < p);
        }
        instances.push(MaskedInstance {
            id: format!("syn{i:06}"),
            lang: "SYN".into(),
            h,
            y,
            m: vec![true; k],
            text: None,
        });
    }
    Ok((Dataset::new(space, d, instances, Split::Train)?, truth))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn binary_entropy(p: f64) -> f64 {
        -(p * p.ln() + (1.0 - p) * (1.0 - p).ln())
    }

    #[test]
    fn zero_fraction_flags_nothing() {
        let (_, truth) = generate_synthetic(&SyntheticConfig::new(50, 3, 2, 0.0, 1)).unwrap();
        assert!(truth.ambiguous.iter().all(|&a| !a));
    }

    #[test]
    fn fraction_is_exact_count() {
        let (_, truth) = generate_synthetic(&SyntheticConfig::new(200, 3, 2, 0.4, 1)).unwrap();
        assert_eq!(truth.ambiguous.iter().filter(|&&a| a).count(), 80);
    }

    #[test]
    fn deterministic_per_seed() {
        let cfg = SyntheticConfig::new(1000, 16, 4, 0.2, 7);
        let (a, ta) = generate_synthetic(&cfg).unwrap();
        let (b, tb) = generate_synthetic(&cfg).unwrap();
        assert_eq!(a, b);
        assert_eq!(ta, tb);
        let (c, _) = generate_synthetic(&SyntheticConfig { seed: 8, ..cfg }).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn label_frequencies_match_expected_probability() {
        // Monte-Carlo check: the empirical positive rate of each label tracks
        // the mean of the probabilities it was sampled from.
        let cfg = SyntheticConfig::new(10_000, 16, 4, 0.3, 2025);
        let (data, truth) = generate_synthetic(&cfg).unwrap();
        for k in 0..4 {
            let freq = data.instances().iter().filter(|i| i.y[k]).count() as f64 / 10_000.0;
            let expected = (0..10_000).map(|i| truth.probs[i * 4 + k]).sum::<f64>() / 10_000.0;
            assert!((freq - expected).abs() <= 0.03, "label {k}: {freq} vs {expected}");
        }
    }

    #[test]
    fn flagged_instances_have_higher_entropy() {
        let cfg = SyntheticConfig::new(2000, 8, 5, 0.4, 11);
        let (_, truth) = generate_synthetic(&cfg).unwrap();
        let mean_h = |flag: bool| {
            let rows: Vec<usize> = (0..2000).filter(|&i| truth.ambiguous[i] == flag).collect();
            rows.iter().map(|&i| (0..5).map(|k| binary_entropy(truth.probs[i * 5 + k])).sum::<f64>() / 5.0).sum::<f64>()
                / rows.len() as f64
        };
        assert!(mean_h(true) > mean_h(false));
    }

    #[test]
    fn rejects_degenerate_sizes() {
        assert!(generate_synthetic(&SyntheticConfig::new(0, 3, 2, 0.0, 1)).is_err());
        assert!(generate_synthetic(&SyntheticConfig::new(3, 3, 2, 1.5, 1)).is_err());
    }
}
