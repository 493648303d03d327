//! Prediction heads over a fixed sentence embedding.
//!
//! [`LinearHead`] computes `z = W h + b` and `p = σ(z)` per label.
//! [`EvidentialHead`] produces two non-negative evidence values per label via
//! softplus and reads them as a `Beta(α, β)` with `α = e₊ + 1`, `β = e₋ + 1`;
//! the predicted probability is the Beta mean `α / (α + β)`.

mod bundle;

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rng;

pub use bundle::{load_model, save_model, BundleError, ModelBundle, Thresholds, MODEL_MAGIC, MODEL_VERSION};

#[derive(Debug, Error, PartialEq)]
pub enum HeadError {
    #[error("input has dimension {got}, head expects {expected}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("parameter block has {got} values, expected {expected}")]
    ShapeMismatch { expected: usize, got: usize },
    #[error("upstream gradient has {got} values, expected {expected}")]
    GradientShape { expected: usize, got: usize },
}

/// Training mode; selects the head and the per-label loss.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Baseline,
    Ambiguity,
    Evidential,
}

impl Mode {
    pub const ALL: [Mode; 3] = [Mode::Baseline, Mode::Ambiguity, Mode::Evidential];

    pub fn as_byte(self) -> u8 {
        match self {
            Mode::Baseline => 0x00,
            Mode::Ambiguity => 0x01,
            Mode::Evidential => 0x02,
        }
    }

    pub fn from_byte(b: u8) -> Option<Self> {
        match b {
            0x00 => Some(Mode::Baseline),
            0x01 => Some(Mode::Ambiguity),
            0x02 => Some(Mode::Evidential),
            _ => None,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Mode::Baseline => "baseline",
            Mode::Ambiguity => "ambiguity",
            Mode::Evidential => "evidential",
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Mode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "baseline" => Ok(Mode::Baseline),
            "ambiguity" => Ok(Mode::Ambiguity),
            "evidential" => Ok(Mode::Evidential),
            other => Err(format!("unknown mode '{other}' (baseline, ambiguity, evidential)")),
        }
    }
}

/// Logistic function, evaluated without overflow for any finite input.
pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// `ln(1 + eᵃ)`, evaluated without overflow.
pub fn softplus(a: f64) -> f64 {
    a.max(0.0) + (-a.abs()).exp().ln_1p()
}

/// Dense `rows × d` affine map shared by both heads.
#[derive(Debug, Clone, PartialEq)]
pub struct Affine {
    rows: usize,
    d: usize,
    /// rows×d, row-major.
    pub w: Vec<f64>,
    pub b: Vec<f64>,
}

impl Affine {
    pub fn zeros(rows: usize, d: usize) -> Self {
        Self { rows, d, w: vec![0.0; rows * d], b: vec![0.0; rows] }
    }

    fn from_parts(rows: usize, d: usize, w: Vec<f64>, b: Vec<f64>) -> Result<Self, HeadError> {
        if w.len() != rows * d {
            return Err(HeadError::ShapeMismatch { expected: rows * d, got: w.len() });
        }
        if b.len() != rows {
            return Err(HeadError::ShapeMismatch { expected: rows, got: b.len() });
        }
        Ok(Self { rows, d, w, b })
    }

    /// Weights ~ N(0, 1/d) from the seeded init stream, bias zero.
    fn init(rows: usize, d: usize, seed: u64) -> Self {
        let mut gen = rng::stream(seed, rng::STREAM_INIT);
        let std = 1.0 / (d as f64).sqrt();
        let w = (0..rows * d).map(|_| gen.sample::<f64, _>(StandardNormal) * std).collect();
        Self { rows, d, w, b: vec![0.0; rows] }
    }

    fn check_input(&self, h: &[f64]) -> Result<(), HeadError> {
        if h.len() != self.d {
            return Err(HeadError::DimensionMismatch { expected: self.d, got: h.len() });
        }
        Ok(())
    }

    fn apply_into(&self, h: &[f64], out: &mut [f64]) {
        for (r, o) in out.iter_mut().enumerate() {
            let row = &self.w[r * self.d..(r + 1) * self.d];
            *o = row.iter().zip(h).map(|(w, x)| w * x).sum::<f64>() + self.b[r];
        }
    }

    fn apply(&self, h: &[f64]) -> Result<Vec<f64>, HeadError> {
        self.check_input(h)?;
        let mut out = vec![0.0; self.rows];
        self.apply_into(h, &mut out);
        Ok(out)
    }

    /// Pre-activations for a batch, row-major `N × rows`.
    fn apply_batch(&self, inputs: &[&[f64]]) -> Result<Vec<f64>, HeadError> {
        let mut out = vec![0.0; inputs.len() * self.rows];
        for (h, chunk) in inputs.iter().zip(out.chunks_mut(self.rows)) {
            self.check_input(h)?;
            self.apply_into(h, chunk);
        }
        Ok(out)
    }

    /// dW = Σᵢ gᵢ hᵢᵀ, db = Σᵢ gᵢ.
    fn backward(&self, inputs: &[&[f64]], upstream: &[f64]) -> Result<HeadGrads, HeadError> {
        let expected = inputs.len() * self.rows;
        if upstream.len() != expected {
            return Err(HeadError::GradientShape { expected, got: upstream.len() });
        }
        let mut grads = HeadGrads { w: vec![0.0; self.rows * self.d], b: vec![0.0; self.rows] };
        for (h, g) in inputs.iter().zip(upstream.chunks(self.rows)) {
            self.check_input(h)?;
            for (r, &gr) in g.iter().enumerate() {
                if gr == 0.0 {
                    continue;
                }
                grads.b[r] += gr;
                let row = &mut grads.w[r * self.d..(r + 1) * self.d];
                for (dw, x) in row.iter_mut().zip(h.iter()) {
                    *dw += gr * x;
                }
            }
        }
        Ok(grads)
    }
}

/// Parameter gradients of a head, shaped like its weight matrix and bias.
#[derive(Debug, Clone, PartialEq)]
pub struct HeadGrads {
    pub w: Vec<f64>,
    pub b: Vec<f64>,
}

impl HeadGrads {
    /// Elementwise sum, used to accumulate batches.
    pub fn add(&mut self, other: &HeadGrads) {
        for (a, b) in self.w.iter_mut().zip(&other.w) {
            *a += b;
        }
        for (a, b) in self.b.iter_mut().zip(&other.b) {
            *a += b;
        }
    }
}

/// `K × d` linear map followed by an independent sigmoid per label.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearHead {
    k: usize,
    affine: Affine,
}

impl LinearHead {
    pub fn zeros(k: usize, d: usize) -> Self {
        Self { k, affine: Affine::zeros(k, d) }
    }

    pub fn init(k: usize, d: usize, seed: u64) -> Self {
        Self { k, affine: Affine::init(k, d, seed) }
    }

    pub fn from_parts(k: usize, d: usize, w: Vec<f64>, b: Vec<f64>) -> Result<Self, HeadError> {
        Ok(Self { k, affine: Affine::from_parts(k, d, w, b)? })
    }

    pub fn affine(&self) -> &Affine {
        &self.affine
    }

    /// Logits and probabilities for one embedding.
    pub fn forward(&self, h: &[f64]) -> Result<(Vec<f64>, Vec<f64>), HeadError> {
        let z = self.affine.apply(h)?;
        let p = z.iter().map(|&z| sigmoid(z)).collect();
        Ok((z, p))
    }

    pub fn logits_batch(&self, inputs: &[&[f64]]) -> Result<Vec<f64>, HeadError> {
        self.affine.apply_batch(inputs)
    }

    /// Gradients from an upstream `dL/dz`, `N × K`.
    pub fn backward(&self, inputs: &[&[f64]], dz: &[f64]) -> Result<HeadGrads, HeadError> {
        self.affine.backward(inputs, dz)
    }
}

/// Per-label Beta parameters and their mean.
#[derive(Debug, Clone, PartialEq)]
pub struct BetaOutput {
    pub alpha: Vec<f64>,
    pub beta: Vec<f64>,
    pub p: Vec<f64>,
}

/// `2K × d` linear map whose softplus outputs are per-label evidence pairs.
/// Row `2k` feeds `α_k`, row `2k + 1` feeds `β_k`.
#[derive(Debug, Clone, PartialEq)]
pub struct EvidentialHead {
    k: usize,
    affine: Affine,
}

impl EvidentialHead {
    pub fn zeros(k: usize, d: usize) -> Self {
        Self { k, affine: Affine::zeros(2 * k, d) }
    }

    pub fn init(k: usize, d: usize, seed: u64) -> Self {
        Self { k, affine: Affine::init(2 * k, d, seed) }
    }

    pub fn from_parts(k: usize, d: usize, w: Vec<f64>, b: Vec<f64>) -> Result<Self, HeadError> {
        Ok(Self { k, affine: Affine::from_parts(2 * k, d, w, b)? })
    }

    pub fn affine(&self) -> &Affine {
        &self.affine
    }

    pub fn forward(&self, h: &[f64]) -> Result<BetaOutput, HeadError> {
        let evidence: Vec<f64> = self.affine.apply(h)?.into_iter().map(softplus).collect();
        Ok(beta_from_evidence(&evidence))
    }

    /// Evidence `softplus(W_e h + b_e)` for a batch, `N × 2K`.
    pub fn evidence_batch(&self, inputs: &[&[f64]]) -> Result<Vec<f64>, HeadError> {
        let mut a = self.affine.apply_batch(inputs)?;
        a.iter_mut().for_each(|v| *v = softplus(*v));
        Ok(a)
    }

    /// Gradients from an upstream `dL/de`, `N × 2K`; applies the softplus
    /// derivative `σ(a)` at the recomputed pre-activation.
    pub fn backward(&self, inputs: &[&[f64]], de: &[f64]) -> Result<HeadGrads, HeadError> {
        let pre = self.affine.apply_batch(inputs)?;
        if de.len() != pre.len() {
            return Err(HeadError::GradientShape { expected: pre.len(), got: de.len() });
        }
        let da: Vec<f64> = de.iter().zip(&pre).map(|(g, &a)| g * sigmoid(a)).collect();
        self.affine.backward(inputs, &da)
    }
}

/// Beta parameters from interleaved evidence `[e₊₀, e₋₀, e₊₁, …]`.
pub fn beta_from_evidence(evidence: &[f64]) -> BetaOutput {
    let k = evidence.len() / 2;
    let mut out = BetaOutput { alpha: Vec::with_capacity(k), beta: Vec::with_capacity(k), p: Vec::with_capacity(k) };
    for pair in evidence.chunks_exact(2) {
        let (a, b) = (pair[0] + 1.0, pair[1] + 1.0);
        out.alpha.push(a);
        out.beta.push(b);
        out.p.push(a / (a + b));
    }
    out
}

/// The head owned by a model: linear for baseline/ambiguity, Beta for evidential.
#[derive(Debug, Clone, PartialEq)]
pub enum Head {
    Linear(LinearHead),
    Evidential(EvidentialHead),
}

impl Head {
    pub fn init(mode: Mode, k: usize, d: usize, seed: u64) -> Self {
        match mode {
            Mode::Baseline | Mode::Ambiguity => Head::Linear(LinearHead::init(k, d, seed)),
            Mode::Evidential => Head::Evidential(EvidentialHead::init(k, d, seed)),
        }
    }

    pub fn num_labels(&self) -> usize {
        match self {
            Head::Linear(h) => h.k,
            Head::Evidential(h) => h.k,
        }
    }

    pub fn dim(&self) -> usize {
        self.affine().d
    }

    pub fn affine(&self) -> &Affine {
        match self {
            Head::Linear(h) => &h.affine,
            Head::Evidential(h) => &h.affine,
        }
    }

    pub fn affine_mut(&mut self) -> &mut Affine {
        match self {
            Head::Linear(h) => &mut h.affine,
            Head::Evidential(h) => &mut h.affine,
        }
    }

    pub fn is_finite(&self) -> bool {
        let a = self.affine();
        a.w.iter().chain(&a.b).all(|v| v.is_finite())
    }

    /// Label probabilities for one embedding.
    pub fn predict_proba(&self, h: &[f64]) -> Result<Vec<f64>, HeadError> {
        match self {
            Head::Linear(head) => Ok(head.forward(h)?.1),
            Head::Evidential(head) => Ok(head.forward(h)?.p),
        }
    }

    /// Label probabilities for a batch, `N × K`.
    pub fn predict_proba_batch(&self, inputs: &[&[f64]]) -> Result<Vec<f64>, HeadError> {
        match self {
            Head::Linear(head) => Ok(head.logits_batch(inputs)?.into_iter().map(sigmoid).collect()),
            Head::Evidential(head) => Ok(beta_from_evidence(&head.evidence_batch(inputs)?).p),
        }
    }

    /// Logits (linear) or evidence (evidential) for a batch.
    pub fn outputs_batch(&self, inputs: &[&[f64]]) -> Result<Vec<f64>, HeadError> {
        match self {
            Head::Linear(head) => head.logits_batch(inputs),
            Head::Evidential(head) => head.evidence_batch(inputs),
        }
    }

    /// Gradients from the upstream gradient on [`Head::outputs_batch`].
    pub fn backward(&self, inputs: &[&[f64]], upstream: &[f64]) -> Result<HeadGrads, HeadError> {
        match self {
            Head::Linear(head) => head.backward(inputs, upstream),
            Head::Evidential(head) => head.backward(inputs, upstream),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_head_predicts_one_half() {
        let head = LinearHead::zeros(3, 4);
        let (z, p) = head.forward(&[1.0, -2.0, 3.0, 0.5]).unwrap();
        assert_eq!(z, vec![0.0; 3]);
        assert_eq!(p, vec![0.5; 3]);
    }

    #[test]
    fn scalar_head_matches_sigmoid_of_one() {
        let head = LinearHead::from_parts(1, 1, vec![2.0], vec![-1.0]).unwrap();
        let (z, p) = head.forward(&[1.0]).unwrap();
        assert_eq!(z, vec![1.0]);
        // σ(1) = 0.7310585786300049 (50-digit reference)
        assert!((p[0] - 0.731_058_578_630_004_9).abs() < 1e-15);
    }

    #[test]
    fn sigmoid_is_stable_at_extremes() {
        assert!((1.0 - sigmoid(50.0)).abs() < 1e-15);
        for z in [-700.0, -50.0, 700.0, 1e4, -1e4] {
            let p = sigmoid(z);
            assert!(p.is_finite() && (0.0..=1.0).contains(&p));
        }
        assert!(sigmoid(-700.0) > 0.0);
    }

    #[test]
    fn dimension_mismatch_is_reported() {
        let head = LinearHead::zeros(2, 3);
        assert_eq!(head.forward(&[1.0]).unwrap_err(), HeadError::DimensionMismatch { expected: 3, got: 1 });
        let ev = EvidentialHead::zeros(2, 3);
        assert!(ev.forward(&[1.0, 2.0]).is_err());
    }

    #[test]
    fn zero_evidential_head_is_symmetric() {
        let head = EvidentialHead::zeros(2, 3);
        let out = head.forward(&[0.3, 0.1, -2.0]).unwrap();
        let ln2 = std::f64::consts::LN_2;
        for k in 0..2 {
            assert!((out.alpha[k] - (1.0 + ln2)).abs() < 1e-15);
            assert!((out.beta[k] - (1.0 + ln2)).abs() < 1e-15);
            assert_eq!(out.p[k], 0.5);
        }
    }

    #[test]
    fn strong_positive_evidence_drives_probability_to_one() {
        // Row 0 (α) grows with the input, row 1 (β) is pinned near zero evidence.
        let head = EvidentialHead::from_parts(1, 1, vec![1.0, 0.0], vec![0.0, -50.0]).unwrap();
        let p = head.forward(&[1e6]).unwrap().p[0];
        assert!(p > 1.0 - 1e-5);
        let out = head.forward(&[-1e6]).unwrap();
        assert!(out.alpha[0] >= 1.0 && out.beta[0] >= 1.0);
        assert!(out.p[0] > 0.0 && out.p[0] < 1.0);
    }

    #[test]
    fn zero_upstream_gives_zero_gradients() {
        let head = LinearHead::init(2, 3, 5);
        let h = [1.0, 2.0, 3.0];
        let g = head.backward(&[&h], &[0.0, 0.0]).unwrap();
        assert!(g.w.iter().chain(&g.b).all(|&v| v == 0.0));
    }

    #[test]
    fn batch_gradient_is_sum_of_singles() {
        for head in [Head::init(Mode::Baseline, 2, 3, 1), Head::init(Mode::Evidential, 2, 3, 1)] {
            let rows = head.affine().b.len();
            let h1 = [0.5, -1.0, 2.0];
            let h2 = [1.5, 0.25, -0.75];
            let g1: Vec<f64> = (0..rows).map(|r| 0.1 * r as f64 - 0.2).collect();
            let g2: Vec<f64> = (0..rows).map(|r| 0.3 - 0.05 * r as f64).collect();
            let mut sum = head.backward(&[&h1], &g1).unwrap();
            sum.add(&head.backward(&[&h2], &g2).unwrap());
            let both: Vec<f64> = g1.iter().chain(&g2).copied().collect();
            let joint = head.backward(&[&h1, &h2], &both).unwrap();
            for (a, b) in joint.w.iter().chain(&joint.b).zip(sum.w.iter().chain(&sum.b)) {
                assert!((a - b).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn scalar_backward_matches_finite_difference() {
        // L(W, b) = 0.5 (W h + b - 3)^2 with upstream dL/dz = z - 3.
        let h = [1.7];
        let loss = |w: f64, b: f64| 0.5 * (w * h[0] + b - 3.0f64).powi(2);
        let (w, b) = (0.4, -0.2);
        let head = LinearHead::from_parts(1, 1, vec![w], vec![b]).unwrap();
        let z = head.logits_batch(&[&h]).unwrap()[0];
        let g = head.backward(&[&h], &[z - 3.0]).unwrap();
        let eps = 1e-5;
        let fd_w = (loss(w + eps, b) - loss(w - eps, b)) / (2.0 * eps);
        let fd_b = (loss(w, b + eps) - loss(w, b - eps)) / (2.0 * eps);
        assert!(((g.w[0] - fd_w) / fd_w).abs() < 1e-6);
        assert!(((g.b[0] - fd_b) / fd_b).abs() < 1e-6);
    }

    #[test]
    fn init_is_seeded_with_zero_bias() {
        let a = Head::init(Mode::Ambiguity, 3, 16, 42);
        let b = Head::init(Mode::Ambiguity, 3, 16, 42);
        assert_eq!(a, b);
        assert!(a.affine().b.iter().all(|&v| v == 0.0));
        assert_ne!(a, Head::init(Mode::Ambiguity, 3, 16, 43));
        assert_eq!(Head::init(Mode::Evidential, 3, 16, 42).affine().w.len(), 2 * 3 * 16);
    }

    #[test]
    fn mode_bytes_round_trip() {
        for mode in Mode::ALL {
            assert_eq!(Mode::from_byte(mode.as_byte()), Some(mode));
            assert_eq!(mode.as_str().parse::<Mode>().unwrap(), mode);
        }
        assert_eq!(Mode::from_byte(0x02), Some(Mode::Evidential));
        assert_eq!(Mode::from_byte(0x03), None);
    }
}
