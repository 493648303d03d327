//! Training objective and its gradients with respect to head outputs.
//!
//! For a batch of `N` instances with logits `z`, labels `y` and mask `m`:
//!
//! ```text
//! H_i   = −(1/|O_i|) Σ_{k∈O_i} [p̃ ln p̃ + (1−p̃) ln(1−p̃)],  p̃ = clamp(σ(z_ik), ε, 1−ε)
//! w_i   = exp(−τ H_i)
//! L_amb = (1/N) Σ_i w_i · Σ_k m_ik BCE(z_ik, y_ik) / Σ_k m_ik
//! L_PU  = (1/N) Σ_i Σ_k (1 − m_ik) BCE(z_ik, 0)
//! L     = L_amb + λ_PU L_PU
//! ```
//!
//! `w_i` is computed from the current predictions and then held constant:
//! gradients never flow through the weight. Instances with no observed label
//! add nothing to `L_amb` but still count in `N`.
//!
//! In evidential mode the per-label BCE is replaced by the Bayes risk of the
//! cross-entropy under `Beta(α, β)` plus an annealed KL penalty on
//! misleading evidence, and `w_i ≡ 1`.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::heads::{beta_from_evidence, sigmoid, Mode};
use crate::special::{digamma, trigamma};

#[derive(Debug, Error, PartialEq)]
pub enum ObjectiveError {
    #[error("invalid objective config: {0}")]
    InvalidConfig(String),
    #[error("labels/mask hold {got} cells, expected a multiple of K={k}")]
    Shape { k: usize, got: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ObjectiveConfig {
    pub mode: Mode,
    /// Ambiguity temperature τ.
    pub tau: f64,
    pub lambda_pu: f64,
    /// Probability clamp used by the entropy.
    pub epsilon: f64,
    pub pu_enabled: bool,
    /// Current coefficient of the evidential KL term; the trainer anneals it.
    pub evidential_kl: f64,
}

impl Default for ObjectiveConfig {
    fn default() -> Self {
        Self { mode: Mode::Ambiguity, tau: 2.0, lambda_pu: 0.1, epsilon: 1e-7, pu_enabled: false, evidential_kl: 0.1 }
    }
}

impl ObjectiveConfig {
    pub fn validate(&self) -> Result<(), ObjectiveError> {
        let bad = |msg: String| Err(ObjectiveError::InvalidConfig(msg));
        if !(self.tau >= 0.0 && self.tau.is_finite()) {
            return bad(format!("tau must be ≥ 0, got {}", self.tau));
        }
        if !(self.lambda_pu >= 0.0 && self.lambda_pu.is_finite()) {
            return bad(format!("lambda_pu must be ≥ 0, got {}", self.lambda_pu));
        }
        if !(self.epsilon > 0.0 && self.epsilon < 0.5) {
            return bad(format!("epsilon must lie in (0, 0.5), got {}", self.epsilon));
        }
        if !(self.evidential_kl >= 0.0 && self.evidential_kl.is_finite()) {
            return bad(format!("evidential_kl must be ≥ 0, got {}", self.evidential_kl));
        }
        Ok(())
    }
}

/// Labels and observation mask of a batch, row-major `N × K`.
#[derive(Debug, Clone, Copy)]
pub struct Targets<'a> {
    k: usize,
    y: &'a [bool],
    m: &'a [bool],
}

impl<'a> Targets<'a> {
    pub fn new(k: usize, y: &'a [bool], m: &'a [bool]) -> Result<Self, ObjectiveError> {
        if k == 0 || !y.len().is_multiple_of(k) || y.len() != m.len() {
            return Err(ObjectiveError::Shape { k, got: y.len().max(m.len()) });
        }
        Ok(Self { k, y, m })
    }

    pub fn num_labels(&self) -> usize {
        self.k
    }

    pub fn len(&self) -> usize {
        self.y.len() / self.k
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    pub fn row(&self, i: usize) -> (&'a [bool], &'a [bool]) {
        let r = i * self.k..(i + 1) * self.k;
        (&self.y[r.clone()], &self.m[r])
    }
}

/// `−[y ln σ(z) + (1−y) ln(1−σ(z))]` in the overflow-free logit form.
pub fn bce_from_logit(z: f64, y: bool) -> f64 {
    let yz = if y { z } else { 0.0 };
    z.max(0.0) - yz + (-z.abs()).exp().ln_1p()
}

/// Binary entropy in nats with `p` clamped to `[ε, 1−ε]`.
pub fn binary_entropy(p: f64, epsilon: f64) -> f64 {
    let p = p.clamp(epsilon, 1.0 - epsilon);
    -(p * p.ln() + (1.0 - p) * (1.0 - p).ln())
}

/// Mean binary entropy over observed labels, or `None` when nothing is observed.
pub fn entropy_observed(p: &[f64], m: &[bool], epsilon: f64) -> Option<f64> {
    let mut sum = 0.0;
    let mut count = 0usize;
    for (&p, _) in p.iter().zip(m).filter(|(_, &m)| m) {
        sum += binary_entropy(p, epsilon);
        count += 1;
    }
    (count > 0).then(|| sum / count as f64)
}

pub fn ambiguity_weight(entropy: f64, tau: f64) -> f64 {
    (-tau * entropy).exp()
}

/// Per-instance entropy and (detached) weight for a batch.
#[derive(Debug, Clone, PartialEq)]
pub struct InstanceWeights {
    pub entropy: Vec<Option<f64>>,
    pub weights: Vec<f64>,
}

/// Entropies from `probs` (`N × K`); weights are `exp(−τH)` in ambiguity mode
/// and 1 otherwise.
pub fn instance_weights(probs: &[f64], targets: &Targets, cfg: &ObjectiveConfig) -> InstanceWeights {
    let k = targets.num_labels();
    let n = targets.len();
    let mut out = InstanceWeights { entropy: Vec::with_capacity(n), weights: Vec::with_capacity(n) };
    for i in 0..n {
        let (_, m) = targets.row(i);
        let h = entropy_observed(&probs[i * k..(i + 1) * k], m, cfg.epsilon);
        let w = match (cfg.mode, h) {
            (Mode::Ambiguity, Some(h)) => ambiguity_weight(h, cfg.tau),
            _ => 1.0,
        };
        out.entropy.push(h);
        out.weights.push(w);
    }
    out
}

/// A loss value with its gradient on the head outputs.
#[derive(Debug, Clone, PartialEq)]
pub struct LossTerm {
    pub value: f64,
    pub grad: Vec<f64>,
}

/// Weighted masked BCE with the weights supplied by the caller.
pub fn masked_bce(logits: &[f64], targets: &Targets, weights: &[f64]) -> LossTerm {
    let k = targets.num_labels();
    let n = targets.len();
    let inv_n = 1.0 / n as f64;
    let mut grad = vec![0.0; logits.len()];
    let mut value = 0.0;
    for i in 0..n {
        let (y, m) = targets.row(i);
        let observed = m.iter().filter(|&&m| m).count();
        if observed == 0 {
            continue;
        }
        let z = &logits[i * k..(i + 1) * k];
        let mut sum = 0.0;
        for j in (0..k).filter(|&j| m[j]) {
            sum += bce_from_logit(z[j], y[j]);
        }
        value += weights[i] * (sum / observed as f64);
        let scale = weights[i] * inv_n / observed as f64;
        for j in (0..k).filter(|&j| m[j]) {
            grad[i * k + j] = scale * (sigmoid(z[j]) - if y[j] { 1.0 } else { 0.0 });
        }
    }
    LossTerm { value: value * inv_n, grad }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AmbLoss {
    pub value: f64,
    pub grad: Vec<f64>,
    pub entropy: Vec<Option<f64>>,
    pub weights: Vec<f64>,
}

/// Ambiguity-weighted masked BCE on logits (`w ≡ 1` in baseline mode).
pub fn loss_amb(logits: &[f64], targets: &Targets, cfg: &ObjectiveConfig) -> AmbLoss {
    let probs: Vec<f64> = logits.iter().map(|&z| sigmoid(z)).collect();
    let iw = instance_weights(&probs, targets, cfg);
    let term = masked_bce(logits, targets, &iw.weights);
    AmbLoss { value: term.value, grad: term.grad, entropy: iw.entropy, weights: iw.weights }
}

/// Weak negative penalty `BCE(z, 0)` on unobserved labels.
pub fn loss_pu(logits: &[f64], targets: &Targets) -> LossTerm {
    let k = targets.num_labels();
    let n = targets.len();
    let inv_n = 1.0 / n as f64;
    let mut grad = vec![0.0; logits.len()];
    let mut value = 0.0;
    for i in 0..n {
        let (_, m) = targets.row(i);
        for j in (0..k).filter(|&j| !m[j]) {
            let z = logits[i * k + j];
            value += bce_from_logit(z, false);
            grad[i * k + j] = sigmoid(z) * inv_n;
        }
    }
    LossTerm { value: value * inv_n, grad }
}

/// Per-label evidential loss and its partial derivatives in `(α, β)`.
///
/// Bayes risk `ψ(α+β) − ψ(α)` (y = 1) or `ψ(α+β) − ψ(β)` (y = 0), plus
/// `kl · KL(Beta(α̃, β̃) ‖ Beta(1, 1))` where the true-class evidence has been
/// removed. With one parameter pinned at 1 the KL reduces to
/// `ln x − 1 + 1/x` in the remaining parameter `x`.
pub fn evidential_label_loss(alpha: f64, beta: f64, y: bool, kl: f64) -> (f64, f64, f64) {
    let s = alpha + beta;
    let (psi_s, tri_s) = (digamma(s), trigamma(s));
    if y {
        let loss = psi_s - digamma(alpha) + kl * (beta.ln() - 1.0 + 1.0 / beta);
        let d_alpha = tri_s - trigamma(alpha);
        let d_beta = tri_s + kl * (1.0 / beta - 1.0 / (beta * beta));
        (loss, d_alpha, d_beta)
    } else {
        let loss = psi_s - digamma(beta) + kl * (alpha.ln() - 1.0 + 1.0 / alpha);
        let d_alpha = tri_s + kl * (1.0 / alpha - 1.0 / (alpha * alpha));
        let d_beta = tri_s - trigamma(beta);
        (loss, d_alpha, d_beta)
    }
}

/// Masked evidential loss on interleaved evidence (`N × 2K`), gradient on evidence.
pub fn evidential_masked(evidence: &[f64], targets: &Targets, weights: &[f64], kl: f64) -> LossTerm {
    let k = targets.num_labels();
    let n = targets.len();
    let inv_n = 1.0 / n as f64;
    let mut grad = vec![0.0; evidence.len()];
    let mut value = 0.0;
    for (i, &w) in weights.iter().enumerate().take(n) {
        let (y, m) = targets.row(i);
        let observed = m.iter().filter(|&&m| m).count();
        if observed == 0 {
            continue;
        }
        let scale = w * inv_n / observed as f64;
        let mut sum = 0.0;
        for j in (0..k).filter(|&j| m[j]) {
            let base = i * 2 * k + 2 * j;
            let (l, da, db) = evidential_label_loss(evidence[base] + 1.0, evidence[base + 1] + 1.0, y[j], kl);
            sum += l;
            grad[base] = scale * da;
            grad[base + 1] = scale * db;
        }
        value += w * (sum / observed as f64);
    }
    LossTerm { value: value * inv_n, grad }
}

/// PU penalty `−ln(1 − p)` with `p = α/(α+β)` on unobserved labels.
pub fn evidential_pu(evidence: &[f64], targets: &Targets) -> LossTerm {
    let k = targets.num_labels();
    let n = targets.len();
    let inv_n = 1.0 / n as f64;
    let mut grad = vec![0.0; evidence.len()];
    let mut value = 0.0;
    for i in 0..n {
        let (_, m) = targets.row(i);
        for j in (0..k).filter(|&j| !m[j]) {
            let base = i * 2 * k + 2 * j;
            let (a, b) = (evidence[base] + 1.0, evidence[base + 1] + 1.0);
            let s = a + b;
            value += s.ln() - b.ln();
            grad[base] = inv_n / s;
            grad[base + 1] = inv_n * (1.0 / s - 1.0 / b);
        }
    }
    LossTerm { value: value * inv_n, grad }
}

/// What the head produced for a batch.
#[derive(Debug, Clone, Copy)]
pub enum HeadOutputs<'a> {
    /// Linear-head logits, `N × K`.
    Logits(&'a [f64]),
    /// Evidential-head evidence, `N × 2K` interleaved.
    Evidence(&'a [f64]),
}

impl HeadOutputs<'_> {
    pub fn probabilities(&self) -> Vec<f64> {
        match self {
            HeadOutputs::Logits(z) => z.iter().map(|&z| sigmoid(z)).collect(),
            HeadOutputs::Evidence(e) => beta_from_evidence(e).p,
        }
    }
}

/// Per-batch loss decomposition.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossReport {
    pub total: f64,
    pub l_amb: f64,
    pub l_pu: f64,
    /// Mean observed-label entropy over instances with ≥ 1 observed label.
    pub mean_entropy: f64,
    /// Mean weight over the same instances.
    pub mean_weight: f64,
    pub n_effective: usize,
    pub lambda_pu: f64,
    pub pu_enabled: bool,
}

/// Full objective with weights computed from the current outputs.
pub fn loss_total(outputs: HeadOutputs, targets: &Targets, cfg: &ObjectiveConfig) -> (LossReport, Vec<f64>) {
    let iw = instance_weights(&outputs.probabilities(), targets, cfg);
    loss_total_with_weights(outputs, targets, cfg, &iw)
}

/// Full objective with caller-supplied (frozen) instance weights.
pub fn loss_total_with_weights(
    outputs: HeadOutputs,
    targets: &Targets,
    cfg: &ObjectiveConfig,
    iw: &InstanceWeights,
) -> (LossReport, Vec<f64>) {
    let (main, pu) = match outputs {
        HeadOutputs::Logits(z) => (masked_bce(z, targets, &iw.weights), loss_pu(z, targets)),
        HeadOutputs::Evidence(e) => {
            (evidential_masked(e, targets, &iw.weights, cfg.evidential_kl), evidential_pu(e, targets))
        }
    };
    let (total, grad) = if cfg.pu_enabled {
        let grad = main.grad.iter().zip(&pu.grad).map(|(a, b)| a + cfg.lambda_pu * b).collect();
        (main.value + cfg.lambda_pu * pu.value, grad)
    } else {
        (main.value, main.grad)
    };

    let mut n_effective = 0usize;
    let (mut h_sum, mut w_sum) = (0.0, 0.0);
    for (h, w) in iw.entropy.iter().zip(&iw.weights) {
        if let Some(h) = h {
            n_effective += 1;
            h_sum += h;
            w_sum += w;
        }
    }
    let (mean_entropy, mean_weight) =
        if n_effective > 0 { (h_sum / n_effective as f64, w_sum / n_effective as f64) } else { (0.0, 1.0) };
    let report = LossReport {
        total,
        l_amb: main.value,
        l_pu: pu.value,
        mean_entropy,
        mean_weight,
        n_effective,
        lambda_pu: cfg.lambda_pu,
        pu_enabled: cfg.pu_enabled,
    };
    (report, grad)
}
