//! Independent reference implementations used as test oracles.
//!
//! The metric references recount everything from explicit sets and pair
//! enumerations; they share no code with the library besides the final
//! integer-to-float divisions, so agreement is expected bit for bit.

#![allow(dead_code)]

use std::collections::BTreeSet;

use ambiml_core::heads::{EvidentialHead, Head, LinearHead};
use ambiml_core::objective::{instance_weights, loss_total_with_weights, HeadOutputs, ObjectiveConfig, Targets};
use ambiml_core::Mode;
use rand::Rng;

/// A label matrix with an optional mask, row-major.
#[derive(Debug, Clone)]
pub struct Cells {
    pub n: usize,
    pub k: usize,
    pub y: Vec<bool>,
    pub m: Vec<bool>,
}

impl Cells {
    fn observed(&self, i: usize, j: usize) -> bool {
        self.m[i * self.k + j]
    }

    fn positives(&self, i: usize) -> BTreeSet<usize> {
        (0..self.k).filter(|&j| self.observed(i, j) && self.y[i * self.k + j]).collect()
    }

    fn negatives(&self, i: usize) -> BTreeSet<usize> {
        (0..self.k).filter(|&j| self.observed(i, j) && !self.y[i * self.k + j]).collect()
    }

    fn predicted(&self, pred: &[bool], i: usize) -> BTreeSet<usize> {
        (0..self.k).filter(|&j| self.observed(i, j) && pred[i * self.k + j]).collect()
    }
}

pub fn hamming(c: &Cells, pred: &[bool]) -> f64 {
    let cells: Vec<(usize, usize)> =
        (0..c.n).flat_map(|i| (0..c.k).map(move |j| (i, j))).filter(|&(i, j)| c.observed(i, j)).collect();
    let wrong = cells.iter().filter(|&&(i, j)| pred[i * c.k + j] != c.y[i * c.k + j]).count();
    if cells.is_empty() {
        0.0
    } else {
        wrong as f64 / cells.len() as f64
    }
}

/// Ranking loss from all ordered label pairs of each instance.
#[allow(clippy::neg_cmp_op_on_partial_ord)]
pub fn ranking(c: &Cells, p: &[f64]) -> Option<f64> {
    let mut sum = 0.0;
    let mut used = 0usize;
    for i in 0..c.n {
        let (pos, neg) = (c.positives(i), c.negatives(i));
        if pos.is_empty() || neg.is_empty() {
            continue;
        }
        let mut violations = 0usize;
        for a in 0..c.k {
            for b in 0..c.k {
                if pos.contains(&a) && neg.contains(&b) && !(p[i * c.k + a] > p[i * c.k + b]) {
                    violations += 1;
                }
            }
        }
        sum += violations as f64 / (pos.len() * neg.len()) as f64;
        used += 1;
    }
    (used > 0).then(|| sum / used as f64)
}

pub fn jaccard(c: &Cells, pred: &[bool]) -> f64 {
    let mut sum = 0.0;
    for i in 0..c.n {
        let (t, q) = (c.positives(i), c.predicted(pred, i));
        let union = t.union(&q).count();
        sum += if union == 0 { 1.0 } else { t.intersection(&q).count() as f64 / union as f64 };
    }
    sum / c.n as f64
}

fn f1_from_sets(tp: usize, fp: usize, fn_: usize) -> f64 {
    if tp + fp + fn_ == 0 {
        0.0
    } else {
        2.0 * tp as f64 / (2 * tp + fp + fn_) as f64
    }
}

/// (micro, macro) F1 from per-label sets of instance indices.
pub fn f1(c: &Cells, pred: &[bool]) -> (f64, f64) {
    let (mut tp, mut fp, mut fn_) = (0, 0, 0);
    let mut macro_sum = 0.0;
    for j in 0..c.k {
        let truth: BTreeSet<usize> = (0..c.n).filter(|&i| c.observed(i, j) && c.y[i * c.k + j]).collect();
        let guess: BTreeSet<usize> = (0..c.n).filter(|&i| c.observed(i, j) && pred[i * c.k + j]).collect();
        let l_tp = truth.intersection(&guess).count();
        let l_fp = guess.difference(&truth).count();
        let l_fn = truth.difference(&guess).count();
        tp += l_tp;
        fp += l_fp;
        fn_ += l_fn;
        macro_sum += f1_from_sets(l_tp, l_fp, l_fn);
    }
    (f1_from_sets(tp, fp, fn_), macro_sum / c.k as f64)
}

/// Label-wise AP using explicit ranks: an item's rank is one plus the number
/// of items with a higher score or an equal score and a lower index.
pub fn average_precision(c: &Cells, p: &[f64]) -> Option<f64> {
    let mut per_label = Vec::new();
    for j in 0..c.k {
        let items: Vec<usize> = (0..c.n).filter(|&i| c.observed(i, j)).collect();
        let score = |i: usize| p[i * c.k + j];
        let rank =
            |i: usize| 1 + items.iter().filter(|&&o| score(o) > score(i) || (score(o) == score(i) && o < i)).count();
        let mut pos_ranks: Vec<usize> = items.iter().filter(|&&i| c.y[i * c.k + j]).map(|&i| rank(i)).collect();
        if pos_ranks.is_empty() {
            continue;
        }
        pos_ranks.sort_unstable();
        let mut sum = 0.0;
        for (hit, &r) in pos_ranks.iter().enumerate() {
            sum += (hit + 1) as f64 / r as f64;
        }
        per_label.push(sum / pos_ranks.len() as f64);
    }
    (!per_label.is_empty()).then(|| per_label.iter().sum::<f64>() / per_label.len() as f64)
}

fn as_outputs(raw: &[f64], evidential: bool) -> HeadOutputs<'_> {
    if evidential {
        HeadOutputs::Evidence(raw)
    } else {
        HeadOutputs::Logits(raw)
    }
}

/// Largest relative error between analytic and central-difference gradients
/// of the full objective with respect to every head parameter.
///
/// Instance weights are computed once at the base point and held fixed, which
/// is what the analytic gradient differentiates.
pub fn fd_max_rel_error(
    head: &Head,
    inputs: &[Vec<f64>],
    targets: &Targets,
    cfg: &ObjectiveConfig,
    step: f64,
    floor: f64,
) -> f64 {
    let views: Vec<&[f64]> = inputs.iter().map(Vec::as_slice).collect();
    let evidential = matches!(head, Head::Evidential(_));

    let base_raw = head.outputs_batch(&views).unwrap();
    let frozen = instance_weights(&as_outputs(&base_raw, evidential).probabilities(), targets, cfg);
    let loss_of = |h: &Head| {
        let raw = h.outputs_batch(&views).unwrap();
        loss_total_with_weights(as_outputs(&raw, evidential), targets, cfg, &frozen).0.total
    };
    let (_, upstream) = loss_total_with_weights(as_outputs(&base_raw, evidential), targets, cfg, &frozen);
    let grads = head.backward(&views, &upstream).unwrap();
    let analytic: Vec<f64> = grads.w.iter().chain(&grads.b).copied().collect();

    let n_w = head.affine().w.len();
    let mut worst = 0.0f64;
    for (idx, &a) in analytic.iter().enumerate() {
        let perturbed = |delta: f64| {
            let mut h = head.clone();
            let aff = h.affine_mut();
            if idx < n_w {
                aff.w[idx] += delta;
            } else {
                aff.b[idx - n_w] += delta;
            }
            loss_of(&h)
        };
        let numeric = (perturbed(step) - perturbed(-step)) / (2.0 * step);
        let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(floor);
        worst = worst.max(rel);
    }
    worst
}

/// A random head, batch and objective for gradient checking.
pub struct GradCase {
    pub head: Head,
    pub inputs: Vec<Vec<f64>>,
    pub y: Vec<bool>,
    pub m: Vec<bool>,
    pub k: usize,
    pub cfg: ObjectiveConfig,
}

pub fn random_grad_case<R: Rng>(rng: &mut R, mode: Mode, pu_enabled: bool) -> GradCase {
    let n = rng.random_range(1..=4);
    let k = rng.random_range(1..=4);
    let d = rng.random_range(1..=6);
    let rows = if mode == Mode::Evidential { 2 * k } else { k };
    let w: Vec<f64> = (0..rows * d).map(|_| rng.random_range(-1.5..1.5)).collect();
    let b: Vec<f64> = (0..rows).map(|_| rng.random_range(-1.0..1.0)).collect();
    let head = match mode {
        Mode::Evidential => Head::Evidential(EvidentialHead::from_parts(k, d, w, b).unwrap()),
        _ => Head::Linear(LinearHead::from_parts(k, d, w, b).unwrap()),
    };
    let inputs = (0..n).map(|_| (0..d).map(|_| rng.random_range(-2.0..2.0)).collect()).collect();
    let y = (0..n * k).map(|_| rng.random_bool(0.5)).collect();
    let m = (0..n * k).map(|_| rng.random_bool(0.6)).collect();
    let cfg = ObjectiveConfig {
        mode,
        tau: rng.random_range(0.0..3.0),
        lambda_pu: rng.random_range(0.0..0.5),
        pu_enabled,
        evidential_kl: rng.random_range(0.0..0.1),
        ..ObjectiveConfig::default()
    };
    GradCase { head, inputs, y, m, k, cfg }
}

impl GradCase {
    pub fn max_rel_error(&self, step: f64, floor: f64) -> f64 {
        let targets = Targets::new(self.k, &self.y, &self.m).unwrap();
        fd_max_rel_error(&self.head, &self.inputs, &targets, &self.cfg, step, floor)
    }
}
