//! Multi-label evaluation and decision-threshold tuning.
//!
//! Every metric looks only at observed cells: a masked test cell is neither a
//! positive nor a negative. Probabilities and predictions are row-major
//! `N × K`.

use std::fmt;
use std::fmt::Write as _;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::Dataset;
use crate::heads::Thresholds;

#[derive(Debug, Error, PartialEq)]
pub enum MetricsError {
    #[error("expected {expected} values (N×K), got {got}")]
    Shape { expected: usize, got: usize },
    #[error("K must be ≥ 1")]
    NoLabels,
    #[error("no instances to evaluate")]
    Empty,
    #[error("unknown threshold policy '{0}' (fixed_0.5, global_tuned, per_label_tuned)")]
    UnknownPolicy(String),
}

/// Ground-truth labels and the optional observation mask they come with.
#[derive(Debug, Clone, PartialEq)]
pub struct Truth {
    k: usize,
    y: Vec<bool>,
    m: Option<Vec<bool>>,
}

impl Truth {
    pub fn new(k: usize, y: Vec<bool>, m: Option<Vec<bool>>) -> Result<Self, MetricsError> {
        if k == 0 {
            return Err(MetricsError::NoLabels);
        }
        if !y.len().is_multiple_of(k) {
            return Err(MetricsError::Shape { expected: y.len() / k * k, got: y.len() });
        }
        if let Some(m) = &m {
            if m.len() != y.len() {
                return Err(MetricsError::Shape { expected: y.len(), got: m.len() });
            }
        }
        Ok(Self { k, y, m })
    }

    pub fn from_dataset(data: &Dataset) -> Self {
        let m = (!data.is_fully_observed()).then(|| data.mask_matrix());
        Self { k: data.num_labels(), y: data.label_matrix(), m }
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

    pub fn label(&self, i: usize, k: usize) -> bool {
        self.y[i * self.k + k]
    }

    pub fn observed(&self, i: usize, k: usize) -> bool {
        self.m.as_ref().is_none_or(|m| m[i * self.k + k])
    }

    /// The given rows, in the given order.
    pub fn select(&self, rows: &[usize]) -> Truth {
        let k = self.k;
        let pick = |v: &[bool]| rows.iter().flat_map(|&i| v[i * k..(i + 1) * k].iter().copied()).collect();
        Truth { k, y: pick(&self.y), m: self.m.as_deref().map(pick) }
    }

    /// Observation mask of row `i`, all true when no mask was given.
    pub fn mask_row(&self, i: usize) -> Vec<bool> {
        (0..self.k).map(|j| self.observed(i, j)).collect()
    }

    fn check(&self, values: usize) -> Result<(), MetricsError> {
        if self.y.is_empty() {
            return Err(MetricsError::Empty);
        }
        if values != self.y.len() {
            return Err(MetricsError::Shape { expected: self.y.len(), got: values });
        }
        Ok(())
    }
}

/// `ŷ = p ≥ t`.
pub fn binarize(probs: &[f64], k: usize, thresholds: &Thresholds) -> Vec<bool> {
    probs.iter().enumerate().map(|(c, &p)| p >= thresholds.for_label(c % k)).collect()
}

/// Fraction of observed cells predicted wrongly (0 when nothing is observed).
pub fn hamming_loss(truth: &Truth, pred: &[bool]) -> Result<f64, MetricsError> {
    truth.check(pred.len())?;
    let (mut wrong, mut observed) = (0usize, 0usize);
    for i in 0..truth.len() {
        for k in (0..truth.k).filter(|&k| truth.observed(i, k)) {
            observed += 1;
            wrong += usize::from(pred[i * truth.k + k] != truth.label(i, k));
        }
    }
    Ok(if observed == 0 { 0.0 } else { wrong as f64 / observed as f64 })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RankingLoss {
    /// `None` when every instance was skipped.
    pub value: Option<f64>,
    pub evaluated: usize,
    /// Instances without an observed positive or without an observed negative.
    pub skipped: usize,
}

/// Mean fraction of (positive, negative) pairs ranked wrongly; a tie counts
/// as wrong.
pub fn ranking_loss(truth: &Truth, probs: &[f64]) -> Result<RankingLoss, MetricsError> {
    truth.check(probs.len())?;
    let k = truth.k;
    let (mut sum, mut evaluated, mut skipped) = (0.0, 0usize, 0usize);
    for i in 0..truth.len() {
        let row = &probs[i * k..(i + 1) * k];
        let observed = (0..k).filter(|&j| truth.observed(i, j));
        let (pos, neg): (Vec<usize>, Vec<usize>) = observed.partition(|&j| truth.label(i, j));
        if pos.is_empty() || neg.is_empty() {
            skipped += 1;
            continue;
        }
        let bad = pos.iter().map(|&a| neg.iter().filter(|&&b| row[a] <= row[b]).count()).sum::<usize>();
        sum += bad as f64 / (pos.len() * neg.len()) as f64;
        evaluated += 1;
    }
    let value = (evaluated > 0).then(|| sum / evaluated as f64);
    Ok(RankingLoss { value, evaluated, skipped })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Jaccard {
    pub value: f64,
    /// Instances whose predicted and true positive sets were both empty
    /// (each scored 1).
    pub both_empty: usize,
}

/// Mean per-instance `|ŷ ∩ y| / |ŷ ∪ y|`.
pub fn jaccard(truth: &Truth, pred: &[bool]) -> Result<Jaccard, MetricsError> {
    truth.check(pred.len())?;
    let k = truth.k;
    let (mut sum, mut both_empty) = (0.0, 0usize);
    for i in 0..truth.len() {
        let (mut inter, mut union) = (0usize, 0usize);
        for j in (0..k).filter(|&j| truth.observed(i, j)) {
            let (p, y) = (pred[i * k + j], truth.label(i, j));
            inter += usize::from(p && y);
            union += usize::from(p || y);
        }
        if union == 0 {
            both_empty += 1;
            sum += 1.0;
        } else {
            sum += inter as f64 / union as f64;
        }
    }
    Ok(Jaccard { value: sum / truth.len() as f64, both_empty })
}

/// Confusion counts of one label.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Confusion {
    pub tp: usize,
    pub fp: usize,
    pub fn_: usize,
}

impl Confusion {
    /// `2TP / (2TP + FP + FN)`, or 0 when all three are zero.
    pub fn f1(&self) -> f64 {
        let denom = 2 * self.tp + self.fp + self.fn_;
        if denom == 0 {
            0.0
        } else {
            2.0 * self.tp as f64 / denom as f64
        }
    }

    pub fn is_degenerate(&self) -> bool {
        self.tp + self.fp + self.fn_ == 0
    }
}

pub fn confusion_per_label(truth: &Truth, pred: &[bool]) -> Result<Vec<Confusion>, MetricsError> {
    truth.check(pred.len())?;
    let k = truth.k;
    let mut out = vec![Confusion::default(); k];
    for i in 0..truth.len() {
        for (j, c) in out.iter_mut().enumerate() {
            if !truth.observed(i, j) {
                continue;
            }
            match (pred[i * k + j], truth.label(i, j)) {
                (true, true) => c.tp += 1,
                (true, false) => c.fp += 1,
                (false, true) => c.fn_ += 1,
                (false, false) => {}
            }
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct F1Scores {
    pub micro: f64,
    pub macro_: f64,
    pub per_label: Vec<f64>,
    /// Labels with TP = FP = FN = 0; their F1 is taken as 0.
    pub degenerate_labels: Vec<usize>,
}

pub fn f1_scores(truth: &Truth, pred: &[bool]) -> Result<F1Scores, MetricsError> {
    let conf = confusion_per_label(truth, pred)?;
    let total = conf.iter().fold(Confusion::default(), |acc, c| Confusion {
        tp: acc.tp + c.tp,
        fp: acc.fp + c.fp,
        fn_: acc.fn_ + c.fn_,
    });
    let per_label: Vec<f64> = conf.iter().map(Confusion::f1).collect();
    Ok(F1Scores {
        micro: total.f1(),
        macro_: per_label.iter().sum::<f64>() / per_label.len() as f64,
        degenerate_labels: conf.iter().enumerate().filter(|(_, c)| c.is_degenerate()).map(|(j, _)| j).collect(),
        per_label,
    })
}

/// Micro-F1 alone, for threshold search.
pub fn micro_f1(truth: &Truth, pred: &[bool]) -> Result<f64, MetricsError> {
    Ok(f1_scores(truth, pred)?.micro)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AveragePrecision {
    /// Mean over labels with at least one observed positive; `None` when
    /// there is no such label.
    pub value: Option<f64>,
    pub per_label: Vec<Option<f64>>,
    /// Labels with no observed positive, left out of the mean.
    pub excluded: usize,
}

/// AP of one ranking: mean precision at the rank of each positive.
/// `scored` pairs a score with its relevance; ties keep input order.
fn ranking_ap(scored: &mut [(f64, bool)]) -> Option<f64> {
    scored.sort_by(|a, b| b.0.total_cmp(&a.0));
    let (mut hits, mut sum) = (0usize, 0.0);
    for (rank, &(_, rel)) in scored.iter().enumerate() {
        if rel {
            hits += 1;
            sum += hits as f64 / (rank + 1) as f64;
        }
    }
    (hits > 0).then(|| sum / hits as f64)
}

/// Label-wise AP, ranking observed instances by descending probability with
/// ties broken by ascending instance index.
pub fn average_precision(truth: &Truth, probs: &[f64]) -> Result<AveragePrecision, MetricsError> {
    truth.check(probs.len())?;
    let k = truth.k;
    let per_label: Vec<Option<f64>> = (0..k)
        .map(|j| {
            let mut scored: Vec<(f64, bool)> = (0..truth.len())
                .filter(|&i| truth.observed(i, j))
                .map(|i| (probs[i * k + j], truth.label(i, j)))
                .collect();
            ranking_ap(&mut scored)
        })
        .collect();
    let present: Vec<f64> = per_label.iter().flatten().copied().collect();
    Ok(AveragePrecision {
        value: (!present.is_empty()).then(|| present.iter().sum::<f64>() / present.len() as f64),
        excluded: k - present.len(),
        per_label,
    })
}

/// How decision thresholds are chosen.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ThresholdPolicy {
    #[serde(rename = "fixed_0.5")]
    Fixed,
    #[serde(rename = "global_tuned")]
    GlobalTuned,
    #[serde(rename = "per_label_tuned")]
    PerLabelTuned,
}

impl ThresholdPolicy {
    pub const ALL: [ThresholdPolicy; 3] =
        [ThresholdPolicy::Fixed, ThresholdPolicy::GlobalTuned, ThresholdPolicy::PerLabelTuned];

    pub fn as_str(self) -> &'static str {
        match self {
            ThresholdPolicy::Fixed => "fixed_0.5",
            ThresholdPolicy::GlobalTuned => "global_tuned",
            ThresholdPolicy::PerLabelTuned => "per_label_tuned",
        }
    }
}

impl fmt::Display for ThresholdPolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ThresholdPolicy {
    type Err = MetricsError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        ThresholdPolicy::ALL
            .into_iter()
            .find(|p| p.as_str() == s)
            .ok_or_else(|| MetricsError::UnknownPolicy(s.to_string()))
    }
}

/// Candidate thresholds 0.05, 0.06, …, 0.95.
pub fn threshold_grid() -> Vec<f64> {
    (0..=90).map(|j| (5 + j) as f64 / 100.0).collect()
}

/// Global threshold maximizing micro-F1; ties go to the smallest threshold.
pub fn tune_threshold_global(truth: &Truth, probs: &[f64]) -> Result<f64, MetricsError> {
    truth.check(probs.len())?;
    let mut best = (f64::NEG_INFINITY, 0.5);
    for t in threshold_grid() {
        let pred: Vec<bool> = probs.iter().map(|&p| p >= t).collect();
        let f = micro_f1(truth, &pred)?;
        if f > best.0 {
            best = (f, t);
        }
    }
    Ok(best.1)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerLabelTuning {
    pub thresholds: Vec<f64>,
    /// Labels without an observed positive; they keep 0.5.
    pub defaulted: Vec<usize>,
}

/// Per-label thresholds maximizing each label's F1; ties go to the smallest.
pub fn tune_thresholds_per_label(truth: &Truth, probs: &[f64]) -> Result<PerLabelTuning, MetricsError> {
    truth.check(probs.len())?;
    let k = truth.k;
    let grid = threshold_grid();
    let mut out = PerLabelTuning { thresholds: Vec::with_capacity(k), defaulted: Vec::new() };
    for j in 0..k {
        let cells: Vec<(f64, bool)> =
            (0..truth.len()).filter(|&i| truth.observed(i, j)).map(|i| (probs[i * k + j], truth.label(i, j))).collect();
        if !cells.iter().any(|c| c.1) {
            out.thresholds.push(0.5);
            out.defaulted.push(j);
            continue;
        }
        let mut best = (f64::NEG_INFINITY, 0.5);
        for &t in &grid {
            let mut c = Confusion::default();
            for &(p, y) in &cells {
                match (p >= t, y) {
                    (true, true) => c.tp += 1,
                    (true, false) => c.fp += 1,
                    (false, true) => c.fn_ += 1,
                    (false, false) => {}
                }
            }
            if c.f1() > best.0 {
                best = (c.f1(), t);
            }
        }
        out.thresholds.push(best.1);
    }
    Ok(out)
}

/// Thresholds for `policy`, tuned on the given (development) predictions.
pub fn resolve_thresholds(policy: ThresholdPolicy, truth: &Truth, probs: &[f64]) -> Result<Thresholds, MetricsError> {
    Ok(match policy {
        ThresholdPolicy::Fixed => Thresholds::Global(0.5),
        ThresholdPolicy::GlobalTuned => Thresholds::Global(tune_threshold_global(truth, probs)?),
        ThresholdPolicy::PerLabelTuned => Thresholds::PerLabel(tune_thresholds_per_label(truth, probs)?.thresholds),
    })
}

/// All metrics for one prediction set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub policy: ThresholdPolicy,
    pub thresholds: Thresholds,
    pub n_instances: usize,
    pub n_labels: usize,
    pub hamming_loss: f64,
    /// `None` when no instance has both an observed positive and negative.
    pub ranking_loss: Option<f64>,
    pub micro_f1: f64,
    pub macro_f1: f64,
    /// `None` when no label has an observed positive.
    pub average_precision: Option<f64>,
    pub jaccard: f64,
    pub ranking_loss_skipped: usize,
    pub jaccard_both_empty: usize,
    pub f1_degenerate_labels: Vec<usize>,
    pub ap_excluded_labels: usize,
    pub per_label_f1: Vec<f64>,
    pub per_label_ap: Vec<Option<f64>>,
}

pub fn evaluate(
    truth: &Truth,
    probs: &[f64],
    policy: ThresholdPolicy,
    thresholds: &Thresholds,
) -> Result<MetricsReport, MetricsError> {
    truth.check(probs.len())?;
    let pred = binarize(probs, truth.k, thresholds);
    let rl = ranking_loss(truth, probs)?;
    let jac = jaccard(truth, &pred)?;
    let f1 = f1_scores(truth, &pred)?;
    let ap = average_precision(truth, probs)?;
    Ok(MetricsReport {
        policy,
        thresholds: thresholds.clone(),
        n_instances: truth.len(),
        n_labels: truth.k,
        hamming_loss: hamming_loss(truth, &pred)?,
        ranking_loss: rl.value,
        micro_f1: f1.micro,
        macro_f1: f1.macro_,
        average_precision: ap.value,
        jaccard: jac.value,
        ranking_loss_skipped: rl.skipped,
        jaccard_both_empty: jac.both_empty,
        f1_degenerate_labels: f1.degenerate_labels,
        ap_excluded_labels: ap.excluded,
        per_label_f1: f1.per_label,
        per_label_ap: ap.per_label,
    })
}

pub const TABLE_COLUMNS: [&str; 6] = ["HL", "RL", "miF1", "maF1", "AP", "Jaccard"];

impl MetricsReport {
    /// Values in table column order; `None` marks an undefined metric.
    pub fn headline(&self) -> [Option<f64>; 6] {
        [
            Some(self.hamming_loss),
            self.ranking_loss,
            Some(self.micro_f1),
            Some(self.macro_f1),
            self.average_precision,
            Some(self.jaccard),
        ]
    }

    /// Fixed-width rows, one per `(row label, report)`.
    pub fn to_table<'a>(rows: impl IntoIterator<Item = (&'a str, &'a MetricsReport)>) -> String {
        let rows: Vec<_> = rows.into_iter().collect();
        let width = rows.iter().map(|(name, _)| name.len()).max().unwrap_or(0).max(8);
        let mut out = format!("{:<width$}", "");
        for col in TABLE_COLUMNS {
            write!(out, " {col:>8}").expect("writing to a String");
        }
        out.push('\n');
        for (name, report) in rows {
            write!(out, "{name:<width$}").expect("writing to a String");
            for v in report.headline() {
                match v {
                    Some(v) => write!(out, " {v:>8.4}"),
                    None => write!(out, " {:>8}", "n/a"),
                }
                .expect("writing to a String");
            }
            out.push('\n');
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn truth(k: usize, y: &[u8], m: Option<&[u8]>) -> Truth {
        Truth::new(k, y.iter().map(|&v| v == 1).collect(), m.map(|m| m.iter().map(|&v| v == 1).collect())).unwrap()
    }

    #[test]
    fn perfect_prediction() {
        let t = truth(3, &[1, 0, 1, 0, 1, 0], None);
        let probs = [0.9, 0.1, 0.8, 0.2, 0.7, 0.3];
        let r = evaluate(&t, &probs, ThresholdPolicy::Fixed, &Thresholds::Global(0.5)).unwrap();
        assert_eq!(r.hamming_loss, 0.0);
        assert_eq!(r.ranking_loss, Some(0.0));
        assert_eq!(r.micro_f1, 1.0);
        assert_eq!(r.macro_f1, 1.0);
        assert_eq!(r.average_precision, Some(1.0));
        assert_eq!(r.jaccard, 1.0);
    }

    #[test]
    fn ties_count_as_ranking_errors() {
        let t = truth(2, &[1, 0], None);
        assert_eq!(ranking_loss(&t, &[0.4, 0.4]).unwrap().value, Some(1.0));
        assert_eq!(ranking_loss(&t, &[0.5, 0.4]).unwrap().value, Some(0.0));
        let t = truth(3, &[1, 0, 0], None);
        assert_eq!(ranking_loss(&t, &[0.4, 0.4, 0.1]).unwrap().value, Some(0.5));
    }

    #[test]
    fn ranking_loss_skips_one_sided_rows() {
        let t = truth(2, &[1, 1, 0, 0, 1, 0], None);
        let rl = ranking_loss(&t, &[0.1, 0.2, 0.3, 0.4, 0.2, 0.9]).unwrap();
        assert_eq!(rl.skipped, 2);
        assert_eq!(rl.evaluated, 1);
        assert_eq!(rl.value, Some(1.0));
        let all_pos = truth(2, &[1, 1], None);
        assert_eq!(ranking_loss(&all_pos, &[0.1, 0.2]).unwrap().value, None);
    }

    #[test]
    fn empty_rows_give_jaccard_one() {
        let t = truth(2, &[0, 0], None);
        let j = jaccard(&t, &[false, false]).unwrap();
        assert_eq!((j.value, j.both_empty), (1.0, 1));
    }

    #[test]
    fn degenerate_label_scores_zero_and_is_flagged() {
        let t = truth(2, &[1, 0, 1, 0], None);
        let f = f1_scores(&t, &[true, false, true, false]).unwrap();
        assert_eq!(f.per_label, vec![1.0, 0.0]);
        assert_eq!(f.degenerate_labels, vec![1]);
        assert_eq!(f.macro_, 0.5);
        assert_eq!(f.micro, 1.0);
    }

    #[test]
    fn ap_tie_order_is_by_index() {
        // equal scores: index 0 (negative) ranks ahead of index 1 (positive)
        let t = truth(1, &[0, 1], None);
        let ap = average_precision(&t, &[0.5, 0.5]).unwrap();
        assert_eq!(ap.value, Some(0.5));
        let t = truth(1, &[1, 0], None);
        assert_eq!(average_precision(&t, &[0.5, 0.5]).unwrap().value, Some(1.0));
        let last = truth(1, &[0, 0, 0, 1], None);
        assert_eq!(average_precision(&last, &[0.9, 0.8, 0.7, 0.1]).unwrap().value, Some(0.25));
    }

    #[test]
    fn ap_excludes_labels_without_positives() {
        let t = truth(2, &[1, 0, 0, 0], None);
        let ap = average_precision(&t, &[0.3, 0.9, 0.1, 0.2]).unwrap();
        assert_eq!(ap.excluded, 1);
        assert_eq!(ap.per_label, vec![Some(1.0), None]);
        assert_eq!(ap.value, Some(1.0));
        let none = truth(1, &[0, 0], None);
        assert_eq!(average_precision(&none, &[0.3, 0.9]).unwrap().value, None);
    }

    #[test]
    fn empty_input_is_an_error() {
        let t = Truth::new(2, vec![], None).unwrap();
        assert_eq!(hamming_loss(&t, &[]), Err(MetricsError::Empty));
        assert!(evaluate(&t, &[], ThresholdPolicy::Fixed, &Thresholds::Global(0.5)).is_err());
    }

    #[test]
    fn reference_cases() {
        let t = truth(2, &[1, 0, 0, 1], None);
        assert_eq!(hamming_loss(&t, &[true, false, true, true]).unwrap(), 0.25);
        let j = truth(3, &[1, 1, 0], None);
        assert!((jaccard(&j, &[false, true, true]).unwrap().value - 1.0 / 3.0).abs() < 1e-15);
        let f = truth(1, &[1, 0], None);
        assert!((f1_scores(&f, &[true, true]).unwrap().micro - 2.0 / 3.0).abs() < 1e-15);
        let m = truth(2, &[1, 1, 0, 0], None);
        assert_eq!(f1_scores(&m, &[true, false, false, true]).unwrap().macro_, 0.5);
    }

    #[test]
    fn masked_cells_are_ignored() {
        let t = truth(2, &[1, 1, 0, 1], Some(&[1, 0, 1, 1]));
        let probs = [0.9, 0.0, 0.1, 0.8];
        let r = evaluate(&t, &probs, ThresholdPolicy::Fixed, &Thresholds::Global(0.5)).unwrap();
        assert_eq!(r.hamming_loss, 0.0);
        assert_eq!(r.micro_f1, 1.0);
        let flipped = truth(2, &[1, 0, 0, 1], Some(&[1, 0, 1, 1]));
        let r2 = evaluate(&flipped, &[0.9, 0.7, 0.1, 0.8], ThresholdPolicy::Fixed, &Thresholds::Global(0.5)).unwrap();
        assert_eq!(r.headline(), r2.headline());
    }

    #[test]
    fn grid_endpoints() {
        let g = threshold_grid();
        assert_eq!(g.len(), 91);
        assert_eq!(g[0], 0.05);
        assert_eq!(g[45], 0.5);
        assert_eq!(g[90], 0.95);
    }

    #[test]
    fn global_tuning_prefers_smallest_on_ties() {
        let t = truth(1, &[1, 0], None);
        // any threshold in (0.2, 0.6] separates perfectly
        assert_eq!(tune_threshold_global(&t, &[0.6, 0.2]).unwrap(), 0.21);
    }

    #[test]
    fn per_label_tuning_defaults_empty_labels() {
        let t = truth(2, &[1, 0, 0, 0], None);
        let tuned = tune_thresholds_per_label(&t, &[0.3, 0.9, 0.1, 0.2]).unwrap();
        assert_eq!(tuned.thresholds, vec![0.11, 0.5]);
        assert_eq!(tuned.defaulted, vec![1]);
    }

    #[test]
    fn policy_names_round_trip() {
        for p in ThresholdPolicy::ALL {
            assert_eq!(p.as_str().parse::<ThresholdPolicy>().unwrap(), p);
            assert_eq!(serde_json::to_string(&p).unwrap(), format!("\"{}\"", p.as_str()));
        }
        assert!("median".parse::<ThresholdPolicy>().is_err());
    }

    #[test]
    fn table_has_fixed_columns() {
        let t = truth(1, &[1, 0], None);
        let r = evaluate(&t, &[0.7, 0.2], ThresholdPolicy::Fixed, &Thresholds::Global(0.5)).unwrap();
        let table = MetricsReport::to_table([("ambiguity", &r)]);
        let lines: Vec<&str> = table.lines().collect();
        assert_eq!(lines.len(), 2);
        assert!(lines[0].ends_with(" Jaccard"));
        assert!(lines[1].contains("0.0000") && lines[1].contains("1.0000"));
        assert_eq!(lines[0].len(), lines[1].len());
    }
}
