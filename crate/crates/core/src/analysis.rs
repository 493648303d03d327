//! Post-hoc analyses of trained models.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::{Dataset, LabelSpace};
use crate::heads::{Mode, Thresholds};
use crate::metrics::{average_precision, binarize, micro_f1, MetricsError, MetricsReport, Truth, TABLE_COLUMNS};
use crate::objective::{ambiguity_weight, binary_entropy, entropy_observed};

#[derive(Debug, Error, PartialEq)]
pub enum AnalysisError {
    #[error("expected {expected} values, got {got}")]
    Shape { expected: usize, got: usize },
    #[error("cannot split {available} instances into {bins} bins")]
    Bins { bins: usize, available: usize },
    #[error("query has dimension {got}, bank has {expected}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("results disagree on the label space")]
    InconsistentLabelSpace,
    #[error("nothing to aggregate")]
    Empty,
    #[error(transparent)]
    Metrics(#[from] MetricsError),
}

/// One equal-frequency entropy bin.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EntropyBin {
    /// Entropy of the first instance in the bin.
    pub lo: f64,
    /// Entropy of the first instance of the next bin (the maximum, for the last bin).
    pub hi: f64,
    pub count: usize,
    pub mean_entropy: f64,
    pub mean_weight: f64,
    pub micro_f1: f64,
    /// `None` when no label in the bin has an observed positive.
    pub average_precision: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EntropyStratification {
    pub bins: Vec<EntropyBin>,
    /// Instances without any observed label, which have no entropy.
    pub skipped: usize,
}

/// Sorts instances by observed-label entropy (ties by index) and cuts them
/// into `n_bins` groups whose sizes differ by at most one.
pub fn entropy_bins(
    truth: &Truth,
    probs: &[f64],
    n_bins: usize,
    tau: f64,
    epsilon: f64,
) -> Result<EntropyStratification, AnalysisError> {
    let k = truth.num_labels();
    if probs.len() != truth.len() * k {
        return Err(AnalysisError::Shape { expected: truth.len() * k, got: probs.len() });
    }
    let mut scored: Vec<(f64, usize)> = (0..truth.len())
        .filter_map(|i| entropy_observed(&probs[i * k..(i + 1) * k], &truth.mask_row(i), epsilon).map(|h| (h, i)))
        .collect();
    let skipped = truth.len() - scored.len();
    let n = scored.len();
    if n_bins == 0 || n_bins > n {
        return Err(AnalysisError::Bins { bins: n_bins, available: n });
    }
    scored.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));

    let cut = |b: usize| b * n / n_bins;
    let mut bins = Vec::with_capacity(n_bins);
    for b in 0..n_bins {
        let members = &scored[cut(b)..cut(b + 1)];
        let rows: Vec<usize> = members.iter().map(|&(_, i)| i).collect();
        let sub_truth = truth.select(&rows);
        let sub_probs: Vec<f64> = rows.iter().flat_map(|&i| probs[i * k..(i + 1) * k].iter().copied()).collect();
        let pred = binarize(&sub_probs, k, &Thresholds::Global(0.5));
        let ap = average_precision(&sub_truth, &sub_probs)?;
        let count = members.len() as f64;
        bins.push(EntropyBin {
            lo: members[0].0,
            hi: if b + 1 < n_bins { scored[cut(b + 1)].0 } else { members[members.len() - 1].0 },
            count: members.len(),
            mean_entropy: members.iter().map(|m| m.0).sum::<f64>() / count,
            mean_weight: members.iter().map(|m| ambiguity_weight(m.0, tau)).sum::<f64>() / count,
            micro_f1: micro_f1(&sub_truth, &pred)?,
            average_precision: ap.value,
        });
    }
    Ok(EntropyStratification { bins, skipped })
}

/// Running mean and population variance.
#[derive(Debug, Clone, Copy, Default)]
struct Welford {
    n: usize,
    mean: f64,
    m2: f64,
}

impl Welford {
    fn push(&mut self, x: f64) {
        self.n += 1;
        let delta = x - self.mean;
        self.mean += delta / self.n as f64;
        self.m2 += delta * (x - self.mean);
    }

    fn std(&self) -> f64 {
        if self.n == 0 {
            0.0
        } else {
            (self.m2 / self.n as f64).sqrt()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelUncertainty {
    pub label: String,
    pub mean_entropy: f64,
    pub std_entropy: f64,
    pub mean_prob: f64,
    pub std_prob: f64,
}

/// Per-label predictive entropy and probability statistics over all
/// instances, most uncertain label first (ties by label order).
pub fn label_uncertainty(
    space: &LabelSpace,
    probs: &[f64],
    epsilon: f64,
) -> Result<Vec<LabelUncertainty>, AnalysisError> {
    let k = space.len();
    if !probs.len().is_multiple_of(k) {
        return Err(AnalysisError::Shape { expected: probs.len() / k * k, got: probs.len() });
    }
    let mut ent = vec![Welford::default(); k];
    let mut prob = vec![Welford::default(); k];
    for row in probs.chunks_exact(k) {
        for (j, &p) in row.iter().enumerate() {
            ent[j].push(binary_entropy(p, epsilon));
            prob[j].push(p);
        }
    }
    let mut out: Vec<(usize, LabelUncertainty)> = (0..k)
        .map(|j| {
            (
                j,
                LabelUncertainty {
                    label: space.names()[j].clone(),
                    mean_entropy: ent[j].mean,
                    std_entropy: ent[j].std(),
                    mean_prob: prob[j].mean,
                    std_prob: prob[j].std(),
                },
            )
        })
        .collect();
    out.sort_by(|a, b| b.1.mean_entropy.total_cmp(&a.1.mean_entropy).then(a.0.cmp(&b.0)));
    Ok(out.into_iter().map(|(_, u)| u).collect())
}

/// Mean and population standard deviation, summed in sorted order so the
/// result does not depend on input order.
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (0.0, 0.0);
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let mut dev: Vec<f64> = v.iter().map(|x| (x - mean) * (x - mean)).collect();
    dev.sort_by(f64::total_cmp);
    (mean, (dev.iter().sum::<f64>() / n).sqrt())
}

/// One evaluated run to aggregate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedResult {
    /// Training-set name, e.g. `EN` or `synthetic`.
    pub train: String,
    pub mode: Mode,
    pub seed: u64,
    pub labels: Vec<String>,
    pub report: MetricsReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricSummary {
    pub metric: String,
    /// Runs where the metric was defined.
    pub n: usize,
    pub mean: Option<f64>,
    pub std: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateRow {
    pub train: String,
    pub mode: Mode,
    pub seeds: Vec<u64>,
    pub metrics: Vec<MetricSummary>,
}

impl AggregateRow {
    pub fn mean_of(&self, metric: &str) -> Option<f64> {
        self.metrics.iter().find(|m| m.metric == metric).and_then(|m| m.mean)
    }
}

/// Groups results by `(train, mode)` and summarizes each headline metric.
pub fn aggregate_seeds(results: &[SeedResult]) -> Result<Vec<AggregateRow>, AnalysisError> {
    let first = results.first().ok_or(AnalysisError::Empty)?;
    if results.iter().any(|r| r.labels != first.labels) {
        return Err(AnalysisError::InconsistentLabelSpace);
    }
    let mut groups: BTreeMap<(String, Mode), Vec<&SeedResult>> = BTreeMap::new();
    for r in results {
        groups.entry((r.train.clone(), r.mode)).or_default().push(r);
    }
    Ok(groups
        .into_iter()
        .map(|((train, mode), runs)| {
            let mut seeds: Vec<u64> = runs.iter().map(|r| r.seed).collect();
            seeds.sort_unstable();
            let metrics = TABLE_COLUMNS
                .iter()
                .enumerate()
                .map(|(c, name)| {
                    let values: Vec<f64> = runs.iter().filter_map(|r| r.report.headline()[c]).collect();
                    let (mean, std) = mean_std(&values);
                    let defined = !values.is_empty();
                    MetricSummary {
                        metric: name.to_string(),
                        n: values.len(),
                        mean: defined.then_some(mean),
                        std: defined.then_some(std),
                    }
                })
                .collect();
            AggregateRow { train, mode, seeds, metrics }
        })
        .collect())
}

/// Cosine similarity, 0 when either vector is all zeros.
pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        dot / (na * nb)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Neighbor {
    pub index: usize,
    pub id: String,
    pub similarity: f64,
    /// Observed positive labels.
    pub labels: Vec<String>,
    pub text: Option<String>,
}

/// Exact top-`k` bank entries by cosine similarity; ties go to the lower index.
pub fn nearest_neighbors(query: &[f64], bank: &Dataset, k: usize) -> Result<Vec<Neighbor>, AnalysisError> {
    if query.len() != bank.dim() {
        return Err(AnalysisError::DimensionMismatch { expected: bank.dim(), got: query.len() });
    }
    let mut sims: Vec<(f64, usize)> =
        bank.instances().iter().enumerate().map(|(i, x)| (cosine(query, &x.h), i)).collect();
    sims.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
    Ok(sims
        .into_iter()
        .take(k)
        .map(|(similarity, index)| {
            let inst = &bank.instances()[index];
            Neighbor {
                index,
                id: inst.id.clone(),
                similarity,
                labels: inst.positive_labels(bank.space()).into_iter().map(String::from).collect(),
                text: inst.text.clone(),
            }
        })
        .collect())
}

fn opt4(v: Option<f64>) -> String {
    v.map_or_else(|| "n/a".to_string(), |v| format!("{v:.4}"))
}

/// Entropy bins as an aligned text table.
pub fn bins_table(report: &EntropyStratification) -> String {
    let mut out = format!(
        "{:<4} {:>17} {:>6} {:>8} {:>8} {:>8} {:>8}\n",
        "bin", "H range", "count", "H mean", "w mean", "miF1", "AP"
    );
    for (b, bin) in report.bins.iter().enumerate() {
        let range = format!("[{:.4}, {:.4})", bin.lo, bin.hi);
        writeln!(
            out,
            "{:<4} {:>17} {:>6} {:>8.4} {:>8.4} {:>8.4} {:>8}",
            b + 1,
            range,
            bin.count,
            bin.mean_entropy,
            bin.mean_weight,
            bin.micro_f1,
            opt4(bin.average_precision)
        )
        .expect("writing to a String");
    }
    out
}

/// Label-wise uncertainty as an aligned text table.
pub fn uncertainty_table(rows: &[LabelUncertainty]) -> String {
    let width = rows.iter().map(|r| r.label.len()).max().unwrap_or(0).max(5);
    let mut out = format!("{:<width$} {:>8} {:>8} {:>8} {:>8}\n", "label", "E[H]", "Std(H)", "E[p]", "Std(p)");
    for r in rows {
        writeln!(
            out,
            "{:<width$} {:>8.4} {:>8.4} {:>8.4} {:>8.4}",
            r.label, r.mean_entropy, r.std_entropy, r.mean_prob, r.std_prob
        )
        .expect("writing to a String");
    }
    out
}

/// Seed aggregates as `mean ± std` per headline metric.
pub fn stability_table(rows: &[AggregateRow]) -> String {
    let name_w = rows.iter().map(|r| r.train.len()).max().unwrap_or(0).max(5);
    let mut out = format!("{:<name_w$} {:<10} {:>5}", "train", "mode", "seeds");
    for col in TABLE_COLUMNS {
        write!(out, " {col:>15}").expect("writing to a String");
    }
    out.push('\n');
    for r in rows {
        write!(out, "{:<name_w$} {:<10} {:>5}", r.train, r.mode.as_str(), r.seeds.len()).expect("writing to a String");
        for m in &r.metrics {
            let cell = match (m.mean, m.std) {
                (Some(mean), Some(std)) => format!("{mean:.4} ± {std:.4}"),
                _ => "n/a".to_string(),
            };
            write!(out, " {cell:>15}").expect("writing to a String");
        }
        out.push('\n');
    }
    out
}

/// Neighbours of one query with full-precision similarities.
pub fn neighbors_table(query_id: &str, neighbors: &[Neighbor]) -> String {
    let mut out = String::new();
    for n in neighbors {
        writeln!(
            out,
            "{query_id}\t{}\t{:?}\t{}\t{}",
            n.id,
            n.similarity,
            n.labels.join(","),
            n.text.as_deref().unwrap_or("")
        )
        .expect("writing to a String");
    }
    out
}
