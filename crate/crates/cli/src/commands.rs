use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use ambiml_core::analysis::{
    aggregate_seeds, bins_table, entropy_bins, label_uncertainty, nearest_neighbors, neighbors_table, stability_table,
    uncertainty_table, Neighbor, SeedResult,
};
use ambiml_core::dataset::{
    generate_synthetic, load_dataset, read_label_space, read_texts, save_dataset, simulate_mask, EmbeddingFormat,
    SyntheticConfig,
};
use ambiml_core::heads::{load_model, save_model};
use ambiml_core::metrics::{evaluate, resolve_thresholds};
use ambiml_core::trainer::{run_seeds, train};
use ambiml_core::{
    AdamWConfig, Dataset, MetricsReport, Mode, ModelBundle, ObjectiveConfig, Split, ThresholdPolicy, Thresholds,
    TrainConfig, Truth,
};
use anyhow::{anyhow, bail, ensure, Context, Result};
use serde::Serialize;

use crate::config::RunConfig;
use crate::manifest::{run_dir, write_json, write_text, Inputs, Manifest};

pub const TEXTS_FILE: &str = "texts.tsv";
pub const TRUTH_FILE: &str = "truth.json";

fn split_stem(split: Split) -> &'static str {
    match split {
        Split::Train => "train",
        Split::Validation => "dev",
        Split::Test => "test",
    }
}

pub fn labels_path(dir: &Path, split: Split) -> PathBuf {
    dir.join(format!("{}.labels.tsv", split_stem(split)))
}

pub fn embeddings_path(dir: &Path, split: Split) -> PathBuf {
    dir.join(format!("{}.emb", split_stem(split)))
}

fn load_split(cfg: &RunConfig, split: Split, inputs: &mut Inputs) -> Result<Dataset> {
    let labels = inputs.track(&labels_path(&cfg.data_dir, split))?.to_path_buf();
    let embeddings = inputs.track(&embeddings_path(&cfg.data_dir, split))?.to_path_buf();
    let space = read_label_space(&labels)?;
    let mut data = load_dataset(&labels, &embeddings, &space)
        .with_context(|| format!("loading {} split from {}", split, cfg.data_dir.display()))?
        .with_split(split);
    let texts = cfg.data_dir.join(TEXTS_FILE);
    if texts.exists() {
        data.attach_texts(&read_texts(inputs.track(&texts)?)?);
    }
    Ok(data)
}

fn load_bundle(cfg: &RunConfig, inputs: &mut Inputs) -> Result<ModelBundle> {
    let path = cfg.model.as_deref().ok_or_else(|| anyhow!("this command needs 'model'"))?;
    let bundle = load_model(inputs.track(path)?).with_context(|| format!("loading model {}", path.display()))?;
    Ok(bundle)
}

fn check_space(bundle: &ModelBundle, data: &Dataset) -> Result<()> {
    ensure!(
        bundle.space == *data.space(),
        "label space mismatch: model has [{}], data has [{}]",
        bundle.space.names().join(", "),
        data.space().names().join(", ")
    );
    Ok(())
}

pub fn train_config(cfg: &RunConfig, mode: Mode, seed: u64) -> TrainConfig {
    TrainConfig {
        epochs: cfg.epochs,
        batch_size: cfg.batch_size,
        seed,
        dropout: cfg.dropout,
        objective: ObjectiveConfig {
            mode,
            tau: cfg.tau,
            lambda_pu: cfg.lambda_pu,
            epsilon: cfg.epsilon,
            pu_enabled: cfg.pu,
            evidential_kl: cfg.evidential_kl,
        },
        optimizer: AdamWConfig {
            lr: cfg.lr,
            beta1: cfg.beta1,
            beta2: cfg.beta2,
            eps: cfg.adam_eps,
            weight_decay: cfg.weight_decay,
            warmup_ratio: cfg.warmup_ratio,
            max_grad_norm: cfg.clip_norm,
        },
        evidential_kl_max: cfg.evidential_kl,
        eval_every: cfg.eval_every,
    }
}

/// Thresholds for `policy`, tuned on `dev` when the policy asks for it.
fn thresholds_for(policy: ThresholdPolicy, dev: Option<(&Truth, &[f64])>) -> Result<Thresholds> {
    match (policy, dev) {
        (ThresholdPolicy::Fixed, _) => Ok(Thresholds::Global(0.5)),
        (_, Some((truth, probs))) => Ok(resolve_thresholds(policy, truth, probs)?),
        (_, None) => bail!("policy {policy} needs a dev split"),
    }
}

#[derive(Serialize)]
struct Artifact<'a, T: Serialize> {
    manifest: &'a Manifest,
    #[serde(flatten)]
    body: T,
}

fn emit<T: Serialize>(path: &Path, manifest: &Manifest, body: T) -> Result<()> {
    write_json(path, &Artifact { manifest, body })
}

/// Header lines that tie a text table to its manifest.
fn text_header(manifest: &Manifest) -> String {
    let mut out = format!("# {} config_sha256={}\n", manifest.command, manifest.config_sha256);
    for (key, value) in &manifest.config {
        writeln!(out, "# {key}={value}").expect("writing to a String");
    }
    out
}

pub fn cmd_synth(cfg: &RunConfig) -> Result<PathBuf> {
    let gen = SyntheticConfig::new(cfg.n, cfg.d, cfg.num_labels, cfg.ambiguity_fraction, cfg.seed)
        .with_logit_scale(cfg.logit_scale);
    let (data, truth) = generate_synthetic(&gen)?;
    let (train_set, dev, test) = data.partition(cfg.train_fraction, cfg.dev_fraction)?;
    let train_set = if cfg.rho < 1.0 { simulate_mask(&train_set, cfg.rho, cfg.seed)? } else { train_set };

    let dir = &cfg.data_dir;
    std::fs::create_dir_all(dir).with_context(|| format!("cannot create {}", dir.display()))?;
    let format = if cfg.embedding_format == "text" { EmbeddingFormat::Text } else { EmbeddingFormat::Binary };
    for part in [&train_set, &dev, &test] {
        save_dataset(part, labels_path(dir, part.split()), embeddings_path(dir, part.split()), format)?;
    }

    let manifest = Manifest::new("synth", cfg, Inputs::default(), vec![cfg.seed]);
    #[derive(Serialize)]
    struct GroundTruth<'a> {
        generator: &'a SyntheticConfig,
        params: &'a ambiml_core::dataset::TrueParams,
    }
    emit(&dir.join(TRUTH_FILE), &manifest, GroundTruth { generator: &gen, params: &truth })?;
    write_json(&dir.join("manifest.json"), &manifest)?;
    Ok(dir.clone())
}

pub fn cmd_train(cfg: &RunConfig) -> Result<PathBuf> {
    let mut inputs = Inputs::default();
    let train_set = load_split(cfg, Split::Train, &mut inputs)?;
    let dev = load_split(cfg, Split::Validation, &mut inputs)?;
    let tcfg = train_config(cfg, cfg.mode, cfg.seed);
    let (bundle, log) = train(&train_set, &dev, &tcfg)?;

    let manifest = Manifest::new("train", cfg, inputs, vec![cfg.seed]);
    let dir = run_dir(&cfg.out_dir, &format!("train-{}", cfg.mode), &manifest, Some(cfg.seed))?;
    save_model(&bundle, dir.join("model.amlm"))?;
    write_text(&dir.join("train_log.jsonl"), &log.to_jsonl())?;
    let report = evaluate(
        &Truth::from_dataset(&dev),
        &bundle.predict_proba(&dev)?,
        ThresholdPolicy::Fixed,
        &Thresholds::Global(0.5),
    )?;
    #[derive(Serialize)]
    struct Dev<'a> {
        split: Split,
        best_step: usize,
        best_epoch: usize,
        report: &'a MetricsReport,
    }
    emit(
        &dir.join("dev_metrics.json"),
        &manifest,
        Dev { split: Split::Validation, best_step: log.best_step, best_epoch: log.best_epoch, report: &report },
    )?;
    write_json(&dir.join("manifest.json"), &manifest)?;
    Ok(dir)
}

pub fn cmd_evaluate(cfg: &RunConfig) -> Result<PathBuf> {
    let mut inputs = Inputs::default();
    let bundle = load_bundle(cfg, &mut inputs)?;
    let data = load_split(cfg, cfg.split, &mut inputs)?;
    check_space(&bundle, &data)?;
    let needs_dev = cfg.policy.iter().any(|p| *p != ThresholdPolicy::Fixed);
    let dev = if needs_dev { Some(load_split(cfg, Split::Validation, &mut inputs)?) } else { None };
    let dev_scored = match &dev {
        Some(d) => {
            check_space(&bundle, d)?;
            Some((Truth::from_dataset(d), bundle.predict_proba(d)?))
        }
        None => None,
    };

    let truth = Truth::from_dataset(&data);
    let probs = bundle.predict_proba(&data)?;
    let mut reports = Vec::with_capacity(cfg.policy.len());
    for &policy in &cfg.policy {
        let th = thresholds_for(policy, dev_scored.as_ref().map(|(t, p)| (t, p.as_slice())))?;
        reports.push(evaluate(&truth, &probs, policy, &th)?);
    }

    let manifest = Manifest::new("evaluate", cfg, inputs, vec![cfg.seed]);
    let dir = run_dir(&cfg.out_dir, &format!("evaluate-{}", cfg.split), &manifest, Some(cfg.seed))?;
    #[derive(Serialize)]
    struct Eval<'a> {
        split: Split,
        mode: Mode,
        reports: &'a [MetricsReport],
    }
    emit(&dir.join("metrics.json"), &manifest, Eval { split: cfg.split, mode: bundle.mode, reports: &reports })?;
    let mut text = text_header(&manifest);
    writeln!(text, "split: {}", cfg.split)?;
    text.push_str(&MetricsReport::to_table(reports.iter().map(|r| (r.policy.as_str(), r))));
    write_text(&dir.join("metrics.txt"), &text)?;
    write_json(&dir.join("manifest.json"), &manifest)?;
    Ok(dir)
}

pub fn cmd_ablate(cfg: &RunConfig) -> Result<PathBuf> {
    ensure!(!cfg.modes.is_empty(), "ablate needs at least one mode");
    ensure!(!cfg.seeds.is_empty(), "ablate needs at least one seed");
    let mut inputs = Inputs::default();
    let train_set = load_split(cfg, Split::Train, &mut inputs)?;
    let dev = load_split(cfg, Split::Validation, &mut inputs)?;
    let test = load_split(cfg, Split::Test, &mut inputs)?;
    let policy = cfg.policy[0];
    let manifest = Manifest::new("ablate", cfg, inputs, cfg.seeds.clone());
    let root = run_dir(&cfg.out_dir, "ablate", &manifest, None)?;
    write_json(&root.join("manifest.json"), &manifest)?;

    let name = cfg.data_dir.file_name().map_or_else(|| "data".to_string(), |s| s.to_string_lossy().into_owned());
    let test_truth = Truth::from_dataset(&test);
    let dev_truth = Truth::from_dataset(&dev);
    let mut results = Vec::new();
    for &mode in &cfg.modes {
        for &seed in &cfg.seeds {
            let tcfg = train_config(cfg, mode, seed);
            let run = run_seeds(&train_set, &dev, &tcfg, &[seed])?.remove(0);
            let dev_probs = run.bundle.predict_proba(&dev)?;
            let th = thresholds_for(policy, Some((&dev_truth, &dev_probs)))?;
            let report = evaluate(&test_truth, &run.bundle.predict_proba(&test)?, policy, &th)?;

            let dir = root.join(format!("{mode}-s{seed}"));
            std::fs::create_dir_all(&dir).with_context(|| format!("cannot create {}", dir.display()))?;
            save_model(&run.bundle, dir.join("model.amlm"))?;
            write_text(&dir.join("train_log.jsonl"), &run.log.to_jsonl())?;
            #[derive(Serialize)]
            struct Run<'a> {
                mode: Mode,
                seed: u64,
                split: Split,
                dev: &'a MetricsReport,
                report: &'a MetricsReport,
            }
            emit(
                &dir.join("metrics.json"),
                &manifest,
                Run { mode, seed, split: Split::Test, dev: &run.dev, report: &report },
            )?;
            results.push(SeedResult { train: name.clone(), mode, seed, labels: test.space().names().to_vec(), report });
        }
    }

    let rows = aggregate_seeds(&results)?;
    #[derive(Serialize)]
    struct Stability<'a> {
        policy: ThresholdPolicy,
        split: Split,
        rows: &'a [ambiml_core::analysis::AggregateRow],
    }
    emit(&root.join("stability.json"), &manifest, Stability { policy, split: Split::Test, rows: &rows })?;
    let mut text = text_header(&manifest);
    writeln!(text, "split: test, policy: {policy}")?;
    text.push_str(&stability_table(&rows));
    write_text(&root.join("stability.txt"), &text)?;
    Ok(root)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Analysis {
    EntropyBins,
    LabelUncertainty,
    Neighbors,
}

impl Analysis {
    pub const NAMES: [&'static str; 3] = ["entropy-bins", "label-uncertainty", "nn"];

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "entropy-bins" => Some(Analysis::EntropyBins),
            "label-uncertainty" => Some(Analysis::LabelUncertainty),
            "nn" => Some(Analysis::Neighbors),
            _ => None,
        }
    }

    fn name(self) -> &'static str {
        match self {
            Analysis::EntropyBins => Self::NAMES[0],
            Analysis::LabelUncertainty => Self::NAMES[1],
            Analysis::Neighbors => Self::NAMES[2],
        }
    }
}

pub fn cmd_analyze(cfg: &RunConfig, which: Analysis) -> Result<PathBuf> {
    let mut inputs = Inputs::default();
    match which {
        Analysis::EntropyBins | Analysis::LabelUncertainty => {
            let bundle = load_bundle(cfg, &mut inputs)?;
            let data = load_split(cfg, cfg.split, &mut inputs)?;
            check_space(&bundle, &data)?;
            let probs = bundle.predict_proba(&data)?;
            let manifest = Manifest::new("analyze", cfg, inputs, vec![cfg.seed]);
            let dir = run_dir(&cfg.out_dir, &format!("analyze-{}", which.name()), &manifest, Some(cfg.seed))?;
            let mut text = text_header(&manifest);
            writeln!(text, "split: {}", cfg.split)?;
            if which == Analysis::EntropyBins {
                let report = entropy_bins(&Truth::from_dataset(&data), &probs, cfg.bins, cfg.tau, cfg.epsilon)?;
                #[derive(Serialize)]
                struct Bins<'a> {
                    split: Split,
                    report: &'a ambiml_core::analysis::EntropyStratification,
                }
                emit(&dir.join("entropy_bins.json"), &manifest, Bins { split: cfg.split, report: &report })?;
                text.push_str(&bins_table(&report));
                write_text(&dir.join("entropy_bins.txt"), &text)?;
            } else {
                let rows = label_uncertainty(data.space(), &probs, cfg.epsilon)?;
                #[derive(Serialize)]
                struct Uncertainty<'a> {
                    split: Split,
                    labels: &'a [ambiml_core::analysis::LabelUncertainty],
                }
                emit(&dir.join("label_uncertainty.json"), &manifest, Uncertainty { split: cfg.split, labels: &rows })?;
                text.push_str(&uncertainty_table(&rows));
                write_text(&dir.join("label_uncertainty.txt"), &text)?;
            }
            write_json(&dir.join("manifest.json"), &manifest)?;
            Ok(dir)
        }
        Analysis::Neighbors => {
            let bank = load_split(cfg, Split::Train, &mut inputs)?;
            let queries = load_split(cfg, cfg.split, &mut inputs)?;
            ensure!(bank.space() == queries.space(), "train and {} use different label spaces", cfg.split);
            let chosen: Vec<usize> = if cfg.queries.is_empty() {
                (0..queries.len()).collect()
            } else {
                cfg.queries
                    .iter()
                    .map(|id| {
                        queries
                            .instances()
                            .iter()
                            .position(|x| &x.id == id)
                            .ok_or_else(|| anyhow!("query id '{id}' is not in the {} split", cfg.split))
                    })
                    .collect::<Result<_>>()?
            };
            #[derive(Serialize)]
            struct Query {
                id: String,
                labels: Vec<String>,
                text: Option<String>,
                neighbors: Vec<Neighbor>,
            }
            let mut rows = Vec::with_capacity(chosen.len());
            let mut table = String::from("query\tneighbor\tsimilarity\tlabels\ttext\n");
            for i in chosen {
                let q = &queries.instances()[i];
                let neighbors = nearest_neighbors(&q.h, &bank, cfg.k)?;
                table.push_str(&neighbors_table(&q.id, &neighbors));
                rows.push(Query {
                    id: q.id.clone(),
                    labels: q.positive_labels(queries.space()).into_iter().map(String::from).collect(),
                    text: q.text.clone(),
                    neighbors,
                });
            }
            let manifest = Manifest::new("analyze", cfg, inputs, vec![cfg.seed]);
            let dir = run_dir(&cfg.out_dir, "analyze-nn", &manifest, Some(cfg.seed))?;
            #[derive(Serialize)]
            struct Nn<'a> {
                split: Split,
                k: usize,
                queries: &'a [Query],
            }
            emit(&dir.join("nn.json"), &manifest, Nn { split: cfg.split, k: cfg.k, queries: &rows })?;
            write_text(&dir.join("nn.tsv"), &table)?;
            write_json(&dir.join("manifest.json"), &manifest)?;
            Ok(dir)
        }
    }
}
