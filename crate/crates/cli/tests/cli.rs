use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn ambiml(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ambiml")).args(args).output().expect("binary runs")
}

/// Runs a command that must succeed and returns the directory it printed.
fn ok(args: &[&str]) -> PathBuf {
    let out = ambiml(args);
    assert!(out.status.success(), "{args:?} failed: {}", String::from_utf8_lossy(&out.stderr));
    PathBuf::from(String::from_utf8(out.stdout).unwrap().trim())
}

fn code(args: &[&str]) -> (i32, String) {
    let out = ambiml(args);
    (out.status.code().unwrap(), String::from_utf8_lossy(&out.stderr).into_owned())
}

fn snapshot(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    let mut out = BTreeMap::new();
    for entry in fs::read_dir(dir).unwrap() {
        let path = entry.unwrap().path();
        if path.is_file() {
            out.insert(path.file_name().unwrap().to_string_lossy().into_owned(), fs::read(&path).unwrap());
        }
    }
    out
}

fn json(path: &Path) -> Value {
    serde_json::from_slice(&fs::read(path).unwrap()).unwrap()
}

struct Workspace {
    _tmp: tempfile::TempDir,
    data: String,
    runs: String,
}

fn workspace(extra: &[&str]) -> Workspace {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data").display().to_string();
    let runs = tmp.path().join("runs").display().to_string();
    let mut args = vec!["synth", "--data-dir", &data, "--n", "300", "--ambiguity-fraction", "0.4"];
    args.extend_from_slice(extra);
    ok(&args);
    Workspace { _tmp: tmp, data, runs }
}

const FAST: [&str; 4] = ["--lr", "0.01", "--epochs", "2"];

fn train(ws: &Workspace, extra: &[&str]) -> PathBuf {
    let mut args = vec!["train", "--data-dir", &ws.data, "--out-dir", &ws.runs];
    args.extend_from_slice(&FAST);
    args.extend_from_slice(extra);
    ok(&args)
}

#[test]
fn every_subcommand_runs_end_to_end() {
    let ws = workspace(&["--rho", "0.7"]);
    let labels = fs::read_to_string(Path::new(&ws.data).join("train.labels.tsv")).unwrap();
    assert!(labels.starts_with("id\t"));
    assert!(labels.contains('?'));
    assert!(!fs::read_to_string(Path::new(&ws.data).join("test.labels.tsv")).unwrap().contains('?'));

    let run = train(&ws, &["--mode", "ambiguity", "--tau", "2.0", "--seed", "42"]);
    assert!(run.file_name().unwrap().to_string_lossy().ends_with("-s42"));
    for f in ["model.amlm", "manifest.json", "train_log.jsonl", "dev_metrics.json"] {
        assert!(run.join(f).is_file(), "missing {f}");
    }
    let manifest = json(&run.join("manifest.json"));
    assert_eq!(manifest["config"]["tau"], "2");
    assert_eq!(manifest["config_sha256"].as_str().unwrap().len(), 64);
    assert_eq!(manifest["inputs"].as_object().unwrap().len(), 4);

    let model = run.join("model.amlm").display().to_string();
    let common = ["--data-dir", ws.data.as_str(), "--out-dir", ws.runs.as_str(), "--model", model.as_str()];
    let eval = ok(&[&["evaluate", "--policy", "fixed_0.5,global_tuned"][..], &common].concat());
    let metrics = json(&eval.join("metrics.json"));
    let policies: Vec<&str> =
        metrics["reports"].as_array().unwrap().iter().map(|r| r["policy"].as_str().unwrap()).collect();
    assert_eq!(policies, ["fixed_0.5", "global_tuned"]);
    let table = fs::read_to_string(eval.join("metrics.txt")).unwrap();
    for col in ["HL", "RL", "miF1", "maF1", "AP"] {
        assert!(table.contains(col));
    }
    assert!(metrics["manifest"]["config"]["policy"].is_string());

    let on_train = ok(&[&["evaluate", "--split", "train"][..], &common].concat());
    assert_eq!(json(&on_train.join("metrics.json"))["split"], "train");
    assert!(fs::read_to_string(on_train.join("metrics.txt")).unwrap().contains("split: train"));

    let bins = ok(&[&["analyze", "entropy-bins", "--bins", "5"][..], &common].concat());
    let report = json(&bins.join("entropy_bins.json"));
    assert_eq!(report["report"]["bins"].as_array().unwrap().len(), 5);

    let unc = ok(&[&["analyze", "label-uncertainty"][..], &common].concat());
    let rows = json(&unc.join("label_uncertainty.json"));
    let eh: Vec<f64> = rows["labels"].as_array().unwrap().iter().map(|r| r["mean_entropy"].as_f64().unwrap()).collect();
    assert!(eh.windows(2).all(|w| w[0] >= w[1]));

    let nn = ok(&["analyze", "nn", "--k", "1", "--data-dir", &ws.data, "--out-dir", &ws.runs]);
    let tsv = fs::read_to_string(nn.join("nn.tsv")).unwrap();
    let first: Vec<&str> = tsv.lines().nth(1).unwrap().split('\t').collect();
    let sim: f64 = first[2].parse().unwrap();
    assert!(first[2].len() > 8 && sim.abs() <= 1.0);

    let ablate = ok(&[
        "ablate",
        "--data-dir",
        &ws.data,
        "--out-dir",
        &ws.runs,
        "--modes",
        "baseline",
        "--seeds",
        "7",
        "--lr",
        "0.01",
        "--epochs",
        "1",
    ]);
    let stab = json(&ablate.join("stability.json"));
    let row = &stab["rows"][0];
    assert!(row["metrics"].as_array().unwrap().iter().all(|m| m["std"] == 0.0));
    assert!(ablate.join("baseline-s7").join("model.amlm").is_file());
}

#[test]
fn synth_is_byte_identical_for_a_fixed_seed() {
    let ws = workspace(&["--rho", "0.7"]);
    let before = snapshot(Path::new(&ws.data));
    ok(&["synth", "--data-dir", &ws.data, "--n", "300", "--ambiguity-fraction", "0.4", "--rho", "0.7"]);
    assert_eq!(snapshot(Path::new(&ws.data)), before);

    let other = tempfile::tempdir().unwrap();
    let other_data = other.path().join("d").display().to_string();
    ok(&["synth", "--data-dir", &other_data, "--n", "300", "--ambiguity-fraction", "0.4", "--rho", "0.7"]);
    let again = snapshot(Path::new(&other_data));
    for f in ["train.labels.tsv", "train.emb", "dev.labels.tsv", "dev.emb", "test.labels.tsv", "test.emb"] {
        assert_eq!(again[f], before[f], "{f}");
    }
}

#[test]
fn repeated_runs_reproduce_metric_json() {
    let ws = workspace(&[]);
    let run = train(&ws, &["--mode", "evidential", "--seed", "5"]);
    let first = snapshot(&run);
    assert_eq!(train(&ws, &["--mode", "evidential", "--seed", "5"]), run);
    let second = snapshot(&run);
    for f in ["dev_metrics.json", "model.amlm", "manifest.json"] {
        assert_eq!(first[f], second[f], "{f}");
    }

    let model = run.join("model.amlm").display().to_string();
    let args =
        ["evaluate", "--data-dir", &ws.data, "--out-dir", &ws.runs, "--model", &model, "--policy", "per_label_tuned"];
    let eval = ok(&args);
    let a = fs::read(eval.join("metrics.json")).unwrap();
    ok(&args);
    assert_eq!(fs::read(eval.join("metrics.json")).unwrap(), a);
}

#[test]
fn baseline_records_tau_without_using_it() {
    let ws = workspace(&[]);
    let a = train(&ws, &["--mode", "baseline", "--tau", "2.0"]);
    let b = train(&ws, &["--mode", "baseline", "--tau", "0.5"]);
    assert_ne!(a, b);
    assert_eq!(json(&a.join("manifest.json"))["config"]["tau"], "2");
    assert_eq!(json(&a.join("dev_metrics.json"))["report"], json(&b.join("dev_metrics.json"))["report"]);
    let weights = |dir: &Path| -> Vec<f64> {
        fs::read_to_string(dir.join("train_log.jsonl"))
            .unwrap()
            .lines()
            .map(|l| serde_json::from_str::<Value>(l).unwrap())
            .filter(|v| v["kind"] == "step")
            .map(|v| v["mean_weight"].as_f64().unwrap())
            .collect()
    };
    assert!(weights(&a).iter().all(|&w| w == 1.0));
}

#[test]
fn exit_codes() {
    let ws = workspace(&[]);
    let missing = format!("{}/absent", ws.data);
    let (c, err) = code(&["train", "--data-dir", &missing, "--out-dir", &ws.runs]);
    assert_eq!(c, 1);
    assert!(err.contains("absent/train.labels.tsv"), "{err}");

    assert_eq!(code(&["train", "--temperature", "2"]).0, 1);
    assert_eq!(code(&["train", "--tau", "hot"]).0, 1);
    assert_eq!(code(&["train", "--data-dir", &ws.data, "--out-dir", &ws.runs, "--tau", "-1"]).0, 1);
    assert_eq!(code(&["evaluate", "--data-dir", &ws.data, "--out-dir", &ws.runs]).0, 1);
    assert_eq!(code(&["--help"]).0, 0);

    let (c, err) = code(&[
        "train",
        "--data-dir",
        &ws.data,
        "--out-dir",
        &ws.runs,
        "--lr",
        "1e307",
        "--clip-norm",
        "none",
        "--weight-decay",
        "0",
        "--warmup-ratio",
        "0",
    ]);
    assert_eq!(c, 2, "{err}");
    assert!(err.contains("non-finite"));
}

#[test]
fn config_file_is_read_and_flags_override_it() {
    let ws = workspace(&[]);
    let cfg = Path::new(&ws.runs).parent().unwrap().join("run.cfg");
    fs::write(&cfg, format!("# sweep\ndata_dir={}\nout_dir={}\nmode=baseline\nepochs=1\nlr=0.01\n", ws.data, ws.runs))
        .unwrap();
    let cfg = cfg.display().to_string();
    let run = ok(&["train", "--config", &cfg, "--seed", "9"]);
    let manifest = json(&run.join("manifest.json"));
    assert_eq!(manifest["config"]["mode"], "baseline");
    assert_eq!(manifest["config"]["seed"], "9");

    fs::write(&cfg, "learning_rate=0.1\n").unwrap();
    assert_eq!(code(&["train", "--config", &cfg]).0, 1);
}

#[test]
fn label_space_mismatch_is_rejected() {
    let ws = workspace(&[]);
    let run = train(&ws, &[]);
    let other = workspace(&["--num-labels", "3"]);
    let model = run.join("model.amlm").display().to_string();
    let (c, err) = code(&["evaluate", "--data-dir", &other.data, "--out-dir", &other.runs, "--model", &model]);
    assert_eq!(c, 1);
    assert!(err.contains("label space mismatch"), "{err}");
}
