//! `ambiml`: synthesise data, train, evaluate, sweep and analyse.
//!
//! Exit codes: 0 success, 1 validation error, 2 numeric failure.

mod commands;
mod config;
mod manifest;

use std::path::PathBuf;
use std::process::ExitCode;

use ambiml_core::optimizer::OptimError;
use ambiml_core::trainer::TrainError;
use anyhow::{Context, Result};
use clap::{Arg, ArgMatches, Command};

use commands::Analysis;
use config::{flag_name, RunConfig, KEYS};

fn with_keys(cmd: Command) -> Command {
    let cmd =
        cmd.arg(Arg::new("config").long("config").value_name("FILE").help("key=value config file; flags override it"));
    KEYS.iter().fold(cmd, |cmd, &(key, help)| {
        let mut arg = Arg::new(key).long(flag_name(key)).value_name("VALUE").help(help);
        if key.contains('_') {
            arg = arg.alias(key);
        }
        cmd.arg(arg)
    })
}

fn cli() -> Command {
    Command::new("ambiml")
        .about("Ambiguity-weighted multi-label learning on precomputed embeddings")
        .subcommand_required(true)
        .arg_required_else_help(true)
        .subcommand(with_keys(Command::new("synth").about("Write a synthetic dataset into data_dir")))
        .subcommand(with_keys(Command::new("train").about("Train one model")))
        .subcommand(with_keys(Command::new("evaluate").about("Score a model on a split")))
        .subcommand(with_keys(Command::new("ablate").about("Train and score every mode × seed")))
        .subcommand(with_keys(
            Command::new("analyze").about("Entropy bins, label uncertainty or nearest neighbours").arg(
                Arg::new("which")
                    .required(true)
                    .value_parser(Analysis::NAMES)
                    .help("entropy-bins, label-uncertainty or nn"),
            ),
        ))
}

fn resolve_config(m: &ArgMatches) -> Result<RunConfig> {
    let mut cfg = RunConfig::default();
    if let Some(path) = m.get_one::<String>("config") {
        let path = PathBuf::from(path);
        let text = std::fs::read_to_string(&path).with_context(|| format!("cannot read {}", path.display()))?;
        cfg.apply_text(&text, &path.display().to_string())?;
    }
    for &(key, _) in KEYS {
        if let Some(value) = m.get_one::<String>(key) {
            cfg.set(key, value)?;
        }
    }
    cfg.check()?;
    Ok(cfg)
}

fn run(m: &ArgMatches) -> Result<PathBuf> {
    let (name, sub) = m.subcommand().expect("subcommand is required");
    let cfg = resolve_config(sub)?;
    match name {
        "synth" => commands::cmd_synth(&cfg),
        "train" => commands::cmd_train(&cfg),
        "evaluate" => commands::cmd_evaluate(&cfg),
        "ablate" => commands::cmd_ablate(&cfg),
        "analyze" => {
            let which = sub.get_one::<String>("which").expect("required");
            commands::cmd_analyze(&cfg, Analysis::parse(which).expect("validated by clap"))
        }
        other => unreachable!("unknown subcommand {other}"),
    }
}

/// Whether the failure came from a diverged computation rather than bad input.
fn is_numeric(err: &anyhow::Error) -> bool {
    err.chain().any(|cause| {
        matches!(cause.downcast_ref::<TrainError>(), Some(TrainError::NonFiniteLoss { .. } | TrainError::Optim { .. }))
            || matches!(cause.downcast_ref::<OptimError>(), Some(OptimError::NonFiniteGradient { .. }))
    })
}

fn main() -> ExitCode {
    let matches = match cli().try_get_matches() {
        Ok(m) => m,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(&matches) {
        Ok(dir) => {
            println!("{}", dir.display());
            ExitCode::SUCCESS
        }
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(if is_numeric(&err) { 2 } else { 1 })
        }
    }
}
