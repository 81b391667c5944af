//! `fkpath`: run an experiment from a JSON config and emit CSV or JSON.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod commands;
mod config;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::Parser;
use serde_json::{json, Value};

use config::{Command, Format, Invalid};

const VERSION: &str = env!("FKPATH_VERSION");

const COLUMNS_HELP: &str = "\
CSV columns:
  kernel   t,x,y,value
  mc       mean,stderr,n_paths
  lattice  t,site,mean,stderr
  quench   t,y,value
  spde     t,x,value
  verify   id,name,passed,detail

Any leaf of the config can be overridden with a dotted flag, e.g. --sampling.seed=7.

Exit codes: 0 success, 2 validation error, 3 numerical failure or failed checks.";

#[derive(Debug, Parser)]
#[command(name = "fkpath", version = VERSION, about = "Feynman-Kac path-integral experiments", after_help = COLUMNS_HELP)]
struct Cli {
    /// Command to run; must match the config's `command` when both are given.
    #[arg(value_enum)]
    command: Option<Command>,
    /// JSON experiment config (optional only for `verify`).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output file; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum)]
    format: Option<Format>,
    /// Worker threads for path-level parallelism.
    #[arg(long, env = "FKPATH_THREADS")]
    threads: Option<usize>,
    /// Acceptance suite for `verify`.
    #[arg(long)]
    suite: Option<String>,
}

/// Dotted config paths and their raw values.
type Overrides = Vec<(String, String)>;

/// Pulls `--a.b=value` and `--a.b value` out of the argument list.
fn split_overrides(args: Vec<String>) -> Result<(Vec<String>, Overrides), Invalid> {
    let (mut rest, mut overrides) = (Vec::new(), Vec::new());
    let mut it = args.into_iter();
    while let Some(arg) = it.next() {
        let Some(body) = arg.strip_prefix("--") else {
            rest.push(arg);
            continue;
        };
        let (key, value) = match body.split_once('=') {
            Some((k, v)) => (k.to_owned(), Some(v.to_owned())),
            None => (body.to_owned(), None),
        };
        if !key.contains('.') {
            rest.push(arg);
            continue;
        }
        let value = match value.or_else(|| it.next()) {
            Some(v) => v,
            None => return Err(Invalid(format!("override --{key} has no value"))),
        };
        overrides.push((key, value));
    }
    Ok((rest, overrides))
}

fn load(cli: &Cli, overrides: &[(String, String)]) -> Result<config::ExperimentConfig> {
    let mut value = match &cli.config {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|e| Invalid(format!("cannot read config {}: {e}", path.display())))?;
            serde_json::from_str::<Value>(&text).map_err(|e| Invalid(format!("config {} is not JSON: {e}", path.display())))?
        }
        None if cli.command == Some(Command::Verify) => json!({}),
        None => return Err(Invalid("--config is required".into()).into()),
    };
    if !value.is_object() {
        return Err(Invalid("config must be a JSON object".into()).into());
    }
    if let Some(cmd) = cli.command {
        match value.get("command") {
            Some(v) if *v != json!(cmd.name()) => {
                return Err(Invalid(format!("command '{}' does not match config command {v}", cmd.name())).into());
            }
            _ => value["command"] = json!(cmd.name()),
        }
    }
    for (key, raw) in overrides {
        config::apply_override(&mut value, key, raw)?;
    }
    if let Some(suite) = &cli.suite {
        config::apply_override(&mut value, "verify.suite", &json!(suite).to_string())?;
    }
    if let Some(out) = &cli.out {
        config::apply_override(&mut value, "output.path", &json!(out.to_string_lossy()).to_string())?;
    }
    if let Some(format) = cli.format {
        config::apply_override(&mut value, "output.format", &serde_json::to_string(&format)?)?;
    }
    Ok(config::parse(value)?)
}

/// Returns whether every check passed.
fn execute(cli: &Cli, overrides: &[(String, String)]) -> Result<bool> {
    let cfg = load(cli, overrides)?;
    if cli.threads == Some(0) {
        return Err(Invalid("--threads must be at least 1".into()).into());
    }
    let outcome = fkpath::parallel::with_threads(cli.threads, || commands::run(&cfg))?;
    let text = match cfg.output.format {
        Format::Csv => outcome.table.to_csv(),
        Format::Json => {
            // The destination is not part of the experiment.
            let mut echo = serde_json::to_value(&cfg)?;
            echo["output"]["path"] = Value::Null;
            outcome.table.to_json(cfg.command.name(), VERSION, cfg.sampling.seed, echo)
        }
    };
    match &cfg.output.path {
        Some(path) => std::fs::write(path, text).with_context(|| format!("cannot write {path}"))?,
        None => print!("{text}"),
    }
    Ok(!outcome.failed)
}

fn exit_code(err: &anyhow::Error) -> u8 {
    if err.downcast_ref::<Invalid>().is_some() {
        return 2;
    }
    match err.downcast_ref::<fkpath::Error>() {
        Some(e) if e.is_validation() => 2,
        _ => 3,
    }
}

fn main() -> ExitCode {
    let (args, overrides) = match split_overrides(std::env::args().collect()) {
        Ok(split) => split,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    };
    let cli = Cli::parse_from(args);
    match execute(&cli, &overrides) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(3),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
