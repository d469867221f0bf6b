//! `kern`: synthesize or ingest trend corpora, train KERN, evaluate against
//! baselines, forecast and emit trend reports.

mod commands;
mod config;
mod errors;

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use clap::{Args, Parser, Subcommand};

use config::RunConfig;
use errors::{classify, Failure};

#[derive(Debug, Parser)]
#[command(name = "kern", version, about = "Fashion trend forecasting with knowledge-enhanced recurrent networks")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct Common {
    /// Flat key=value configuration file.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    #[arg(long, global = true, value_name = "N")]
    seed: Option<u64>,
    /// Output file (or file prefix for `evaluate`).
    #[arg(long, global = true, value_name = "PATH")]
    out: Option<PathBuf>,
    #[arg(long, global = true, value_name = "PATH")]
    corpus: Option<PathBuf>,
    #[arg(long, global = true, value_name = "PATH")]
    taxonomy: Option<PathBuf>,
    #[arg(long, global = true, value_name = "PATH")]
    checkpoint: Option<PathBuf>,
    /// Overrides any config key, e.g. `--set train.iterations=50`.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    set: Vec<String>,
    /// Log progress to stderr (repeat for more detail).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Write a seeded synthetic corpus and its taxonomy.
    Synth,
    /// Convert per-step counts into a popularity corpus.
    Ingest {
        #[arg(long, value_name = "PATH")]
        counts: Option<PathBuf>,
    },
    /// Train one KERN model on every series of a corpus.
    Train {
        #[arg(long)]
        setting: Option<String>,
    },
    /// Score methods on the held-out last window of every series.
    Evaluate {
        #[arg(long)]
        setting: Option<String>,
        /// Comma-separated method names.
        #[arg(long)]
        methods: Option<String>,
        /// Train and compare the four knowledge variants.
        #[arg(long)]
        ablation: bool,
    },
    /// Forecast one element for the matching user groups.
    Forecast {
        /// `city[/age_band[/gender]]`; `*` or an omitted part matches all.
        #[arg(long)]
        group: Option<String>,
        #[arg(long)]
        element: Option<String>,
    },
    /// Rank every element of one user group by forecast change.
    Report {
        #[arg(long)]
        group: Option<String>,
        #[arg(long)]
        top: Option<usize>,
    },
}

fn build_config(cli: &Cli) -> Result<RunConfig> {
    let c = &cli.common;
    let mut cfg = match &c.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    let mut set = |k: &str, v: Option<String>| v.map_or(Ok(()), |v| cfg.set(k, &v));
    let path = |p: &Option<PathBuf>| p.as_ref().map(|p| p.display().to_string());
    set("seed", c.seed.map(|s| s.to_string()))?;
    set("out", path(&c.out))?;
    set("corpus", path(&c.corpus))?;
    set("taxonomy", path(&c.taxonomy))?;
    set("checkpoint", path(&c.checkpoint))?;
    match &cli.command {
        Command::Ingest { counts } => set("counts", path(counts))?,
        Command::Train { setting } => set("setting", setting.clone())?,
        Command::Evaluate { setting, methods, .. } => {
            set("setting", setting.clone())?;
            set("methods", methods.clone())?;
        }
        Command::Forecast { group, element } => {
            set("group", group.clone())?;
            set("element", element.clone())?;
        }
        Command::Report { group, top } => {
            set("group", group.clone())?;
            set("top", top.map(|t| t.to_string()))?;
        }
        Command::Synth => {}
    }
    for kv in &c.set {
        let (k, v) = kv
            .split_once('=')
            .ok_or_else(|| Failure::usage(format!("--set expects KEY=VALUE, got `{kv}`")))?;
        cfg.set(k.trim(), v.trim())?;
    }
    Ok(cfg)
}

fn run(cli: Cli) -> Result<()> {
    let cfg = build_config(&cli)?;
    match cli.command {
        Command::Synth => commands::synth(&cfg),
        Command::Ingest { .. } => commands::ingest(&cfg),
        Command::Train { .. } => commands::train(&cfg),
        Command::Evaluate { ablation, .. } => commands::evaluate(&cfg, ablation),
        Command::Forecast { .. } => commands::forecast(&cfg),
        Command::Report { .. } => commands::report(&cfg),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let rendered = e.to_string();
            let first = rendered.lines().next().unwrap_or_default();
            eprintln!("error[usage]: {}", first.trim_start_matches("error: "));
            return ExitCode::from(2);
        }
    };
    let level = match cli.common.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp(None)
        .init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let class = classify(&e);
            let msg = format!("{e:#}").replace('\n', " ");
            eprintln!("error[{class}]: {msg}");
            ExitCode::from(if class == "usage" { 2 } else { 1 })
        }
    }
}
