mod commands;
mod config;
mod report;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use commands::ValidationFailure;
use config::{ExperimentConfig, Overrides};
use std::path::PathBuf;
use std::process::ExitCode;

const EXIT_INPUT: u8 = 1;
const EXIT_VALIDATION: u8 = 2;

#[derive(Parser)]
#[command(name = "grinder", version, about = "Partition, train and simulate full-graph GNN runs over a storage hierarchy")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Partition the graph and write labels, quality and objective trace.
    Partition(Flags),
    /// Train partition-wise; --verify also runs whole-graph training and compares.
    Train(Flags),
    /// Replay every listed policy, check ledgers against the closed forms.
    Simulate(Flags),
    /// Merge outputs already in --out into report.json and report.txt.
    Report(Flags),
}

#[derive(Args, Clone, Default)]
struct Flags {
    /// Experiment config (JSON). Flags override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    verify: bool,
    /// Bandwidth-ratio sweep `a:b:step`.
    #[arg(long, value_name = "A:B:STEP")]
    sweep_bandwidth: Option<String>,
    /// Expansion ratios for the sweep.
    #[arg(long, value_delimiter = ',')]
    alpha: Option<Vec<usize>>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    p: Option<usize>,
    #[arg(long)]
    layers: Option<usize>,
    #[arg(long)]
    hidden: Option<usize>,
    #[arg(long)]
    epochs: Option<usize>,
    /// Comma-separated policy names.
    #[arg(long, value_name = "NAME[,NAME...]")]
    policy: Option<String>,
}

impl Flags {
    fn resolve(&self) -> Result<ExperimentConfig> {
        let mut cfg = match &self.config {
            Some(path) => ExperimentConfig::load(path)?,
            None => ExperimentConfig::default(),
        };
        cfg.apply(&Overrides {
            out: self.out.clone(),
            verify: self.verify,
            sweep: self.sweep_bandwidth.clone(),
            alphas: self.alpha.clone(),
            seed: self.seed,
            p: self.p,
            layers: self.layers,
            hidden: self.hidden,
            epochs: self.epochs,
            policies: self.policy.clone(),
        })?;
        cfg.validate()?;
        Ok(cfg)
    }
}

fn init_threads() -> Result<()> {
    let Ok(v) = std::env::var("GRINDER_THREADS") else {
        return Ok(());
    };
    let n: usize = v.trim().parse().with_context(|| format!("GRINDER_THREADS={v:?} is not a count"))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n.max(1))
        .build_global()
        .context("building the worker pool")?;
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    init_threads()?;
    match cli.command {
        Command::Partition(f) => {
            let cfg = f.resolve()?;
            commands::prepare_out(&cfg, "partition")?;
            commands::cmd_partition(&cfg)
        }
        Command::Train(f) => {
            let cfg = f.resolve()?;
            commands::prepare_out(&cfg, "train")?;
            commands::cmd_train(&cfg)
        }
        Command::Simulate(f) => {
            let cfg = f.resolve()?;
            if cfg.policies.is_empty() {
                anyhow::bail!("policy list is empty");
            }
            commands::prepare_out(&cfg, "simulate")?;
            commands::cmd_simulate(&cfg)
        }
        Command::Report(f) => {
            let dir = match (&f.out, &f.config) {
                (Some(o), _) => o.clone(),
                (None, Some(_)) => f.resolve()?.out,
                (None, None) => ExperimentConfig::default().out,
            };
            let r = report::build(&dir)?;
            let text = report::table(&r);
            std::fs::write(dir.join("report.json"), serde_json::to_string_pretty(&r)? + "\n")?;
            std::fs::write(dir.join("report.txt"), &text)?;
            print!("{text}");
            if !r.missing.is_empty() {
                eprintln!("partial report; missing: {}", r.missing.join(", "));
            }
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(EXIT_INPUT) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            if e.downcast_ref::<ValidationFailure>().is_some() {
                ExitCode::from(EXIT_VALIDATION)
            } else {
                ExitCode::from(EXIT_INPUT)
            }
        }
    }
}
