//! `ldl`: generate synthetic multi-domain data, train and evaluate
//! label-distribution models, and compare variants.

mod artifacts;
mod commands;
mod settings;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use settings::{ConfigError, ExperimentConfig, SweepParam};

#[derive(Parser, Debug)]
#[command(name = "ldl", version, about = "Cross-domain label distribution learning experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// Flat `key = value` configuration file.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,

    /// Root seed; repeats use consecutive seeds from here.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Comma-separated variants: baseline, LDL-1, LDL-2, LDL-3, onehot-compare.
    #[arg(long, global = true, value_name = "NAME[,NAME...]")]
    variant: Option<String>,

    /// Output directory.
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,

    /// Override any configuration key. May be repeated.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    set: Vec<String>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Write source and target datasets plus a manifest.
    Generate {
        /// Overwrite an existing dataset.
        #[arg(long)]
        force: bool,
    },
    /// Train every selected variant on the generated data.
    Train,
    /// Evaluate trained checkpoints on the held-out domain.
    Eval {
        /// Also evaluate on each source domain.
        #[arg(long)]
        source_eval: bool,
    },
    /// Train and evaluate variants over paired seeds and tabulate them.
    Ablate {
        /// Sweep a hyper-parameter (m or lambda) instead of comparing variants.
        #[arg(long, value_name = "PARAM")]
        sweep: Option<SweepParam>,
    },
    /// Summarize ablation, sweep and evaluation outputs as Markdown.
    Report,
}

enum Failure {
    Usage(String),
    Runtime(anyhow::Error),
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        Failure::Usage(e.0)
    }
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        Failure::Runtime(e)
    }
}

fn load_config(cli: &Cli) -> Result<ExperimentConfig, ConfigError> {
    let mut layers = Vec::new();
    if let Some(path) = &cli.config {
        layers.push(settings::parse_file(path)?);
    }
    let mut flags = cli.set.iter().map(|s| settings::parse_assignment(s)).collect::<Result<Vec<_>, _>>()?;
    if let Some(seed) = cli.seed {
        flags.push(("seed".into(), seed.to_string()));
    }
    if let Some(v) = &cli.variant {
        flags.push(("variants".into(), v.clone()));
    }
    if let Some(out) = &cli.out {
        flags.push(("output_dir".into(), out.display().to_string()));
    }
    if let Command::Eval { source_eval: true } = cli.command {
        flags.push(("source_eval".into(), "true".into()));
    }
    layers.push(flags);
    ExperimentConfig::from_layers(&layers)
}

fn run(cli: Cli) -> Result<(), Failure> {
    let config = load_config(&cli)?;
    match cli.command {
        Command::Generate { force } => commands::generate_data(&config, force)?,
        Command::Train => commands::train_runs(&config)?,
        Command::Eval { .. } => commands::evaluate_runs(&config)?,
        Command::Ablate { sweep: Some(param) } => commands::sweep(&config, param)?,
        Command::Ablate { sweep: None } => {
            let runs = ldl_core::experiment::objectives_of(&config.variants).len();
            if runs < 2 {
                return Err(Failure::Usage("ablate needs at least two variants to compare".into()));
            }
            commands::ablate(&config)?
        }
        Command::Report => commands::report(&config)?,
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Runtime(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
