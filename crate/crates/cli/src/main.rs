use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use clap::{Parser, Subcommand};

use pharmvig_cli::{evaluate, extract, prepare, report, train, ModelKey, TrainArgs, ToolkitConfig};
use pharmvig_core::corpus::{Task, TrainVariant};
use pharmvig_neural::VariantKey;

#[derive(Parser)]
#[command(name = "pharmvig", version, about = "Pharmacovigilance text-mining experiments")]
struct Cli {
    /// JSON toolkit config; defaults apply when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build train/dev/test bundles from the raw data.
    Prepare {
        #[arg(long)]
        task: Task,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Train one model and record its test metrics.
    Train {
        #[arg(long)]
        task: Task,
        #[arg(long)]
        model: ModelKey,
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(long, default_value = "natural")]
        trainset: TrainVariant,
        #[arg(long)]
        seed: Option<u64>,
        /// Use features extracted from this fine-tuning run.
        #[arg(long)]
        from_finetuned: Option<String>,
        /// Replace an existing run with the same id.
        #[arg(long)]
        force: bool,
    },
    /// Write encoder features for every split of a bundle.
    Extract {
        #[arg(long)]
        task: Task,
        /// Encoder variant, e.g. b-c.
        #[arg(long)]
        model: VariantKey,
        #[arg(long)]
        from_finetuned: Option<String>,
    },
    /// Recompute a run's metrics and error analysis.
    Evaluate { run_id: String },
    /// Comparison tables over runs (all runs when none are named).
    Report { run_ids: Vec<String> },
}

fn run(cli: Cli) -> Result<()> {
    let cfg = match &cli.config {
        Some(p) => ToolkitConfig::load(p)?,
        None => ToolkitConfig::defaults_in(&std::env::current_dir()?),
    };
    match cli.command {
        Command::Prepare { task, seed } => {
            let summary = prepare(&cfg, task, seed.unwrap_or(cfg.seed))?;
            print!("{}", summary.to_text());
        }
        Command::Train { task, model, epochs, trainset, seed, from_finetuned, force } => {
            let args = TrainArgs { task, model, epochs, trainset, seed, from_finetuned, force };
            let rec = train(&cfg, &args)?;
            println!("run {}", rec.run_id);
            print!("{}", rec.test.to_text());
        }
        Command::Extract { task, model, from_finetuned } => {
            let m = extract(&cfg, task, model, from_finetuned.as_deref())?;
            println!("extracted {} splits ({} rows per matrix)", m.feature_digests.len(), m.rows);
        }
        Command::Evaluate { run_id } => {
            let (eval, dir) = evaluate(&cfg, &run_id)?;
            print!("{}", eval.to_text());
            println!("written to {}", dir.display());
        }
        Command::Report { run_ids } => {
            let (rep, _) = report(&cfg, &run_ids)?;
            print!("{}", rep.to_text());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
