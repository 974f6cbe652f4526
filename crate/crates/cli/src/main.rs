//! `posereason`: synthesize triplets, train the tokenizer and reasoner,
//! generate poses from abstract prompts, evaluate and export.
//!
//! Exit codes: 0 success, 1 runtime failure, 2 invalid configuration or
//! input, 3 missing checkpoint or upstream artifact, 4 non-finite training
//! loss (the last good checkpoint path is printed).

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use commands::{exit, CliError, CliResult, Format};
use config::{Ablation, RunConfig};

#[derive(Debug, Parser)]
#[command(
    name = "posereason",
    version,
    about = "Abstract prompt to detailed description to 3D pose"
)]
struct Cli {
    /// TOML run configuration; flags override it.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Directory holding every artifact of a run.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Number of labels to synthesize, or samples to evaluate.
    #[arg(long, global = true)]
    limit: Option<usize>,
    #[arg(long, global = true, value_enum)]
    ablation: Option<Ablation>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Build the triplet dataset from the action taxonomy.
    Synth {
        /// Completed review CSV (id,reason,verdict) whose `reject` verdicts are applied.
        #[arg(long)]
        review: Option<PathBuf>,
    },
    /// Train the pose tokenizer on the unfiltered dataset poses.
    TrainTokenizer {
        #[arg(long)]
        epochs: Option<usize>,
    },
    /// Train the reasoning model on tokenized triplets.
    TrainModel {
        #[arg(long)]
        epochs: Option<usize>,
        /// Start from an existing reasoner checkpoint.
        #[arg(long)]
        base: Option<PathBuf>,
    },
    /// Turn one abstract prompt into a description and a pose.
    Generate {
        #[arg(long)]
        prompt: String,
        #[arg(long)]
        output: Option<PathBuf>,
        /// Also write a stick-figure SVG next to the JSON.
        #[arg(long)]
        svg: bool,
        /// Also write a joints OBJ next to the JSON.
        #[arg(long)]
        obj: bool,
    },
    /// Generate for every dataset prompt and report PFD, TFD, MFD and MPJPE.
    Evaluate {
        /// Row label in the printed table.
        #[arg(long)]
        method: Option<String>,
        /// Print TFD and MFD columns even in full mode.
        #[arg(long)]
        ablation_table: bool,
    },
    /// Convert a generation result to OBJ or SVG.
    Export {
        #[arg(long)]
        input: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "obj")]
        format: Format,
        #[arg(long)]
        output: Option<PathBuf>,
    },
}

fn resolve(cli: &Cli) -> CliResult<RunConfig> {
    let mut cfg = match &cli.config {
        Some(p) if !p.is_file() => {
            return Err(CliError::new(
                exit::VALIDATION,
                format!("config not found: {}", p.display()),
            ))
        }
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    let seed = cli.seed.unwrap_or(cfg.seed);
    cfg.apply_seed(seed);
    if let Some(o) = &cli.out {
        cfg.out = o.clone();
    }
    if let Some(l) = cli.limit {
        cfg.limit = Some(l);
    }
    if let Some(a) = cli.ablation {
        cfg.ablation = a;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn run(cli: Cli) -> CliResult {
    let cfg = resolve(&cli)?;
    match cli.command {
        Command::Synth { review } => commands::synth(&cfg, review),
        Command::TrainTokenizer { epochs } => commands::train_tokenizer_cmd(&cfg, epochs),
        Command::TrainModel { epochs, base } => commands::train_model(&cfg, epochs, base),
        Command::Generate {
            prompt,
            output,
            svg,
            obj,
        } => commands::generate(&cfg, &prompt, output, svg, obj),
        Command::Evaluate {
            method,
            ablation_table,
        } => commands::evaluate(&cfg, method, ablation_table),
        Command::Export {
            input,
            format,
            output,
        } => commands::export(&cfg, input, format, output),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.code as u8)
        }
    }
}
