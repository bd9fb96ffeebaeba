//! `pumpwatch` — command-line entry point for the pump target prediction
//! pipeline. One subcommand per stage; each stage reads the declared
//! inputs, writes the declared outputs, and never mutates its inputs.

mod config;
mod stages;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use pumpwatch::error::Error;

use config::PipelineConfig;

#[derive(Parser)]
#[command(name = "pumpwatch", version, about = "Pump event mining and target coin prediction")]
struct Cli {
    /// Pipeline config file (TOML). Flags override file values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Global seed, overriding the config file.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Input fixture directory (defaults to config data_dir).
    #[arg(long, global = true)]
    data: Option<PathBuf>,
    /// Artifact output directory (defaults to config out_dir).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic world of channels, coins, and pump events.
    Synth,
    /// Pump-message detector.
    Detect {
        #[command(subcommand)]
        action: DetectAction,
    },
    /// Split channel message streams into sessions.
    Sessionize,
    /// Extract and merge pump events from flagged sessions.
    ExtractEvents,
    /// Build normalized train/validation/test samples from merged events.
    Featurize,
    /// Coin embeddings.
    Embed {
        #[command(subcommand)]
        action: EmbedAction,
    },
    /// Train the target coin prediction model.
    Train {
        /// Pre-trained coin embedding table (JSON) to load and freeze.
        #[arg(long)]
        pretrained: Option<PathBuf>,
    },
    /// Score the test split with a trained checkpoint.
    Evaluate {
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
    /// Rank all listed coins per pending event, probabilities descending.
    Predict {
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        /// Samples to score (defaults to the test split).
        #[arg(long)]
        samples: Option<PathBuf>,
    },
    /// Render the results table and the attention heat-map CSV.
    Report {
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long)]
        results: Option<PathBuf>,
    },
}

#[derive(Subcommand)]
enum DetectAction {
    /// Fit the TF-IDF + logistic regression detector on labeled messages.
    Train,
    /// Score messages with a trained detector.
    Score {
        #[arg(long)]
        model: Option<PathBuf>,
    },
}

#[derive(Subcommand)]
enum EmbedAction {
    /// Train skip-gram coin embeddings on the message corpus.
    Train,
}

/// Distinct exit codes per error class, for scripting around the pipeline.
fn exit_code(err: &Error) -> u8 {
    match err {
        Error::ConfigError(_) | Error::InfeasibleConfig(_) => 2,
        Error::MissingInput(_) | Error::Io(_) => 3,
        Error::MalformedRow { .. }
        | Error::NonMonotonicTime { .. }
        | Error::Json(_)
        | Error::Csv(_) => 4,
        Error::Divergence { .. } => 5,
        _ => 6,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let cfg = match PipelineConfig::load(cli.config.as_deref(), cli.seed) {
        Ok(mut cfg) => {
            if let Some(d) = cli.data {
                cfg.data_dir = d;
            }
            if let Some(o) = cli.out {
                cfg.out_dir = o;
            }
            cfg
        }
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(exit_code(&e));
        }
    };
    let result = match cli.command {
        Command::Synth => stages::synth(&cfg),
        Command::Detect { action } => match action {
            DetectAction::Train => stages::detect_train(&cfg),
            DetectAction::Score { model } => stages::detect_score(&cfg, model.as_deref()),
        },
        Command::Sessionize => stages::sessionize(&cfg),
        Command::ExtractEvents => stages::extract_events(&cfg),
        Command::Featurize => stages::featurize(&cfg),
        Command::Embed { action } => match action {
            EmbedAction::Train => stages::embed_train(&cfg),
        },
        Command::Train { pretrained } => stages::train(&cfg, pretrained.as_deref()),
        Command::Evaluate { checkpoint } => stages::evaluate(&cfg, checkpoint.as_deref()),
        Command::Predict { checkpoint, samples } => {
            stages::predict(&cfg, checkpoint.as_deref(), samples.as_deref())
        }
        Command::Report { checkpoint, results } => {
            stages::report(&cfg, checkpoint.as_deref(), results.as_deref())
        }
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
