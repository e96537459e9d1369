use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};

use tableqa::pipeline::{
    cmd_build_index, cmd_eval, cmd_ingest, cmd_predict, cmd_train, run_pipeline, GenerationMode, PipelineConfig,
};
use tableqa::Split;

#[derive(Parser)]
#[command(name = "tableqa", version, about = "Free-form question answering over tables")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Key/value configuration file.
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, value_enum)]
    mode: Option<GenerationMode>,
    #[arg(long)]
    endpoint: Option<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Parse every configured split and report dataset statistics.
    Ingest(Common),
    /// Build the BM25 index over the corpus.
    BuildIndex(Common),
    /// Train the cell selector.
    Train(Common),
    /// Write predictions for a split.
    Predict {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_enum)]
        split: Option<Split>,
    },
    /// Score a predictions file.
    Eval {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_enum)]
        split: Option<Split>,
        /// Defaults to the predictions file written by `predict`.
        #[arg(long)]
        predictions: Option<PathBuf>,
    },
    /// Run every stage in order and write a manifest.
    Run {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_enum)]
        split: Option<Split>,
    },
}

fn load(common: &Common, split: Option<Split>) -> Result<PipelineConfig> {
    let mut config = PipelineConfig::from_file(&common.config)?;
    if let Some(seed) = common.seed {
        config.seed = seed;
    }
    if let Some(mode) = common.mode {
        config.mode = mode;
    }
    if let Some(endpoint) = &common.endpoint {
        config.endpoint = Some(endpoint.clone());
    }
    if let Some(split) = split {
        config.predict_split = split;
    }
    config.validate()?;
    Ok(config)
}

fn print_json<T: serde::Serialize>(value: &T) -> Result<()> {
    println!("{}", serde_json::to_string_pretty(value)?);
    Ok(())
}

fn run(cli: Cli) -> Result<bool> {
    match cli.command {
        Command::Ingest(common) => print_json(&cmd_ingest(&load(&common, None)?)?)?,
        Command::BuildIndex(common) => print_json(&cmd_build_index(&load(&common, None)?)?)?,
        Command::Train(common) => print_json(&cmd_train(&load(&common, None)?)?)?,
        Command::Predict { common, split } => {
            let config = load(&common, split)?;
            let path = cmd_predict(&config, config.predict_split)?;
            println!("{}", path.display());
        }
        Command::Eval {
            common,
            split,
            predictions,
        } => {
            let config = load(&common, split)?;
            let split = config.predict_split;
            let path = predictions.unwrap_or_else(|| config.predictions_path(split));
            let report = cmd_eval(&config, &path, split).with_context(|| format!("evaluating {}", path.display()))?;
            print_json(&report)?;
        }
        Command::Run { common, split } => {
            let manifest = run_pipeline(&load(&common, split)?)?;
            print_json(&manifest)?;
            return Ok(manifest.succeeded());
        }
    }
    Ok(true)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
