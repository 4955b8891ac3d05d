use std::path::PathBuf;
use std::process::ExitCode;

use clap::{error::ErrorKind, Parser, Subcommand};
use parkvoice::harness::{
    eda_command, evaluate_checkpoint, run_experiment, ExperimentConfig, ModelName,
};

/// Voice-feature Parkinson's classifiers: train, compare and re-score.
#[derive(Parser, Debug)]
#[command(name = "parkvoice", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Split, train the requested models, evaluate on the holdout and write all artifacts
    Run {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// TOML experiment config; every field is optional
        #[arg(long)]
        config: Option<PathBuf>,
        /// Root seed, overriding the config file
        #[arg(long)]
        seed: Option<u64>,
        /// Comma-separated subset of mlp,gbm,attentive,saint
        #[arg(long, value_delimiter = ',', value_parser = parse_model)]
        models: Option<Vec<ModelName>>,
    },
    /// Write the feature correlation matrix and per-class summaries
    Eda {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Re-score every row of a data file with a saved checkpoint
    Evaluate {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

fn parse_model(s: &str) -> Result<ModelName, String> {
    s.parse().map_err(|e: parkvoice::Error| e.to_string())
}

fn execute(command: Command) -> parkvoice::Result<()> {
    match command {
        Command::Run {
            data,
            out,
            config,
            seed,
            models,
        } => {
            let mut cfg = match config {
                Some(path) => ExperimentConfig::load(path).map_err(|e| e.at("config"))?,
                None => ExperimentConfig::default(),
            };
            cfg.data_path = Some(data);
            cfg.output_dir = Some(out);
            if let Some(seed) = seed {
                cfg.seed = seed;
            }
            if let Some(models) = models {
                cfg.models_to_run = models;
            }
            let artifacts = run_experiment(&cfg)?;
            println!("model\tw_precision\tw_recall\tw_f1\tmcc\tauc");
            for row in &artifacts.comparison {
                let auc = row
                    .auc
                    .map(|a| format!("{a:.4}"))
                    .unwrap_or_else(|| "-".into());
                println!(
                    "{}\t{:.4}\t{:.4}\t{:.4}\t{:.4}\t{}",
                    row.model,
                    row.weighted_precision,
                    row.weighted_recall,
                    row.weighted_f1,
                    row.mcc,
                    auc
                );
            }
            println!(
                "wrote {} files to {}",
                artifacts.manifest.files.len() + 1,
                artifacts.output_dir.display()
            );
        }
        Command::Eda { data, out } => {
            let manifest = eda_command(&data, &out)?;
            println!(
                "wrote {} files to {}",
                manifest.files.len() + 1,
                out.display()
            );
        }
        Command::Evaluate {
            checkpoint,
            data,
            out,
        } => {
            let report = evaluate_checkpoint(&checkpoint, &data, &out)?;
            println!(
                "{}: accuracy {:.4}, mcc {:.4}, weighted f1 {:.4}",
                report.model, report.accuracy, report.mcc, report.weighted_f1
            );
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            // A malformed invocation is a configuration problem.
            let _ = e.print();
            return ExitCode::from(3);
        }
    };
    match execute(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
