//! Command-line front end for the website usability auditor.

mod commands;
mod error;

use clap::{Parser, Subcommand};
use error::{CliError, EXIT_USAGE};
use std::path::PathBuf;
use webaudit_core::config::AppConfig;

#[derive(Parser)]
#[command(
    name = "webaudit",
    about = "Audit website usability: extract features, label, train and apply models",
    version
)]
struct Cli {
    /// Path to a key=value config file (also read from AUDIT_CONFIG)
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Extract usability features into a CSV dataset
    Extract {
        /// Fetch and analyze one live URL
        #[arg(long)]
        url: Option<String>,
        /// Analyze a local HTML file instead of fetching
        #[arg(long)]
        html: Option<PathBuf>,
        /// File with one URL per line, fetched in parallel
        #[arg(long)]
        urls: Option<PathBuf>,
        /// CSV file to create or append to
        #[arg(long)]
        out: PathBuf,
        /// Forbid network access (only valid with --html)
        #[arg(long)]
        no_net: bool,
        /// Load time in seconds for offline extraction
        #[arg(long)]
        load_time: Option<f64>,
        /// Resolution grade (A-F) for offline extraction
        #[arg(long)]
        resolution_grade: Option<String>,
    },
    /// Measure load time and image audit scores for one URL
    Probe {
        #[arg(long)]
        url: String,
    },
    /// Cluster an unlabeled dataset into the five usability grades
    Label {
        /// Input CSV of extracted features
        #[arg(long = "in")]
        input: PathBuf,
        /// Output CSV with the grade column filled in
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 42)]
        seed: u64,
    },
    /// Train the RBF-kernel classifier on a labeled dataset
    TrainSvm {
        #[arg(long = "in")]
        input: PathBuf,
        /// Where to write the model JSON
        #[arg(long)]
        model: PathBuf,
        /// Run the cross-validated hyperparameter grid search
        #[arg(long)]
        grid: bool,
        #[arg(long, default_value_t = 42)]
        seed: u64,
    },
    /// Predict grades for a feature CSV with a trained model
    PredictSvm {
        #[arg(long)]
        model: PathBuf,
        #[arg(long = "in")]
        input: PathBuf,
    },
    /// Sort scored screenshots into train/test grade folders
    IngestScreenshots {
        /// CSV with header `filename,score`
        #[arg(long)]
        scores: PathBuf,
        /// Directory holding the screenshot files
        #[arg(long)]
        src: PathBuf,
        /// Output dataset root (gets train/ and test/ subtrees)
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 42)]
        seed: u64,
    },
    /// Train the screenshot classifier
    TrainCnn {
        /// Dataset root with train/ and test/ grade folders
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        model: PathBuf,
        #[arg(long, default_value_t = 10)]
        epochs: usize,
        #[arg(long, default_value_t = 32)]
        batch: usize,
        #[arg(long, default_value_t = 42)]
        seed: u64,
        /// Square input side in pixels, must be divisible by 8
        #[arg(long, default_value_t = 224)]
        side: usize,
    },
    /// Report accuracy, precision, recall and F1 for a trained model
    Eval {
        #[arg(long)]
        svm_model: Option<PathBuf>,
        /// Labeled feature CSV (with --svm-model)
        #[arg(long = "in")]
        input: Option<PathBuf>,
        #[arg(long)]
        cnn_model: Option<PathBuf>,
        /// Labeled screenshot folder (with --cnn-model)
        #[arg(long)]
        data: Option<PathBuf>,
    },
    /// Fetch one URL, predict its grade and print a JSON report
    Audit {
        #[arg(long)]
        url: String,
        #[arg(long)]
        svm_model: PathBuf,
    },
}

fn load_config(flag: Option<&PathBuf>) -> Result<AppConfig, CliError> {
    let mut config = AppConfig::from_env()?;
    if let Some(path) = flag {
        config = AppConfig::from_file(path)?;
        if let Ok(key) = std::env::var(webaudit_core::config::ENV_API_KEY) {
            if config.pagespeed_api_key.is_none() && !key.is_empty() {
                config.pagespeed_api_key = Some(key);
            }
        }
    }
    Ok(config)
}

fn run(cli: Cli) -> Result<(), CliError> {
    let config = load_config(cli.config.as_ref())?;
    match cli.command {
        Command::Extract {
            url,
            html,
            urls,
            out,
            no_net,
            load_time,
            resolution_grade,
        } => commands::cmd_extract(
            url,
            html,
            urls,
            out,
            no_net,
            load_time,
            resolution_grade,
            &config,
        ),
        Command::Probe { url } => commands::cmd_probe(url, &config),
        Command::Label { input, out, seed } => commands::cmd_label(input, out, seed),
        Command::TrainSvm {
            input,
            model,
            grid,
            seed,
        } => commands::cmd_train_svm(input, model, grid, seed),
        Command::PredictSvm { model, input } => commands::cmd_predict_svm(model, input),
        Command::IngestScreenshots {
            scores,
            src,
            out,
            seed,
        } => commands::cmd_ingest_screenshots(scores, src, out, seed),
        Command::TrainCnn {
            data,
            model,
            epochs,
            batch,
            seed,
            side,
        } => commands::cmd_train_cnn(data, model, epochs, batch, seed, side),
        Command::Eval {
            svm_model,
            input,
            cnn_model,
            data,
        } => commands::cmd_eval(svm_model, input, cnn_model, data),
        Command::Audit { url, svm_model } => commands::cmd_audit(url, svm_model, &config),
    }
}

fn main() {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // Keep clap's rendered help/version on stdout with exit 0, but
            // report genuine argument errors with the usage exit code.
            use clap::error::ErrorKind;
            match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                    print!("{e}");
                    std::process::exit(0);
                }
                _ => {
                    eprint!("{e}");
                    std::process::exit(EXIT_USAGE);
                }
            }
        }
    };
    if let Err(err) = run(cli) {
        eprintln!("error: {}", err.message);
        std::process::exit(err.code);
    }
}
