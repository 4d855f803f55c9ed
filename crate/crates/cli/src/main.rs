//! `tsaug`: generate data, train forecasters, extend datasets and run the
//! cross-validated comparison from the command line.
//!
//! Exit codes: 0 success, 1 usage/config/input error, 2 numerical failure.
//! Logs and errors go to stderr; stdout only lists written paths or data.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use tsaug::forecast::ForecastMode;
use tsaug::predict::PredictorKind;

#[derive(Parser, Debug)]
#[command(name = "tsaug", version, about = "LSTM forecasting augmentation for multivariate time series")]
struct Cli {
    /// Repeat for more log output on stderr (-v info, -vv debug).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,

    #[command(subcommand)]
    command: Command,
}

/// Knobs shared by the commands that train predictors. Flags win over the
/// config file.
#[derive(Args, Debug, Clone, Default)]
pub struct ValidationFlags {
    /// JSON experiment config; unknown keys are rejected.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Master seed for every random stream.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Comma-separated predictors: cnn, cnn-att, talstm.
    #[arg(long, value_delimiter = ',')]
    pub models: Option<Vec<PredictorKind>>,
    #[arg(long)]
    pub kfold: Option<usize>,
    /// Predictor training epochs per fold.
    #[arg(long)]
    pub epochs: Option<usize>,
    /// Extend only training-fold subjects; test folds keep their original series.
    #[arg(long)]
    pub augment_train_only: bool,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Write a synthetic dataset (TSDS, or CSV if the path ends in .csv).
    GenData {
        #[arg(long, default_value_t = 200)]
        subjects: usize,
        #[arg(long, default_value_t = 4)]
        channels: usize,
        /// Series length; at least 25.
        #[arg(long, default_value_t = 122)]
        length: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train one forecaster; writes the checkpoint and a loss CSV next to it.
    TrainForecaster {
        #[arg(long)]
        mode: ForecastMode,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(long)]
        hidden: Option<usize>,
        #[arg(long)]
        out: PathBuf,
        /// Defaults to the checkpoint path with a `.loss.csv` extension.
        #[arg(long)]
        loss_csv: Option<PathBuf>,
    },
    /// Append forecast points to every subject of a dataset.
    Augment {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
        steps: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Cross-validate predictors on a baseline dataset and extended copies.
    Evaluate {
        #[arg(long)]
        baseline: PathBuf,
        /// Extended dataset; repeat for several arms.
        #[arg(long)]
        augmented: Vec<PathBuf>,
        #[command(flatten)]
        flags: ValidationFlags,
        #[arg(long)]
        out: PathBuf,
    },
    /// Extend a dataset by each step count and cross-validate every arm.
    Sweep {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long, value_delimiter = ',', default_value = "4,6,8,10,12,14")]
        steps: Vec<usize>,
        #[command(flatten)]
        flags: ValidationFlags,
        #[arg(long)]
        out: PathBuf,
    },
    /// Check TSDS/TSAF integrity, and optionally that datasets extend an original.
    Verify {
        #[arg(required = true)]
        files: Vec<PathBuf>,
        /// Every TSDS file must start with this dataset, bit for bit.
        #[arg(long)]
        original: Option<PathBuf>,
    },
    /// The whole protocol from one config: forecasters, extension, validation, tables.
    Run {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        /// Use this dataset instead of the configured source.
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long)]
        augment_train_only: bool,
        #[arg(long)]
        out: PathBuf,
    },
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
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp(None)
        .init();

    let result = match cli.command {
        Command::GenData {
            subjects,
            channels,
            length,
            seed,
            out,
        } => commands::gen_data(subjects, channels, length, seed, &out),
        Command::TrainForecaster {
            mode,
            data,
            config,
            seed,
            epochs,
            hidden,
            out,
            loss_csv,
        } => commands::train_forecaster(mode, &data, config.as_deref(), seed, epochs, hidden, &out, loss_csv),
        Command::Augment { data, ckpt, steps, out } => commands::augment(&data, &ckpt, steps as usize, &out),
        Command::Evaluate {
            baseline,
            augmented,
            flags,
            out,
        } => commands::evaluate(&baseline, &augmented, &flags, &out),
        Command::Sweep {
            data,
            ckpt,
            steps,
            flags,
            out,
        } => commands::sweep(&data, &ckpt, &steps, &flags, &out),
        Command::Verify { files, original } => commands::verify(&files, original.as_deref()),
        Command::Run {
            config,
            seed,
            data,
            augment_train_only,
            out,
        } => commands::run(config.as_deref(), seed, data, augment_train_only, &out),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_numerical() { 2 } else { 1 })
        }
    }
}
