//! `uno3d`: geology generation, wave simulation, operator training,
//! prediction and evaluation from the command line.
//!
//! Exit codes: 0 success, 1 usage or configuration error, 2 runtime
//! failure, 3 partial failure (some samples failed).

mod commands;
mod config;
mod error;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use crate::config::PipelineConfig;
use crate::error::CliError;

#[derive(Parser, Debug)]
#[command(name = "uno3d", version, about = "3D seismic ground-motion surrogate pipeline")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct Common {
    /// Pipeline configuration (TOML)
    #[arg(long)]
    config: Option<PathBuf>,
    /// Root seed; overrides the configuration
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads (default: all cores)
    #[arg(long)]
    workers: Option<usize>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Draw random geologies into a dataset directory
    GenGeology {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 1)]
        count: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Simulate surface records for every geology of a dataset
    Simulate {
        #[command(flatten)]
        common: Common,
        /// Geology dataset directory
        #[arg(long)]
        geology: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train an operator on a simulated dataset
    Train {
        #[command(flatten)]
        common: Common,
        /// Simulated dataset directory
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Predict records with a trained checkpoint
    Predict {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        data: PathBuf,
        /// Sample indices (default: all, or the validation split with --validation)
        #[arg(long, value_delimiter = ',')]
        samples: Vec<usize>,
        /// Predict only the validation split recorded in the dataset
        #[arg(long)]
        validation: bool,
        #[arg(long)]
        out: PathBuf,
    },
    /// Compare predictions with reference records
    Evaluate {
        #[command(flatten)]
        common: Common,
        /// Prediction directory (or any dataset holding targets)
        #[arg(long)]
        pred: PathBuf,
        /// Reference dataset directory
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Describe a dataset, checkpoint or tensor file
    Info {
        path: PathBuf,
    },
}

fn with_workers<R: Send>(workers: Option<usize>, f: impl FnOnce() -> R + Send) -> Result<R, CliError> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = workers {
        if n == 0 {
            return Err(CliError::Usage("--workers must be at least 1".into()));
        }
        builder = builder.num_threads(n);
    }
    let pool = builder.build().map_err(|e| CliError::Usage(format!("thread pool: {e}")))?;
    Ok(pool.install(f))
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::GenGeology { common, count, out } => {
            let cfg = PipelineConfig::load(common.config.as_deref())?;
            with_workers(common.workers, || commands::gen_geology(&cfg, common.seed, count, &out))?
        }
        Command::Simulate { common, geology, out } => {
            let cfg = PipelineConfig::load(common.config.as_deref())?;
            with_workers(common.workers, || commands::simulate(&cfg, common.seed, &geology, &out))?
        }
        Command::Train { common, data, out } => {
            let cfg = PipelineConfig::load(common.config.as_deref())?;
            with_workers(common.workers, || commands::train(&cfg, common.seed, &data, &out))?
        }
        Command::Predict { common, checkpoint, data, samples, validation, out } => {
            let selection = match (validation, samples.is_empty()) {
                (true, false) => return Err(CliError::Usage("--samples and --validation are exclusive".into())),
                (true, true) => commands::Selection::Validation,
                (false, false) => commands::Selection::Indices(samples),
                (false, true) => commands::Selection::All,
            };
            with_workers(common.workers, || commands::predict(&checkpoint, &data, &selection, &out))?
        }
        Command::Evaluate { common, pred, data, out } => {
            let cfg = PipelineConfig::load(common.config.as_deref())?;
            with_workers(common.workers, || commands::evaluate(&cfg, &pred, &data, &out))?
        }
        Command::Info { path } => commands::info(&path),
    }
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
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
