//! Command-line driver: synthetic cohorts, training, generation,
//! evaluation, edge statistics and the hyperparameter sweep.
//!
//! Every command writes only inside its `--out` directory and leaves a
//! `run_manifest.json` there. Exit codes: 0 success, 2 usage error,
//! 3 validation or I/O error, 4 numerical failure. On failure the first
//! line of stderr is `error: <category>` and the second the detail.

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Parser, Subcommand};

pub mod analyze;
pub mod commands;
pub mod config;
pub mod error;
pub mod manifest;
pub mod sweep;

pub use error::{Category, CliError, CliResult};
pub use manifest::{dataset_sha256, RunManifest};

#[derive(Parser, Debug)]
#[command(name = "bggan", version, about = "Bidirectional structural/functional connectome GAN")]
pub struct Cli {
    /// Caps the worker thread count (default: one per core)
    #[arg(long, global = true, value_name = "N", value_parser = clap::value_parser!(u16).range(1..))]
    pub threads: Option<u16>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Writes a synthetic two-modality cohort as a dataset directory
    Synth(commands::SynthArgs),
    /// Trains the model and writes a checkpoint and the loss log
    Train(commands::TrainArgs),
    /// Generates target-domain matrices for every subject of a dataset
    Generate(commands::GenerateArgs),
    /// Classification metrics and generation error of a checkpoint
    Evaluate(commands::EvaluateArgs),
    /// Connection counts, per-edge t-tests or cross-run recurrence
    Analyze(analyze::AnalyzeArgs),
    /// Cross-validated learning-rate by layer-count grid
    Sweep(sweep::SweepArgs),
}

/// Which subjects of a dataset a split file selects.
#[derive(clap::ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
pub enum Subset {
    Train,
    Test,
}

pub fn run(cli: Cli) -> CliResult<()> {
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(n) = cli.threads {
        pool = pool.num_threads(n as usize);
    }
    let pool = pool
        .build()
        .map_err(|e| CliError::validation(format!("cannot start worker pool: {e}")))?;
    pool.install(|| match cli.command {
        Command::Synth(a) => commands::synth(&a),
        Command::Train(a) => commands::train(&a),
        Command::Generate(a) => commands::generate(&a),
        Command::Evaluate(a) => commands::evaluate(&a),
        Command::Analyze(a) => analyze::analyze(&a),
        Command::Sweep(a) => sweep::sweep(&a),
    })
}

/// Parses `args`, runs the command and returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                print!("{e}");
                return 0;
            }
            let rendered = e.render().to_string();
            eprintln!("error: usage\n{}", rendered.trim_start_matches("error: ").trim_end());
            return Category::Usage.exit_code();
        }
    };
    match run(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("{e}");
            e.category.exit_code()
        }
    }
}

pub(crate) fn ensure_out(dir: &PathBuf) -> CliResult<()> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))
}
