//! `funcssl`: generate corpora, train models, run self-training and selection, and run
//! benchmark plans.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use funcssl::selection::SelectionMethod;

/// Exit statuses. Usage errors exit with 2 (clap's convention).
pub const EXIT_CONFIG: u8 = 3;
pub const EXIT_DATA: u8 = 4;
pub const EXIT_INTERNAL: u8 = 5;

#[derive(Parser, Debug)]
#[command(name = "funcssl", version, about = "Functionality-specific self-training and diversity selection for NLU")]
pub struct Cli {
    /// Configuration file (TOML). For `bench`, a benchmark plan.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Overrides the configured seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads; results do not depend on it.
    #[arg(long, global = true)]
    pub jobs: Option<usize>,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    pub out: PathBuf,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Sample a corpus from a grammar, optionally split into annotation increments.
    Gen,
    /// Train domain, intent, and slot models.
    TrainNlu,
    /// Filter, pseudo-label, and aggregate an unlabeled pool.
    Ssl,
    /// Mine paraphrase pairs and train the embedding and detector.
    TrainPara,
    /// Select a subset of an augmentation set.
    Select {
        #[arg(long, value_enum)]
        method: Method,
        /// Budget as a fraction of the pool.
        #[arg(long, default_value_t = 0.5)]
        fraction: f64,
    },
    /// Run a benchmark plan and write the report tables.
    Bench,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum Method {
    Para,
    Submodular,
    Random,
    Unique,
    All,
}

impl From<Method> for SelectionMethod {
    fn from(m: Method) -> Self {
        match m {
            Method::Para => SelectionMethod::Para,
            Method::Submodular => SelectionMethod::Submodular,
            Method::Random => SelectionMethod::Random,
            Method::Unique => SelectionMethod::Unique,
            Method::All => SelectionMethod::All,
        }
    }
}

fn exit_code(e: &funcssl::Error) -> u8 {
    match e {
        funcssl::Error::Config(_) => EXIT_CONFIG,
        funcssl::Error::Data(_) | funcssl::Error::Parse { .. } | funcssl::Error::Io(_) => EXIT_DATA,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(jobs) = cli.jobs {
        if jobs == 0 {
            eprintln!("error: --jobs must be at least 1");
            return ExitCode::from(2);
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(jobs).build_global() {
            eprintln!("error: {}", e);
            return ExitCode::from(EXIT_INTERNAL);
        }
    }
    match std::panic::catch_unwind(|| commands::run(&cli)) {
        Ok(Ok(())) => ExitCode::SUCCESS,
        Ok(Err(e)) => {
            eprintln!("error: {}", e);
            ExitCode::from(exit_code(&e))
        }
        Err(_) => ExitCode::from(EXIT_INTERNAL),
    }
}
