//! `lpunit`: dataset generation, training, gradient checks and analysis dumps
//! for networks of learned-order Lp units.
//!
//! Exit codes: 0 success, 1 check failure, 2 usage error, 3 I/O or format error.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Lib(#[from] lpunit::Error),
    #[error("invalid configuration {}: field `{field}`: {message}", path.display())]
    Config {
        path: PathBuf,
        field: String,
        message: String,
    },
    #[error("usage error: {0}")]
    Usage(String),
    #[error("check failed: {0}")]
    Check(String),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        use lpunit::Error as E;
        match self {
            CliError::Check(_) | CliError::Lib(E::NonFinite { .. }) => 1,
            CliError::Usage(_) | CliError::Lib(E::Argument(_) | E::Usage(_) | E::Domain(_) | E::Shape { .. }) => 2,
            CliError::Config { .. } | CliError::Lib(E::Io { .. } | E::Format { .. } | E::Json(_)) => 3,
        }
    }
}

pub type CliResult<T = ()> = Result<T, CliError>;

#[derive(Debug, Parser)]
#[command(name = "lpunit", version, about = "Learned-order Lp unit networks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum DataKind {
    /// Two Gaussian classes at (±1.5, 0).
    Gauss2,
    /// Three Gaussian classes on a radius-2 circle.
    Gauss3,
    /// Half-disc plus strip with a curvature change.
    Curvature,
    /// Periodic piano-roll sequences (JSON).
    Pianoroll,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Mutation {
    /// Doubles the gradient with respect to every order parameter.
    RhoGrad,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Writes a generated dataset (CSV, or JSON for piano rolls).
    GenData {
        #[arg(value_enum)]
        kind: DataKind,
        /// Points per class (gauss2/gauss3), total points (curvature) or sequences (pianoroll).
        #[arg(long)]
        n: Option<usize>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 0.5)]
        sigma: f64,
        /// Sequence length for piano rolls.
        #[arg(long, default_value_t = 50)]
        length: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Trains a feed-forward network from a JSON configuration.
    Train(commands::TrainArgs),
    /// Compares analytic and finite-difference gradients; exit 1 above 1e-4.
    Gradcheck {
        /// Hidden Lp layers in the checked stack (0 checks an empty network).
        #[arg(long, default_value_t = 1)]
        layers: usize,
        /// Check this many random mixed architectures instead of an Lp stack.
        #[arg(long)]
        random: Option<usize>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 4)]
        batch: usize,
        #[arg(long, default_value_t = 1e-5)]
        eps: f64,
        #[arg(long, value_enum)]
        mutate: Option<Mutation>,
    },
    /// Evaluates a 2D model on a grid: label and first-hidden-layer unit outputs.
    Boundary {
        #[arg(long)]
        model: PathBuf,
        #[arg(long, default_value_t = 100)]
        nx: usize,
        #[arg(long, default_value_t = 100)]
        ny: usize,
        #[arg(long, value_parser = commands::parse_range, default_value = "-3,3", allow_hyphen_values = true)]
        x_range: (f64, f64),
        #[arg(long, value_parser = commands::parse_range, default_value = "-3,3", allow_hyphen_values = true)]
        y_range: (f64, f64),
        #[arg(long)]
        out: PathBuf,
    },
    /// Prints the initial/learned order table of a training report.
    Orders {
        #[arg(long)]
        report: PathBuf,
        /// Also writes the order statistics as JSON.
        #[arg(long)]
        json: Option<PathBuf>,
    },
    /// Failure rate over seeds on the curvature task for several model sizes.
    MultiSeed(commands::MultiSeedArgs),
    /// Trains a deep-transition recurrent network on binary sequences.
    RnnTrain(commands::RnnTrainArgs),
}

fn run(cli: Cli) -> CliResult {
    match cli.command {
        Command::GenData { kind, n, seed, sigma, length, out } => commands::gen_data(kind, n, seed, sigma, length, &out),
        Command::Train(args) => commands::train(&args),
        Command::Gradcheck { layers, random, seed, batch, eps, mutate } => {
            commands::gradcheck(layers, random, seed, batch, eps, mutate)
        }
        Command::Boundary { model, nx, ny, x_range, y_range, out } => {
            commands::boundary(&model, nx, ny, x_range, y_range, &out)
        }
        Command::Orders { report, json } => commands::orders(&report, json.as_deref()),
        Command::MultiSeed(args) => commands::multi_seed(&args),
        Command::RnnTrain(args) => commands::rnn_train(&args),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("lpunit: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
