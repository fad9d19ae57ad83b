//! `air` — operator surface for the relation-learning workbench.
//!
//! Subcommands: `gen` (synthetic dataset), `train` / `eval` (optimization
//! and metrics), `count` / `bench` (analytic costs and measured latency),
//! `gradcheck` (finite-difference verification), `export` (group
//! embeddings). Exit codes: 0 success, 1 usage error, 2 numerical failure,
//! 3 I/O error.

mod commands;
mod config;

use clap::{Parser, Subcommand};
use commands::*;

#[derive(Parser)]
#[command(name = "air", version, about = "Actor-interaction-relation learning workbench")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Generate a seeded synthetic dataset with planted relational structure.
    Gen(GenArgs),
    /// Train a relation model on a generated dataset.
    Train(Box<TrainArgs>),
    /// Evaluate a checkpoint and reprint its metrics.
    Eval(EvalArgs),
    /// Analytic parameter/MAC accounting across methods and block counts.
    Count(CountArgs),
    /// Measure forward latency and append it to the comparison table.
    Bench(BenchArgs),
    /// Run finite-difference gradient checks.
    Gradcheck(GradcheckArgs),
    /// Export pooled group embeddings as CSV.
    Export(ExportArgs),
}

/// Failure categories mapped to process exit codes.
#[derive(Debug)]
pub enum CliError {
    /// Bad flags, bad config, incompatible options — exit 1.
    Usage(String),
    /// Numerical failure: divergence or a failed gradient check — exit 2.
    Numerical(String),
    /// Filesystem or artifact-format trouble — exit 3.
    Io(String),
}

impl CliError {
    fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Numerical(_) => 2,
            CliError::Io(_) => 3,
        }
    }

    fn message(&self) -> &str {
        match self {
            CliError::Usage(m) | CliError::Numerical(m) | CliError::Io(m) => m,
        }
    }
}

impl From<air_core::DataError> for CliError {
    fn from(e: air_core::DataError) -> Self {
        use air_core::DataError::*;
        match e {
            InvalidSpec(_) | DegenerateSplit(_) => CliError::Usage(e.to_string()),
            _ => CliError::Io(e.to_string()),
        }
    }
}

impl From<air_core::ModelError> for CliError {
    fn from(e: air_core::ModelError) -> Self {
        use air_core::ModelError::*;
        match e {
            Io(_) | Checkpoint(_) => CliError::Io(e.to_string()),
            Tensor(t) => CliError::Numerical(t.to_string()),
            _ => CliError::Usage(e.to_string()),
        }
    }
}

impl From<air_core::TrainError> for CliError {
    fn from(e: air_core::TrainError) -> Self {
        use air_core::TrainError::*;
        match e {
            Diverged { .. } | NonFiniteGradient { .. } => CliError::Numerical(e.to_string()),
            Tensor(t) => CliError::Numerical(t.to_string()),
            Io(_) => CliError::Io(e.to_string()),
            Model(m) => m.into(),
            _ => CliError::Usage(e.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e.to_string())
    }
}

fn main() {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // Help/version requests are successes; anything else is a
            // usage error (exit 1).
            if e.use_stderr() {
                eprintln!("{e}");
                std::process::exit(1);
            }
            print!("{e}");
            std::process::exit(0);
        }
    };
    let result = match cli.cmd {
        Cmd::Gen(a) => cmd_gen(a),
        Cmd::Train(a) => cmd_train(*a),
        Cmd::Eval(a) => cmd_eval(a),
        Cmd::Count(a) => cmd_count(a),
        Cmd::Bench(a) => cmd_bench(a),
        Cmd::Gradcheck(a) => cmd_gradcheck(a),
        Cmd::Export(a) => cmd_export(a),
    };
    if let Err(e) = result {
        eprintln!("error: {}", e.message());
        std::process::exit(e.exit_code());
    }
}
