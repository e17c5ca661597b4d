//! `subgrad`: subgradients of piecewise-polynomial programs.
//!
//! Exit codes: 0 success, 1 usage or I/O error, 2 parse error, 3 dimension
//! mismatch, 4 oracle failure, 5 cost bound violated, 6 extraction bound
//! exceeded.

mod commands;
mod report;

use std::fmt;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Parser)]
#[command(name = "subgrad", version, about = "Subgradients of piecewise-polynomial programs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Compute a subgradient and directional derivative at a point.
    Run(RunArgs),
    /// Check the engine against the exact, finite-difference and hull oracles.
    Check(CheckArgs),
    /// Report cost ratios over a corpus directory.
    Bench(BenchArgs),
    /// Compare naive reverse mode with the engine.
    Naive(NaiveArgs),
    /// List a program's polynomial pieces and the piece a direction selects.
    Pieces(PiecesArgs),
}

#[derive(Args, Clone)]
pub struct ProgramArgs {
    /// Program file.
    pub program: PathBuf,
    /// Skip the sampled qualification check on `deflib` blocks.
    #[arg(long)]
    pub no_cq_check: bool,
    /// Print a JSON report.
    #[arg(long)]
    pub json: bool,
}

#[derive(Args, Clone)]
pub struct DirectionArgs {
    /// Seed for the sampled direction.
    #[arg(long, env = "SUBGRAD_SEED", default_value_t = 0)]
    pub seed: u64,
    /// Explicit direction, comma separated. Overrides the seed.
    #[arg(long, allow_hyphen_values = true)]
    pub dir: Option<String>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum VariantArg {
    Nested,
    Flat,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum BenchVariant {
    Nested,
    Flat,
    Both,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum EngineArg {
    AsdFlat,
    AsdNested,
    /// Naive reverse mode with fixed derivatives at kinks.
    Naive,
}

#[derive(Args)]
pub struct RunArgs {
    #[command(flatten)]
    pub program: ProgramArgs,
    /// Input point, comma separated; `p/q` rationals are accepted.
    #[arg(long, allow_hyphen_values = true)]
    pub at: String,
    #[command(flatten)]
    pub direction: DirectionArgs,
    #[arg(long, value_enum, default_value_t = VariantArg::Flat)]
    pub variant: VariantArg,
    /// Treat branch values with magnitude at most this as ties.
    #[arg(long, default_value_t = 0.0)]
    pub kink_tol: f64,
    /// Rerun with this many consecutive seeds and report whether the
    /// gradients agree.
    #[arg(long)]
    pub cross_check: Option<usize>,
}

#[derive(Args)]
pub struct CheckArgs {
    #[command(flatten)]
    pub program: ProgramArgs,
    #[arg(long, allow_hyphen_values = true)]
    pub at: String,
    #[command(flatten)]
    pub direction: DirectionArgs,
    /// Directions sampled for the hull check.
    #[arg(long, default_value_t = 32)]
    pub dirs: usize,
    /// Hull membership tolerance.
    #[arg(long, default_value_t = 1e-6)]
    pub tol: f64,
    #[arg(long, value_enum, default_value_t = EngineArg::AsdFlat)]
    pub engine: EngineArg,
    /// Derivative the naive engine assigns to relu at 0.
    #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
    pub relu_zero: f64,
}

#[derive(Args)]
pub struct BenchArgs {
    /// Directory of `.prog` files with sibling `.points` files.
    pub corpus: PathBuf,
    #[arg(long, value_enum, default_value_t = BenchVariant::Both)]
    pub variant: BenchVariant,
    /// Base seed for queries without an explicit direction.
    #[arg(long, env = "SUBGRAD_SEED", default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub no_cq_check: bool,
    #[arg(long)]
    pub json: bool,
}

#[derive(Args)]
pub struct NaiveArgs {
    #[command(flatten)]
    pub program: ProgramArgs,
    #[arg(long, allow_hyphen_values = true)]
    pub at: String,
    #[command(flatten)]
    pub direction: DirectionArgs,
    /// Derivative assigned to relu at 0.
    #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
    pub relu_zero: f64,
}

#[derive(Args)]
pub struct PiecesArgs {
    #[command(flatten)]
    pub program: ProgramArgs,
    /// Point at which to select a piece.
    #[arg(long, allow_hyphen_values = true)]
    pub at: Option<String>,
    #[command(flatten)]
    pub direction: DirectionArgs,
    /// Maximum number of branch nodes over all library calls.
    #[arg(long, default_value_t = 20)]
    pub max_branches: usize,
}

/// A failure with its exit code.
#[derive(Debug)]
pub struct Failure {
    pub code: u8,
    pub message: String,
}

impl Failure {
    pub const OTHER: u8 = 1;
    pub const PARSE: u8 = 2;
    pub const DIMENSION: u8 = 3;
    pub const ORACLE: u8 = 4;
    pub const BOUND: u8 = 5;
    pub const EXTRACTION: u8 = 6;

    pub fn new(code: u8, message: impl Into<String>) -> Self {
        Failure { code, message: message.into() }
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { Failure::OTHER } else { 0 });
        }
    };
    let result = match cli.command {
        Command::Run(a) => commands::run(&a),
        Command::Check(a) => commands::check(&a),
        Command::Bench(a) => commands::bench(&a),
        Command::Naive(a) => commands::naive(&a),
        Command::Pieces(a) => commands::pieces(&a),
    };
    match result {
        Ok(commands::Done { out, code, note }) => {
            print!("{out}");
            if let Some(note) = note {
                eprintln!("{note}");
            }
            ExitCode::from(code)
        }
        Err(Failure { code, message }) => {
            eprintln!("error: {message}");
            ExitCode::from(code)
        }
    }
}
