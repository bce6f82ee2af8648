//! `fpa`: solve, verify and reduce first-price auctions from the command line.
//!
//! Exit codes: 0 success or certified, 1 not certified, 2 usage or I/O, 3 invalid
//! input, 4 budget exhausted.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Parser)]
#[command(name = "fpa", version, about = "Equilibria of first-price auctions with subjective priors")]
struct Cli {
    /// Raise log verbosity on standard error (repeatable).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Compute an ε-equilibrium and write it as a strategy file.
    Solve(SolveArgs),
    /// Check a strategy profile with the exact equilibrium verifier.
    Verify(VerifyArgs),
    /// Replace one bidder's strategy by an exact best response.
    BestResponse(BestResponseArgs),
    /// Compile a generalized circuit over {Gx2, G1-, Gphi} into an auction.
    Reduce(ReduceArgs),
    /// Generalized-circuit utilities.
    #[command(subcommand)]
    Circuit(CircuitCommand),
    /// Write the arithmetic circuit computing the fixed-point map of an instance.
    ExportCircuit(ExportArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum Method {
    Brouwer,
    Enumerate,
}

#[derive(Clone, Copy, ValueEnum)]
enum Precision {
    Rational,
    Float64,
}

#[derive(Args)]
struct SolveArgs {
    #[arg(long)]
    instance: PathBuf,
    /// Rational (`1/1000000`) or decimal (`1e-6`) literal.
    #[arg(long)]
    eps: String,
    #[arg(long, value_enum, default_value = "brouwer")]
    method: Method,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Iterations per restart of the fixed-point solver.
    #[arg(long, env = "FPA_MAX_ITERS", default_value_t = 100_000)]
    max_iters: usize,
    #[arg(long, env = "FPA_RESTARTS", default_value_t = 32)]
    restarts: usize,
    /// Largest number of guesses the enumeration solver may try.
    #[arg(long, env = "FPA_GUESS_BUDGET", default_value_t = 200_000)]
    guess_budget: usize,
    /// Disable internal parallelism.
    #[arg(long)]
    sequential: bool,
    /// Strategy file; standard output when absent.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Certification report as JSON.
    #[arg(long)]
    report: Option<PathBuf>,
    /// CSV of `iteration,residual` for the fixed-point solver.
    #[arg(long)]
    trace: Option<PathBuf>,
    /// Trace sampling stride in iterations.
    #[arg(long, default_value_t = 100)]
    trace_every: usize,
}

#[derive(Args)]
struct VerifyArgs {
    #[arg(long)]
    instance: PathBuf,
    #[arg(long)]
    strategy: PathBuf,
    #[arg(long)]
    eps: String,
    #[arg(long, value_enum, default_value = "rational")]
    precision: Precision,
}

#[derive(Args)]
struct BestResponseArgs {
    #[arg(long)]
    instance: PathBuf,
    #[arg(long)]
    strategy: PathBuf,
    #[arg(long)]
    bidder: usize,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ReduceArgs {
    #[arg(long)]
    circuit: PathBuf,
    /// Instance file.
    #[arg(long)]
    out: PathBuf,
    /// Roles and decoding constants.
    #[arg(long)]
    sidecar: PathBuf,
}

#[derive(Subcommand)]
enum CircuitCommand {
    /// Exit 0 iff the assignment ε-satisfies every gate.
    Check(CheckArgs),
    /// Search for an ε-satisfying assignment.
    Solve(CircuitSolveArgs),
    /// Rewrite a circuit over a smaller gate set.
    Lower(LowerArgs),
}

#[derive(Args)]
struct CheckArgs {
    #[arg(long)]
    circuit: PathBuf,
    #[arg(long)]
    assignment: PathBuf,
    #[arg(long)]
    eps: String,
}

#[derive(Clone, Copy, ValueEnum)]
enum CircuitMethod {
    /// Damped iteration per strongly connected component.
    Iterate,
    /// Exhaustive grid scan.
    Grid,
}

#[derive(Args)]
struct CircuitSolveArgs {
    #[arg(long)]
    circuit: PathBuf,
    #[arg(long, default_value = "1e-9")]
    eps: String,
    #[arg(long, value_enum, default_value = "iterate")]
    method: CircuitMethod,
    /// Grid resolution per gate.
    #[arg(long, default_value_t = 10)]
    steps: usize,
    #[arg(long, env = "FPA_GRID_BUDGET", default_value_t = 10_000_000)]
    grid_budget: u64,
    #[arg(long)]
    sequential: bool,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Target {
    AddComplement,
    Reduction,
    Fixp,
}

#[derive(Args)]
struct LowerArgs {
    #[arg(long)]
    circuit: PathBuf,
    #[arg(long, value_enum)]
    target: Target,
    /// Accuracy of dyadic ζ approximations.
    #[arg(long, default_value = "1e-9")]
    eps: String,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ExportArgs {
    #[arg(long)]
    instance: PathBuf,
    #[arg(long, env = "FPA_NODE_BUDGET", default_value_t = fpa_core::brouwer::DEFAULT_NODE_BUDGET)]
    node_budget: usize,
    #[arg(long)]
    out: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => log::LevelFilter::Warn,
        1 => log::LevelFilter::Info,
        2 => log::LevelFilter::Debug,
        _ => log::LevelFilter::Trace,
    };
    env_logger::Builder::new().filter_level(level).parse_default_env().init();
    match commands::run(cli.command) {
        Ok(code) => code.into(),
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code().into()
        }
    }
}
