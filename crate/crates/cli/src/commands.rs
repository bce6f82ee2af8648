use std::fs;
use std::path::{Path, PathBuf};

use fpa_core::auction::{best_response, verify_epsilon_bne, AuctionInstance};
use fpa_core::brouwer::{export_circuit, solve_fixed_point, SolverConfig};
use fpa_core::exec::Exec;
use fpa_core::gcircuit::{
    brute_force_solve, check_assignment, format_assignment, iterate_solve, lower_circuit, parse_assignment, GateSet,
    GeneralizedCircuit, IterateConfig, Multiplier,
};
use fpa_core::io;
use fpa_core::reduction::build_auction;
use fpa_core::scalar::{f64_to_rational, format_rational, parse_rational, rational_to_f64, Rational};
use fpa_core::solver_enum::{solve_constant_size, EnumConfig, NumericConfig};
use fpa_core::FpaError;
use serde_json::json;

use crate::{
    BestResponseArgs, CheckArgs, CircuitCommand, CircuitMethod, CircuitSolveArgs, Command, ExportArgs, LowerArgs,
    Method, Precision, ReduceArgs, SolveArgs, Target, VerifyArgs,
};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error(transparent)]
    Core(#[from] FpaError),
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: std::io::Error },
    #[error("`{0}` is not a rational or decimal literal")]
    Literal(String),
    #[error("trace: {0}")]
    Trace(#[from] csv::Error),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Core(FpaError::Resource(_)) => 4,
            CliError::Core(_) => 3,
            CliError::Io { .. } | CliError::Literal(_) | CliError::Trace(_) => 2,
        }
    }
}

type Result<T> = std::result::Result<T, CliError>;

const CERTIFIED: u8 = 0;
const NOT_CERTIFIED: u8 = 1;

fn status(ok: bool) -> u8 {
    if ok {
        CERTIFIED
    } else {
        NOT_CERTIFIED
    }
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|source| CliError::Io { path: path.to_owned(), source })
}

fn write(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|source| CliError::Io { path: path.to_owned(), source })
}

/// Writes to `path`, or standard output when absent.
fn emit(path: Option<&Path>, text: &str) -> Result<()> {
    match path {
        Some(p) => write(p, text),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn literal(text: &str) -> Result<Rational> {
    parse_rational(text).ok_or_else(|| CliError::Literal(text.to_owned()))
}

fn load_instance(path: &Path) -> Result<AuctionInstance> {
    Ok(io::parse_instance(&read(path)?)?)
}

fn exec(sequential: bool) -> Exec {
    if sequential {
        Exec::Sequential
    } else {
        Exec::Parallel
    }
}

pub fn run(command: Command) -> Result<u8> {
    match command {
        Command::Solve(args) => solve(args),
        Command::Verify(args) => verify(args),
        Command::BestResponse(args) => respond(args),
        Command::Reduce(args) => reduce(args),
        Command::Circuit(CircuitCommand::Check(args)) => circuit_check(args),
        Command::Circuit(CircuitCommand::Solve(args)) => circuit_solve(args),
        Command::Circuit(CircuitCommand::Lower(args)) => circuit_lower(args),
        Command::ExportCircuit(args) => export(args),
    }
}

fn solve(args: SolveArgs) -> Result<u8> {
    let instance = load_instance(&args.instance)?;
    let eps = literal(&args.eps)?;
    let (profile, mut report) = match args.method {
        Method::Brouwer => {
            let config = SolverConfig {
                max_iters: args.max_iters,
                restarts: args.restarts,
                seed: args.seed,
                trace_every: if args.trace.is_some() { args.trace_every.max(1) } else { 0 },
                exec: exec(args.sequential),
                ..SolverConfig::default()
            };
            let result = solve_fixed_point(&instance, &eps, &config)?;
            if let Some(path) = &args.trace {
                let mut out = csv::Writer::from_path(path)?;
                out.write_record(["iteration", "residual"])?;
                for (iter, r) in &result.trace {
                    out.write_record([iter.to_string(), format!("{r:e}")])?;
                }
                out.flush().map_err(|source| CliError::Io { path: path.clone(), source })?;
            }
            let report = json!({
                "method": "brouwer",
                "residual": result.residual,
                "delta": result.delta,
                "restart": result.restart,
                "iterations": result.iterations,
            });
            (Some(result.profile.to_rational()), report)
        }
        Method::Enumerate => {
            let config = EnumConfig {
                guess_budget: args.guess_budget,
                numeric: NumericConfig { seed: args.seed, ..NumericConfig::default() },
                exec: exec(args.sequential),
                ..EnumConfig::default()
            };
            let outcome = solve_constant_size(&instance, &eps, &config)?;
            let attempts: Vec<_> = outcome
                .attempts
                .iter()
                .map(|a| json!({"guess": a.guess, "effective_jumps": a.effective_jumps, "residual": a.residual}))
                .collect();
            let report = json!({
                "method": "enumerate",
                "guesses": outcome.num_guesses,
                "delta": outcome.delta,
                "guess": outcome.solution.as_ref().map(|s| s.guess_index),
                "attempts": attempts,
            });
            (outcome.solution.map(|s| s.profile), report)
        }
    };
    let verdict = match &profile {
        Some(p) => Some(verify_epsilon_bne(&instance, p, &eps)?),
        None => None,
    };
    let certified = verdict.as_ref().is_some_and(|v| v.is_eq);
    report["eps"] = json!(format_rational(&eps));
    report["certified"] = json!(certified);
    if let Some(v) = &verdict {
        report["max_regret"] = json!(format_rational(&v.max_regret));
        report["max_regret_approx"] = json!(rational_to_f64(&v.max_regret));
    }
    match &verdict {
        Some(v) => eprintln!("certified: {certified}, max regret ≈ {:.3e}", rational_to_f64(&v.max_regret)),
        None => eprintln!("certified: false, no guess produced a candidate"),
    }
    if let Some(path) = &args.report {
        let mut text = serde_json::to_string_pretty(&report).expect("report serialises");
        text.push('\n');
        write(path, &text)?;
    }
    if let Some(p) = &profile {
        emit(args.out.as_deref(), &io::strategy_to_json(p))?;
    }
    Ok(status(certified))
}

fn verify(args: VerifyArgs) -> Result<u8> {
    let instance = load_instance(&args.instance)?;
    let profile = io::parse_strategy(&read(&args.strategy)?, &instance)?;
    let eps = literal(&args.eps)?;
    let (regret, approx, witnesses, ok) = match args.precision {
        Precision::Rational => {
            let r = verify_epsilon_bne(&instance, &profile, &eps)?;
            (format_rational(&r.max_regret), rational_to_f64(&r.max_regret), r.witnesses.len(), r.is_eq)
        }
        Precision::Float64 => {
            let r = verify_epsilon_bne(&instance, &profile.to_f64(), &rational_to_f64(&eps))?;
            (format!("{:e}", r.max_regret), r.max_regret, r.witnesses.len(), r.is_eq)
        }
    };
    println!("max_regret {regret}");
    println!("max_regret_approx {approx:e}");
    println!("witnesses {witnesses}");
    println!("certified {ok}");
    Ok(status(ok))
}

fn respond(args: BestResponseArgs) -> Result<u8> {
    let instance = load_instance(&args.instance)?;
    let mut profile = io::parse_strategy(&read(&args.strategy)?, &instance)?;
    let jumps = best_response(&instance, args.bidder, &profile)?;
    profile.set_bidder(args.bidder, jumps);
    emit(args.out.as_deref(), &io::strategy_to_json(&profile))?;
    Ok(CERTIFIED)
}

fn reduce(args: ReduceArgs) -> Result<u8> {
    let circuit = GeneralizedCircuit::parse(&read(&args.circuit)?)?;
    let output = build_auction(&circuit)?;
    write(&args.out, &io::instance_to_json(&output.auction))?;
    write(&args.sidecar, &io::sidecar_to_json(&io::Sidecar::from(&output)))?;
    eprintln!("{} gates compiled into {} bidders", output.num_gates, output.auction.n());
    Ok(CERTIFIED)
}

fn circuit_check(args: CheckArgs) -> Result<u8> {
    let circuit = GeneralizedCircuit::parse(&read(&args.circuit)?)?;
    let values = parse_assignment(&read(&args.assignment)?, circuit.len())?;
    let eps = literal(&args.eps)?;
    let report = check_assignment(&circuit, &values, &eps)?;
    println!("max_violation {}", format_rational(&report.max_violation));
    println!("satisfied {}", report.satisfied);
    Ok(status(report.satisfied))
}

fn circuit_solve(args: CircuitSolveArgs) -> Result<u8> {
    let circuit = GeneralizedCircuit::parse(&read(&args.circuit)?)?;
    let eps = literal(&args.eps)?;
    let values: Vec<Rational> = match args.method {
        CircuitMethod::Iterate => {
            let out = iterate_solve(&circuit, &IterateConfig::default())?;
            log::info!("iteration residual {:.3e}, converged {}", out.residual, out.converged);
            out.values.iter().map(|&v| f64_to_rational(v)).collect()
        }
        CircuitMethod::Grid => {
            let steps = args.steps;
            let out = brute_force_solve(&circuit, rational_to_f64(&eps), steps, args.grid_budget, exec(args.sequential))?;
            out.grid.iter().map(|&k| Rational::new(k.into(), steps.into())).collect()
        }
    };
    let report = check_assignment(&circuit, &values, &eps)?;
    eprintln!("max violation ≈ {:.3e}, satisfied {}", rational_to_f64(&report.max_violation), report.satisfied);
    emit(args.out.as_deref(), &format_assignment(&values, format_rational))?;
    Ok(status(report.satisfied))
}

fn circuit_lower(args: LowerArgs) -> Result<u8> {
    let circuit = GeneralizedCircuit::parse(&read(&args.circuit)?)?;
    let eps = literal(&args.eps)?;
    let target = match args.target {
        Target::AddComplement => GateSet::AddComplement,
        Target::Reduction => GateSet::Reduction,
        Target::Fixp => GateSet::Fixp,
    };
    let lowered = lower_circuit(&circuit, target, &eps)?;
    let multiplier = match lowered.multiplier {
        Multiplier::Bounded(m) => m.to_string(),
        Multiplier::ExactOnly => "exact-only".to_owned(),
    };
    let mut text = format!("# multiplier {multiplier}\n");
    for (source, gate) in lowered.index_map.iter().enumerate() {
        text.push_str(&format!("# source {source} -> gate {gate}\n"));
    }
    text.push_str(&lowered.circuit.to_string());
    emit(args.out.as_deref(), &text)?;
    eprintln!("{} gates lowered to {}, multiplier {multiplier}", circuit.len(), lowered.circuit.len());
    Ok(CERTIFIED)
}

fn export(args: ExportArgs) -> Result<u8> {
    let instance = load_instance(&args.instance)?;
    let dag = export_circuit(&instance, args.node_budget)?;
    emit(args.out.as_deref(), &dag.to_text())?;
    Ok(CERTIFIED)
}
