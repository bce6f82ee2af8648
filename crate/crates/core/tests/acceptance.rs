//! Acceptance suite: one PASS/FAIL line per criterion, non-zero exit on any failure.
//!
//! Runs without the libtest harness so the summary lines always reach stdout.

mod common;

use std::process::ExitCode;
use std::time::{Duration, Instant};

use fpa_core::auction::{best_response, brute_force_win_prob, verify_bidders, verify_epsilon_bne, win_prob};
use fpa_core::brouwer::{solve_fixed_point, SolverConfig};
use fpa_core::exec::Exec;
use fpa_core::gcircuit::{brute_force_solve, GeneralizedCircuit};
use fpa_core::instances;
use fpa_core::io::strategy_to_json;
use fpa_core::reduction::{build_auction, verify_reduction};
use fpa_core::scalar::rat;
use fpa_core::solver_enum::{solve_constant_size, EnumConfig};
use num_traits::{ToPrimitive, Zero};
use rand::Rng;

type Outcome = Result<String, String>;

struct Criterion {
    id: usize,
    name: &'static str,
    limit: Duration,
    run: fn() -> Outcome,
}

fn secs(s: u64) -> Duration {
    Duration::from_secs(s)
}

fn ensure(ok: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg())
    }
}

fn cycle3() -> GeneralizedCircuit {
    GeneralizedCircuit::parse("0 G1- 2\n1 G1- 0\n2 G1- 1\n").expect("cycle parses")
}

fn golden_equilibrium() -> Outcome {
    let golden = instances::golden_ratio();
    let eps = rat(1, 1_000_000);
    let target = instances::golden_jump();

    let start = Instant::now();
    let fixed = solve_fixed_point(&golden, &eps, &SolverConfig::default()).map_err(|e| e.to_string())?;
    let brouwer_time = start.elapsed();
    ensure(fixed.certified, || format!("brouwer not certified, regret {}", fixed.report.max_regret))?;
    let brouwer_err = fixed.profile.jumps().iter().map(|row| (row[0] - target).abs()).fold(0.0, f64::max);
    ensure(brouwer_err <= 1e-6, || format!("brouwer jump off by {brouwer_err:.2e}"))?;
    ensure(brouwer_time <= secs(10), || format!("brouwer took {brouwer_time:?}"))?;

    let start = Instant::now();
    let outcome = solve_constant_size(&golden, &eps, &EnumConfig::default()).map_err(|e| e.to_string())?;
    let enum_time = start.elapsed();
    let solution = outcome.solution.ok_or("enumeration found no certified guess")?;
    let enum_err = solution
        .profile
        .jumps()
        .iter()
        .map(|row| (row[0].to_f64().unwrap_or(f64::NAN) - target).abs())
        .fold(0.0, f64::max);
    ensure(enum_err <= 1e-6, || format!("enumeration jump off by {enum_err:.2e}"))?;
    ensure(enum_time <= secs(10), || format!("enumeration took {enum_time:?}"))?;

    let a = instances::golden_jump_60_digits();
    let closed = fpa_core::auction::StrategyProfile::new(vec![vec![a, rat(1, 1)]; 3]);
    let report = verify_epsilon_bne(&golden, &closed, &rat(0, 1)).map_err(|e| e.to_string())?;
    let regret = report.max_regret.to_f64().unwrap_or(f64::NAN);
    ensure(regret <= 1e-12, || format!("closed form regret {regret:.2e}"))?;
    Ok(format!(
        "brouwer {brouwer_err:.1e} in {brouwer_time:.2?}, enumerate {enum_err:.1e} in {enum_time:.2?}, closed-form regret {regret:.1e}"
    ))
}

fn dp_matches_brute_force() -> Outcome {
    let mismatches: Vec<String> = Exec::Parallel
        .map_range(500, |case| {
            let mut rng = common::rng(20_000 + case as u64);
            let inst = common::random_sized_instance(&mut rng, 6, 4);
            let profile = common::random_profile(&mut rng, &inst);
            let i = rng.gen_range(0..inst.n());
            (0..inst.num_bids())
                .filter(|&k| win_prob(&inst, i, k, &profile).ok() != brute_force_win_prob(&inst, i, k, &profile).ok())
                .map(|k| format!("case {case} bidder {i} bid {k}"))
                .collect::<Vec<_>>()
        })
        .into_iter()
        .flatten()
        .collect();
    ensure(mismatches.is_empty(), || format!("{} mismatches, first {}", mismatches.len(), mismatches[0]))?;
    Ok("500 instances agree exactly".into())
}

/// Soundness is exact: a grid can only miss deviations. Completeness holds up to the grid
/// step times the win-probability spread, since a strict jump endpoint is approached but
/// never sampled.
fn verifier_matches_grid() -> Outcome {
    const STEPS: usize = 10_000;
    const SLACK: f64 = 1e-6;
    let rows = Exec::Parallel.map_range(200, |case| {
        let mut rng = common::rng(30_000 + case as u64);
        let inst = common::random_sized_instance(&mut rng, 4, 4);
        let profile = common::random_grid_profile(&mut rng, &inst, STEPS as i64);
        let verified = verify_epsilon_bne(&inst, &profile, &rat(0, 1)).map(|r| r.max_regret.to_f64().unwrap_or(f64::NAN));
        let grid = common::grid_regret(&inst, &profile, STEPS);
        let spread = common::win_spread(&inst, &profile);
        (case, verified, grid, spread)
    });
    let mut outright = 0;
    for (case, verified, grid, spread) in rows {
        let verified = verified.map_err(|e| format!("case {case}: {e}"))?;
        ensure(grid <= verified + SLACK, || format!("case {case}: false certification, grid {grid} > verifier {verified}"))?;
        let window = spread / STEPS as f64;
        ensure(verified <= grid + window + 1e-12, || format!("case {case}: verifier {verified} exceeds grid {grid} by more than {window:.1e}"))?;
        if (verified - grid).abs() <= SLACK {
            outright += 1;
        }
    }
    Ok(format!("200 profiles sound, complete within grid resolution, {outright}/200 agree within {SLACK:.0e}"))
}

fn best_response_has_no_regret() -> Outcome {
    let rows = Exec::Parallel.map_range(200, |case| -> Result<(f64, f64), String> {
        let mut rng = common::rng(40_000 + case as u64);
        let inst = common::random_sized_instance(&mut rng, 5, 4);
        let mut profile = common::random_profile(&mut rng, &inst);
        let i = rng.gen_range(0..inst.n());
        let br = best_response(&inst, i, &profile).map_err(|e| e.to_string())?;
        profile.set_bidder(i, br);
        let exact = verify_bidders(&inst, &profile, &rat(0, 1), &[i]).map_err(|e| e.to_string())?;
        let float = verify_bidders(&inst, &profile.to_f64(), &0.0, &[i]).map_err(|e| e.to_string())?;
        ensure(exact.max_regret.is_zero(), || format!("case {case}: exact regret {}", exact.max_regret))?;
        Ok((exact.max_regret.to_f64().unwrap_or(f64::NAN), float.max_regret))
    });
    let mut worst = 0.0f64;
    for row in rows {
        let (exact, float) = row?;
        worst = worst.max(exact).max(float);
    }
    ensure(worst <= 1e-12, || format!("float regret {worst:.2e}"))?;
    Ok(format!("200 triples, exact regret 0, float regret at most {worst:.1e}"))
}

fn export_matches_map() -> Outcome {
    let mut worst = 0.0f64;
    for seed in 0..5 {
        let mut rng = common::rng(50_000 + seed);
        let inst = common::random_sized_instance(&mut rng, 4, 4);
        let (err, in_domain) = common::export_check(&inst, 100, seed);
        ensure(in_domain, || format!("instance {seed}: image left the domain"))?;
        ensure(err <= 1e-9, || format!("instance {seed}: mismatch {err:.2e}"))?;
        worst = worst.max(err);
    }
    Ok(format!("5 instances x 100 points, worst mismatch {worst:.1e}"))
}

fn gadget_claims() -> Outcome {
    let checks = common::gadget_claims(20, 1e-6);
    let failed: Vec<String> = checks.iter().filter(|c| !c.holds()).map(|c| format!("{c:?}")).collect();
    ensure(failed.is_empty(), || format!("{} of {} fail, first {}", failed.len(), checks.len(), failed[0]))?;
    let slack = checks.iter().map(|c| if c.bound > 0.0 { c.error / c.bound } else { 0.0 }).fold(0.0, f64::max);
    Ok(format!("{} sub-auctions hold, worst error/bound {slack:.2}", checks.len()))
}

fn reduction_roundtrip() -> Outcome {
    let circuit = cycle3();
    let out = build_auction(&circuit).map_err(|e| e.to_string())?;
    ensure(out.auction.n() == 30, || format!("{} bidders", out.auction.n()))?;
    let solved = solve_fixed_point(&out.auction, &rat(1, 1_000_000), &SolverConfig::default()).map_err(|e| e.to_string())?;
    ensure(solved.certified, || format!("not certified, regret {}", solved.report.max_regret))?;
    let report = verify_reduction(&circuit, &out, &solved.profile, 1e-6).map_err(|e| e.to_string())?;
    ensure(report.satisfied, || format!("check at 500 eps failed: {report:?}"))?;
    let off = report.values.iter().map(|v| (v - 0.5).abs()).fold(0.0, f64::max);
    ensure(off <= 5e-4, || format!("decoded {:?}", report.values))?;
    Ok(format!("30 bidders, decoded within {off:.1e} of 1/2, gate slack {:.1e}", report.max_violation))
}

fn lowering_rules() -> Outcome {
    let rules = common::lowering_rules();
    let mut worst_exact = 0.0f64;
    for (target, kind) in &rules {
        let trial = common::lowering_trial(*target, kind, &[1e-3, 1e-5], 10, 7);
        ensure(trial.holds(), || format!("{trial:?}"))?;
        worst_exact = worst_exact.max(trial.exact_error);
    }
    Ok(format!("{} rules, worst exact read-back error {worst_exact:.1e}", rules.len()))
}

fn continuity() -> Outcome {
    let failures: Vec<String> = Exec::Parallel
        .map_range(20, |k| common::continuity_trial(60_000 + k as u64, 1000))
        .into_iter()
        .filter_map(Result::err)
        .collect();
    ensure(failures.is_empty(), || failures.join("; "))?;
    Ok("20 instances x 1000 perturbations within eps".into())
}

/// Serialised artefacts of every solver for one seed and execution strategy.
fn artefacts(seed: u64, exec: Exec) -> Result<Vec<String>, String> {
    let mut rng = common::rng(seed);
    let inst = common::random_instance(&mut rng, 3, 3);
    let config = SolverConfig { restarts: 8, max_iters: 5000, seed, exec, ..SolverConfig::default() };
    let fixed = solve_fixed_point(&inst, &rat(1, 1000), &config).map_err(|e| e.to_string())?;
    let golden = instances::golden_ratio();
    let enum_config = EnumConfig { exec, ..EnumConfig::default() };
    let outcome = solve_constant_size(&golden, &rat(1, 1_000_000), &enum_config).map_err(|e| e.to_string())?;
    let grid = brute_force_solve(&cycle3(), 0.01, 100, 2_000_000, exec).map_err(|e| e.to_string())?;
    Ok(vec![
        strategy_to_json(&fixed.profile.to_rational()),
        format!("{:?}", fixed.residual.to_bits()),
        outcome.solution.map_or_else(|| "none".into(), |s| strategy_to_json(&s.profile)),
        format!("{:?}", grid.grid),
    ])
}

fn determinism() -> Outcome {
    let first = artefacts(77, Exec::Parallel)?;
    let again = artefacts(77, Exec::Parallel)?;
    let sequential = artefacts(77, Exec::Sequential)?;
    ensure(first == again, || "repeat run differs".into())?;
    ensure(first == sequential, || "sequential run differs from parallel".into())?;
    let bytes: usize = first.iter().map(String::len).sum();
    Ok(format!("3 runs byte-identical over {bytes} bytes of artefacts"))
}

fn main() -> ExitCode {
    let criteria = [
        Criterion { id: 1, name: "golden-ratio equilibrium", limit: secs(20), run: golden_equilibrium },
        Criterion { id: 2, name: "win probability DP vs brute force", limit: secs(60), run: dp_matches_brute_force },
        Criterion { id: 3, name: "verifier vs grid check", limit: secs(120), run: verifier_matches_grid },
        Criterion { id: 4, name: "best-response optimality", limit: secs(60), run: best_response_has_no_regret },
        Criterion { id: 5, name: "exported circuit fidelity", limit: secs(60), run: export_matches_map },
        Criterion { id: 6, name: "gadget claims", limit: secs(300), run: gadget_claims },
        Criterion { id: 7, name: "end-to-end reduction", limit: secs(600), run: reduction_roundtrip },
        Criterion { id: 8, name: "gate-set lowering", limit: secs(60), run: lowering_rules },
        Criterion { id: 9, name: "delta continuity", limit: secs(60), run: continuity },
        Criterion { id: 10, name: "determinism", limit: secs(120), run: determinism },
    ];
    let mut failures = 0;
    for c in &criteria {
        let start = Instant::now();
        let outcome = (c.run)();
        let elapsed = start.elapsed();
        let outcome = outcome.and_then(|detail| {
            ensure(elapsed <= c.limit, || format!("took {elapsed:.2?}, limit {:?}", c.limit)).map(|()| detail)
        });
        let (status, detail) = match outcome {
            Ok(detail) => ("PASS", detail),
            Err(detail) => {
                failures += 1;
                ("FAIL", detail)
            }
        };
        println!("[{status}] {:>2} {:<36} {elapsed:>9.2?} / {:?}  {detail}", c.id, c.name, c.limit);
    }
    println!("acceptance: {} passed, {failures} failed", criteria.len() - failures);
    if failures == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
