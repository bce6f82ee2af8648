use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{map_unchecked, DomainPoint};
use crate::auction::{verify_bidders, AuctionInstance, BneReport, StrategyProfile};
use crate::distributions::continuity_delta;
use crate::error::{FpaError, Result};
use crate::exec::Exec;
use crate::scalar::{Rational, Scalar};

#[derive(Clone, Debug)]
pub struct SolverConfig {
    /// Step `η` of `x ← (1 − η)x + η·G(x)`.
    pub damping: f64,
    pub max_iters: usize,
    pub restarts: usize,
    /// Restarts run in fixed-size batches so results never depend on thread count.
    pub batch: usize,
    pub seed: u64,
    /// The residual target never drops below this; below it `f64` noise dominates.
    pub residual_floor: f64,
    /// Slack added to `eps` when certifying in floating point.
    pub verify_tolerance: f64,
    /// Bidders held fixed at `start` and excluded from certification.
    pub frozen: Vec<usize>,
    /// First restart begins here; later restarts re-randomise the free bidders only.
    pub start: Option<DomainPoint<f64>>,
    /// Residual trace stride in iterations; 0 disables the trace.
    pub trace_every: usize,
    pub exec: Exec,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            damping: 0.5,
            max_iters: 100_000,
            restarts: 32,
            batch: 4,
            seed: 0,
            residual_floor: 1e-12,
            verify_tolerance: 1e-12,
            frozen: Vec::new(),
            start: None,
            trace_every: 0,
            exec: Exec::default(),
        }
    }
}

#[derive(Clone, Debug)]
pub struct FixedPointResult {
    /// `G(x)` at the returned iterate `x`.
    pub profile: StrategyProfile<f64>,
    /// `‖G(x) − x‖∞`.
    pub residual: f64,
    pub certified: bool,
    pub report: BneReport<f64>,
    pub delta: f64,
    pub restart: usize,
    pub iterations: usize,
    /// `(iteration, residual)` samples of the returned restart.
    pub trace: Vec<(usize, f64)>,
}

struct RunOutcome {
    mapped: DomainPoint<f64>,
    residual: f64,
    iterations: usize,
    trace: Vec<(usize, f64)>,
}

fn run_restart(
    instance: &AuctionInstance,
    start: DomainPoint<f64>,
    frozen: &[bool],
    target: f64,
    config: &SolverConfig,
) -> RunOutcome {
    let mut x = start;
    let mut best: Option<RunOutcome> = None;
    let mut trace = Vec::new();
    for iter in 0..config.max_iters.max(1) {
        let gx = DomainPoint::new(map_unchecked(instance, x.coords(), frozen));
        let r = gx.distance(&x);
        if config.trace_every > 0 && iter % config.trace_every == 0 {
            trace.push((iter, r));
        }
        if best.as_ref().map_or(true, |b| r < b.residual) {
            best = Some(RunOutcome { mapped: gx.clone(), residual: r, iterations: iter + 1, trace: Vec::new() });
        }
        if r <= target {
            break;
        }
        x = x.blend(&gx, config.damping);
    }
    let mut out = best.expect("at least one iteration");
    if config.trace_every > 0 {
        trace.push((out.iterations - 1, out.residual));
    }
    out.trace = trace;
    out
}

/// Damped multistart iteration of `G` towards a `δ`-approximate fixed point.
///
/// The target is `δ = min(δ(eps/16m), eps/16m)`, floored at `config.residual_floor`.
/// The returned profile is `G(x)`; `certified` comes from the exact interval verifier at `eps`.
pub fn solve_fixed_point(instance: &AuctionInstance, eps: &Rational, config: &SolverConfig) -> Result<FixedPointResult> {
    let n = instance.n();
    let m = instance.m();
    let eps_f = eps.as_f64();
    let mut frozen = vec![false; n];
    for &i in &config.frozen {
        if i >= n {
            return Err(FpaError::Domain(format!("frozen bidder {i} out of range")));
        }
        frozen[i] = true;
    }
    if !config.frozen.is_empty() && config.start.is_none() {
        return Err(FpaError::Domain("frozen bidders need a start point".into()));
    }
    if let Some(start) = &config.start {
        let v = start.violations(instance);
        if !v.is_empty() {
            return Err(FpaError::Precondition(v));
        }
    }
    if !(0.0..=1.0).contains(&config.damping) || config.damping == 0.0 {
        return Err(FpaError::Domain("damping must lie in (0, 1]".into()));
    }
    let free: Vec<usize> = (0..n).filter(|&i| !frozen[i]).collect();
    let certify = |profile: &StrategyProfile<f64>| verify_bidders(instance, profile, &(eps_f + config.verify_tolerance), &free);

    if m == 0 {
        let profile = StrategyProfile::always_zero(instance);
        let report = certify(&profile)?;
        return Ok(FixedPointResult {
            certified: report.is_eq,
            profile,
            residual: 0.0,
            report,
            delta: 1.0,
            restart: 0,
            iterations: 0,
            trace: Vec::new(),
        });
    }
    if eps_f <= 0.0 {
        return Err(FpaError::Domain("eps must be positive".into()));
    }
    let margin = eps / Rational::from_integer((16 * m).into());
    let delta = continuity_delta(instance, &margin)?.min(margin).as_f64();
    let target = delta.max(config.residual_floor);

    let start_for = |restart: usize| -> DomainPoint<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        rng.set_stream(restart as u64);
        let random = DomainPoint::random(instance, &mut rng);
        match &config.start {
            None => random,
            Some(start) if restart == 0 => start.clone(),
            Some(start) => DomainPoint::new(
                (0..n)
                    .map(|i| if frozen[i] { start.coords()[i].clone() } else { random.coords()[i].clone() })
                    .collect(),
            ),
        }
    };

    let restarts = config.restarts.max(1);
    let batch = config.batch.max(1);
    let mut best: Option<(bool, f64, usize, RunOutcome, BneReport<f64>)> = None;
    let mut next = 0;
    while next < restarts {
        let end = (next + batch).min(restarts);
        let outcomes = config.exec.map_range(end - next, |k| {
            let restart = next + k;
            let outcome = run_restart(instance, start_for(restart), &frozen, target, config);
            let report = certify(&outcome.mapped.to_profile());
            (restart, outcome, report)
        });
        for (restart, outcome, report) in outcomes {
            let report = report?;
            log::debug!(
                "restart {restart}: residual {:.3e} after {} iterations, certified {}",
                outcome.residual,
                outcome.iterations,
                report.is_eq
            );
            let better = match &best {
                None => true,
                Some((cert, res, _, _, _)) => (report.is_eq && !cert) || (report.is_eq == *cert && outcome.residual < *res),
            };
            if better {
                best = Some((report.is_eq, outcome.residual, restart, outcome, report));
            }
        }
        next = end;
        if best.as_ref().is_some_and(|(cert, res, ..)| *cert && *res <= target) {
            break;
        }
    }
    let (certified, residual, restart, outcome, report) = best.expect("at least one restart");
    Ok(FixedPointResult {
        profile: outcome.mapped.to_profile(),
        residual,
        certified,
        report,
        delta,
        restart,
        iterations: outcome.iterations,
        trace: outcome.trace,
    })
}
