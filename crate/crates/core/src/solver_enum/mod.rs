//! Exhaustive-guess equilibrium search for instances with few bidders and bids.
//!
//! A [`Guess`] fixes, per bidder, which jump points are distinct (the effective jumps)
//! and which breakpoint cell of the opponents' priors each one lies in. Under a guess
//! every interim utility is a polynomial in the effective jump positions, so the
//! equilibrium conditions form a polynomial inequality system. Systems are solved
//! numerically; only the exact verifier certifies.

mod poly;

use nalgebra::{DMatrix, DVector};
use num_traits::{One, Zero};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub use poly::{CompiledPoly, Poly};

use crate::auction::{verify_epsilon_bne, AuctionInstance, BneReport, StrategyProfile};
use crate::distributions::continuity_delta;
use crate::error::{FpaError, Result};
use crate::exec::Exec;
use crate::scalar::{f64_to_rational, rational_to_f64, Rational, Scalar};

/// A cell `[lo, hi]` of the merged breakpoints of the priors held about one bidder.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Cell {
    pub index: usize,
    pub lo: Rational,
    pub hi: Rational,
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct BidderGuess {
    /// Indices `e` of the effective jump points `y_e = α(b_{e−1})`, strictly increasing
    /// within `1..|B|`. Above `y_e` the bidder bids `b_e`.
    pub effective: Vec<usize>,
    /// Cell holding each effective jump point; non-decreasing.
    pub cells: Vec<Cell>,
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Guess {
    pub bidders: Vec<BidderGuess>,
}

impl Guess {
    pub fn num_effective(&self) -> usize {
        self.bidders.iter().map(|b| b.effective.len()).sum()
    }
}

/// Cells of the common refinement of the priors `F_{i,j}`, `i ≠ j`, about bidder `j`.
pub fn cells(instance: &AuctionInstance, j: usize) -> Vec<Cell> {
    let mut points: Vec<Rational> = instance
        .priors()
        .filter(|&(_, col, _)| col == j)
        .flat_map(|(_, _, f)| f.breakpoints())
        .chain([Rational::zero(), Rational::one()])
        .collect();
    points.sort();
    points.dedup();
    points
        .windows(2)
        .enumerate()
        .map(|(index, w)| Cell { index, lo: w[0].clone(), hi: w[1].clone() })
        .collect()
}

/// `Π_j K_j^{|B|−1}`: raw assignments of every jump point to a cell, before
/// collapsing coincident jumps. Saturates at `u128::MAX`.
pub fn interval_assignment_count(instance: &AuctionInstance) -> u128 {
    (0..instance.n()).fold(1u128, |acc, j| {
        let k = cells(instance, j).len() as u128;
        (0..instance.m()).fold(acc, |a, _| a.saturating_mul(k))
    })
}

/// Every consistent choice for one bidder: an effective subsequence plus a
/// non-decreasing cell per effective jump whose upper end admits `z ≥ b_e`.
fn bidder_options(instance: &AuctionInstance, j: usize) -> Vec<BidderGuess> {
    fn extend(
        instance: &AuctionInstance,
        cells: &[Cell],
        effective: &[usize],
        chosen: &mut Vec<Cell>,
        out: &mut Vec<BidderGuess>,
    ) {
        let t = chosen.len();
        if t == effective.len() {
            out.push(BidderGuess { effective: effective.to_vec(), cells: chosen.clone() });
            return;
        }
        let start = chosen.last().map_or(0, |c| c.index);
        for cell in &cells[start..] {
            if cell.hi < *instance.bid(effective[t]).exact() {
                continue;
            }
            chosen.push(cell.clone());
            extend(instance, cells, effective, chosen, out);
            chosen.pop();
        }
    }
    let cells = cells(instance, j);
    let m = instance.m();
    let mut out = Vec::new();
    for mask in 0u32..(1u32 << m) {
        let effective: Vec<usize> = (0..m).filter(|b| mask & (1 << b) != 0).map(|b| b + 1).collect();
        extend(instance, &cells, &effective, &mut Vec::new(), &mut out);
    }
    out
}

/// All guesses, fewest effective jumps first, ties in lexicographic bidder order.
pub fn enumerate_guesses(instance: &AuctionInstance, budget: usize) -> Result<Vec<Guess>> {
    if instance.m() >= 32 {
        return Err(FpaError::Resource(format!("{} bids is too many to enumerate", instance.num_bids())));
    }
    let options: Vec<Vec<BidderGuess>> = (0..instance.n()).map(|j| bidder_options(instance, j)).collect();
    let total = options.iter().try_fold(1usize, |acc, o| acc.checked_mul(o.len()));
    match total {
        Some(t) if t <= budget => {}
        _ => {
            let count = options.iter().fold(1u128, |acc, o| acc.saturating_mul(o.len() as u128));
            return Err(FpaError::Resource(format!("{count} guesses exceed the budget of {budget}")));
        }
    }
    let mut guesses = vec![Guess { bidders: Vec::new() }];
    for opts in &options {
        guesses = guesses
            .iter()
            .flat_map(|g| {
                opts.iter().map(move |o| {
                    let mut next = g.clone();
                    next.bidders.push(o.clone());
                    next
                })
            })
            .collect();
    }
    guesses.sort_by_key(Guess::num_effective);
    Ok(guesses)
}

/// The five constraint families of the guessed system.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Family {
    /// Consecutive effective jumps are strictly ordered.
    Ordering,
    /// A jump stays in its guessed cell.
    Interval,
    /// A jump is at least the bid placed above it.
    NoOverbid,
    /// At the lower end of a bid's interval no lower bid does better.
    Downward,
    /// At the upper end of a bid's interval no higher bid does better.
    Upward,
}

/// `poly ≥ 0`, or `poly > 0` for [`Family::Ordering`].
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Constraint {
    pub family: Family,
    pub bidder: usize,
    pub poly: Poly,
}

/// Unknown `z_{bidder, slot}`, the `slot`-th effective jump (1-based) of `bidder`,
/// located at jump point index `jump`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct JumpVar {
    pub bidder: usize,
    pub slot: usize,
    pub jump: usize,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PolySystem {
    pub vars: Vec<JumpVar>,
    /// Box per variable: guessed cell intersected with the no-overbidding floor.
    pub bounds: Vec<(Rational, Rational)>,
    pub constraints: Vec<Constraint>,
    pub guess: Guess,
    bids: Vec<Rational>,
    /// `var_of[i][t]`: variable of bidder `i`'s `t`-th effective jump (0-based).
    var_of: Vec<Vec<usize>>,
}

impl PolySystem {
    pub fn num_vars(&self) -> usize {
        self.vars.len()
    }

    /// Variable holding `α_j(b_k)`, or `None` when it equals 1.
    fn jump_var(&self, j: usize, k: usize) -> Option<usize> {
        let g = &self.guess.bidders[j];
        g.effective.iter().position(|&e| e > k).map(|t| self.var_of[j][t])
    }

    /// Largest violation of any constraint at `x`, with strict ones needing `margin`.
    pub fn violation(&self, x: &[Rational], margin: &Rational) -> Rational {
        self.constraints
            .iter()
            .map(|c| {
                let need = if c.family == Family::Ordering { margin.clone() } else { Rational::zero() };
                need - c.poly.eval(x)
            })
            .fold(Rational::zero(), |a, b| a.max(b))
    }
}

fn check_guess(instance: &AuctionInstance, guess: &Guess) -> Vec<String> {
    let mut problems = Vec::new();
    if guess.bidders.len() != instance.n() {
        problems.push(format!("guess covers {} bidders, instance has {}", guess.bidders.len(), instance.n()));
        return problems;
    }
    for (j, g) in guess.bidders.iter().enumerate() {
        if g.effective.len() != g.cells.len() {
            problems.push(format!("bidder {j}: {} effective jumps but {} cells", g.effective.len(), g.cells.len()));
            continue;
        }
        if g.effective.iter().any(|&e| e == 0 || e >= instance.num_bids()) {
            problems.push(format!("bidder {j}: effective index outside 1..{}", instance.num_bids()));
            continue;
        }
        if g.effective.windows(2).any(|w| w[0] >= w[1]) {
            problems.push(format!("bidder {j}: effective indices not increasing"));
        }
        let partition = cells(instance, j);
        for (c, &e) in g.cells.iter().zip(&g.effective) {
            if partition.get(c.index) != Some(c) {
                problems.push(format!("bidder {j}: cell {} is not a breakpoint cell", c.index));
            } else if c.hi < *instance.bid(e).exact() {
                problems.push(format!("bidder {j}: cell {} lies below bid index {e}", c.index));
            }
        }
        if g.cells.windows(2).any(|w| w[0].index > w[1].index) {
            problems.push(format!("bidder {j}: cell order contradicts jump order"));
        }
    }
    problems
}

/// Assembles the inequality system of `guess`; each utility is expanded through the
/// tie-table recursion with the guessed prior pieces substituted.
pub fn build_system(instance: &AuctionInstance, guess: &Guess) -> Result<PolySystem> {
    let problems = check_guess(instance, guess);
    if !problems.is_empty() {
        return Err(FpaError::Precondition(problems));
    }
    let n = instance.n();
    let bids: Vec<Rational> = instance.bids().iter().map(|b| b.exact().clone()).collect();
    let mut vars = Vec::new();
    let mut bounds = Vec::new();
    let mut var_of = Vec::with_capacity(n);
    for (j, g) in guess.bidders.iter().enumerate() {
        let mut slots = Vec::new();
        for (t, (&e, c)) in g.effective.iter().zip(&g.cells).enumerate() {
            slots.push(vars.len());
            vars.push(JumpVar { bidder: j, slot: t + 1, jump: e });
            bounds.push((c.lo.clone().max(bids[e].clone()), c.hi.clone()));
        }
        var_of.push(slots);
    }
    let nv = vars.len();
    let mut system =
        PolySystem { vars, bounds, constraints: Vec::new(), guess: guess.clone(), bids: bids.clone(), var_of };

    let cell_of = |v: usize| -> &Cell {
        let jv = &system.vars[v];
        &system.guess.bidders[jv.bidder].cells[jv.slot - 1]
    };
    // `F_{i,j}(α_j(b_k))` as a polynomial.
    let cdf_at = |i: usize, j: usize, k: usize| -> Poly {
        let f = instance.prior(i, j);
        match system.jump_var(j, k) {
            None => Poly::constant(nv, f.eval(&Rational::one())),
            Some(v) => {
                let cell = cell_of(v);
                let mid = (&cell.lo + &cell.hi) / Rational::from_integer(2.into());
                let piece = &f.pieces()[f.piece_index(&mid)];
                let coeffs: Vec<Rational> = piece.coeffs.iter().map(|c| c.exact().clone()).collect();
                Poly::compose(&coeffs, &Poly::var(nv, v))
            }
        }
    };
    // `H_i(b_k)` for all bidders and bids.
    let wins: Vec<Vec<Poly>> = (0..n)
        .map(|i| {
            (0..bids.len())
                .map(|k| {
                    let mut row = vec![Poly::zero(nv); n];
                    row[0] = Poly::constant(nv, Rational::one());
                    for (filled, j) in (0..n).filter(|&j| j != i).enumerate() {
                        let below = if k == 0 { Poly::zero(nv) } else { cdf_at(i, j, k - 1) };
                        let at = &cdf_at(i, j, k) - &below;
                        for slot in (0..=filled + 1).rev() {
                            let stay = &row[slot] * &below;
                            row[slot] = if slot > 0 { &stay + &(&row[slot - 1] * &at) } else { stay };
                        }
                    }
                    row.iter().enumerate().fold(Poly::zero(nv), |acc, (t, p)| {
                        &acc + &p.scale(&Rational::new(1.into(), (t as i64 + 1).into()))
                    })
                })
                .collect()
        })
        .collect();
    let utility = |i: usize, k: usize, value: &Poly| -> Poly {
        &(value - &Poly::constant(nv, bids[k].clone())) * &wins[i][k]
    };

    let mut constraints = Vec::new();
    for (i, g) in system.guess.bidders.iter().enumerate() {
        let point = |t: usize| -> Poly {
            if t == 0 {
                Poly::zero(nv)
            } else if t > g.effective.len() {
                Poly::constant(nv, Rational::one())
            } else {
                Poly::var(nv, system.var_of[i][t - 1])
            }
        };
        let bid_above = |t: usize| if t == 0 { 0 } else { g.effective[t - 1] };
        let mut push = |family, poly: Poly| {
            if !(poly.variables().is_empty() && matches!(family, Family::Ordering | Family::Interval | Family::NoOverbid)) {
                constraints.push(Constraint { family, bidder: i, poly });
            }
        };
        let m = g.effective.len() + 1;
        for t in 1..=m {
            push(Family::Ordering, &point(t) - &point(t - 1));
        }
        for t in 1..m {
            let z = point(t);
            let c = &g.cells[t - 1];
            push(Family::Interval, &z - &Poly::constant(nv, c.lo.clone()));
            push(Family::Interval, &Poly::constant(nv, c.hi.clone()) - &z);
            let e = bid_above(t);
            push(Family::NoOverbid, &z - &Poly::constant(nv, bids[e].clone()));
            let keep = utility(i, e, &z);
            for k in 0..e {
                push(Family::Downward, &keep - &utility(i, k, &z));
            }
        }
        for t in 1..=m {
            let z = point(t);
            let lower = bid_above(t - 1);
            let keep = utility(i, lower, &z);
            for k in lower + 1..bids.len() {
                push(Family::Upward, &keep - &utility(i, k, &z));
            }
        }
    }
    system.constraints = constraints;
    Ok(system)
}

#[derive(Clone, Debug)]
pub struct NumericConfig {
    pub restarts: usize,
    /// Levenberg–Marquardt iterations per restart.
    pub max_iters: usize,
    /// Margin `τ` enforcing the strict ordering constraints.
    pub margin: f64,
    /// Violation at which a restart stops refining.
    pub tolerance: f64,
    pub seed: u64,
}

impl Default for NumericConfig {
    fn default() -> Self {
        Self { restarts: 16, max_iters: 400, margin: 1e-9, tolerance: 1e-15, seed: 0 }
    }
}

/// Best point found; `feasible` when its violation is at most the requested `delta`.
#[derive(Clone, Debug, PartialEq)]
pub struct NumericSolution {
    pub point: Vec<f64>,
    /// Largest constraint violation at `point`, strict ones measured against `τ`.
    pub residual: f64,
    pub feasible: bool,
}

struct Compiled {
    polys: Vec<(CompiledPoly, f64)>,
    bounds: Vec<(f64, f64)>,
}

impl Compiled {
    fn violation(&self, x: &[f64]) -> f64 {
        self.polys.iter().map(|(p, need)| need - p.eval(x)).fold(0.0, f64::max)
    }

    /// Active residuals `min(0, p − need)` and their Jacobian.
    fn residuals(&self, x: &[f64]) -> (DVector<f64>, DMatrix<f64>) {
        let nv = x.len();
        let mut r = DVector::zeros(self.polys.len());
        let mut jac = DMatrix::zeros(self.polys.len(), nv);
        let mut grad = vec![0.0; nv];
        for (c, (p, need)) in self.polys.iter().enumerate() {
            let v = p.eval_grad(x, &mut grad) - need;
            if v < 0.0 {
                r[c] = v;
                for (d, g) in grad.iter().enumerate() {
                    jac[(c, d)] = *g;
                }
            }
        }
        (r, jac)
    }

    fn clamp(&self, x: &mut [f64]) {
        for (v, (lo, hi)) in x.iter_mut().zip(&self.bounds) {
            *v = v.clamp(*lo, *hi);
        }
    }
}

/// Box-projected Levenberg–Marquardt on the squared active violations.
fn refine(compiled: &Compiled, mut x: Vec<f64>, config: &NumericConfig) -> (Vec<f64>, f64) {
    compiled.clamp(&mut x);
    if x.is_empty() {
        let v = compiled.violation(&x);
        return (x, v);
    }
    let mut lambda = 1e-3;
    let (mut r, mut jac) = compiled.residuals(&x);
    let mut cost = r.norm_squared();
    for _ in 0..config.max_iters {
        if r.amax() <= config.tolerance {
            break;
        }
        let jt = jac.transpose();
        let normal = &jt * &jac;
        let rhs = -(&jt * &r);
        let mut accepted = false;
        while lambda < 1e12 {
            let mut damped = normal.clone();
            for d in 0..x.len() {
                damped[(d, d)] += lambda * (1.0 + normal[(d, d)]);
            }
            let Some(step) = damped.lu().solve(&rhs) else {
                lambda *= 4.0;
                continue;
            };
            let mut trial: Vec<f64> = x.iter().zip(step.iter()).map(|(a, s)| a + s).collect();
            compiled.clamp(&mut trial);
            let (rt, jt_new) = compiled.residuals(&trial);
            let trial_cost = rt.norm_squared();
            if trial_cost < cost {
                x = trial;
                r = rt;
                jac = jt_new;
                cost = trial_cost;
                lambda = (lambda / 3.0).max(1e-15);
                accepted = true;
                break;
            }
            lambda *= 4.0;
        }
        if !accepted {
            break;
        }
    }
    let v = compiled.violation(&x);
    (x, v)
}

/// Multistart search for a point of `system` with violation at most `delta`.
///
/// The first start is the centre of the variable box; later ones are uniform in it.
pub fn solve_system_numeric(system: &PolySystem, delta: f64, config: &NumericConfig) -> NumericSolution {
    let bounds: Vec<(f64, f64)> =
        system.bounds.iter().map(|(lo, hi)| (rational_to_f64(lo), rational_to_f64(hi))).collect();
    if system.bounds.iter().any(|(lo, hi)| lo > hi) {
        return NumericSolution { point: Vec::new(), residual: f64::INFINITY, feasible: false };
    }
    let compiled = Compiled {
        polys: system
            .constraints
            .iter()
            .map(|c| (c.poly.compile(), if c.family == Family::Ordering { config.margin } else { 0.0 }))
            .collect(),
        bounds,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut best: Option<(Vec<f64>, f64)> = None;
    for restart in 0..config.restarts.max(1) {
        let start: Vec<f64> = compiled
            .bounds
            .iter()
            .map(|&(lo, hi)| if restart == 0 || hi <= lo { 0.5 * (lo + hi) } else { rng.gen_range(lo..=hi) })
            .collect();
        let (x, v) = refine(&compiled, start, config);
        if best.as_ref().map_or(true, |(_, b)| v < *b) {
            best = Some((x, v));
        }
        if best.as_ref().is_some_and(|(_, b)| *b <= config.tolerance.max(0.0)) || system.num_vars() == 0 {
            break;
        }
    }
    let (point, residual) = best.expect("one restart");
    NumericSolution { feasible: residual <= delta, point, residual }
}

/// Truncates `point` into the strategy domain and expands it to full jump vectors.
///
/// `z̃_0 = 0` and `z̃_t = clamp(z_t, max(b_{e_t}, z̃_{t−1}), 1)`; jump points that the
/// guess collapses share the position of the next effective one.
pub fn project_to_domain(system: &PolySystem, point: &[f64]) -> StrategyProfile<Rational> {
    let mut exact = vec![Rational::zero(); system.num_vars()];
    for (i, g) in system.guess.bidders.iter().enumerate() {
        let mut prev = Rational::zero();
        for (t, &e) in g.effective.iter().enumerate() {
            let v = system.var_of[i][t];
            let lo = prev.clone().max(system.bids[e].clone());
            let z = f64_to_rational(point[v]).clamp_s(lo, Rational::one());
            prev = z.clone();
            exact[v] = z;
        }
    }
    let jumps = (0..system.guess.bidders.len())
        .map(|j| {
            (0..system.bids.len())
                .map(|k| system.jump_var(j, k).map_or_else(Rational::one, |v| exact[v].clone()))
                .collect()
        })
        .collect();
    StrategyProfile::new(jumps)
}

#[derive(Clone, Debug)]
pub struct EnumConfig {
    pub max_bidders: usize,
    pub max_bids: usize,
    pub guess_budget: usize,
    /// Guesses evaluated per parallel batch; the first certifying guess in
    /// enumeration order wins regardless of thread count.
    pub batch: usize,
    pub numeric: NumericConfig,
    pub exec: Exec,
}

impl Default for EnumConfig {
    fn default() -> Self {
        Self {
            max_bidders: 4,
            max_bids: 5,
            guess_budget: 200_000,
            batch: 16,
            numeric: NumericConfig::default(),
            exec: Exec::default(),
        }
    }
}

/// Diagnostic record of one evaluated guess.
#[derive(Clone, Debug, PartialEq)]
pub struct Attempt {
    pub guess: usize,
    pub effective_jumps: usize,
    pub residual: f64,
    pub certified: bool,
}

#[derive(Clone, Debug)]
pub struct EnumSolution {
    pub profile: StrategyProfile<Rational>,
    pub guess_index: usize,
    pub guess: Guess,
    pub report: BneReport<Rational>,
}

#[derive(Clone, Debug)]
pub struct EnumOutcome {
    /// First certified profile in guess order, if any.
    pub solution: Option<EnumSolution>,
    /// Every guess evaluated, up to and including the certifying one.
    pub attempts: Vec<Attempt>,
    pub num_guesses: usize,
    /// Residual target handed to the numeric solver.
    pub delta: f64,
}

impl EnumOutcome {
    pub fn certified(&self) -> bool {
        self.solution.is_some()
    }
}

fn try_guess(
    instance: &AuctionInstance,
    guess: &Guess,
    index: usize,
    eps: &Rational,
    delta: f64,
    config: &NumericConfig,
) -> Result<(Attempt, Option<EnumSolution>)> {
    let system = build_system(instance, guess)?;
    let numeric = solve_system_numeric(&system, delta, config);
    let mut attempt =
        Attempt { guess: index, effective_jumps: guess.num_effective(), residual: numeric.residual, certified: false };
    let mut solution = None;
    if numeric.residual <= rational_to_f64(eps) {
        let profile = project_to_domain(&system, &numeric.point);
        let report = verify_epsilon_bne(instance, &profile, eps)?;
        if report.is_eq {
            attempt.certified = true;
            solution = Some(EnumSolution { profile, guess_index: index, guess: guess.clone(), report });
        }
    }
    log::debug!(
        "guess {index}: {} effective jumps, residual {:.3e}, certified {}",
        attempt.effective_jumps,
        attempt.residual,
        attempt.certified
    );
    Ok((attempt, solution))
}

/// Tries guesses in order until one yields a profile the verifier certifies at `eps`.
///
/// The solver target is `min(δ(eps/2), eps/2)`, floored at `10⁻¹³`.
pub fn solve_constant_size(instance: &AuctionInstance, eps: &Rational, config: &EnumConfig) -> Result<EnumOutcome> {
    if instance.n() > config.max_bidders || instance.num_bids() > config.max_bids {
        return Err(FpaError::Resource(format!(
            "enumeration is capped at {} bidders and {} bids, got {} and {}",
            config.max_bidders,
            config.max_bids,
            instance.n(),
            instance.num_bids()
        )));
    }
    let half = eps / Rational::from_integer(2.into());
    let delta = rational_to_f64(&continuity_delta(instance, &half)?.min(half.clone())).max(1e-13);
    let guesses = enumerate_guesses(instance, config.guess_budget)?;
    let mut attempts = Vec::new();
    let batch = config.batch.max(1);
    for start in (0..guesses.len()).step_by(batch) {
        let len = batch.min(guesses.len() - start);
        let results = config
            .exec
            .map_range(len, |k| try_guess(instance, &guesses[start + k], start + k, eps, delta, &config.numeric));
        for result in results {
            let (attempt, solution) = result?;
            attempts.push(attempt);
            if solution.is_some() {
                return Ok(EnumOutcome { solution, attempts, num_guesses: guesses.len(), delta });
            }
        }
    }
    Ok(EnumOutcome { solution: None, attempts, num_guesses: guesses.len(), delta })
}
