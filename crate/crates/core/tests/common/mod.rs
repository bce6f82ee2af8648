//! Seeded generators shared by the integration tests.
#![allow(dead_code)]

use fpa_core::auction::{utility, win_probs, AuctionInstance, StrategyProfile};
use fpa_core::brouwer::{brouwer_map, export_circuit, solve_fixed_point, DomainPoint, SolverConfig, DEFAULT_NODE_BUDGET};
use fpa_core::distributions::{continuity_delta, Block, PiecewiseCdf};
use fpa_core::gcircuit::{
    gate_eval, iterate_solve, iterate_solve_perturbed, lower_circuit, Gate, GateSet, GateType, GeneralizedCircuit,
    IterateConfig, LoweredCircuit, Multiplier,
};
use fpa_core::reduction::{
    gadget_testbed, is_valid_bidder, jump_inequality_violations, BaseParams, Gadget, WORKING_SCALE,
};
use fpa_core::scalar::{f64_to_rational, rat, RatConst, Rational};
use num_traits::ToPrimitive;
use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// One of: uniform, 1..=3 blocks on eighths, `z²`, `z³`, `(z + z²)/2`.
pub fn random_cdf<R: Rng>(rng: &mut R) -> PiecewiseCdf {
    let poly = |coeffs: Vec<Rational>| PiecewiseCdf::from_pieces(vec![(rat(0, 1), rat(1, 1), coeffs)]).unwrap();
    match rng.gen_range(0..5) {
        0 => PiecewiseCdf::uniform(),
        1 => {
            let count = rng.gen_range(1..=3usize);
            let mut cuts: Vec<usize> = sample(rng, 9, 2 * count).into_vec();
            cuts.sort_unstable();
            let weights: Vec<i64> = (0..count).map(|_| rng.gen_range(1..=4)).collect();
            let total: i64 = weights.iter().sum();
            let blocks: Vec<Block> = cuts
                .chunks_exact(2)
                .zip(&weights)
                .map(|(c, &w)| Block::new(rat(c[0] as i64, 8), rat(c[1] as i64, 8), rat(w, total)))
                .collect();
            PiecewiseCdf::from_blocks(&blocks).unwrap()
        }
        2 => poly(vec![rat(0, 1), rat(0, 1), rat(1, 1)]),
        3 => poly(vec![rat(0, 1), rat(0, 1), rat(0, 1), rat(1, 1)]),
        _ => poly(vec![rat(0, 1), rat(1, 2), rat(1, 2)]),
    }
}

/// `n` bidders and bids `{0} ∪ {k/12}` with independently drawn subjective priors.
pub fn random_instance<R: Rng>(rng: &mut R, n: usize, num_bids: usize) -> AuctionInstance {
    let mut ks: Vec<usize> = sample(rng, 11, num_bids - 1).into_vec();
    ks.sort_unstable();
    let bids = std::iter::once(rat(0, 1)).chain(ks.iter().map(|&k| rat(k as i64 + 1, 12))).collect();
    let priors = (0..n)
        .map(|i| (0..n).map(|j| (i != j).then(|| random_cdf(rng))).collect())
        .collect();
    let inst = AuctionInstance::new(bids, priors).unwrap();
    // Blocks with zero gaps are fine; anything else would be a generator bug.
    for (_, _, f) in inst.priors() {
        assert!(f.validate().is_ok(), "{:?}", f.validate());
    }
    inst
}

pub fn random_sized_instance<R: Rng>(rng: &mut R, max_n: usize, max_bids: usize) -> AuctionInstance {
    let n = rng.gen_range(2..=max_n);
    let b = rng.gen_range(1..=max_bids);
    random_instance(rng, n, b)
}

/// Monotone, non-overbidding jumps built from `draw`; the top jump is 1.
fn profile_from<R: Rng>(rng: &mut R, inst: &AuctionInstance, mut draw: impl FnMut(&mut R) -> Rational) -> StrategyProfile<Rational> {
    let count = inst.num_bids();
    StrategyProfile::new(
        (0..inst.n())
            .map(|_| {
                let mut raw: Vec<Rational> = (0..count - 1).map(|_| draw(rng)).collect();
                raw.sort();
                let mut row: Vec<Rational> = Vec::with_capacity(count);
                for (k, x) in raw.into_iter().enumerate() {
                    let floor = inst.bid(k + 1).exact().clone();
                    let prev = row.last().cloned().unwrap_or_else(|| rat(0, 1));
                    row.push(x.max(floor).max(prev));
                }
                row.push(rat(1, 1));
                row
            })
            .collect(),
    )
}

/// Jumps on the `k/97` lattice; occasionally collapsed onto a neighbour to produce ties.
pub fn random_profile<R: Rng>(rng: &mut R, inst: &AuctionInstance) -> StrategyProfile<Rational> {
    profile_from(rng, inst, |r| rat(r.gen_range(0..=97), 97))
}

/// Jumps on the `k/steps` lattice.
pub fn random_grid_profile<R: Rng>(rng: &mut R, inst: &AuctionInstance, steps: i64) -> StrategyProfile<Rational> {
    profile_from(rng, inst, |r| rat(r.gen_range(0..=steps), steps))
}

pub fn assert_close(a: f64, b: f64, tol: f64, what: &str) {
    assert!((a - b).abs() <= tol, "{what}: {a} vs {b} (tolerance {tol})");
}

/// Monte Carlo: shifting every jump by at most δ moves no interim utility by more than eps.
pub fn continuity_trial(seed: u64, trials: usize) -> Result<(), String> {
    let mut rng = rng(seed);
    let inst = random_sized_instance(&mut rng, 4, 4);
    let eps = rat(1, 1000);
    let delta = continuity_delta(&inst, &eps).unwrap().to_f64().unwrap();
    for _ in 0..trials {
        let base = random_profile(&mut rng, &inst).to_f64();
        let moved = StrategyProfile::new(
            base.jumps()
                .iter()
                .map(|row| {
                    let last = row.len() - 1;
                    row.iter()
                        .enumerate()
                        .map(|(k, a)| if k == last { 1.0 } else { (a + rng.gen_range(-delta..=delta)).clamp(0.0, 1.0) })
                        .collect()
                })
                .collect(),
        );
        let v: f64 = rng.gen();
        for i in 0..inst.n() {
            for k in 0..inst.num_bids() {
                let a = utility(&inst, i, k, &base, &v).unwrap();
                let b = utility(&inst, i, k, &moved, &v).unwrap();
                if (a - b).abs() > 1e-3 + 1e-15 {
                    return Err(format!("seed {seed}: bidder {i} bid {k} moved by {}", (a - b).abs()));
                }
            }
        }
    }
    Ok(())
}


/// Direct check of the equilibrium definition on the value grid `{0, 1/steps, …, 1}`: the
/// largest gain any bidder gets at a grid value by leaving the bid its strategy prescribes.
pub fn grid_regret(inst: &AuctionInstance, profile: &StrategyProfile<Rational>, steps: usize) -> f64 {
    let bids: Vec<f64> = inst.bids().iter().map(|b| b.approx()).collect();
    (0..inst.n())
        .map(|i| {
            let wins: Vec<f64> = win_probs(inst, i, profile.jumps()).iter().map(|h| h.to_f64().unwrap()).collect();
            let jumps: Vec<f64> = profile.bidder(i).iter().map(|a| a.to_f64().unwrap()).collect();
            (0..=steps)
                .map(|s| {
                    let v = s as f64 / steps as f64;
                    let chosen = jumps.iter().position(|&a| v <= a).unwrap_or(jumps.len() - 1);
                    let util = |k: usize| (v - bids[k]) * wins[k];
                    let best = (0..bids.len()).map(util).fold(f64::NEG_INFINITY, f64::max);
                    best - util(chosen)
                })
                .fold(0.0, f64::max)
        })
        .fold(0.0, f64::max)
}

/// Largest spread `max_k H_i(b_k) − min_k H_i(b_k)` over bidders; bounds what a grid of
/// step `h` can miss at an open interval endpoint, as `h` times this spread.
pub fn win_spread(inst: &AuctionInstance, profile: &StrategyProfile<Rational>) -> f64 {
    (0..inst.n())
        .map(|i| {
            let wins: Vec<f64> = win_probs(inst, i, profile.jumps()).iter().map(|h| h.to_f64().unwrap()).collect();
            let hi = wins.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let lo = wins.iter().copied().fold(f64::INFINITY, f64::min);
            hi - lo
        })
        .fold(0.0, f64::max)
}

/// Evaluates the exported circuit and the map at `points` random domain points; returns the
/// largest coordinate mismatch and whether every image stayed in the domain.
pub fn export_check(inst: &AuctionInstance, points: usize, seed: u64) -> (f64, bool) {
    let dag = export_circuit(inst, DEFAULT_NODE_BUDGET).unwrap();
    let mut rng = rng(seed);
    let mut worst = 0.0f64;
    let mut in_domain = true;
    for _ in 0..points {
        let x = DomainPoint::random(inst, &mut rng);
        let mapped = brouwer_map(inst, &x).unwrap();
        in_domain &= mapped.violations(inst).is_empty();
        let via_dag = dag.eval(&x.flat()).unwrap();
        worst = mapped.flat().iter().zip(&via_dag).fold(worst, |acc, (a, b)| acc.max((a - b).abs()));
    }
    (worst, in_domain)
}

/// Outcome of exercising one lowering rule in isolation.
#[derive(Clone, Debug)]
pub struct LoweringTrial {
    pub rule: String,
    pub multiplier: Multiplier,
    /// Worst source-gate violation over exact solves of the lowered circuit.
    pub exact_error: f64,
    /// Worst `violation / ε` over perturbed solves; `None` for exact-only rules.
    pub perturbed_ratio: Option<f64>,
    /// Extra read-back error allowed for dyadic approximations of ζ.
    pub zeta_error: f64,
}

impl LoweringTrial {
    pub fn holds(&self) -> bool {
        let exact = self.exact_error <= 1e-9;
        match (self.multiplier, self.perturbed_ratio) {
            // Relative slack for float rounding; the copy rule attains its bound exactly.
            (Multiplier::Bounded(m), Some(r)) => exact && r <= m as f64 * (1.0 + 1e-9),
            _ => exact,
        }
    }
}

/// Source circuit: a free complement pair per input pins its value; the last gate is `kind`.
fn rule_circuit(kind: &GateType) -> GeneralizedCircuit {
    let arity = kind.arity();
    let mut gates: Vec<Gate> = (0..arity)
        .flat_map(|r| [Gate::new(GateType::OneMinus, vec![2 * r + 1]), Gate::new(GateType::OneMinus, vec![2 * r])])
        .collect();
    gates.push(Gate::new(kind.clone(), (0..arity).map(|r| 2 * r).collect()));
    GeneralizedCircuit::new(gates).unwrap()
}

fn pinned_start(lowered: &LoweredCircuit, inputs: &[f64]) -> Vec<f64> {
    let mut start = vec![0.5; lowered.circuit.len()];
    for (r, &x) in inputs.iter().enumerate() {
        start[lowered.index_map[2 * r]] = x;
        start[lowered.index_map[2 * r + 1]] = 1.0 - x;
    }
    start
}

fn readback_violation(kind: &GateType, lowered: &LoweredCircuit, values: &[f64]) -> f64 {
    let source = lowered.read_back(values);
    let arity = kind.arity();
    let args: Vec<f64> = (0..arity).map(|r| source[2 * r]).collect();
    (source[2 * arity] - gate_eval(kind, &args).unwrap()).abs()
}

/// Exact soundness on an input grid, then `trials` solves with every non-pin lowered gate
/// offset by `±ε` (random signs) for each `ε` in `eps_list`.
pub fn lowering_trial(target: GateSet, kind: &GateType, eps_list: &[f64], trials: usize, seed: u64) -> LoweringTrial {
    let source = rule_circuit(kind);
    let arity = kind.arity();
    let rule = format!("{target:?}/{}{}", kind.name(), kind.zeta().map(|z| format!("({})", z.exact())).unwrap_or_default());
    let exact = lower_circuit(&source, target, &rat(0, 1)).unwrap();
    let multiplier = exact.gate_multipliers[2 * arity];
    let grid = [0.0, 0.25, 0.5, 0.8, 1.0];
    let input_sets: Vec<Vec<f64>> = match arity {
        0 => vec![vec![]],
        1 => grid.iter().map(|&x| vec![x]).collect(),
        _ => grid.iter().flat_map(|&x| grid.iter().map(move |&y| vec![x, y])).collect(),
    };
    let exact_error = input_sets
        .iter()
        .map(|inputs| {
            let config = IterateConfig { initial: Some(pinned_start(&exact, inputs)), ..IterateConfig::default() };
            let out = iterate_solve(&exact.circuit, &config).unwrap();
            readback_violation(kind, &exact, &out.values) + if out.converged { 0.0 } else { 1.0 }
        })
        .fold(0.0, f64::max);
    let mut zeta_error = exact.zeta_error;
    let perturbed_ratio = matches!(multiplier, Multiplier::Bounded(_)).then(|| {
        let mut rng = rng(seed);
        let mut worst = 0.0f64;
        for &eps in eps_list {
            let lowered = lower_circuit(&source, target, &f64_to_rational(eps)).unwrap();
            zeta_error = zeta_error.max(lowered.zeta_error);
            let pins: Vec<usize> = lowered.index_map[..2 * arity].to_vec();
            for _ in 0..trials {
                let inputs: Vec<f64> = (0..arity).map(|_| rng.gen()).collect();
                let offsets: Vec<f64> = (0..lowered.circuit.len())
                    .map(|g| if pins.contains(&g) { 0.0 } else if rng.gen() { eps } else { -eps })
                    .collect();
                let config = IterateConfig { initial: Some(pinned_start(&lowered, &inputs)), ..IterateConfig::default() };
                let out = iterate_solve_perturbed(&lowered.circuit, &offsets, &config).unwrap();
                // The solve satisfies every lowered gate to within ε plus its own residual.
                let achieved = eps + out.residual;
                let violation = readback_violation(kind, &lowered, &out.values) - lowered.zeta_error;
                worst = worst.max(violation / achieved);
            }
        }
        worst
    });
    LoweringTrial { rule, multiplier, exact_error, perturbed_ratio, zeta_error }
}

/// Every non-native rule of every target set, with a few `ζ` values.
pub fn lowering_rules() -> Vec<(GateSet, GateType)> {
    let zeta = |n, d| RatConst::new(rat(n, d));
    let common = vec![GateType::One, GateType::Copy, GateType::Half, GateType::Sub];
    let mut rules = Vec::new();
    for kind in common.iter().cloned().chain([
        GateType::Times2,
        GateType::TimesZeta(zeta(0, 1)),
        GateType::TimesZeta(zeta(1, 1)),
        GateType::TimesZeta(zeta(3, 7)),
        GateType::Const(zeta(0, 1)),
        GateType::Const(zeta(1, 1)),
        GateType::Const(zeta(3, 7)),
    ]) {
        rules.push((GateSet::AddComplement, kind));
    }
    let analytic = [
        GateType::Inv,
        GateType::Add,
        GateType::Max,
        GateType::Min,
        GateType::Mul,
        GateType::Square,
        GateType::Const(zeta(0, 1)),
        GateType::Const(zeta(1, 1)),
        GateType::Const(zeta(2, 5)),
        GateType::TimesZeta(zeta(3, 7)),
    ];
    for kind in common.iter().cloned().chain(analytic.iter().cloned()) {
        rules.push((GateSet::Reduction, kind));
    }
    for kind in common.into_iter().chain(analytic).chain([GateType::Phi]) {
        rules.push((GateSet::Fixp, kind));
    }
    rules
}

/// Working-scale value encoded by a second jump point.
pub fn decode_working(a1: f64) -> f64 {
    (3.0 * (a1 - 7.0 / 3.0)).clamp(0.0, 1.0)
}

/// Base-gadget output predicted from the input's second jump point.
pub fn base_formula(params: &BaseParams, a1: f64) -> f64 {
    let q = |x: &Rational| x.to_f64().unwrap();
    let (gl, gr, l, r) = (q(&params.gamma_l), q(&params.gamma_r), q(&params.left), q(&params.right));
    let t = a1.clamp(2.0 + l, 2.0 + r);
    (3.0 * gl - 1.0) + 3.0 * (1.0 - gl - gr) * (t - (2.0 + l)) / (r - l)
}

/// Valid working-scale jumps encoding `v`, with the free jump points varied by `salt`.
pub fn valid_input(v: f64, salt: usize) -> [f64; 4] {
    let first = 1.0 + 0.5 * ((salt * 3) % 7) as f64 / 6.0;
    let third = 3.5 + 1.5 * ((salt * 5) % 9) as f64 / 8.0;
    [first, 7.0 / 3.0 + v / 3.0, third, 5.0]
}

/// One isolated gadget solve checked against its claim.
#[derive(Clone, Debug)]
pub struct ClaimCheck {
    pub gadget: &'static str,
    pub inputs: Vec<[f64; 4]>,
    pub certified: bool,
    pub output_valid: bool,
    /// Working-scale `|v_out − predicted|`; 0 when only validity is claimed.
    pub error: f64,
    pub bound: f64,
    pub jump_violations: Vec<String>,
}

impl ClaimCheck {
    pub fn holds(&self) -> bool {
        self.certified && self.output_valid && self.error <= self.bound && self.jump_violations.is_empty()
    }
}

/// Solves the gadget's test auction at `eps` (value scale) with inputs held fixed and checks
/// the output against `predicted` within `factor·5·eps`; `None` checks validity only.
pub fn check_gadget(
    name: &'static str,
    gadget: &Gadget,
    inputs: Vec<[f64; 4]>,
    predicted: Option<f64>,
    factor: f64,
    eps: f64,
) -> ClaimCheck {
    let bed = gadget_testbed(gadget, &inputs).unwrap();
    let config = SolverConfig { restarts: 4, frozen: bed.frozen.clone(), start: Some(bed.start.clone()), ..SolverConfig::default() };
    let out = solve_fixed_point(&bed.auction, &f64_to_rational(eps), &config).unwrap();
    let eps_working = WORKING_SCALE as f64 * eps;
    let validity = is_valid_bidder(&out.profile, bed.output, &eps_working);
    let jump_violations = std::iter::once(bed.output)
        .chain(bed.aux.iter().copied())
        .flat_map(|i| jump_inequality_violations(&bed.auction, &out.profile, i, eps_working, 1e-9))
        .collect();
    let a1 = out.profile.bidder(bed.output)[1] * WORKING_SCALE as f64;
    let error = predicted.map_or(0.0, |p| (decode_working(a1) - p).abs());
    ClaimCheck {
        gadget: name,
        inputs,
        certified: out.certified,
        output_valid: validity.valid,
        error,
        bound: factor * eps_working,
        jump_violations,
    }
}

/// `count` claim checks per gadget at value-scale `eps`.
pub fn gadget_claims(count: usize, eps: f64) -> Vec<ClaimCheck> {
    let value = |k: usize| k as f64 / (count.max(2) - 1) as f64;
    let mut checks = Vec::new();
    let base = BaseParams::standard();
    for k in 0..count {
        // Every fifth input is almost valid only, exercising the truncation.
        let mut input = valid_input(value(k), k);
        if k % 5 == 4 {
            input[1] = 2.0 + (k % 3) as f64 * 0.45;
        }
        let predicted = base_formula(&base, input[1]);
        checks.push(check_gadget("base", &Gadget::Base(base.clone()), vec![input], Some(predicted), 6.0, eps));
    }
    let adversarial = [[1.0, 3.0, 3.0, 4.0], [4.5, 4.6, 4.7, 5.0], [1.0, 2.0, 3.0, 4.0], [2.0, 2.0, 5.0, 5.0], [1.5, 2.2, 3.2, 4.1]];
    for k in 0..count {
        let check = if k % 4 == 3 {
            check_gadget("projection", &Gadget::Projection, vec![adversarial[(k / 4) % adversarial.len()]], None, 18.0, eps)
        } else {
            let v = value(k);
            check_gadget("projection", &Gadget::Projection, vec![valid_input(v, k)], Some(v), 18.0, eps)
        };
        checks.push(check);
    }
    for k in 0..count {
        let v = value(k);
        checks.push(check_gadget("times2", &Gadget::Times2, vec![valid_input(v, k)], Some((2.0 * v).min(1.0)), 24.0, eps));
    }
    for k in 0..count {
        let v = value(k);
        checks.push(check_gadget("complement", &Gadget::Complement, vec![valid_input(v, k)], Some(1.0 - v), 60.0, eps));
    }
    for k in 0..count {
        let (x, y) = (value(k), value((7 * k + 3) % count));
        let predicted = (x + 1.0) * (y + 1.0) / 4.0;
        let inputs = vec![valid_input(x, k), valid_input(y, k + 1)];
        checks.push(check_gadget("phi", &Gadget::Phi, inputs, Some(predicted), 86.0, eps));
    }
    checks
}
