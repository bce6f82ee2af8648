//! Compiles generalized circuits over `{G×2, G₁₋, G_φ}` into first-price auctions whose
//! approximate equilibria encode approximately satisfying assignments.
//!
//! Gadgets are laid out on the working value scale `[0, 5]` with bids `{0, 1, 2, 3, 4}`;
//! the emitted instance divides every block endpoint and bid by 5.

use num_traits::{One, Signed, Zero};

use crate::auction::{verify_epsilon_bne, win_probs, AuctionInstance, StrategyProfile};
use crate::brouwer::DomainPoint;
use crate::distributions::{Block, PiecewiseCdf};
use crate::error::{FpaError, Result};
use crate::gcircuit::{check_assignment, GateType, GeneralizedCircuit};
use crate::scalar::{rat, Rational, Scalar};

/// Ratio between the working scale and the emitted value space.
pub const WORKING_SCALE: i64 = 5;
/// Auxiliary bidders reserved per gate-bidder.
pub const AUX_PER_GATE: usize = 9;
/// Auctions smaller than this are padded with inert bidders.
pub const MIN_BIDDERS: usize = 24;
/// Largest `eps` (value space `[0, 1]`) covered by the decoding guarantee.
pub const MAX_EPS: f64 = 1e-5;
/// Gate slack guaranteed at an ε-equilibrium, as a multiple of `eps`.
pub const DECODE_FACTOR: f64 = 500.0;

/// `(γ_ℓ, γ_r, ℓ, r)` of a base gadget: mass `γ_ℓ` on `[3/2, 7/4]`, `1 − γ_ℓ − γ_r`
/// on `[2 + ℓ, 2 + r]` and `γ_r` on `[13/4, 7/2]`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BaseParams {
    pub gamma_l: Rational,
    pub gamma_r: Rational,
    pub left: Rational,
    pub right: Rational,
}

impl BaseParams {
    pub fn new(gamma_l: Rational, gamma_r: Rational, left: Rational, right: Rational) -> Result<Self> {
        let unit = |q: &Rational| !q.is_negative() && *q <= Rational::one();
        let mut problems = Vec::new();
        if !(unit(&gamma_l) && unit(&gamma_r) && unit(&left) && unit(&right)) {
            problems.push("base gadget parameters must lie in [0, 1]".to_string());
        }
        if &gamma_l + &gamma_r >= Rational::one() {
            problems.push("base gadget needs γ_ℓ + γ_r < 1".to_string());
        }
        if left >= right {
            problems.push("base gadget needs ℓ < r".to_string());
        }
        if !problems.is_empty() {
            return Err(FpaError::Domain(problems.join("; ")));
        }
        Ok(Self { gamma_l, gamma_r, left, right })
    }

    /// `(1/3, 1/3, 1/3, 2/3)`, which copies the encoded value.
    pub fn standard() -> Self {
        Self::from_ints((1, 3), (1, 3), (1, 3), (2, 3))
    }

    fn from_ints(gl: (i64, i64), gr: (i64, i64), l: (i64, i64), r: (i64, i64)) -> Self {
        Self::new(rat(gl.0, gl.1), rat(gr.0, gr.1), rat(l.0, l.1), rat(r.0, r.1)).expect("valid constants")
    }

    pub fn blocks(&self) -> Vec<Block> {
        let two = rat(2, 1);
        vec![
            Block::new(rat(3, 2), rat(7, 4), self.gamma_l.clone()),
            Block::new(&two + &self.left, &two + &self.right, Rational::one() - &self.gamma_l - &self.gamma_r),
            Block::new(rat(13, 4), rat(7, 2), self.gamma_r.clone()),
        ]
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Gadget {
    Base(BaseParams),
    /// Three standard base gadgets in series; the output is valid whatever the input does.
    Projection,
    Times2,
    Complement,
    Phi,
}

impl Gadget {
    pub fn num_inputs(&self) -> usize {
        match self {
            Gadget::Phi => 2,
            _ => 1,
        }
    }

    pub fn num_aux(&self) -> usize {
        match self {
            Gadget::Base(_) => 0,
            Gadget::Projection => 2,
            Gadget::Times2 => 3,
            Gadget::Complement => 5,
            Gadget::Phi => 8,
        }
    }

    /// The gadget simulating a gate, if the gate type has one.
    pub fn for_gate(kind: &GateType) -> Option<Self> {
        match kind {
            GateType::Times2 => Some(Gadget::Times2),
            GateType::OneMinus => Some(Gadget::Complement),
            GateType::Phi => Some(Gadget::Phi),
            _ => None,
        }
    }
}

/// Prior matrix under construction on the working scale. Each row is written once, by the
/// gadget whose output (or internal) bidder owns it; entries not written are null blocks.
#[derive(Clone, Debug)]
pub struct WorkingPriors {
    rows: Vec<Option<Vec<(usize, Vec<Block>)>>>,
}

fn null_blocks() -> Vec<Block> {
    vec![Block::new(Rational::zero(), Rational::one(), Rational::one())]
}

impl WorkingPriors {
    pub fn new(n: usize) -> Self {
        Self { rows: vec![None; n] }
    }

    pub fn n(&self) -> usize {
        self.rows.len()
    }

    /// Working-scale blocks of `F_{i,j}`; unwritten entries read as the null block.
    pub fn blocks(&self, i: usize, j: usize) -> Vec<Block> {
        self.rows[i]
            .as_ref()
            .and_then(|row| row.iter().find(|(t, _)| *t == j))
            .map_or_else(null_blocks, |(_, b)| b.clone())
    }

    fn set_row(&mut self, i: usize, entries: Vec<(usize, Vec<Block>)>) -> Result<()> {
        let n = self.n();
        if i >= n || entries.iter().any(|(j, _)| *j >= n || *j == i) {
            return Err(FpaError::Domain(format!("row {i} references a bidder outside 0..{n} or itself")));
        }
        if self.rows[i].is_some() {
            return Err(FpaError::Domain(format!("bidder {i} is already the output of another gadget")));
        }
        self.rows[i] = Some(entries);
        Ok(())
    }

    /// Writes the rows of `gadget` with the given input, output and auxiliary bidders.
    pub fn emit_gadget(&mut self, gadget: &Gadget, inputs: &[usize], output: usize, aux: &[usize]) -> Result<()> {
        if inputs.len() != gadget.num_inputs() || aux.len() != gadget.num_aux() {
            return Err(FpaError::Domain(format!(
                "{gadget:?} takes {} inputs and {} auxiliaries",
                gadget.num_inputs(),
                gadget.num_aux()
            )));
        }
        let mut ids: Vec<usize> = inputs.iter().chain(aux).copied().chain(std::iter::once(output)).collect();
        ids.sort_unstable();
        if ids.windows(2).any(|w| w[0] == w[1]) {
            return Err(FpaError::Domain(format!("bidder ids collide in {gadget:?}: inputs {inputs:?}, output {output}, aux {aux:?}")));
        }
        let base = |s: &mut Self, p: &BaseParams, j: usize, i: usize| s.set_row(i, vec![(j, p.blocks())]);
        let standard = BaseParams::standard();
        match gadget {
            Gadget::Base(p) => base(self, p, inputs[0], output),
            Gadget::Projection => {
                let (k, k2) = (aux[0], aux[1]);
                base(self, &standard, inputs[0], k)?;
                base(self, &standard, k, k2)?;
                base(self, &standard, k2, output)
            }
            Gadget::Times2 => {
                let k = aux[0];
                base(self, &BaseParams::from_ints((1, 3), (1, 3), (1, 3), (1, 2)), inputs[0], k)?;
                self.emit_gadget(&Gadget::Projection, &[k], output, &aux[1..3])
            }
            Gadget::Complement => {
                let (k1, k2, k3) = (aux[0], aux[1], aux[2]);
                base(self, &BaseParams::from_ints((1, 6), (2, 3), (1, 3), (2, 3)), inputs[0], k1)?;
                self.set_row(
                    k2,
                    vec![(k1, vec![Block::new(rat(3, 2), rat(7, 4), rat(2, 3)), Block::new(rat(4, 1), rat(5, 1), rat(1, 3))])],
                )?;
                base(self, &BaseParams::from_ints((1, 3), (1, 3), (2, 3), (5, 6)), k2, k3)?;
                self.emit_gadget(&Gadget::Projection, &[k3], output, &aux[3..5])
            }
            Gadget::Phi => {
                let (k1, k2, k3) = (aux[0], aux[1], aux[2]);
                let sensor = BaseParams::from_ints((1, 20), (8, 20), (1, 3), (2, 3)).blocks();
                self.set_row(k1, vec![(inputs[0], sensor.clone()), (inputs[1], sensor)])?;
                self.set_row(
                    k2,
                    vec![(k1, vec![Block::new(rat(3, 2), rat(7, 4), rat(1, 2)), Block::new(rat(7, 2), rat(5, 1), rat(1, 2))])],
                )?;
                base(self, &BaseParams::from_ints((1, 3), (5, 12), (104, 200), (779, 800)), k2, k3)?;
                self.emit_gadget(&Gadget::Complement, &[k3], output, &aux[3..8])
            }
        }
    }

    /// Rescales every block by `1/5` and builds the instance with bids `{0, 1/5, …, 4/5}`.
    pub fn finish(&self) -> Result<AuctionInstance> {
        let n = self.n();
        let scale = Rational::from_integer(WORKING_SCALE.into());
        let null = PiecewiseCdf::from_blocks(&scaled(&null_blocks(), &scale))?;
        let priors = (0..n)
            .map(|i| {
                (0..n)
                    .map(|j| {
                        if i == j {
                            return Ok(None);
                        }
                        match self.rows[i].as_ref().and_then(|row| row.iter().find(|(t, _)| *t == j)) {
                            Some((_, blocks)) => PiecewiseCdf::from_blocks(&scaled(blocks, &scale)).map(Some),
                            None => Ok(Some(null.clone())),
                        }
                    })
                    .collect::<Result<Vec<_>>>()
            })
            .collect::<Result<Vec<_>>>()?;
        AuctionInstance::new(working_bids(), priors)
    }
}

fn scaled(blocks: &[Block], scale: &Rational) -> Vec<Block> {
    blocks
        .iter()
        .map(|b| Block::new(&b.lo / scale, &b.hi / scale, b.volume.clone()))
        .collect()
}

/// `{0, 1/5, 2/5, 3/5, 4/5}`.
pub fn working_bids() -> Vec<Rational> {
    (0..WORKING_SCALE).map(|k| rat(k, WORKING_SCALE)).collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Role {
    /// Carries the value of gate `g_i`.
    Gate(usize),
    /// Slot `slot` of gate `owner`'s private pool.
    Auxiliary { owner: usize, slot: usize },
    /// Padding; every prior about it is a null block.
    Inert,
}

/// Decoding `v = trunc_[0,1](factor·(scale·α(b_1) − offset))`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DecodeMap {
    pub scale: Rational,
    pub offset: Rational,
    pub factor: Rational,
}

impl Default for DecodeMap {
    fn default() -> Self {
        Self { scale: rat(WORKING_SCALE, 1), offset: rat(7, 3), factor: rat(3, 1) }
    }
}

impl DecodeMap {
    pub fn decode<T: Scalar>(&self, alpha_1: &T) -> T {
        let lift = |q: &Rational| T::lift(&q.clone().into());
        (lift(&self.factor) * (lift(&self.scale) * alpha_1.clone() - lift(&self.offset))).clamp_s(T::zero(), T::one())
    }
}

#[derive(Clone, Debug)]
pub struct ReductionOutput {
    pub auction: AuctionInstance,
    pub roles: Vec<Role>,
    pub num_gates: usize,
    pub decode: DecodeMap,
}

impl ReductionOutput {
    /// Bidder `i`'s private auxiliary pool.
    pub fn aux_pool(num_gates: usize, i: usize) -> Vec<usize> {
        (0..AUX_PER_GATE).map(|s| num_gates + AUX_PER_GATE * i + s).collect()
    }
}

/// Builds the auction for a circuit over `{G×2, G₁₋, G_φ}`; `G_φ` inputs must be distinct.
pub fn build_auction(circuit: &GeneralizedCircuit) -> Result<ReductionOutput> {
    let nu = circuit.len();
    let mut problems = Vec::new();
    for (i, g) in circuit.gates().iter().enumerate() {
        if Gadget::for_gate(&g.kind).is_none() {
            problems.push(format!("gate {i} ({}) is not in {{Gx2, G1-, Gphi}}; lower the circuit first", g.kind.name()));
        } else if g.kind == GateType::Phi && g.inputs[0] == g.inputs[1] {
            problems.push(format!("gate {i} reads gate {} twice; Gphi needs distinct inputs", g.inputs[0]));
        }
    }
    if !problems.is_empty() {
        return Err(FpaError::Precondition(problems));
    }
    let used = (1 + AUX_PER_GATE) * nu;
    let n = used.max(MIN_BIDDERS);
    let mut priors = WorkingPriors::new(n);
    let mut roles: Vec<Role> = (0..n).map(|_| Role::Inert).collect();
    for i in 0..nu {
        roles[i] = Role::Gate(i);
        for (slot, k) in ReductionOutput::aux_pool(nu, i).into_iter().enumerate() {
            roles[k] = Role::Auxiliary { owner: i, slot };
        }
    }
    for (i, g) in circuit.gates().iter().enumerate() {
        let gadget = Gadget::for_gate(&g.kind).expect("checked above");
        let pool = ReductionOutput::aux_pool(nu, i);
        priors.emit_gadget(&gadget, &g.inputs, i, &pool[..gadget.num_aux()])?;
    }
    Ok(ReductionOutput { auction: priors.finish()?, roles, num_gates: nu, decode: DecodeMap::default() })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Validity {
    pub valid: bool,
    pub almost_valid: bool,
}

/// Validity of bidder `i` on the working scale; `eps` is in working-scale units.
pub fn is_valid_bidder<T: Scalar>(profile: &StrategyProfile<T>, i: usize, eps: &T) -> Validity {
    let jumps = profile.bidder(i);
    let five = T::from_i64(WORKING_SCALE);
    let a = |k: usize| five.clone() * jumps.get(k).cloned().unwrap_or_else(T::one);
    let q = |n: i64, d: i64| T::from_i64(n) / T::from_i64(d);
    let within = |x: T, lo: T, hi: T| x >= lo && x <= hi;
    let two_eps = T::from_i64(2) * eps.clone();
    let common = jumps.len() == 5
        && within(a(0), T::one(), q(3, 2))
        && within(a(2), q(7, 2), five.clone())
        && a(3) == five;
    Validity {
        valid: common && within(a(1), q(7, 3) - two_eps.clone(), q(8, 3) + two_eps),
        almost_valid: common && within(a(1), T::from_i64(2), T::from_i64(3)),
    }
}

/// Decoded values of every bidder: `Some` for valid bidders only.
pub fn decode_assignment<T: Scalar>(output: &ReductionOutput, profile: &StrategyProfile<T>, eps: &T) -> Vec<Option<T>> {
    let working_eps = T::from_i64(WORKING_SCALE) * eps.clone();
    (0..output.auction.n())
        .map(|i| {
            is_valid_bidder(profile, i, &working_eps)
                .valid
                .then(|| output.decode.decode(&profile.bidder(i)[1]))
        })
        .collect()
}

#[derive(Clone, Debug)]
pub struct ReductionReport {
    pub values: Vec<f64>,
    /// `|v[g_i] − target_i(v)|` per gate.
    pub slack: Vec<f64>,
    pub max_violation: f64,
    /// Whether every gate is within `500·eps`.
    pub satisfied: bool,
}

/// Checks that an ε-equilibrium of the reduction decodes to a `500ε`-satisfying assignment.
pub fn verify_reduction(
    circuit: &GeneralizedCircuit,
    output: &ReductionOutput,
    profile: &StrategyProfile<f64>,
    eps: f64,
) -> Result<ReductionReport> {
    if !(0.0..=MAX_EPS).contains(&eps) {
        return Err(FpaError::Domain(format!("eps must lie in [0, {MAX_EPS}]")));
    }
    if circuit.len() != output.num_gates {
        return Err(FpaError::Domain("circuit does not match the reduction".into()));
    }
    let report = verify_epsilon_bne(&output.auction, profile, &eps)?;
    if !report.is_eq {
        return Err(FpaError::Precondition(vec![format!(
            "profile is not an eps-BNE: max regret {:.3e} > {eps:.3e}",
            report.max_regret
        )]));
    }
    let decoded = decode_assignment(output, profile, &eps);
    let invalid: Vec<String> = (0..output.num_gates)
        .filter(|&i| decoded[i].is_none())
        .map(|i| format!("gate-bidder {i} is not valid: jumps {:?}", profile.bidder(i)))
        .collect();
    if !invalid.is_empty() {
        return Err(FpaError::Validation(invalid));
    }
    let values: Vec<f64> = decoded[..output.num_gates].iter().map(|v| v.expect("checked")).collect();
    let check = check_assignment(circuit, &values, &(DECODE_FACTOR * eps))?;
    Ok(ReductionReport { values, slack: check.violations, max_violation: check.max_violation, satisfied: check.satisfied })
}

fn lower_bound(num: f64, den: f64) -> f64 {
    if den > 0.0 {
        num / den
    } else if num > 0.0 {
        f64::INFINITY
    } else {
        f64::NEG_INFINITY
    }
}

fn upper_bound(num: f64, den: f64) -> f64 {
    if den > 0.0 {
        num / den
    } else if num < 0.0 {
        f64::NEG_INFINITY
    } else {
        f64::INFINITY
    }
}

/// Necessary conditions on bidder `i`'s four working-scale jump points at any ε-equilibrium,
/// from comparing neighbouring bids at each jump. Returns the violated ones.
///
/// With `H_b` the perceived win probabilities:
/// `α(0) ≤ 1 + (H_0 + ε)/(H_1 − H_0)`; `α(3) = 5` or `α(3) ≥ 4 + (H_3 − ε)/(H_4 − H_3)`;
/// `α(2) ≥ 3 + (H_2 − ε)/(H_3 − H_2)` unless `α(2) = α(3)` and `≤ 3 + (H_2 + ε)/(H_3 − H_2)`
/// unless `α(2) = α(1)`; likewise `α(1)` against `2 + (H_1 ± ε)/(H_2 − H_1)`.
pub fn jump_inequality_violations(
    auction: &AuctionInstance,
    profile: &StrategyProfile<f64>,
    i: usize,
    eps_working: f64,
    tolerance: f64,
) -> Vec<String> {
    let h = win_probs(auction, i, profile.jumps());
    let a: Vec<f64> = profile.bidder(i).iter().map(|x| x * WORKING_SCALE as f64).collect();
    if h.len() != 5 || a.len() != 5 {
        return vec!["jump inequalities need the five-bid space".into()];
    }
    let e = eps_working;
    let mut out = Vec::new();
    let bound0 = 1.0 + upper_bound(h[0] + e, h[1] - h[0]);
    if a[0] > bound0 + tolerance {
        out.push(format!("jump-0: α(0) = {} > {bound0}", a[0]));
    }
    let bound3 = 4.0 + lower_bound(h[3] - e, h[4] - h[3]);
    if a[3] != 5.0 && a[3] < bound3 - tolerance {
        out.push(format!("jump-3: α(3) = {} < {bound3}", a[3]));
    }
    for (k, name) in [(2usize, "jump-2"), (1, "jump-1")] {
        let base = k as f64 + 1.0;
        let lo = base + lower_bound(h[k] - e, h[k + 1] - h[k]);
        let hi = base + upper_bound(h[k] + e, h[k + 1] - h[k]);
        if a[k] != a[k + 1] && a[k] < lo - tolerance {
            out.push(format!("{name}: α({k}) = {} < {lo}", a[k]));
        }
        if a[k] != a[k - 1] && a[k] > hi + tolerance {
            out.push(format!("{name}: α({k}) = {} > {hi}", a[k]));
        }
    }
    out
}

/// A single gadget embedded in a padded auction, with its inputs held at fixed strategies.
#[derive(Clone, Debug)]
pub struct GadgetTestbed {
    pub auction: AuctionInstance,
    pub inputs: Vec<usize>,
    pub output: usize,
    pub aux: Vec<usize>,
    /// Inputs and inert padding; excluded from the equilibrium conditions.
    pub frozen: Vec<usize>,
    pub start: DomainPoint<f64>,
}

/// Inputs occupy the first bidders, then the output, then the auxiliaries; padding fills
/// the rest up to 24 bidders. `input_jumps` are working-scale `α(0..=3)` per input.
pub fn gadget_testbed(gadget: &Gadget, input_jumps: &[[f64; 4]]) -> Result<GadgetTestbed> {
    if input_jumps.len() != gadget.num_inputs() {
        return Err(FpaError::Domain(format!("{gadget:?} takes {} inputs", gadget.num_inputs())));
    }
    let k_in = gadget.num_inputs();
    let output = k_in;
    let aux: Vec<usize> = (k_in + 1..k_in + 1 + gadget.num_aux()).collect();
    let n = (k_in + 1 + gadget.num_aux()).max(MIN_BIDDERS);
    let inputs: Vec<usize> = (0..k_in).collect();
    let mut priors = WorkingPriors::new(n);
    priors.emit_gadget(gadget, &inputs, output, &aux)?;
    let auction = priors.finish()?;
    let scale = WORKING_SCALE as f64;
    // Free bidders start at a valid strategy; inert bidders bid as high as allowed.
    let valid_start = [1.2, 2.5, 4.0, 5.0];
    let coords = (0..n)
        .map(|i| {
            let row: Vec<f64> = if i < k_in {
                input_jumps[i].iter().map(|x| x / scale).collect()
            } else if i <= k_in + gadget.num_aux() {
                valid_start.iter().map(|x| x / scale).collect()
            } else {
                (1..=4).map(|k| k as f64 / scale).collect()
            };
            row
        })
        .collect();
    let start = DomainPoint::new(coords);
    let v = start.violations(&auction);
    if !v.is_empty() {
        return Err(FpaError::Precondition(v));
    }
    let frozen = inputs.iter().copied().chain(k_in + 1 + gadget.num_aux()..n).collect();
    Ok(GadgetTestbed { auction, inputs, output, aux, frozen, start })
}
