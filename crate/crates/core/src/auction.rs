//! First-price auction semantics: perceived bid probabilities, the tie-table DP,
//! interim utilities, exact best responses and the ε-BNE verifier.
//!
//! Bids are addressed by their index `k` into the sorted bid space `b_0 = 0 < … < b_m`.
//! A bidder's strategy is its jump vector `α(b_0) ≤ … ≤ α(b_m) = 1`; value `v` bids `b_k`
//! exactly when `α(b_{k-1}) < v ≤ α(b_k)`, with `α(b_{-1}) = 0`.

use num_traits::{One, Signed, Zero};

use crate::distributions::PiecewiseCdf;
use crate::error::{FpaError, Result};
use crate::scalar::{format_rational, f64_to_rational, RatConst, Rational, Scalar};

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct AuctionInstance {
    bids: Vec<RatConst>,
    /// `priors[i][j]` is bidder `i`'s belief about bidder `j`; the diagonal is `None`.
    priors: Vec<Vec<Option<PiecewiseCdf>>>,
}

impl AuctionInstance {
    pub fn new(bids: Vec<Rational>, priors: Vec<Vec<Option<PiecewiseCdf>>>) -> Result<Self> {
        let mut problems = Vec::new();
        let n = priors.len();
        if n < 2 {
            problems.push(format!("need at least 2 bidders, got {n}"));
        }
        if bids.first().map_or(true, |b| !b.is_zero()) {
            problems.push("bid space must start at 0".into());
        }
        if bids.windows(2).any(|w| w[0] >= w[1]) {
            problems.push("bids must be strictly increasing".into());
        }
        if bids.iter().any(|b| b.is_negative() || *b > Rational::one()) {
            problems.push("bids must lie in [0, 1]".into());
        }
        for (i, row) in priors.iter().enumerate() {
            if row.len() != n {
                problems.push(format!("prior row {i} has {} entries, expected {n}", row.len()));
                continue;
            }
            for (j, entry) in row.iter().enumerate() {
                match (i == j, entry) {
                    (true, Some(_)) => problems.push(format!("prior ({i},{i}) must be empty")),
                    (false, None) => problems.push(format!("prior ({i},{j}) is missing")),
                    (false, Some(f)) => problems.extend(
                        f.validate().violations.into_iter().map(|v| format!("prior ({i},{j}): {v}")),
                    ),
                    (true, None) => {}
                }
            }
        }
        if !problems.is_empty() {
            return Err(FpaError::Validation(problems));
        }
        Ok(Self {
            bids: bids.into_iter().map(RatConst::new).collect(),
            priors,
        })
    }

    /// Every bidder holds the same prior `cdf` about every other bidder.
    pub fn symmetric(n: usize, bids: Vec<Rational>, cdf: &PiecewiseCdf) -> Result<Self> {
        let priors = (0..n)
            .map(|i| (0..n).map(|j| (i != j).then(|| cdf.clone())).collect())
            .collect();
        Self::new(bids, priors)
    }

    pub fn n(&self) -> usize {
        self.priors.len()
    }

    pub fn num_bids(&self) -> usize {
        self.bids.len()
    }

    /// Jump coordinates per bidder in the Brouwer domain, `|B| − 1`.
    pub fn m(&self) -> usize {
        self.bids.len() - 1
    }

    pub fn bids(&self) -> &[RatConst] {
        &self.bids
    }

    pub fn bid(&self, k: usize) -> &RatConst {
        &self.bids[k]
    }

    /// Index of `b` in the bid space.
    pub fn bid_index(&self, b: &Rational) -> Result<usize> {
        self.bids
            .iter()
            .position(|c| c.exact() == b)
            .ok_or_else(|| FpaError::Domain(format!("{} is not a bid", format_rational(b))))
    }

    /// `F_{i,j}`: bidder `i`'s prior on bidder `j`'s value.
    pub fn prior(&self, i: usize, j: usize) -> &PiecewiseCdf {
        self.priors[i][j].as_ref().expect("off-diagonal prior")
    }

    /// All off-diagonal priors as `(i, j, F_{i,j})`.
    pub fn priors(&self) -> impl Iterator<Item = (usize, usize, &PiecewiseCdf)> {
        self.priors
            .iter()
            .enumerate()
            .flat_map(|(i, row)| row.iter().enumerate().filter_map(move |(j, f)| f.as_ref().map(|f| (i, j, f))))
    }

    fn check_bidder(&self, i: usize) -> Result<()> {
        if i >= self.n() {
            return Err(FpaError::Domain(format!("bidder {i} out of range")));
        }
        Ok(())
    }

    fn check_bid(&self, k: usize) -> Result<()> {
        if k >= self.num_bids() {
            return Err(FpaError::Domain(format!("bid index {k} out of range")));
        }
        Ok(())
    }
}

/// Jump points `α_i(b_k)` for every bidder, `|B|` entries each.
#[derive(Clone, Debug, PartialEq)]
pub struct StrategyProfile<T> {
    jumps: Vec<Vec<T>>,
}

impl<T: Scalar> StrategyProfile<T> {
    /// Wraps raw jumps without checking; see [`StrategyProfile::violations`].
    pub fn new(jumps: Vec<Vec<T>>) -> Self {
        Self { jumps }
    }

    /// Every bidder always bids 0.
    pub fn always_zero(instance: &AuctionInstance) -> Self {
        Self::new(vec![vec![T::one(); instance.num_bids()]; instance.n()])
    }

    pub fn jumps(&self) -> &[Vec<T>] {
        &self.jumps
    }

    pub fn bidder(&self, i: usize) -> &[T] {
        &self.jumps[i]
    }

    pub fn set_bidder(&mut self, i: usize, jumps: Vec<T>) {
        self.jumps[i] = jumps;
    }

    pub fn into_jumps(self) -> Vec<Vec<T>> {
        self.jumps
    }

    pub fn map<U: Scalar>(&self, f: impl Fn(&T) -> U) -> StrategyProfile<U> {
        StrategyProfile::new(self.jumps.iter().map(|row| row.iter().map(&f).collect()).collect())
    }

    /// Broken invariants: shape, range, monotonicity, `α(max B) = 1`, no-overbidding.
    pub fn violations(&self, instance: &AuctionInstance) -> Vec<String> {
        let mut out = Vec::new();
        if self.jumps.len() != instance.n() {
            out.push(format!("profile has {} bidders, instance has {}", self.jumps.len(), instance.n()));
            return out;
        }
        for (i, row) in self.jumps.iter().enumerate() {
            if row.len() != instance.num_bids() {
                out.push(format!("bidder {i} has {} jumps, expected {}", row.len(), instance.num_bids()));
                continue;
            }
            for (k, a) in row.iter().enumerate() {
                if *a < T::zero() || *a > T::one() {
                    out.push(format!("bidder {i}: jump {k} outside [0, 1]"));
                }
                if k > 0 && row[k - 1] > *a {
                    out.push(format!("bidder {i}: jumps {} and {k} decrease", k - 1));
                }
                if k + 1 < row.len() && *a < T::lift(instance.bid(k + 1)) {
                    out.push(format!("bidder {i}: jump {k} below bid {} (overbidding)", k + 1));
                }
            }
            if row.last().is_some_and(|a| *a != T::one()) {
                out.push(format!("bidder {i}: last jump must be 1"));
            }
        }
        out
    }

    pub fn ensure_valid(&self, instance: &AuctionInstance) -> Result<()> {
        let v = self.violations(instance);
        if v.is_empty() {
            Ok(())
        } else {
            Err(FpaError::Precondition(v))
        }
    }
}

impl StrategyProfile<f64> {
    /// Exact rational image of every float jump.
    pub fn to_rational(&self) -> StrategyProfile<Rational> {
        self.map(|x| f64_to_rational(*x))
    }
}

impl StrategyProfile<Rational> {
    pub fn to_f64(&self) -> StrategyProfile<f64> {
        self.map(Scalar::as_f64)
    }
}

/// Perceived probabilities `(G, g)` that opponent `j` bids below / exactly `b_k`, from `i`'s view.
///
/// `G` at `b_0` is 0: nobody bids below the lowest bid.
pub fn bid_probabilities<T: Scalar>(
    instance: &AuctionInstance,
    i: usize,
    j: usize,
    k: usize,
    opponent_jumps: &[T],
) -> (T, T) {
    let f = instance.prior(i, j);
    let below = if k == 0 { T::zero() } else { f.eval(&opponent_jumps[k - 1]) };
    let at = f.eval(&opponent_jumps[k]) - below.clone();
    (below, at)
}

/// Folds one opponent into a tie-table row in place; `filled` opponents are already in.
fn absorb<T: Scalar>(row: &mut [T], filled: usize, below: &T, at: &T) {
    if below.is_zero() && *at == T::one() {
        for k in (1..=filled + 1).rev() {
            row[k] = row[k - 1].clone();
        }
        row[0] = T::zero();
        return;
    }
    if *below == T::one() && at.is_zero() {
        return;
    }
    for k in (0..=filled + 1).rev() {
        let stay = row[k].clone() * below.clone();
        row[k] = if k > 0 { stay + row[k - 1].clone() * at.clone() } else { stay };
    }
}

fn tie_row<T: Scalar>(n: usize, pairs: impl Iterator<Item = (T, T)>) -> Vec<T> {
    let mut row = vec![T::zero(); n];
    row[0] = T::one();
    for (filled, (below, at)) in pairs.enumerate() {
        absorb(&mut row, filled, &below, &at);
    }
    row
}

fn win_from_row<T: Scalar>(row: &[T]) -> T {
    row.iter()
        .enumerate()
        .fold(T::zero(), |acc, (k, t)| acc + t.clone() / T::from_i64(k as i64 + 1))
}

/// `T(b_k, n−1, ·)`: probabilities that exactly `k'` opponents tie at `b_k` and the rest bid lower.
pub fn tie_table<T: Scalar>(
    instance: &AuctionInstance,
    i: usize,
    k: usize,
    profile: &StrategyProfile<T>,
) -> Result<Vec<T>> {
    instance.check_bidder(i)?;
    instance.check_bid(k)?;
    Ok(tie_row(
        instance.n(),
        (0..instance.n())
            .filter(|&j| j != i)
            .map(|j| bid_probabilities(instance, i, j, k, profile.bidder(j))),
    ))
}

/// `H_i(b_k)`: bidder `i`'s perceived probability of winning with bid `b_k`.
pub fn win_prob<T: Scalar>(instance: &AuctionInstance, i: usize, k: usize, profile: &StrategyProfile<T>) -> Result<T> {
    Ok(win_from_row(&tie_table(instance, i, k, profile)?))
}

/// `H_i(b)` for every bid at once, evaluating each prior once per jump.
pub fn win_probs<T: Scalar>(instance: &AuctionInstance, i: usize, jumps: &[Vec<T>]) -> Vec<T> {
    let n = instance.n();
    let cdf_values: Vec<(usize, Vec<T>)> = (0..n)
        .filter(|&j| j != i)
        .map(|j| {
            let f = instance.prior(i, j);
            (j, jumps[j].iter().map(|a| f.eval(a)).collect())
        })
        .collect();
    (0..instance.num_bids())
        .map(|k| {
            let pairs = cdf_values.iter().map(|(_, vals)| {
                let below = if k == 0 { T::zero() } else { vals[k - 1].clone() };
                let at = vals[k].clone() - below.clone();
                (below, at)
            });
            win_from_row(&tie_row(n, pairs))
        })
        .collect()
}

/// Win probability by explicit summation over tie sets; exponential in `n`.
pub fn brute_force_win_prob<T: Scalar>(
    instance: &AuctionInstance,
    i: usize,
    k: usize,
    profile: &StrategyProfile<T>,
) -> Result<T> {
    const MAX_BIDDERS: usize = 16;
    instance.check_bidder(i)?;
    instance.check_bid(k)?;
    if instance.n() > MAX_BIDDERS {
        return Err(FpaError::Resource(format!(
            "subset enumeration limited to {MAX_BIDDERS} bidders, got {}",
            instance.n()
        )));
    }
    let probs: Vec<(T, T)> = (0..instance.n())
        .filter(|&j| j != i)
        .map(|j| bid_probabilities(instance, i, j, k, profile.bidder(j)))
        .collect();
    let mut total = T::zero();
    for mask in 0u32..(1u32 << probs.len()) {
        let term = probs.iter().enumerate().fold(T::one(), |acc, (pos, (below, at))| {
            acc * if mask & (1 << pos) != 0 { at.clone() } else { below.clone() }
        });
        total = total + term / T::from_i64(i64::from(mask.count_ones()) + 1);
    }
    Ok(total)
}

/// `u_i(b_k; v) = (v − b_k)·H_i(b_k)`.
pub fn utility<T: Scalar>(
    instance: &AuctionInstance,
    i: usize,
    k: usize,
    profile: &StrategyProfile<T>,
    value: &T,
) -> Result<T> {
    Ok((value.clone() - T::lift(instance.bid(k))) * win_prob(instance, i, k, profile)?)
}

/// Value at which bidding `b_hi` starts to beat `b_lo`; `Never` when it never does.
#[derive(Clone, Debug, PartialEq)]
pub enum Crossing<T> {
    At(T),
    Never,
}

impl<T: Scalar> Crossing<T> {
    fn min(self, other: Self) -> Self {
        match (self, other) {
            (Crossing::Never, x) | (x, Crossing::Never) => x,
            (Crossing::At(a), Crossing::At(b)) => Crossing::At(a.min_s(b)),
        }
    }

    fn max(self, other: Self) -> Self {
        match (self, other) {
            (Crossing::Never, _) | (_, Crossing::Never) => Crossing::Never,
            (Crossing::At(a), Crossing::At(b)) => Crossing::At(a.max_s(b)),
        }
    }
}

/// `α̃(b_lo, b_hi) = (b_hi·H_hi − b_lo·H_lo)/(H_hi − H_lo)`.
pub fn crossing<T: Scalar>(b_lo: &T, h_lo: &T, b_hi: &T, h_hi: &T) -> Crossing<T> {
    if h_hi <= h_lo {
        return Crossing::Never;
    }
    Crossing::At((b_hi.clone() * h_hi.clone() - b_lo.clone() * h_lo.clone()) / (h_hi.clone() - h_lo.clone()))
}

/// Jump vector of the upper envelope of the lines `v ↦ (v − b)·H(b)`, ties to the lower bid.
pub fn envelope_jumps<T: Scalar>(bids: &[RatConst], wins: &[T]) -> Vec<T> {
    let count = bids.len();
    let b: Vec<T> = bids.iter().map(T::lift).collect();
    let inner: Vec<Crossing<T>> = (0..count)
        .map(|p| {
            ((p + 1)..count)
                .map(|q| crossing(&b[p], &wins[p], &b[q], &wins[q]))
                .fold(Crossing::Never, Crossing::min)
        })
        .collect();
    let mut jumps = Vec::with_capacity(count);
    let mut best = Crossing::At(T::zero());
    for k in 0..count {
        best = best.max(inner[k].clone());
        let floor = match jumps.last() {
            Some(prev) => {
                let prev: &T = prev;
                let bid_floor = b.get(k + 1).cloned().unwrap_or_else(T::one);
                prev.clone().max_s(bid_floor)
            }
            None => b.get(1).cloned().unwrap_or_else(T::one),
        };
        let raw = match &best {
            Crossing::At(x) => x.clone(),
            Crossing::Never => T::one(),
        };
        let value = if k + 1 == count { T::one() } else { raw.clamp_s(floor, T::one()) };
        jumps.push(value);
    }
    jumps
}

/// Exact best response of bidder `i` to the others' strategies in `profile`.
pub fn best_response<T: Scalar>(instance: &AuctionInstance, i: usize, profile: &StrategyProfile<T>) -> Result<Vec<T>> {
    instance.check_bidder(i)?;
    let wins = win_probs(instance, i, profile.jumps());
    Ok(envelope_jumps(instance.bids(), &wins))
}

/// A violated per-interval deviation inequality: at `value`, bidder `bidder` gains `gain` by
/// switching from bid index `bid` to `deviation`.
#[derive(Clone, Debug, PartialEq)]
pub struct Witness<T> {
    pub bidder: usize,
    pub bid: usize,
    pub deviation: usize,
    pub value: T,
    pub gain: T,
}

#[derive(Clone, Debug, PartialEq)]
pub struct BneReport<T> {
    pub is_eq: bool,
    /// Largest deviation gain over all checked inequalities, floored at 0.
    pub max_regret: T,
    /// Every inequality whose gain exceeds `eps`.
    pub witnesses: Vec<Witness<T>>,
}

/// Regret check restricted to `bidders`; the others are treated as fixed environment.
pub fn verify_bidders<T: Scalar>(
    instance: &AuctionInstance,
    profile: &StrategyProfile<T>,
    eps: &T,
    bidders: &[usize],
) -> Result<BneReport<T>> {
    profile.ensure_valid(instance)?;
    if *eps < T::zero() {
        return Err(FpaError::Domain("eps must be non-negative".into()));
    }
    let bids: Vec<T> = instance.bids().iter().map(T::lift).collect();
    let mut max_regret = T::zero();
    let mut witnesses = Vec::new();
    for &i in bidders {
        instance.check_bidder(i)?;
        let wins = win_probs(instance, i, profile.jumps());
        let jumps = profile.bidder(i);
        let util = |k: usize, v: &T| (v.clone() - bids[k].clone()) * wins[k].clone();
        for k in 0..bids.len() {
            let lower = if k == 0 { T::zero() } else { jumps[k - 1].clone() };
            let upper = jumps[k].clone();
            if lower >= upper {
                continue;
            }
            let checks = (0..k).map(|d| (d, lower.clone())).chain(((k + 1)..bids.len()).map(|d| (d, upper.clone())));
            for (d, v) in checks {
                let gain = util(d, &v) - util(k, &v);
                if gain > max_regret {
                    max_regret = gain.clone();
                }
                if gain > *eps {
                    witnesses.push(Witness { bidder: i, bid: k, deviation: d, value: v, gain });
                }
            }
        }
    }
    Ok(BneReport { is_eq: witnesses.is_empty(), max_regret, witnesses })
}

/// Interval-wise check of the ε-BNE property over all bidders.
pub fn verify_epsilon_bne<T: Scalar>(
    instance: &AuctionInstance,
    profile: &StrategyProfile<T>,
    eps: &T,
) -> Result<BneReport<T>> {
    let all: Vec<usize> = (0..instance.n()).collect();
    verify_bidders(instance, profile, eps, &all)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instances;
    use crate::scalar::rat;

    #[test]
    fn singleton_bid_space_is_trivial_equilibrium() {
        let inst = AuctionInstance::symmetric(3, vec![rat(0, 1)], &PiecewiseCdf::uniform()).unwrap();
        let profile = StrategyProfile::<Rational>::always_zero(&inst);
        let report = verify_epsilon_bne(&inst, &profile, &rat(0, 1)).unwrap();
        assert!(report.is_eq);
        assert_eq!(best_response(&inst, 0, &profile).unwrap(), vec![rat(1, 1)]);
    }

    #[test]
    fn always_zero_opponent_best_response() {
        let inst = instances::uniform(2, &[rat(0, 1), rat(1, 2)]);
        let profile = StrategyProfile::<Rational>::always_zero(&inst);
        assert_eq!(win_prob(&inst, 0, 0, &profile).unwrap(), rat(1, 2));
        assert_eq!(win_prob(&inst, 0, 1, &profile).unwrap(), rat(1, 1));
        assert_eq!(best_response(&inst, 0, &profile).unwrap(), vec![rat(1, 1), rat(1, 1)]);
    }

    #[test]
    fn invalid_profile_is_a_precondition_error() {
        let inst = instances::golden_ratio();
        let bad = StrategyProfile::new(vec![vec![rat(1, 4), rat(1, 1)]; 3]);
        assert!(matches!(verify_epsilon_bne(&inst, &bad, &rat(0, 1)), Err(FpaError::Precondition(_))));
        assert!(matches!(tie_table(&inst, 0, 5, &StrategyProfile::<Rational>::always_zero(&inst)), Err(FpaError::Domain(_))));
    }
}
