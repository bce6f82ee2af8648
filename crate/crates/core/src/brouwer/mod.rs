//! The continuous map `G` on the domain of monotone, non-overbidding jump profiles whose
//! fixed points are exactly the equilibria, plus a fixed-point solver and an
//! arithmetic-circuit export of `G`.

mod circuit;
mod solver;

pub use circuit::{export_circuit, CircuitDag, DagNode, DagOp, DEFAULT_NODE_BUDGET};
pub use solver::{solve_fixed_point, FixedPointResult, SolverConfig};

use rand::Rng;

use crate::auction::{win_probs, AuctionInstance, StrategyProfile};
use crate::error::{FpaError, Result};
use crate::scalar::Scalar;

/// Jump coordinates `α_i(b_0), …, α_i(b_{m−1})` per bidder; `α_i(b_m) = 1` is implicit.
#[derive(Clone, Debug, PartialEq)]
pub struct DomainPoint<T> {
    coords: Vec<Vec<T>>,
}

impl<T: Scalar> DomainPoint<T> {
    pub fn new(coords: Vec<Vec<T>>) -> Self {
        Self { coords }
    }

    pub fn coords(&self) -> &[Vec<T>] {
        &self.coords
    }

    pub fn flat(&self) -> Vec<T> {
        self.coords.iter().flatten().cloned().collect()
    }

    pub fn from_flat(instance: &AuctionInstance, flat: &[T]) -> Self {
        let m = instance.m();
        Self::new((0..instance.n()).map(|i| flat[i * m..(i + 1) * m].to_vec()).collect())
    }

    pub fn from_profile(profile: &StrategyProfile<T>) -> Self {
        Self::new(profile.jumps().iter().map(|row| row[..row.len() - 1].to_vec()).collect())
    }

    pub fn to_profile(&self) -> StrategyProfile<T> {
        StrategyProfile::new(with_top(&self.coords))
    }

    /// Broken domain constraints; empty means the point lies in the domain.
    pub fn violations(&self, instance: &AuctionInstance) -> Vec<String> {
        let mut out = Vec::new();
        if self.coords.len() != instance.n() || self.coords.iter().any(|r| r.len() != instance.m()) {
            out.push("domain point has the wrong shape".into());
            return out;
        }
        out.extend(self.to_profile().violations(instance));
        out
    }

    /// Sup-norm distance.
    pub fn distance(&self, other: &Self) -> T {
        self.coords
            .iter()
            .flatten()
            .zip(other.coords.iter().flatten())
            .fold(T::zero(), |acc, (a, b)| acc.max_s((a.clone() - b.clone()).abs_s()))
    }
}

impl DomainPoint<f64> {
    /// Sorted uniforms per bidder, floored at the no-overbidding bound.
    pub fn random<R: Rng>(instance: &AuctionInstance, rng: &mut R) -> Self {
        let m = instance.m();
        Self::new(
            (0..instance.n())
                .map(|_| {
                    let mut u: Vec<f64> = (0..m).map(|_| rng.gen::<f64>()).collect();
                    u.sort_by(f64::total_cmp);
                    u.iter()
                        .enumerate()
                        .map(|(j, &x)| x.max(instance.bid(j + 1).approx()))
                        .collect()
                })
                .collect(),
        )
    }

    /// Convex combination `(1 − η)·self + η·other`.
    pub fn blend(&self, other: &Self, eta: f64) -> Self {
        Self::new(
            self.coords
                .iter()
                .zip(&other.coords)
                .map(|(a, b)| a.iter().zip(b).map(|(x, y)| (1.0 - eta) * x + eta * y).collect())
                .collect(),
        )
    }
}

fn with_top<T: Scalar>(coords: &[Vec<T>]) -> Vec<Vec<T>> {
    coords
        .iter()
        .map(|row| row.iter().cloned().chain(std::iter::once(T::one())).collect())
        .collect()
}

/// `Δ_j` for `j = 1..=m` given bidder `i`'s win probabilities.
fn gaps<T: Scalar>(instance: &AuctionInstance, own: &[T], wins: &[T]) -> Vec<T> {
    let m = instance.m();
    let bids: Vec<T> = instance.bids().iter().map(T::lift).collect();
    (1..=m)
        .map(|j| {
            let v = own[j - 1].clone();
            let util = |k: usize| (v.clone() - bids[k].clone()) * wins[k].clone();
            let best_above = (j + 1..=m).fold(util(j), |acc, k| acc.max_s(util(k)));
            util(j - 1) - best_above
        })
        .collect()
}

/// `Δ_j^i(α) = u_i(b_{j−1}; α_i(b_{j−1})) − max_{ℓ≥j} u_i(b_ℓ; α_i(b_{j−1}))`, `1 ≤ j ≤ m`.
pub fn delta_gap<T: Scalar>(instance: &AuctionInstance, point: &DomainPoint<T>, i: usize, j: usize) -> Result<T> {
    if i >= instance.n() || j == 0 || j > instance.m() {
        return Err(FpaError::Domain(format!("no gap Δ_{j} for bidder {i}")));
    }
    let rows = with_top(point.coords());
    let wins = win_probs(instance, i, &rows);
    Ok(gaps(instance, &rows[i], &wins).swap_remove(j - 1))
}

/// `G` without the membership check; bidders flagged in `frozen` keep their coordinates.
pub(crate) fn map_unchecked<T: Scalar>(instance: &AuctionInstance, coords: &[Vec<T>], frozen: &[bool]) -> Vec<Vec<T>> {
    let rows = with_top(coords);
    (0..instance.n())
        .map(|i| {
            if frozen.get(i).copied().unwrap_or(false) {
                return coords[i].clone();
            }
            let wins = win_probs(instance, i, &rows);
            let deltas = gaps(instance, &rows[i], &wins);
            let mut out: Vec<T> = Vec::with_capacity(instance.m());
            for (j, delta) in deltas.into_iter().enumerate() {
                let floor = T::lift(instance.bid(j + 1));
                let floor = match out.last() {
                    Some(prev) => floor.max_s(prev.clone()),
                    None => floor,
                };
                out.push((coords[i][j].clone() + delta).clamp_s(floor, T::one()));
            }
            out
        })
        .collect()
}

/// `α'_i(b_{j−1}) = trunc_[max(b_j, α'_i(b_{j−2})), 1](α_i(b_{j−1}) + Δ_j^i(α))`, in order of `j`.
pub fn brouwer_map<T: Scalar>(instance: &AuctionInstance, point: &DomainPoint<T>) -> Result<DomainPoint<T>> {
    let v = point.violations(instance);
    if !v.is_empty() {
        return Err(FpaError::Precondition(v));
    }
    Ok(DomainPoint::new(map_unchecked(instance, point.coords(), &[])))
}

/// `‖G(α) − α‖∞`.
pub fn residual<T: Scalar>(instance: &AuctionInstance, point: &DomainPoint<T>) -> Result<T> {
    Ok(brouwer_map(instance, point)?.distance(point))
}
