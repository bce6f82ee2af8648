//! Piecewise-polynomial CDFs on `[0, 1]` with exact rational coefficients.

use num_bigint::BigInt;
use num_traits::{One, Signed, Zero};

use crate::auction::AuctionInstance;
use crate::error::{FpaError, Result};
use crate::scalar::{format_rational, RatConst, Rational, Scalar};

/// One polynomial piece `F(z) = Σ coeffs[κ]·z^κ` on `[lo, hi]`, in global coordinates.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CdfPiece {
    pub lo: RatConst,
    pub hi: RatConst,
    pub coeffs: Vec<RatConst>,
}

impl CdfPiece {
    fn eval<T: Scalar>(&self, z: &T) -> T {
        let mut acc = T::zero();
        for c in self.coeffs.iter().rev() {
            acc = acc * z.clone() + T::lift(c);
        }
        acc
    }

    fn exact_coeffs(&self) -> Vec<Rational> {
        self.coeffs.iter().map(|c| c.exact().clone()).collect()
    }
}

/// Probability mass spread uniformly over `[lo, hi]`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Block {
    pub lo: Rational,
    pub hi: Rational,
    pub volume: Rational,
}

impl Block {
    pub fn new(lo: Rational, hi: Rational, volume: Rational) -> Self {
        Self { lo, hi, volume }
    }
}

/// Piecewise-polynomial CDF. Pieces tile `[0, 1]` contiguously.
///
/// Construction only checks the tiling; the probabilistic conditions are reported by
/// [`PiecewiseCdf::validate`].
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PiecewiseCdf {
    pieces: Vec<CdfPiece>,
}

/// Outcome of [`PiecewiseCdf::validate`]; empty means valid.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct ValidationReport {
    pub violations: Vec<String>,
}

impl ValidationReport {
    pub fn is_ok(&self) -> bool {
        self.violations.is_empty()
    }
}

impl PiecewiseCdf {
    /// Builds from `(lo, hi, coeffs)` triples; pieces must tile `[0, 1]` in order.
    pub fn from_pieces(pieces: Vec<(Rational, Rational, Vec<Rational>)>) -> Result<Self> {
        let mut problems = Vec::new();
        if pieces.is_empty() {
            problems.push("no pieces".to_string());
        }
        let mut expected_lo = Rational::zero();
        for (idx, (lo, hi, coeffs)) in pieces.iter().enumerate() {
            let label = idx + 1;
            if *lo != expected_lo {
                problems.push(format!(
                    "piece {label} starts at {} but the previous piece ends at {}",
                    format_rational(lo),
                    format_rational(&expected_lo)
                ));
            }
            if lo >= hi {
                problems.push(format!("piece {label} has an empty interval"));
            }
            if coeffs.is_empty() {
                problems.push(format!("piece {label} has no coefficients"));
            }
            expected_lo = hi.clone();
        }
        if !pieces.is_empty() && !expected_lo.is_one() {
            problems.push(format!("last piece ends at {} instead of 1", format_rational(&expected_lo)));
        }
        if !problems.is_empty() {
            return Err(FpaError::Validation(problems));
        }
        Ok(Self {
            pieces: pieces
                .into_iter()
                .map(|(lo, hi, coeffs)| CdfPiece {
                    lo: lo.into(),
                    hi: hi.into(),
                    coeffs: coeffs.into_iter().map(RatConst::new).collect(),
                })
                .collect(),
        })
    }

    /// Piecewise-constant density from disjoint blocks; gaps carry zero density.
    pub fn from_blocks(blocks: &[Block]) -> Result<Self> {
        let mut sorted: Vec<&Block> = blocks.iter().collect();
        sorted.sort_by(|a, b| a.lo.cmp(&b.lo));
        let mut pieces = Vec::new();
        let mut cursor = Rational::zero();
        let mut level = Rational::zero();
        for (idx, block) in sorted.iter().enumerate() {
            if block.lo < cursor || block.hi > Rational::one() || block.lo >= block.hi {
                return Err(FpaError::Validation(vec![format!(
                    "block {} on [{}, {}] overlaps, is empty, or leaves [0, 1]",
                    idx + 1,
                    format_rational(&block.lo),
                    format_rational(&block.hi)
                )]));
            }
            if block.volume.is_negative() {
                return Err(FpaError::Validation(vec![format!("block {} has negative volume", idx + 1)]));
            }
            if block.lo > cursor {
                pieces.push((cursor.clone(), block.lo.clone(), vec![level.clone()]));
            }
            let slope = &block.volume / (&block.hi - &block.lo);
            let intercept = &level - &slope * &block.lo;
            pieces.push((block.lo.clone(), block.hi.clone(), vec![intercept, slope]));
            level += &block.volume;
            cursor = block.hi.clone();
        }
        if cursor < Rational::one() {
            pieces.push((cursor, Rational::one(), vec![level]));
        }
        Self::from_pieces(pieces)
    }

    /// The identity CDF on `[0, 1]`.
    pub fn uniform() -> Self {
        Self::from_pieces(vec![(Rational::zero(), Rational::one(), vec![Rational::zero(), Rational::one()])])
            .expect("uniform tiles [0,1]")
    }

    pub fn pieces(&self) -> &[CdfPiece] {
        &self.pieces
    }

    /// Interior and boundary breakpoints `0 = x_0 < … < x_K = 1`.
    pub fn breakpoints(&self) -> Vec<Rational> {
        std::iter::once(Rational::zero())
            .chain(self.pieces.iter().map(|p| p.hi.exact().clone()))
            .collect()
    }

    pub fn max_degree(&self) -> usize {
        self.pieces.iter().map(|p| p.coeffs.len().saturating_sub(1)).max().unwrap_or(0)
    }

    /// Index of the piece used for `x`; `x` is clamped into `[0, 1]`.
    pub fn piece_index<T: Scalar>(&self, x: &T) -> usize {
        self.pieces
            .iter()
            .position(|p| *x <= T::lift(&p.hi))
            .unwrap_or(self.pieces.len() - 1)
    }

    /// `F(x)` with `x` clamped into `[0, 1]`.
    pub fn eval<T: Scalar>(&self, x: &T) -> T {
        let z = x.clone().clamp_s(T::zero(), T::one());
        self.pieces[self.piece_index(&z)].eval(&z)
    }

    /// `F(x)`, rejecting arguments outside `[0, 1]`.
    pub fn eval_checked<T: Scalar>(&self, x: &T) -> Result<T> {
        if *x < T::zero() || *x > T::one() {
            return Err(FpaError::Domain(format!("argument {x:?} outside [0, 1]")));
        }
        Ok(self.eval(x))
    }

    /// Reports every violated CDF condition, citing 1-based piece indices.
    pub fn validate(&self) -> ValidationReport {
        let mut violations = Vec::new();
        let first = &self.pieces[0];
        let f0 = first.eval(&Rational::zero());
        if f0.is_negative() {
            violations.push(format!("F(0) = {} < 0 on piece 1", format_rational(&f0)));
        }
        let last = self.pieces.last().expect("non-empty");
        let f1 = last.eval(&Rational::one());
        if !f1.is_one() {
            violations.push(format!("F(1) = {} ≠ 1 on piece {}", format_rational(&f1), self.pieces.len()));
        }
        for (idx, pair) in self.pieces.windows(2).enumerate() {
            let x = pair[0].hi.exact().clone();
            let left = pair[0].eval(&x);
            let right = pair[1].eval(&x);
            if left != right {
                violations.push(format!(
                    "continuity gap at x = {} between pieces {} and {}: {} vs {}",
                    format_rational(&x),
                    idx + 1,
                    idx + 2,
                    format_rational(&left),
                    format_rational(&right)
                ));
            }
        }
        for (idx, piece) in self.pieces.iter().enumerate() {
            let derivative = upoly::derivative(&piece.exact_coeffs());
            if !upoly::nonnegative_on(&derivative, piece.lo.exact(), piece.hi.exact()) {
                violations.push(format!("decreasing on piece {}", idx + 1));
            }
        }
        ValidationReport { violations }
    }

    /// `max_pieces Σ_{κ≥1} κ·|a_κ|`, a Lipschitz constant on `[0, 1]`.
    pub fn lipschitz_bound(&self) -> Rational {
        self.pieces
            .iter()
            .map(|p| {
                p.coeffs
                    .iter()
                    .enumerate()
                    .skip(1)
                    .fold(Rational::zero(), |acc, (k, c)| acc + c.exact().abs() * BigInt::from(k))
            })
            .max()
            .unwrap_or_else(Rational::zero)
    }
}

/// `δ = eps / (2^{n+1}·L_max)`: moving every jump point by at most `δ` moves every
/// interim utility by at most `eps`.
pub fn continuity_delta(instance: &AuctionInstance, eps: &Rational) -> Result<Rational> {
    if !eps.is_positive() {
        return Err(FpaError::Domain("eps must be positive".into()));
    }
    let l_max = instance
        .priors()
        .filter_map(|(_, _, f)| Some(f.lipschitz_bound()))
        .max()
        .unwrap_or_else(Rational::zero);
    if l_max.is_zero() {
        return Ok(Rational::one());
    }
    let scale = num_traits::pow(BigInt::from(2), instance.n() + 1);
    Ok(eps / (l_max * scale))
}

/// Small exact univariate polynomial toolkit for the monotonicity check.
mod upoly {
    use num_traits::{Signed, Zero};

    use crate::scalar::Rational;

    type Poly = Vec<Rational>;

    fn trim(mut p: Poly) -> Poly {
        while p.last().is_some_and(|c| c.is_zero()) {
            p.pop();
        }
        p
    }

    pub fn derivative(p: &[Rational]) -> Poly {
        trim(p.iter().enumerate().skip(1).map(|(k, c)| c * Rational::from_integer(k.into())).collect())
    }

    fn eval(p: &[Rational], x: &Rational) -> Rational {
        p.iter().rev().fold(Rational::zero(), |acc, c| acc * x + c)
    }

    /// Remainder of `a / b`; `b` non-zero.
    fn rem(a: &[Rational], b: &[Rational]) -> Poly {
        let mut r = a.to_vec();
        let lead = b.last().expect("non-zero divisor");
        while r.len() >= b.len() && !r.is_empty() {
            let shift = r.len() - b.len();
            let factor = r.last().expect("non-empty") / lead;
            for (k, c) in b.iter().enumerate() {
                r[shift + k] -= &factor * c;
            }
            r.pop();
            r = trim(r);
        }
        r
    }

    fn quotient(a: &[Rational], b: &[Rational]) -> Poly {
        let mut r = a.to_vec();
        let lead = b.last().expect("non-zero divisor");
        let mut q = vec![Rational::zero(); a.len().saturating_sub(b.len()) + 1];
        while r.len() >= b.len() && !r.is_empty() {
            let shift = r.len() - b.len();
            let factor = r.last().expect("non-empty") / lead;
            for (k, c) in b.iter().enumerate() {
                r[shift + k] -= &factor * c;
            }
            q[shift] = factor;
            r.pop();
            r = trim(r);
        }
        trim(q)
    }

    fn gcd(a: &[Rational], b: &[Rational]) -> Poly {
        let (mut x, mut y) = (trim(a.to_vec()), trim(b.to_vec()));
        while !y.is_empty() {
            let r = rem(&x, &y);
            x = y;
            y = r;
        }
        x
    }

    /// Product of the square-free factors of odd multiplicity (Yun's algorithm).
    fn odd_part(p: &[Rational]) -> Poly {
        let mut out: Poly = vec![Rational::from_integer(1.into())];
        let dp = derivative(p);
        let mut a = gcd(p, &dp);
        let mut b = quotient(p, &a);
        let mut c = quotient(&dp, &a);
        let mut d = sub(&c, &derivative(&b));
        let mut multiplicity = 1usize;
        while b.len() > 1 {
            a = gcd(&b, &d);
            if multiplicity % 2 == 1 {
                out = mul(&out, &a);
            }
            b = quotient(&b, &a);
            c = quotient(&d, &a);
            d = sub(&c, &derivative(&b));
            multiplicity += 1;
        }
        out
    }

    fn sub(a: &[Rational], b: &[Rational]) -> Poly {
        let n = a.len().max(b.len());
        trim(
            (0..n)
                .map(|k| {
                    a.get(k).cloned().unwrap_or_else(Rational::zero) - b.get(k).cloned().unwrap_or_else(Rational::zero)
                })
                .collect(),
        )
    }

    fn mul(a: &[Rational], b: &[Rational]) -> Poly {
        if a.is_empty() || b.is_empty() {
            return Vec::new();
        }
        let mut out = vec![Rational::zero(); a.len() + b.len() - 1];
        for (i, x) in a.iter().enumerate() {
            for (j, y) in b.iter().enumerate() {
                out[i + j] += x * y;
            }
        }
        trim(out)
    }

    fn sign_variations(chain: &[Poly], x: &Rational) -> usize {
        let signs: Vec<bool> = chain
            .iter()
            .map(|p| eval(p, x))
            .filter(|v| !v.is_zero())
            .map(|v| v.is_positive())
            .collect();
        signs.windows(2).filter(|w| w[0] != w[1]).count()
    }

    /// Distinct roots of a square-free `p` in the open interval `(lo, hi)`.
    fn roots_in_open(p: &[Rational], lo: &Rational, hi: &Rational) -> usize {
        if p.len() <= 1 {
            return 0;
        }
        let mut chain = vec![p.to_vec(), derivative(p)];
        while chain.last().is_some_and(|q| !q.is_empty()) {
            let k = chain.len();
            let r = rem(&chain[k - 2], &chain[k - 1]);
            if r.is_empty() {
                break;
            }
            chain.push(r.into_iter().map(|c| -c).collect());
        }
        let in_half_open = sign_variations(&chain, lo) - sign_variations(&chain, hi);
        in_half_open - usize::from(eval(p, hi).is_zero())
    }

    /// Whether `p ≥ 0` everywhere on `[lo, hi]`.
    pub fn nonnegative_on(p: &[Rational], lo: &Rational, hi: &Rational) -> bool {
        if p.is_empty() {
            return true;
        }
        if eval(p, lo).is_negative() || eval(p, hi).is_negative() {
            return false;
        }
        if roots_in_open(&odd_part(p), lo, hi) > 0 {
            return false;
        }
        // No sign change inside: any non-root sample fixes the sign.
        let steps = p.len() + 1;
        (1..=steps)
            .map(|k| lo + (hi - lo) * Rational::new(k.into(), (steps + 1).into()))
            .map(|x| eval(p, &x))
            .find(|v| !v.is_zero())
            .map_or(true, |v| v.is_positive())
    }

}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scalar::rat;

    #[test]
    fn two_block_cdf_at_first_block_end() {
        let f = PiecewiseCdf::from_blocks(&[
            Block::new(rat(0, 1), rat(1, 4), rat(3, 10)),
            Block::new(rat(1, 2), rat(1, 1), rat(7, 10)),
        ])
        .unwrap();
        assert!(f.validate().is_ok());
        assert_eq!(f.eval(&rat(1, 4)), rat(3, 10));
        assert_eq!(f.eval(&rat(3, 8)), rat(3, 10));
        assert_eq!(f.eval(&rat(1, 1)), rat(1, 1));
    }

    #[test]
    fn uniform_is_identity() {
        let f = PiecewiseCdf::uniform();
        assert_eq!(f.eval(&rat(1, 2)), rat(1, 2));
        assert_eq!(f.lipschitz_bound(), rat(1, 1));
        assert!(f.validate().is_ok());
    }

    #[test]
    fn validation_messages() {
        let short = PiecewiseCdf::from_blocks(&[Block::new(rat(0, 1), rat(1, 1), rat(9, 10))]).unwrap();
        assert_eq!(short.validate().violations, vec!["F(1) = 9/10 ≠ 1 on piece 1".to_string()]);
        let decreasing = PiecewiseCdf::from_pieces(vec![(rat(0, 1), rat(1, 1), vec![rat(1, 1), rat(-1, 1)])]).unwrap();
        let report = decreasing.validate();
        assert!(report.violations.iter().any(|v| v == "decreasing on piece 1"));
    }

    #[test]
    fn lipschitz_examples() {
        let tall = PiecewiseCdf::from_blocks(&[Block::new(rat(0, 1), rat(1, 4), rat(1, 1))]).unwrap();
        assert_eq!(tall.lipschitz_bound(), rat(4, 1));
        let square = PiecewiseCdf::from_pieces(vec![(rat(0, 1), rat(1, 1), vec![rat(0, 1), rat(0, 1), rat(1, 1)])]).unwrap();
        assert_eq!(square.lipschitz_bound(), rat(2, 1));
        assert!(square.validate().is_ok());
    }

    #[test]
    fn out_of_range_argument_is_rejected() {
        let f = PiecewiseCdf::uniform();
        assert!(f.eval_checked(&1.5_f64).is_err());
        assert!(f.eval_checked(&-0.1_f64).is_err());
        assert_eq!(f.eval_checked(&0.25_f64).unwrap(), 0.25);
    }

    #[test]
    fn tiling_errors_are_structural() {
        assert!(PiecewiseCdf::from_pieces(vec![(rat(0, 1), rat(1, 2), vec![rat(0, 1)])]).is_err());
        assert!(PiecewiseCdf::from_blocks(&[
            Block::new(rat(0, 1), rat(1, 2), rat(1, 2)),
            Block::new(rat(1, 4), rat(1, 1), rat(1, 2)),
        ])
        .is_err());
    }
}
