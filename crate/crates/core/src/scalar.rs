//! Numeric abstraction shared by the exact (rational) and fast (`f64`) evaluation paths.

use std::fmt::Debug;
use std::ops::{Add, Div, Mul, Neg, Sub};

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};

/// Exact rational number used for all stored constants.
pub type Rational = BigRational;

/// A rational constant paired with its nearest `f64`, so the float path never converts big integers.
#[derive(Clone, Debug)]
pub struct RatConst {
    exact: Rational,
    approx: f64,
}

impl RatConst {
    pub fn new(exact: Rational) -> Self {
        let approx = rational_to_f64(&exact);
        Self { exact, approx }
    }

    pub fn from_ints(num: i64, den: i64) -> Self {
        Self::new(Rational::new(BigInt::from(num), BigInt::from(den)))
    }

    pub fn zero() -> Self {
        Self::new(Rational::zero())
    }

    pub fn one() -> Self {
        Self::new(Rational::one())
    }

    pub fn exact(&self) -> &Rational {
        &self.exact
    }

    pub fn approx(&self) -> f64 {
        self.approx
    }
}

// `approx` is a function of `exact`, so equality and hashing use `exact` alone.
impl PartialEq for RatConst {
    fn eq(&self, other: &Self) -> bool {
        self.exact == other.exact
    }
}

impl Eq for RatConst {}

impl std::hash::Hash for RatConst {
    fn hash<H: std::hash::Hasher>(&self, state: &mut H) {
        self.exact.hash(state);
    }
}

impl From<Rational> for RatConst {
    fn from(q: Rational) -> Self {
        Self::new(q)
    }
}

/// Correctly rounded conversion is not required; the result is within one ulp.
pub fn rational_to_f64(q: &Rational) -> f64 {
    q.to_f64().unwrap_or_else(|| {
        if q.is_negative() {
            f64::NEG_INFINITY
        } else {
            f64::INFINITY
        }
    })
}

/// Exact binary value of a finite float.
pub fn f64_to_rational(x: f64) -> Rational {
    Rational::from_float(x).expect("finite float")
}

pub fn rat(num: i64, den: i64) -> Rational {
    Rational::new(BigInt::from(num), BigInt::from(den))
}

/// Field operations plus the handful of order helpers the algorithms need.
pub trait Scalar:
    Clone
    + Debug
    + PartialOrd
    + Send
    + Sync
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
    + Zero
    + One
{
    fn from_i64(v: i64) -> Self;
    fn lift(c: &RatConst) -> Self;
    fn as_f64(&self) -> f64;

    fn max_s(self, other: Self) -> Self {
        if other > self {
            other
        } else {
            self
        }
    }

    fn min_s(self, other: Self) -> Self {
        if other < self {
            other
        } else {
            self
        }
    }

    fn abs_s(self) -> Self {
        if self < Self::zero() {
            -self
        } else {
            self
        }
    }

    /// Clamp into `[lo, hi]`; `lo` wins when the interval is empty.
    fn clamp_s(self, lo: Self, hi: Self) -> Self {
        self.min_s(hi).max_s(lo)
    }
}

impl Scalar for f64 {
    fn from_i64(v: i64) -> Self {
        v as f64
    }
    fn lift(c: &RatConst) -> Self {
        c.approx
    }
    fn as_f64(&self) -> f64 {
        *self
    }
}

impl Scalar for Rational {
    fn from_i64(v: i64) -> Self {
        Rational::from_integer(BigInt::from(v))
    }
    fn lift(c: &RatConst) -> Self {
        c.exact.clone()
    }
    fn as_f64(&self) -> f64 {
        rational_to_f64(self)
    }
}

/// Parses `a/b`, integers, decimals and scientific notation into an exact rational.
pub fn parse_rational(text: &str) -> Option<Rational> {
    let s = text.trim();
    if s.is_empty() {
        return None;
    }
    if let Some((n, d)) = s.split_once('/') {
        let n: BigInt = n.trim().parse().ok()?;
        let d: BigInt = d.trim().parse().ok()?;
        if d.is_zero() {
            return None;
        }
        return Some(Rational::new(n, d));
    }
    let (mantissa, exponent) = match s.find(['e', 'E']) {
        Some(pos) => (&s[..pos], s[pos + 1..].parse::<i32>().ok()?),
        None => (s, 0),
    };
    let (negative, digits) = match mantissa.strip_prefix('-') {
        Some(rest) => (true, rest),
        None => (false, mantissa.strip_prefix('+').unwrap_or(mantissa)),
    };
    let (int_part, frac_part) = digits.split_once('.').unwrap_or((digits, ""));
    if int_part.is_empty() && frac_part.is_empty() {
        return None;
    }
    if !int_part.chars().chain(frac_part.chars()).all(|c| c.is_ascii_digit()) {
        return None;
    }
    let joined = format!("{int_part}{frac_part}");
    let mut num: BigInt = if joined.is_empty() { BigInt::zero() } else { joined.parse().ok()? };
    if negative {
        num = -num;
    }
    let scale = exponent - frac_part.len() as i32;
    let ten = BigInt::from(10);
    let value = if scale >= 0 {
        Rational::from_integer(num * num_traits::pow(ten, scale as usize))
    } else {
        Rational::new(num, num_traits::pow(ten, (-scale) as usize))
    };
    Some(value)
}

/// Canonical `num/den` rendering with a reduced fraction and positive denominator.
pub fn format_rational(q: &Rational) -> String {
    format!("{}/{}", q.numer(), q.denom())
}
