//! Ready-made instances used by tests, benches and the command line.

use crate::auction::AuctionInstance;
use crate::distributions::PiecewiseCdf;
use crate::scalar::{rat, Rational};

/// `n` bidders with uniform priors about everyone.
pub fn uniform(n: usize, bids: &[Rational]) -> AuctionInstance {
    AuctionInstance::symmetric(n, bids.to_vec(), &PiecewiseCdf::uniform()).expect("uniform instance is valid")
}

/// Three uniform bidders with bids `{0, 1/2}`; the unique equilibrium jumps at `(√5 − 1)/2`.
pub fn golden_ratio() -> AuctionInstance {
    uniform(3, &[rat(0, 1), rat(1, 2)])
}

/// `(√5 − 1)/2` rounded to 60 decimal digits.
pub fn golden_jump_60_digits() -> Rational {
    const DIGITS: &str = "618033988749894848204586834365638117720309179805762862135449";
    let num: num_bigint::BigInt = DIGITS.parse().expect("digits");
    Rational::new(num, num_traits::pow(num_bigint::BigInt::from(10), DIGITS.len()))
}

pub fn golden_jump() -> f64 {
    (5f64.sqrt() - 1.0) / 2.0
}
