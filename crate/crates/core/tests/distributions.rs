mod common;

use fpa_core::auction::AuctionInstance;
use fpa_core::distributions::{continuity_delta, Block, PiecewiseCdf};
use fpa_core::instances;
use fpa_core::io::{instance_to_json, parse_instance};
use fpa_core::scalar::{f64_to_rational, rat, Rational};
use num_traits::Signed;
use proptest::prelude::*;

fn two_block() -> PiecewiseCdf {
    PiecewiseCdf::from_blocks(&[Block::new(rat(0, 1), rat(1, 4), rat(3, 10)), Block::new(rat(1, 2), rat(1, 1), rat(7, 10))])
        .unwrap()
}

#[test]
fn evaluation_examples() {
    assert_eq!(PiecewiseCdf::uniform().eval(&rat(1, 2)), rat(1, 2));
    let f = two_block();
    assert!(f.validate().is_ok());
    assert_eq!(f.eval(&rat(1, 4)), rat(3, 10));
    assert_eq!(f.eval(&rat(3, 8)), rat(3, 10));
    assert_eq!(f.eval(&rat(3, 4)), rat(13, 20));
    assert_eq!(f.eval(&rat(1, 1)), rat(1, 1));
    assert!(f.eval_checked(&rat(5, 4)).is_err());
    assert!(f.eval_checked(&-0.1f64).is_err());
}

#[test]
fn validation_examples() {
    let short = PiecewiseCdf::from_blocks(&[Block::new(rat(0, 1), rat(1, 1), rat(9, 10))]).unwrap();
    let report = short.validate();
    assert!(report.violations.iter().any(|v| v.contains("9/10")), "{report:?}");
    let decreasing = PiecewiseCdf::from_pieces(vec![(rat(0, 1), rat(1, 1), vec![rat(1, 1), rat(-1, 1)])]).unwrap();
    let report = decreasing.validate();
    assert!(report.violations.iter().any(|v| v.contains("decreasing") && v.contains("piece 1")), "{report:?}");
}

#[test]
fn lipschitz_examples() {
    assert_eq!(PiecewiseCdf::uniform().lipschitz_bound(), rat(1, 1));
    let tall = PiecewiseCdf::from_blocks(&[Block::new(rat(0, 1), rat(1, 4), rat(1, 1))]).unwrap();
    assert_eq!(tall.lipschitz_bound(), rat(4, 1));
    let square = PiecewiseCdf::from_pieces(vec![(rat(0, 1), rat(1, 1), vec![rat(0, 1), rat(0, 1), rat(1, 1)])]).unwrap();
    assert_eq!(square.lipschitz_bound(), rat(2, 1));
}

#[test]
fn delta_examples() {
    let bids = [rat(0, 1), rat(1, 2)];
    let uniform = instances::uniform(3, &bids);
    assert_eq!(continuity_delta(&uniform, &rat(1, 100)).unwrap(), rat(1, 1600));
    assert_eq!(continuity_delta(&uniform, &rat(1, 10)).unwrap(), rat(1, 160));
    let steep = PiecewiseCdf::from_blocks(&[Block::new(rat(0, 1), rat(1, 2), rat(1, 1))]).unwrap();
    let mut priors: Vec<Vec<Option<PiecewiseCdf>>> =
        (0..3).map(|i| (0..3).map(|j| (i != j).then(PiecewiseCdf::uniform)).collect()).collect();
    priors[0][2] = Some(steep);
    let inst = AuctionInstance::new(bids.to_vec(), priors).unwrap();
    assert_eq!(continuity_delta(&inst, &rat(1, 100)).unwrap(), rat(1, 3200));
    assert!(continuity_delta(&inst, &rat(0, 1)).is_err());
}

#[test]
fn delta_bounds_utility_changes() {
    for seed in 0..5 {
        common::continuity_trial(seed, 200).unwrap();
    }
}

proptest! {
    #[test]
    fn cdfs_are_monotone_and_lipschitz(seed in any::<u64>(), x in 0.0f64..=1.0, y in 0.0f64..=1.0) {
        let f = common::random_cdf(&mut common::rng(seed));
        prop_assert!(f.validate().is_ok());
        let (lo, hi) = if x <= y { (x, y) } else { (y, x) };
        prop_assert!(f.eval(&lo) <= f.eval(&hi) + 1e-15);
        let (qx, qy) = (f64_to_rational(x), f64_to_rational(y));
        let gap: Rational = (f.eval(&qx) - f.eval(&qy)).abs();
        let bound: Rational = f.lipschitz_bound() * (qx - qy).abs();
        prop_assert!(gap <= bound);
    }

    #[test]
    fn instance_files_round_trip(seed in any::<u64>()) {
        let inst = common::random_sized_instance(&mut common::rng(seed), 4, 4);
        let text = instance_to_json(&inst);
        let back = parse_instance(&text).unwrap();
        prop_assert_eq!(instance_to_json(&back), text);
        for (i, j, f) in inst.priors() {
            prop_assert_eq!(back.prior(i, j), f);
        }
    }
}
