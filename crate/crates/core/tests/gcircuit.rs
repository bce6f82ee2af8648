mod common;

use fpa_core::exec::Exec;
use fpa_core::gcircuit::{
    brute_force_solve, check_assignment, gate_eval, iterate_solve, lower_circuit, GateSet, GateType, GeneralizedCircuit,
    IterateConfig, Multiplier,
};
use fpa_core::scalar::rat;
use proptest::prelude::*;

fn cycle3() -> GeneralizedCircuit {
    GeneralizedCircuit::parse("0 G1- 2\n1 G1- 0\n2 G1- 1\n").unwrap()
}

#[test]
fn assignment_checks() {
    let c = cycle3();
    let exact = check_assignment(&c, &[rat(1, 2), rat(1, 2), rat(1, 2)], &rat(0, 1)).unwrap();
    assert!(exact.satisfied);
    let off = check_assignment(&c, &[0.6, 0.4, 0.4], &0.2).unwrap();
    assert!(off.satisfied);
    common::assert_close(off.violations[0], 0.0, 1e-15, "g0");
    common::assert_close(off.violations[1], 0.0, 1e-15, "g1");
    common::assert_close(off.violations[2], 0.2, 1e-15, "g2");
    assert!(!check_assignment(&c, &[0.6, 0.4, 0.4], &0.19).unwrap().satisfied);
    let empty = GeneralizedCircuit::new(Vec::new()).unwrap();
    assert!(check_assignment(&empty, &[] as &[f64], &0.0).unwrap().satisfied);
    assert!(check_assignment(&c, &[0.5, 0.5], &0.0).is_err());
}

#[test]
fn grid_solver_examples() {
    let s = brute_force_solve(&cycle3(), 0.01, 100, 2_000_000, Exec::Parallel).unwrap();
    assert!(s.satisfied && s.max_violation <= 0.01);
    assert!(s.values.iter().all(|v| (v - 0.5).abs() <= 0.01));

    let one = GeneralizedCircuit::parse("0 G1\n").unwrap();
    let s = brute_force_solve(&one, 0.0, 10, 100, Exec::Sequential).unwrap();
    assert_eq!(s.values, vec![1.0]);

    // v = φ(v, 1/2) through a copy has its root at 3/5, off the eighths grid.
    let phi_loop = GeneralizedCircuit::parse("0 Gzeta zeta=1/2\n1 Gphi 2 0\n2 G= 1\n").unwrap();
    let s = brute_force_solve(&phi_loop, 0.0, 8, 1000, Exec::Sequential).unwrap();
    let mut best = f64::INFINITY;
    for a in 0..=8 {
        for b in 0..=8 {
            for c in 0..=8 {
                let values = [a as f64 / 8.0, b as f64 / 8.0, c as f64 / 8.0];
                best = best.min(check_assignment(&phi_loop, &values, &0.0).unwrap().max_violation);
            }
        }
    }
    assert_eq!(s.max_violation, best);
    assert!(!s.satisfied);
}

#[test]
fn iterate_solver_examples() {
    let out = iterate_solve(&cycle3(), &IterateConfig::default()).unwrap();
    assert!(out.converged);
    assert!(out.values.iter().all(|v| (v - 0.5).abs() <= 1e-9));

    let chain = GeneralizedCircuit::parse("0 Gzeta zeta=1/3\n1 Gx2 0\n2 G1- 1\n3 Gphi 2 0\n").unwrap();
    let out = iterate_solve(&chain, &IterateConfig { max_iters: 1, ..IterateConfig::default() }).unwrap();
    assert!(out.converged && out.residual == 0.0);

    let pair = GeneralizedCircuit::parse("0 G1- 1\n1 G1- 0\n").unwrap();
    for start in [0.0, 0.3, 0.9] {
        let config = IterateConfig { initial: Some(vec![start, 0.2]), ..IterateConfig::default() };
        let out = iterate_solve(&pair, &config).unwrap();
        assert!(check_assignment(&pair, &out.values, &1e-9).unwrap().satisfied, "{out:?}");
    }
}

#[test]
fn lowering_examples() {
    let copy = GeneralizedCircuit::parse("0 Gzeta zeta=1/3\n1 G= 0\n").unwrap();
    let lowered = lower_circuit(&copy, GateSet::AddComplement, &rat(1, 1000)).unwrap();
    assert_eq!(lowered.gate_multipliers[1], Multiplier::Bounded(2));
    let copy_gates: Vec<_> = lowered.circuit.gates().iter().filter(|g| g.inputs == vec![lowered.index_map[0]]).collect();
    assert_eq!(copy_gates.len(), 1);
    assert_eq!(copy_gates[0].kind, GateType::OneMinus);

    let sub = GeneralizedCircuit::parse("0 G1\n1 G1\n2 G- 0 1\n").unwrap();
    let lowered = lower_circuit(&sub, GateSet::Reduction, &rat(1, 1000)).unwrap();
    assert_eq!(lowered.gate_multipliers[2], Multiplier::Bounded(99));
    assert!(lower_circuit(&sub, GateSet::Reduction, &rat(1, 10)).is_err());

    let inv = GeneralizedCircuit::parse("0 G1- 1\n1 G1- 0\n2 Ginv 0\n").unwrap();
    let lowered = lower_circuit(&inv, GateSet::Reduction, &rat(0, 1)).unwrap();
    assert_eq!(lowered.gate_multipliers[2], Multiplier::Bounded(8));
    for (x, want) in [(0.0, 1.0), (0.5, 0.6), (1.0, 1.0 / 3.0)] {
        let mut start = vec![0.5; lowered.circuit.len()];
        start[lowered.index_map[0]] = x;
        start[lowered.index_map[1]] = 1.0 - x;
        let out = iterate_solve(&lowered.circuit, &IterateConfig { initial: Some(start), ..IterateConfig::default() }).unwrap();
        let back = lowered.read_back(&out.values);
        common::assert_close(back[2], want, 1e-9, "inverse gadget");
    }
}

#[test]
fn every_lowering_rule_is_sound() {
    for (target, kind) in common::lowering_rules() {
        let trial = common::lowering_trial(target, &kind, &[1e-3, 1e-5], 6, 1);
        assert!(trial.holds(), "{trial:?}");
    }
}

proptest! {
    #[test]
    fn gates_stay_in_the_unit_interval(x in 0.0f64..=1.0, y in 0.0f64..=1.0, z in 0i64..=8) {
        let zeta = fpa_core::scalar::RatConst::new(rat(z, 8));
        for kind in [
            GateType::One, GateType::Add, GateType::Sub, GateType::OneMinus, GateType::Times2, GateType::Mul,
            GateType::Square, GateType::Phi, GateType::Copy, GateType::Half, GateType::TimesZeta(zeta.clone()),
            GateType::Inv, GateType::Max, GateType::Min, GateType::Const(zeta.clone()),
        ] {
            let args = [x, y];
            let v = gate_eval(&kind, &args[..kind.arity()]).unwrap();
            prop_assert!((0.0..=1.0).contains(&v), "{kind:?} -> {v}");
        }
    }

    #[test]
    fn grid_minimiser_passes_its_own_check(seed in any::<u64>()) {
        use rand::Rng;
        let mut rng = common::rng(seed);
        let kinds = ["G1-", "Gx2", "G/2", "G="];
        let text: String = (0..3)
            .map(|i| {
                let kind = kinds[rng.gen_range(0..kinds.len())];
                format!("{i} {kind} {}\n", (i + 1 + rng.gen_range(0..2)) % 3)
            })
            .collect();
        let c = GeneralizedCircuit::parse(&text).unwrap();
        let s = brute_force_solve(&c, 0.05, 20, 10_000, Exec::Sequential).unwrap();
        let report = check_assignment(&c, &s.values, &s.max_violation).unwrap();
        prop_assert!(report.satisfied);
        // Rounding an exact solution moves a doubling target by at most 3h/2.
        prop_assert!(s.max_violation <= 0.075 + 1e-12, "{} on {}", s.max_violation, text);
    }
}
