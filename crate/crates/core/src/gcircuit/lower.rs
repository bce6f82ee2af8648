use num_bigint::BigInt;
use num_traits::{One, Signed, Zero};

use super::{Gate, GateType, GeneralizedCircuit};
use crate::error::{FpaError, Result};
use crate::scalar::{rational_to_f64, Rational};

/// Target gate sets a circuit can be lowered into.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum GateSet {
    /// `{G₊, G₁₋}`.
    AddComplement,
    /// `{G×2, G₁₋, G_φ}`, the gates the auction reduction can encode.
    Reduction,
    /// `{G₁₋, G×2, G×}`; every rule is exact-only.
    Fixp,
}

impl GateSet {
    pub fn contains(self, kind: &GateType) -> bool {
        match self {
            GateSet::AddComplement => matches!(kind, GateType::Add | GateType::OneMinus),
            GateSet::Reduction => matches!(kind, GateType::Times2 | GateType::OneMinus | GateType::Phi),
            GateSet::Fixp => matches!(kind, GateType::OneMinus | GateType::Times2 | GateType::Mul),
        }
    }

    /// Largest `ε` for which the multipliers are claimed; `None` means no explicit cap.
    pub fn eps_cap(self) -> Option<Rational> {
        match self {
            GateSet::Reduction => Some(Rational::new(1.into(), 14.into())),
            _ => None,
        }
    }

    /// Error amplification of the rule for `kind`.
    pub fn multiplier(self, kind: &GateType) -> Result<Multiplier> {
        use GateType as G;
        use Multiplier::{Bounded, ExactOnly};
        if self.contains(kind) {
            return Ok(Bounded(1));
        }
        let zeta = kind.zeta().map(|z| z.exact().clone());
        let is = |v: i64| zeta.as_ref() == Some(&Rational::from_integer(v.into()));
        let m = match (self, kind) {
            (GateSet::AddComplement, G::Times2) => Bounded(1),
            (GateSet::AddComplement, G::Copy | G::One) => Bounded(2),
            (GateSet::AddComplement, G::Sub) => Bounded(3),
            (GateSet::AddComplement, G::Half) => Bounded(5),
            (GateSet::AddComplement, G::TimesZeta(_) | G::Const(_)) if is(1) => Bounded(2),
            (GateSet::AddComplement, G::TimesZeta(_) | G::Const(_)) if is(0) => Bounded(3),
            (GateSet::AddComplement, G::TimesZeta(_)) => Bounded(23),
            (GateSet::AddComplement, G::Const(_)) => Bounded(25),
            (GateSet::Reduction, G::One) => Bounded(1),
            (GateSet::Reduction, G::Copy) => Bounded(2),
            (GateSet::Reduction, G::Half) => Bounded(3),
            (GateSet::Reduction, G::Inv) => Bounded(8),
            (GateSet::Reduction, G::Sub) => Bounded(99),
            (GateSet::Reduction, G::Add) => Bounded(101),
            (GateSet::Reduction, G::Max) => Bounded(200),
            (GateSet::Reduction, G::Min) => Bounded(202),
            (GateSet::Reduction, G::Const(_)) if is(1) => Bounded(1),
            (GateSet::Reduction, G::Const(_)) if is(0) => Bounded(2),
            (GateSet::Reduction, G::Mul | G::Square | G::Const(_) | G::TimesZeta(_)) => ExactOnly,
            (GateSet::Fixp, _) => ExactOnly,
            (GateSet::AddComplement, _) => {
                return Err(FpaError::Unsupported(format!("{} has no rule over {{G+, G1-}}", kind.name())))
            }
            (GateSet::Reduction, _) => {
                return Err(FpaError::Unsupported(format!("{} has no rule over {{Gx2, G1-, Gphi}}", kind.name())))
            }
        };
        Ok(m)
    }
}

/// `M` such that ε-solutions of the lowered gates read back as `Mε`-solutions.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub enum Multiplier {
    Bounded(u64),
    /// Only exact solutions read back exactly.
    ExactOnly,
}

#[derive(Clone, Debug)]
pub struct LoweredCircuit {
    pub circuit: GeneralizedCircuit,
    /// Lowered gate carrying source gate `i`.
    pub index_map: Vec<usize>,
    /// Worst rule multiplier over all source gates.
    pub multiplier: Multiplier,
    pub gate_multipliers: Vec<Multiplier>,
    /// Largest `|ζ − a/2^k|` over dyadic approximations of `ζ` parameters.
    pub zeta_error: f64,
}

impl LoweredCircuit {
    /// Reads a lowered assignment back onto the source gates.
    pub fn read_back<T: Clone>(&self, values: &[T]) -> Vec<T> {
        self.index_map.iter().map(|&i| values[i].clone()).collect()
    }
}

const FORWARD: usize = usize::MAX / 2;

struct Lowerer {
    target: GateSet,
    gates: Vec<Gate>,
    forwards: Vec<Option<usize>>,
    bits: u32,
    zeta_error: f64,
    one: Option<usize>,
    zero: Option<usize>,
    half: Option<usize>,
}

impl Lowerer {
    fn push(&mut self, kind: GateType, inputs: Vec<usize>) -> usize {
        debug_assert!(self.target.contains(&kind));
        self.gates.push(Gate::new(kind, inputs));
        self.gates.len() - 1
    }

    fn forward(&mut self) -> usize {
        self.forwards.push(None);
        FORWARD + self.forwards.len() - 1
    }

    fn resolve(&mut self, wire: usize, to: usize) {
        self.forwards[wire - FORWARD] = Some(to);
    }

    fn chase(&self, mut wire: usize) -> Result<usize> {
        let mut hops = 0;
        while wire >= FORWARD {
            wire = self.forwards[wire - FORWARD]
                .ok_or_else(|| FpaError::Domain("lowering left a dangling wire".into()))?;
            hops += 1;
            if hops > self.forwards.len() {
                return Err(FpaError::Domain("lowering produced a wire cycle".into()));
            }
        }
        Ok(wire)
    }

    fn one_minus(&mut self, x: usize) -> Result<usize> {
        self.emit(GateType::OneMinus, &[x])
    }

    fn one(&mut self) -> Result<usize> {
        if let Some(w) = self.one {
            return Ok(w);
        }
        let w = match self.target {
            GateSet::AddComplement => {
                // A complement pair holds an arbitrary value a; a + (1 − a) = 1.
                let fb = self.forward();
                let a = self.push(GateType::OneMinus, vec![fb]);
                let b = self.push(GateType::OneMinus, vec![a]);
                self.resolve(fb, b);
                let c = self.push(GateType::OneMinus, vec![a]);
                self.push(GateType::Add, vec![a, c])
            }
            GateSet::Reduction => {
                // φ ≥ 1/4, so three doublings saturate at 1.
                let (f3, f4) = (self.forward(), self.forward());
                let g1 = self.push(GateType::Phi, vec![f4, f3]);
                let g2 = self.push(GateType::Times2, vec![g1]);
                let g3 = self.push(GateType::Times2, vec![g2]);
                let g4 = self.push(GateType::Times2, vec![g3]);
                self.resolve(f3, g3);
                self.resolve(f4, g4);
                g4
            }
            GateSet::Fixp => {
                let h = self.half_const()?;
                self.push(GateType::Times2, vec![h])
            }
        };
        self.one = Some(w);
        Ok(w)
    }

    fn zero(&mut self) -> Result<usize> {
        if let Some(w) = self.zero {
            return Ok(w);
        }
        let one = self.one()?;
        let w = self.one_minus(one)?;
        self.zero = Some(w);
        Ok(w)
    }

    /// `v = 1 − v` through a copy, so `v = 1/2`.
    fn half_const(&mut self) -> Result<usize> {
        if let Some(w) = self.half {
            return Ok(w);
        }
        let f = self.forward();
        let g1 = self.emit(GateType::Copy, &[f])?;
        let g2 = self.one_minus(g1)?;
        self.resolve(f, g2);
        self.half = Some(g1);
        Ok(g1)
    }

    /// `k·x` by doubling and adding; exact as long as no partial sum exceeds 1.
    fn times_int(&mut self, k: &BigInt, x: usize) -> Result<usize> {
        if k.is_zero() {
            return self.zero();
        }
        if k.is_one() {
            return self.emit(GateType::Copy, &[x]);
        }
        let mut power = x;
        let mut acc: Option<usize> = None;
        let bits = k.bits();
        for t in 0..bits {
            if t > 0 {
                power = self.emit(GateType::Times2, &[power])?;
            }
            if k.bit(t) {
                acc = Some(match acc {
                    None => power,
                    Some(a) => self.emit(GateType::Add, &[a, power])?,
                });
            }
        }
        Ok(acc.expect("k > 1 has a set bit"))
    }

    /// Exact constant `c/d`: `v = 1 − (d − 1)v` gives `1/d`, then `c` copies.
    fn exact_const(&mut self, zeta: &Rational) -> Result<usize> {
        if zeta.is_zero() {
            return self.zero();
        }
        if zeta.is_one() {
            return self.one();
        }
        let f = self.forward();
        let scaled = self.times_int(&(zeta.denom() - BigInt::one()), f)?;
        let unit = self.one_minus(scaled)?;
        self.resolve(f, unit);
        self.times_int(zeta.numer(), unit)
    }

    fn quarter(&mut self, x: usize) -> Result<usize> {
        let h = self.emit(GateType::Half, &[x])?;
        self.emit(GateType::Half, &[h])
    }

    /// `x·ζ ≈ x·a/2^k` by Horner over the bits of `a`, least significant first.
    fn dyadic_times(&mut self, zeta: &Rational, x: usize) -> Result<usize> {
        let k = self.bits;
        let scale = BigInt::one() << k;
        let a = (zeta * Rational::from_integer(scale.clone())).round().to_integer();
        let a = a.max(BigInt::one()).min(&scale - BigInt::one());
        let approx = Rational::new(a.clone(), scale);
        self.zeta_error = self.zeta_error.max(rational_to_f64(&(zeta - approx).abs()));
        let g2 = self.emit(GateType::Half, &[x])?;
        let mut cur = if a.bit(0) { g2 } else { self.zero()? };
        for t in 1..u64::from(k) {
            let h = self.emit(GateType::Half, &[cur])?;
            cur = if a.bit(t) { self.emit(GateType::Add, &[h, g2])? } else { h };
        }
        Ok(cur)
    }

    fn emit(&mut self, kind: GateType, ins: &[usize]) -> Result<usize> {
        use GateType as G;
        if self.target.contains(&kind) {
            return Ok(self.push(kind, ins.to_vec()));
        }
        let x = ins.first().copied();
        let y = ins.get(1).copied();
        let (x, y) = (|| x.expect("unary input"), || y.expect("binary input"));
        let target = self.target;
        match (target, &kind) {
            (_, G::Copy) => {
                let a = self.one_minus(x())?;
                self.one_minus(a)
            }
            (_, G::One) => self.one(),
            (GateSet::AddComplement, G::Times2) => self.emit(G::Add, &[x(), x()]),
            (GateSet::AddComplement, G::Sub) => {
                let a = self.one_minus(x())?;
                let s = self.emit(G::Add, &[a, y()])?;
                self.one_minus(s)
            }
            (GateSet::AddComplement, G::Half) => {
                // v = x − v.
                let f = self.forward();
                let d = self.emit(G::Sub, &[x(), f])?;
                let c = self.emit(G::Copy, &[d])?;
                self.resolve(f, c);
                Ok(c)
            }
            (GateSet::AddComplement, G::TimesZeta(z)) => {
                let z = z.exact().clone();
                if z.is_zero() {
                    self.zero()
                } else if z.is_one() {
                    self.emit(G::Copy, &[x()])
                } else {
                    self.dyadic_times(&z, x())
                }
            }
            (GateSet::AddComplement, G::Const(z)) => {
                let z = z.exact().clone();
                if z.is_zero() {
                    self.zero()
                } else {
                    let one = self.one()?;
                    if z.is_one() {
                        Ok(one)
                    } else {
                        self.dyadic_times(&z, one)
                    }
                }
            }
            (GateSet::AddComplement, _) => Err(FpaError::Unsupported(format!("{} over {{G+, G1-}}", kind.name()))),
            (GateSet::Reduction, G::Half) => {
                // 1 − φ(1 − x, 1) = x/2.
                let a = self.one_minus(x())?;
                let one = self.one()?;
                let p = self.emit(G::Phi, &[a, one])?;
                self.one_minus(p)
            }
            (GateSet::Fixp, G::Half) => {
                let h = self.half_const()?;
                self.emit(G::Mul, &[x(), h])
            }
            (GateSet::Fixp, G::Phi) => {
                let lift = |s: &mut Self, v: usize| -> Result<usize> {
                    let a = s.one_minus(v)?;
                    let h = s.emit(G::Half, &[a])?;
                    s.one_minus(h)
                };
                let a = lift(self, x())?;
                let b = lift(self, y())?;
                self.emit(G::Mul, &[a, b])
            }
            (_, G::Inv) => {
                // v = φ(1 − x, v) solves to −1 + 4/(2 + x).
                let g2 = self.one_minus(x())?;
                let f = self.forward();
                let g3 = self.emit(G::Phi, &[g2, f])?;
                let g4 = self.emit(G::Copy, &[g3])?;
                self.resolve(f, g4);
                Ok(g4)
            }
            (_, G::Sub) => {
                // φ(φ(inv(y), 1 − x), y/2) = 1/2 + (y − x)/8.
                let g3 = self.emit(G::Inv, &[y()])?;
                let g4 = self.one_minus(x())?;
                let g5 = self.emit(G::Phi, &[g3, g4])?;
                let g6 = self.emit(G::Half, &[y()])?;
                let g7 = self.emit(G::Phi, &[g5, g6])?;
                let g8 = self.emit(G::Times2, &[g7])?;
                let g9 = self.one_minus(g8)?;
                let g10 = self.emit(G::Times2, &[g9])?;
                self.emit(G::Times2, &[g10])
            }
            (_, G::Add) => {
                let a = self.one_minus(x())?;
                let d = self.emit(G::Sub, &[a, y()])?;
                self.one_minus(d)
            }
            (_, G::Max) => {
                let d = self.emit(G::Sub, &[y(), x()])?;
                self.emit(G::Add, &[x(), d])
            }
            (_, G::Min) => {
                let a = self.one_minus(x())?;
                let b = self.one_minus(y())?;
                let m = self.emit(G::Max, &[a, b])?;
                self.one_minus(m)
            }
            (_, G::Mul) => {
                // φ − 1/4 − x/4 − y/4 = xy/4.
                let p = self.emit(G::Phi, &[x(), y()])?;
                let one = self.one()?;
                let q = self.quarter(one)?;
                let a = self.emit(G::Sub, &[p, q])?;
                let qx = self.quarter(x())?;
                let b = self.emit(G::Sub, &[a, qx])?;
                let qy = self.quarter(y())?;
                let c = self.emit(G::Sub, &[b, qy])?;
                let d = self.emit(G::Times2, &[c])?;
                self.emit(G::Times2, &[d])
            }
            (_, G::Square) => self.emit(G::Mul, &[x(), x()]),
            (_, G::Const(z)) => {
                let z = z.exact().clone();
                self.exact_const(&z)
            }
            (_, G::TimesZeta(z)) => {
                let z = z.exact().clone();
                let c = self.exact_const(&z)?;
                self.emit(G::Mul, &[x(), c])
            }
            (_, G::OneMinus | G::Times2 | G::Phi) => {
                unreachable!("native in every set that reaches this arm")
            }
        }
    }
}

/// Rewrites `source` into gates of `target`.
///
/// `eps` sets the dyadic precision `k = ⌈log₂(1/ε)⌉` (at most 64) used for `ζ` parameters
/// over `{G₊, G₁₋}`; the returned multiplier is the worst over the source gates.
pub fn lower_circuit(source: &GeneralizedCircuit, target: GateSet, eps: &Rational) -> Result<LoweredCircuit> {
    if eps.is_negative() {
        return Err(FpaError::Domain("eps must be non-negative".into()));
    }
    if let Some(cap) = target.eps_cap() {
        if *eps > cap {
            return Err(FpaError::Domain(format!("eps above {cap} voids the multipliers for this gate set")));
        }
    }
    let gate_multipliers = source
        .gates()
        .iter()
        .map(|g| target.multiplier(&g.kind))
        .collect::<Result<Vec<_>>>()?;
    let bits = if eps.is_zero() {
        64
    } else {
        let inv = eps.recip().ceil().to_integer();
        let mut k = 0u32;
        while k < 64 && (BigInt::one() << k) < inv {
            k += 1;
        }
        k.max(1)
    };
    let mut lw = Lowerer {
        target,
        gates: Vec::new(),
        forwards: Vec::new(),
        bits,
        zeta_error: 0.0,
        one: None,
        zero: None,
        half: None,
    };
    let pins: Vec<usize> = (0..source.len()).map(|_| lw.forward()).collect();
    for (i, g) in source.gates().iter().enumerate() {
        let ins: Vec<usize> = g.inputs.iter().map(|&j| pins[j]).collect();
        let out = lw.emit(g.kind.clone(), &ins)?;
        lw.resolve(pins[i], out);
    }
    let mut gates = std::mem::take(&mut lw.gates);
    for g in &mut gates {
        for w in &mut g.inputs {
            *w = lw.chase(*w)?;
        }
    }
    let index_map = pins.iter().map(|&p| lw.chase(p)).collect::<Result<Vec<_>>>()?;
    let multiplier = gate_multipliers.iter().copied().max().unwrap_or(Multiplier::Bounded(1));
    Ok(LoweredCircuit {
        circuit: GeneralizedCircuit::new(gates)?,
        index_map,
        multiplier,
        gate_multipliers,
        zeta_error: lw.zeta_error,
    })
}
