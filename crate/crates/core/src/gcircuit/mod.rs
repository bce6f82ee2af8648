//! Generalized circuits: gates over `[0, 1]` with cycles allowed, ε-satisfaction checks,
//! small solvers and gate-set lowering.

mod lower;
mod solve;

pub use lower::{lower_circuit, GateSet, LoweredCircuit, Multiplier};
pub use solve::{brute_force_solve, iterate_solve, iterate_solve_perturbed, GridSolution, IterateConfig, IterateOutcome};

use std::fmt;
use std::str::FromStr;

use crate::error::{FpaError, Result};
use crate::scalar::{format_rational, parse_rational, RatConst, Rational, Scalar};

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum GateType {
    One,
    Add,
    Sub,
    OneMinus,
    Times2,
    Mul,
    Square,
    /// `(x + 1)(y + 1)/4`.
    Phi,
    Copy,
    Half,
    TimesZeta(RatConst),
    /// `−1 + 4/(2 + x)`.
    Inv,
    Max,
    Min,
    Const(RatConst),
}

impl GateType {
    pub fn arity(&self) -> usize {
        match self {
            GateType::One | GateType::Const(_) => 0,
            GateType::OneMinus
            | GateType::Times2
            | GateType::Square
            | GateType::Copy
            | GateType::Half
            | GateType::TimesZeta(_)
            | GateType::Inv => 1,
            GateType::Add | GateType::Sub | GateType::Mul | GateType::Phi | GateType::Max | GateType::Min => 2,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            GateType::One => "G1",
            GateType::Add => "G+",
            GateType::Sub => "G-",
            GateType::OneMinus => "G1-",
            GateType::Times2 => "Gx2",
            GateType::Mul => "Gx",
            GateType::Square => "Gsq",
            GateType::Phi => "Gphi",
            GateType::Copy => "G=",
            GateType::Half => "G/2",
            GateType::TimesZeta(_) => "Gxzeta",
            GateType::Inv => "Ginv",
            GateType::Max => "Gmax",
            GateType::Min => "Gmin",
            GateType::Const(_) => "Gzeta",
        }
    }

    pub fn zeta(&self) -> Option<&RatConst> {
        match self {
            GateType::TimesZeta(z) | GateType::Const(z) => Some(z),
            _ => None,
        }
    }

    /// Same gate kind, ignoring the `ζ` parameter.
    pub fn same_kind(&self, other: &GateType) -> bool {
        std::mem::discriminant(self) == std::mem::discriminant(other)
    }
}

fn trunc<T: Scalar>(x: T) -> T {
    x.clamp_s(T::zero(), T::one())
}

/// Target value of a gate, truncated to `[0, 1]`; `args` must match the arity.
pub fn gate_eval<T: Scalar>(kind: &GateType, args: &[T]) -> Result<T> {
    if args.len() != kind.arity() {
        return Err(FpaError::Domain(format!(
            "{} takes {} inputs, got {}",
            kind.name(),
            kind.arity(),
            args.len()
        )));
    }
    Ok(eval_unchecked(kind, args))
}

pub(crate) fn eval_unchecked<T: Scalar>(kind: &GateType, args: &[T]) -> T {
    let x = || args[0].clone();
    let y = || args[1].clone();
    let two = || T::from_i64(2);
    let four = || T::from_i64(4);
    trunc(match kind {
        GateType::One => T::one(),
        GateType::Const(z) => T::lift(z),
        GateType::Add => x() + y(),
        GateType::Sub => x() - y(),
        GateType::OneMinus => T::one() - x(),
        GateType::Times2 => two() * x(),
        GateType::Mul => x() * y(),
        GateType::Square => x() * x(),
        GateType::Phi => (x() + T::one()) * (y() + T::one()) / four(),
        GateType::Copy => x(),
        GateType::Half => x() / two(),
        GateType::TimesZeta(z) => T::lift(z) * x(),
        GateType::Inv => four() / (two() + x()) - T::one(),
        GateType::Max => x().max_s(y()),
        GateType::Min => x().min_s(y()),
    })
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Gate {
    pub kind: GateType,
    pub inputs: Vec<usize>,
}

impl Gate {
    pub fn new(kind: GateType, inputs: Vec<usize>) -> Self {
        Self { kind, inputs }
    }
}

/// Gates `g_0 … g_{ν−1}`; gate `i`'s inputs index other gates.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct GeneralizedCircuit {
    gates: Vec<Gate>,
}

impl GeneralizedCircuit {
    pub fn new(gates: Vec<Gate>) -> Result<Self> {
        let nu = gates.len();
        let mut problems = Vec::new();
        for (i, g) in gates.iter().enumerate() {
            if g.inputs.len() != g.kind.arity() {
                problems.push(format!("gate {i} ({}) needs {} inputs", g.kind.name(), g.kind.arity()));
            }
            for &j in &g.inputs {
                if j >= nu {
                    problems.push(format!("gate {i} reads missing gate {j}"));
                } else if j == i {
                    problems.push(format!("gate {i} reads itself"));
                }
            }
            if let Some(z) = g.kind.zeta() {
                if *z.exact() < Rational::from_integer(0.into()) || *z.exact() > Rational::from_integer(1.into()) {
                    problems.push(format!("gate {i} has ζ outside [0, 1]"));
                }
            }
        }
        if !problems.is_empty() {
            return Err(FpaError::Validation(problems));
        }
        Ok(Self { gates })
    }

    pub fn gates(&self) -> &[Gate] {
        &self.gates
    }

    pub fn len(&self) -> usize {
        self.gates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.gates.is_empty()
    }

    /// Gate `i`'s target value under assignment `values`.
    pub fn target<T: Scalar>(&self, i: usize, values: &[T]) -> T {
        let g = &self.gates[i];
        let args: Vec<T> = g.inputs.iter().map(|&j| values[j].clone()).collect();
        eval_unchecked(&g.kind, &args)
    }

    /// Parses `i TYPE j [k] [zeta=num/den]` lines; `#` starts a comment.
    pub fn parse(text: &str) -> Result<Self> {
        let mut gates = Vec::new();
        for (ln, raw) in text.lines().enumerate() {
            let line_no = ln + 1;
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let err = |column: usize, message: String| FpaError::Parse { line: line_no, column, message };
            let mut fields = Vec::new();
            let mut zeta = None;
            for token in line.split_whitespace() {
                let column = raw.find(token).map_or(1, |c| c + 1);
                if let Some(z) = token.strip_prefix("zeta=") {
                    zeta = Some(parse_rational(z).ok_or_else(|| err(column, format!("bad ζ {z}")))?);
                } else {
                    fields.push((column, token));
                }
            }
            let (col, id) = fields.first().copied().ok_or_else(|| err(1, "empty gate line".into()))?;
            let id: usize = id.parse().map_err(|_| err(col, format!("bad gate index {id}")))?;
            if id != gates.len() {
                return Err(err(col, format!("gate indices must be consecutive, expected {}", gates.len())));
            }
            let (col, name) = fields.get(1).copied().ok_or_else(|| err(col, "missing gate type".into()))?;
            let needs_zeta = |z: Option<Rational>| z.map(RatConst::new).ok_or_else(|| err(col, format!("{name} needs zeta=")));
            let kind = match name {
                "G1" => GateType::One,
                "G+" => GateType::Add,
                "G-" => GateType::Sub,
                "G1-" => GateType::OneMinus,
                "Gx2" => GateType::Times2,
                "Gx" => GateType::Mul,
                "Gsq" => GateType::Square,
                "Gphi" => GateType::Phi,
                "G=" => GateType::Copy,
                "G/2" => GateType::Half,
                "Gxzeta" => GateType::TimesZeta(needs_zeta(zeta.clone())?),
                "Ginv" => GateType::Inv,
                "Gmax" => GateType::Max,
                "Gmin" => GateType::Min,
                "Gzeta" => GateType::Const(needs_zeta(zeta.clone())?),
                other => return Err(err(col, format!("unknown gate type {other}"))),
            };
            let inputs = fields[2..]
                .iter()
                .map(|&(c, t)| t.parse::<usize>().map_err(|_| err(c, format!("bad input index {t}"))))
                .collect::<Result<Vec<_>>>()?;
            gates.push(Gate::new(kind, inputs));
        }
        Self::new(gates)
    }
}

impl fmt::Display for GeneralizedCircuit {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, g) in self.gates.iter().enumerate() {
            write!(f, "{i} {}", g.kind.name())?;
            for j in &g.inputs {
                write!(f, " {j}")?;
            }
            if let Some(z) = g.kind.zeta() {
                write!(f, " zeta={}", format_rational(z.exact()))?;
            }
            writeln!(f)?;
        }
        Ok(())
    }
}

impl FromStr for GeneralizedCircuit {
    type Err = FpaError;
    fn from_str(s: &str) -> Result<Self> {
        Self::parse(s)
    }
}

/// Parses `i value` lines into a dense assignment of length `len`.
pub fn parse_assignment(text: &str, len: usize) -> Result<Vec<Rational>> {
    let mut values: Vec<Option<Rational>> = vec![None; len];
    for (ln, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let err = |message: String| FpaError::Parse { line: ln + 1, column: 1, message };
        let mut parts = line.split_whitespace();
        let idx: usize = parts
            .next()
            .and_then(|t| t.parse().ok())
            .ok_or_else(|| err("bad gate index".into()))?;
        let value = parts.next().and_then(parse_rational).ok_or_else(|| err("bad value".into()))?;
        if idx >= len {
            return Err(err(format!("gate {idx} out of range")));
        }
        values[idx] = Some(value);
    }
    let missing: Vec<String> = values
        .iter()
        .enumerate()
        .filter(|(_, v)| v.is_none())
        .map(|(i, _)| format!("no value for gate {i}"))
        .collect();
    if !missing.is_empty() {
        return Err(FpaError::Precondition(missing));
    }
    Ok(values.into_iter().map(|v| v.expect("checked")).collect())
}

pub fn format_assignment<T: Scalar>(values: &[T], render: impl Fn(&T) -> String) -> String {
    values.iter().enumerate().map(|(i, v)| format!("{i} {}\n", render(v))).collect()
}

#[derive(Clone, Debug, PartialEq)]
pub struct CheckReport<T> {
    pub satisfied: bool,
    pub max_violation: T,
    /// `|v[g_i] − target_i|` per gate.
    pub violations: Vec<T>,
}

/// Per-gate violation and whether all of them are within `eps`.
pub fn check_assignment<T: Scalar>(circuit: &GeneralizedCircuit, values: &[T], eps: &T) -> Result<CheckReport<T>> {
    if values.len() != circuit.len() {
        return Err(FpaError::Precondition(vec![format!(
            "assignment has {} values for {} gates",
            values.len(),
            circuit.len()
        )]));
    }
    if let Some(i) = values.iter().position(|v| *v < T::zero() || *v > T::one()) {
        return Err(FpaError::Precondition(vec![format!("value of gate {i} outside [0, 1]")]));
    }
    let violations: Vec<T> = (0..circuit.len())
        .map(|i| (values[i].clone() - circuit.target(i, values)).abs_s())
        .collect();
    let max_violation = violations.iter().fold(T::zero(), |acc, v| acc.max_s(v.clone()));
    Ok(CheckReport { satisfied: max_violation <= *eps, max_violation, violations })
}
