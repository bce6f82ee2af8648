use std::collections::HashMap;
use std::fmt::Write as _;

use crate::auction::AuctionInstance;
use crate::distributions::PiecewiseCdf;
use crate::error::{FpaError, Result};
use crate::scalar::{format_rational, parse_rational, RatConst, Rational, Scalar};

pub const DEFAULT_NODE_BUDGET: usize = 2_000_000;

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum DagOp {
    Input(usize),
    Const(RatConst),
    Add,
    Sub,
    Mul,
    Div,
    Max,
    Min,
}

impl DagOp {
    fn name(&self) -> &'static str {
        match self {
            DagOp::Input(_) => "input",
            DagOp::Const(_) => "const",
            DagOp::Add => "add",
            DagOp::Sub => "sub",
            DagOp::Mul => "mul",
            DagOp::Div => "div",
            DagOp::Max => "max",
            DagOp::Min => "min",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DagNode {
    pub op: DagOp,
    /// Operands; always earlier node ids, so the node list is a topological order.
    pub args: Vec<usize>,
}

/// Division-free arithmetic circuit; inputs and outputs are the flattened jump coordinates.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CircuitDag {
    nodes: Vec<DagNode>,
    outputs: Vec<usize>,
    num_inputs: usize,
}

impl CircuitDag {
    pub fn nodes(&self) -> &[DagNode] {
        &self.nodes
    }

    pub fn outputs(&self) -> &[usize] {
        &self.outputs
    }

    pub fn num_inputs(&self) -> usize {
        self.num_inputs
    }

    pub fn eval<T: Scalar>(&self, inputs: &[T]) -> Result<Vec<T>> {
        if inputs.len() != self.num_inputs {
            return Err(FpaError::Domain(format!("expected {} inputs, got {}", self.num_inputs, inputs.len())));
        }
        let mut values: Vec<T> = Vec::with_capacity(self.nodes.len());
        for node in &self.nodes {
            let arg = |k: usize| values[node.args[k]].clone();
            let v = match &node.op {
                DagOp::Input(idx) => inputs[*idx].clone(),
                DagOp::Const(c) => T::lift(c),
                DagOp::Add => arg(0) + arg(1),
                DagOp::Sub => arg(0) - arg(1),
                DagOp::Mul => arg(0) * arg(1),
                DagOp::Div => {
                    if arg(1).is_zero() {
                        return Err(FpaError::Domain("division by zero".into()));
                    }
                    arg(0) / arg(1)
                }
                DagOp::Max => arg(0).max_s(arg(1)),
                DagOp::Min => arg(0).min_s(arg(1)),
            };
            values.push(v);
        }
        Ok(self.outputs.iter().map(|&o| values[o].clone()).collect())
    }

    /// One `id op args… [const num/den]` line per node, then `outputs: …`.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for (id, node) in self.nodes.iter().enumerate() {
            let _ = write!(out, "{id} {}", node.op.name());
            match &node.op {
                DagOp::Input(idx) => {
                    let _ = write!(out, " {idx}");
                }
                DagOp::Const(c) => {
                    let _ = write!(out, " {}", format_rational(c.exact()));
                }
                _ => {
                    for a in &node.args {
                        let _ = write!(out, " {a}");
                    }
                }
            }
            out.push('\n');
        }
        out.push_str("outputs:");
        for o in &self.outputs {
            let _ = write!(out, " {o}");
        }
        out.push('\n');
        out
    }

    pub fn parse(text: &str) -> Result<Self> {
        let err = |line: usize, message: String| FpaError::Parse { line, column: 1, message };
        let mut nodes = Vec::new();
        let mut outputs = None;
        let mut num_inputs = 0;
        for (ln, raw) in text.lines().enumerate() {
            let line_no = ln + 1;
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            if let Some(rest) = line.strip_prefix("outputs:") {
                let ids: std::result::Result<Vec<usize>, _> = rest.split_whitespace().map(str::parse).collect();
                outputs = Some(ids.map_err(|e| err(line_no, format!("bad output id: {e}")))?);
                continue;
            }
            let tokens: Vec<&str> = line.split_whitespace().collect();
            let id: usize = tokens[0].parse().map_err(|_| err(line_no, "bad node id".into()))?;
            if id != nodes.len() {
                return Err(err(line_no, format!("node ids must be consecutive, expected {}", nodes.len())));
            }
            let op_name = *tokens.get(1).ok_or_else(|| err(line_no, "missing op".into()))?;
            let operands = &tokens[2..];
            let ids = |count: usize| -> Result<Vec<usize>> {
                if operands.len() != count {
                    return Err(err(line_no, format!("{op_name} takes {count} operands")));
                }
                operands
                    .iter()
                    .map(|t| match t.parse::<usize>() {
                        Ok(a) if a < id => Ok(a),
                        _ => Err(err(line_no, format!("bad operand {t}"))),
                    })
                    .collect()
            };
            let node = match op_name {
                "input" => {
                    let idx: usize = operands
                        .first()
                        .and_then(|t| t.parse().ok())
                        .ok_or_else(|| err(line_no, "input needs an index".into()))?;
                    num_inputs = num_inputs.max(idx + 1);
                    DagNode { op: DagOp::Input(idx), args: Vec::new() }
                }
                "const" => {
                    let q = operands
                        .first()
                        .and_then(|t| parse_rational(t))
                        .ok_or_else(|| err(line_no, "const needs a rational".into()))?;
                    DagNode { op: DagOp::Const(RatConst::new(q)), args: Vec::new() }
                }
                "add" => DagNode { op: DagOp::Add, args: ids(2)? },
                "sub" => DagNode { op: DagOp::Sub, args: ids(2)? },
                "mul" => DagNode { op: DagOp::Mul, args: ids(2)? },
                "div" => DagNode { op: DagOp::Div, args: ids(2)? },
                "max" => DagNode { op: DagOp::Max, args: ids(2)? },
                "min" => DagNode { op: DagOp::Min, args: ids(2)? },
                other => return Err(err(line_no, format!("unknown op {other}"))),
            };
            nodes.push(node);
        }
        let outputs = outputs.ok_or_else(|| err(text.lines().count(), "missing outputs line".into()))?;
        if let Some(bad) = outputs.iter().find(|&&o| o >= nodes.len()) {
            return Err(err(text.lines().count(), format!("output {bad} is not a node")));
        }
        Ok(Self { nodes, outputs, num_inputs })
    }
}

struct Builder {
    nodes: Vec<DagNode>,
    consts: HashMap<Rational, usize>,
    budget: usize,
}

impl Builder {
    fn push(&mut self, op: DagOp, args: Vec<usize>) -> Result<usize> {
        if self.nodes.len() >= self.budget {
            return Err(FpaError::Resource(format!("circuit exceeds the node budget of {}", self.budget)));
        }
        self.nodes.push(DagNode { op, args });
        Ok(self.nodes.len() - 1)
    }

    fn constant(&mut self, q: &Rational) -> Result<usize> {
        if let Some(&id) = self.consts.get(q) {
            return Ok(id);
        }
        let id = self.push(DagOp::Const(RatConst::new(q.clone())), Vec::new())?;
        self.consts.insert(q.clone(), id);
        Ok(id)
    }

    fn bin(&mut self, op: DagOp, a: usize, b: usize) -> Result<usize> {
        self.push(op, vec![a, b])
    }

    /// `F(x)` as `F(0) + Σ_ℓ [F^ℓ(clamp(x, x_{ℓ−1}, x_ℓ)) − F^ℓ(x_{ℓ−1})]`.
    fn cdf(&mut self, f: &PiecewiseCdf, x: usize) -> Result<usize> {
        let pieces = f.pieces();
        let f0 = f.eval(&Rational::from_integer(0.into()));
        let mut acc = self.constant(&f0)?;
        for piece in pieces {
            if piece.coeffs.len() <= 1 {
                continue;
            }
            let lo = self.constant(piece.lo.exact())?;
            let hi = self.constant(piece.hi.exact())?;
            let above = self.bin(DagOp::Max, x, lo)?;
            let clamped = self.bin(DagOp::Min, above, hi)?;
            let term = if piece.coeffs.len() == 2 {
                let slope = self.constant(piece.coeffs[1].exact())?;
                let offset = self.bin(DagOp::Sub, clamped, lo)?;
                self.bin(DagOp::Mul, slope, offset)?
            } else {
                let mut horner = self.constant(piece.coeffs.last().expect("non-empty").exact())?;
                for c in piece.coeffs.iter().rev().skip(1) {
                    let scaled = self.bin(DagOp::Mul, horner, clamped)?;
                    let c = self.constant(c.exact())?;
                    horner = self.bin(DagOp::Add, scaled, c)?;
                }
                let base: Rational = piece.coeffs.iter().rev().fold(Rational::from_integer(0.into()), |acc, c| {
                    acc * piece.lo.exact() + c.exact()
                });
                let base = self.constant(&base)?;
                self.bin(DagOp::Sub, horner, base)?
            };
            acc = self.bin(DagOp::Add, acc, term)?;
        }
        Ok(acc)
    }
}

/// Circuit computing `G` over `{+, −, ×, max, min, const}`.
pub fn export_circuit(instance: &AuctionInstance, budget: usize) -> Result<CircuitDag> {
    let n = instance.n();
    let m = instance.m();
    let mut b = Builder { nodes: Vec::new(), consts: HashMap::new(), budget };
    let zero_q = Rational::from_integer(0.into());
    let one_q = Rational::from_integer(1.into());
    let inputs: Vec<Vec<usize>> = (0..n)
        .map(|i| (0..m).map(|j| b.push(DagOp::Input(i * m + j), Vec::new())).collect::<Result<Vec<_>>>())
        .collect::<Result<_>>()?;
    let one = b.constant(&one_q)?;
    let zero = b.constant(&zero_q)?;
    let mut outputs = Vec::with_capacity(n * m);
    for i in 0..n {
        // cdf[j][k] = F_{i,j}(α_j(b_k)), with F(α_j(b_m)) = F(1) = 1.
        let mut cdf_at: Vec<Vec<usize>> = Vec::new();
        for j in (0..n).filter(|&j| j != i) {
            let f = instance.prior(i, j);
            let mut row = Vec::with_capacity(m + 1);
            for k in 0..m {
                row.push(b.cdf(f, inputs[j][k])?);
            }
            row.push(one);
            cdf_at.push(row);
        }
        let mut wins = Vec::with_capacity(m + 1);
        for k in 0..=m {
            let mut row: Vec<Option<usize>> = vec![None; n];
            row[0] = Some(one);
            for (filled, vals) in cdf_at.iter().enumerate() {
                let below = if k == 0 { None } else { Some(vals[k - 1]) };
                let at = match below {
                    None => vals[k],
                    Some(g) => b.bin(DagOp::Sub, vals[k], g)?,
                };
                for t in (0..=filled + 1).rev() {
                    let stay = match (row[t], below) {
                        (Some(x), Some(g)) => Some(b.bin(DagOp::Mul, x, g)?),
                        _ => None,
                    };
                    let rise = match (t > 0).then(|| row[t - 1]).flatten() {
                        Some(x) => Some(b.bin(DagOp::Mul, x, at)?),
                        None => None,
                    };
                    row[t] = match (stay, rise) {
                        (Some(s), Some(r)) => Some(b.bin(DagOp::Add, s, r)?),
                        (s, r) => s.or(r),
                    };
                }
            }
            let mut h = zero;
            for (t, node) in row.iter().enumerate() {
                if let Some(node) = node {
                    let w = b.constant(&Rational::new(1.into(), (t as i64 + 1).into()))?;
                    let term = b.bin(DagOp::Mul, *node, w)?;
                    h = b.bin(DagOp::Add, h, term)?;
                }
            }
            wins.push(h);
        }
        let mut prev: Option<usize> = None;
        for j in 1..=m {
            let v = inputs[i][j - 1];
            let mut util = Vec::new();
            for (k, &h) in wins.iter().enumerate().skip(j - 1) {
                let bk = b.constant(instance.bid(k).exact())?;
                let margin = b.bin(DagOp::Sub, v, bk)?;
                util.push(b.bin(DagOp::Mul, margin, h)?);
            }
            let mut best_above = util[1];
            for &u in &util[2..] {
                best_above = b.bin(DagOp::Max, best_above, u)?;
            }
            let gap = b.bin(DagOp::Sub, util[0], best_above)?;
            let moved = b.bin(DagOp::Add, v, gap)?;
            let capped = b.bin(DagOp::Min, moved, one)?;
            let bid_floor = b.constant(instance.bid(j).exact())?;
            let floor = match prev {
                Some(p) => b.bin(DagOp::Max, bid_floor, p)?,
                None => bid_floor,
            };
            let out = b.bin(DagOp::Max, capped, floor)?;
            outputs.push(out);
            prev = Some(out);
        }
    }
    Ok(CircuitDag { nodes: b.nodes, outputs, num_inputs: n * m })
}
