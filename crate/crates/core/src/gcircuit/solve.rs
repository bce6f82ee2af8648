use nalgebra::{DMatrix, DVector};
use petgraph::algo::tarjan_scc;
use petgraph::graph::DiGraph;

use super::{eval_unchecked, GeneralizedCircuit};
use crate::error::{FpaError, Result};
use crate::exec::Exec;

/// Best grid assignment found by [`brute_force_solve`].
#[derive(Clone, Debug, PartialEq)]
pub struct GridSolution {
    /// Grid indices `k`, the value of gate `i` being `k_i / steps`.
    pub grid: Vec<usize>,
    pub values: Vec<f64>,
    pub max_violation: f64,
    pub satisfied: bool,
}

fn max_violation(circuit: &GeneralizedCircuit, values: &[f64]) -> f64 {
    (0..circuit.len())
        .map(|i| (values[i] - circuit.target(i, values)).abs())
        .fold(0.0, f64::max)
}

/// Scans the grid `{0, 1/steps, …, 1}^ν` for the assignment with the least maximum
/// violation; ties go to the lexicographically smallest grid vector.
pub fn brute_force_solve(
    circuit: &GeneralizedCircuit,
    eps: f64,
    steps: usize,
    budget: u64,
    exec: Exec,
) -> Result<GridSolution> {
    if steps == 0 {
        return Err(FpaError::Domain("grid needs at least one step".into()));
    }
    let nu = circuit.len();
    let side = steps as u64 + 1;
    let total = (0..nu).try_fold(1u64, |acc, _| acc.checked_mul(side));
    match total {
        Some(t) if t <= budget => {}
        _ => {
            return Err(FpaError::Resource(format!(
                "grid of {side}^{nu} points exceeds the budget of {budget}"
            )))
        }
    }
    if nu == 0 {
        return Ok(GridSolution { grid: vec![], values: vec![], max_violation: 0.0, satisfied: true });
    }
    let value = |k: usize| k as f64 / steps as f64;
    // Each task fixes gate 0 and walks the remaining coordinates in odometer order.
    let per_first = exec.map_range(steps + 1, |first| {
        let mut grid = vec![0usize; nu];
        grid[0] = first;
        let mut values: Vec<f64> = grid.iter().map(|&k| value(k)).collect();
        let mut best: Option<(f64, Vec<usize>)> = None;
        loop {
            let v = max_violation(circuit, &values);
            if best.as_ref().map_or(true, |(b, _)| v < *b) {
                best = Some((v, grid.clone()));
            }
            let mut pos = nu;
            loop {
                if pos == 1 {
                    return best.expect("visited one point");
                }
                pos -= 1;
                if grid[pos] < steps {
                    grid[pos] += 1;
                    values[pos] = value(grid[pos]);
                    break;
                }
                grid[pos] = 0;
                values[pos] = 0.0;
            }
        }
    });
    let (violation, grid) = per_first
        .into_iter()
        .reduce(|a, b| if b.0 < a.0 { b } else { a })
        .expect("at least one task");
    Ok(GridSolution {
        values: grid.iter().map(|&k| value(k)).collect(),
        grid,
        max_violation: violation,
        satisfied: violation <= eps,
    })
}

#[derive(Clone, Debug)]
pub struct IterateConfig {
    pub damping: f64,
    /// Jacobi sweeps per strongly connected component.
    pub max_iters: usize,
    /// Component residual at which iteration stops.
    pub tolerance: f64,
    /// Newton steps tried when Jacobi stalls on a component.
    pub newton_iters: usize,
    /// Components larger than this skip the Newton fallback.
    pub newton_max_size: usize,
    /// Starting values; defaults to `1/2` everywhere.
    pub initial: Option<Vec<f64>>,
}

impl Default for IterateConfig {
    fn default() -> Self {
        Self {
            damping: 0.5,
            max_iters: 20_000,
            tolerance: 1e-13,
            newton_iters: 100,
            newton_max_size: 1500,
            initial: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct IterateOutcome {
    pub values: Vec<f64>,
    /// Largest `|v_i − trunc(target_i + offset_i)|` at the returned values.
    pub residual: f64,
    pub converged: bool,
}

/// Solves `v = target(v)` component by component in dependency order.
pub fn iterate_solve(circuit: &GeneralizedCircuit, config: &IterateConfig) -> Result<IterateOutcome> {
    iterate_solve_perturbed(circuit, &vec![0.0; circuit.len()], config)
}

/// Solves `v_i = trunc(target_i(v) + offset_i)`; with `|offset_i| ≤ ε` any solution is
/// an ε-satisfying assignment.
pub fn iterate_solve_perturbed(
    circuit: &GeneralizedCircuit,
    offsets: &[f64],
    config: &IterateConfig,
) -> Result<IterateOutcome> {
    let nu = circuit.len();
    if offsets.len() != nu {
        return Err(FpaError::Domain(format!("{} offsets for {nu} gates", offsets.len())));
    }
    if !(config.damping > 0.0 && config.damping <= 1.0) {
        return Err(FpaError::Domain("damping must lie in (0, 1]".into()));
    }
    let mut values = match &config.initial {
        Some(v) if v.len() == nu => v.iter().map(|x| x.clamp(0.0, 1.0)).collect(),
        Some(v) => return Err(FpaError::Domain(format!("{} initial values for {nu} gates", v.len()))),
        None => vec![0.5; nu],
    };
    let mut graph = DiGraph::<usize, ()>::with_capacity(nu, 2 * nu);
    let nodes: Vec<_> = (0..nu).map(|i| graph.add_node(i)).collect();
    for (i, g) in circuit.gates().iter().enumerate() {
        for &j in &g.inputs {
            graph.add_edge(nodes[j], nodes[i], ());
        }
    }
    let update = |values: &[f64], i: usize| -> f64 {
        let g = &circuit.gates()[i];
        let args: Vec<f64> = g.inputs.iter().map(|&j| values[j]).collect();
        (eval_unchecked(&g.kind, &args) + offsets[i]).clamp(0.0, 1.0)
    };
    let mut converged = true;
    // `tarjan_scc` yields components in reverse topological order.
    for comp in tarjan_scc(&graph).into_iter().rev() {
        let members: Vec<usize> = comp.iter().map(|&n| graph[n]).collect();
        let cyclic = members.len() > 1;
        if !cyclic {
            let i = members[0];
            values[i] = update(&values, i);
            continue;
        }
        let comp_residual =
            |values: &[f64]| members.iter().map(|&i| (values[i] - update(values, i)).abs()).fold(0.0, f64::max);
        let mut ok = false;
        for _ in 0..config.max_iters {
            if comp_residual(&values) <= config.tolerance {
                ok = true;
                break;
            }
            let next: Vec<f64> = members.iter().map(|&i| update(&values, i)).collect();
            for (&i, x) in members.iter().zip(next) {
                values[i] = (1.0 - config.damping) * values[i] + config.damping * x;
            }
        }
        if !ok && members.len() <= config.newton_max_size {
            ok = newton(&members, &mut values, &update, config);
        }
        if !ok {
            log::debug!("component of {} gates stalled at residual {:.3e}", members.len(), comp_residual(&values));
        }
        converged &= ok;
    }
    let residual = (0..nu).map(|i| (values[i] - update(&values, i)).abs()).fold(0.0, f64::max);
    Ok(IterateOutcome { values, residual, converged: converged && residual <= config.tolerance.max(1e-12) })
}

/// Newton with backtracking on `F(v) = v − update(v)` restricted to one component.
fn newton(members: &[usize], values: &mut [f64], update: &dyn Fn(&[f64], usize) -> f64, config: &IterateConfig) -> bool {
    let size = members.len();
    let eval_f = |values: &[f64]| DVector::from_iterator(size, members.iter().map(|&i| values[i] - update(values, i)));
    let h = 1e-7;
    for _ in 0..config.newton_iters {
        let f = eval_f(values);
        let norm = f.amax();
        if norm <= config.tolerance {
            return true;
        }
        let mut jac = DMatrix::<f64>::zeros(size, size);
        for (c, &j) in members.iter().enumerate() {
            let saved = values[j];
            let step = if saved + h <= 1.0 { h } else { -h };
            values[j] = saved + step;
            let fj = eval_f(values);
            values[j] = saved;
            jac.set_column(c, &((fj - &f) / step));
        }
        let Ok(delta) = jac.svd(true, true).solve(&f, 1e-12) else {
            return false;
        };
        let mut t = 1.0;
        let mut improved = false;
        while t > 1e-6 {
            let trial: Vec<f64> = members.iter().zip(delta.iter()).map(|(&i, d)| (values[i] - t * d).clamp(0.0, 1.0)).collect();
            let saved: Vec<f64> = members.iter().map(|&i| values[i]).collect();
            for (&i, x) in members.iter().zip(&trial) {
                values[i] = *x;
            }
            if eval_f(values).amax() < norm {
                improved = true;
                break;
            }
            for (&i, x) in members.iter().zip(saved) {
                values[i] = x;
            }
            t *= 0.5;
        }
        if !improved {
            return false;
        }
    }
    eval_f(values).amax() <= config.tolerance
}
