//! One device's optimal strategy against fixed opponents: a one-dimensional
//! search over the total offload `t`, solving the fixed-`t` split at each probe.

use crate::analytic::response_time_md;
use crate::error::{Error, Result};
use crate::kkt::{DeviceProblem, UTILIZATION_GUARD};
use crate::model::{Scenario, StrategyProfile};

/// Interval reduction ratio of the search, as used by the original algorithm
/// (not the exact golden ratio).
pub const GOLDEN: f64 = 0.618;
/// Equispaced totals probed before the golden-section refinement.
pub const PRESCAN_POINTS: usize = 33;

#[derive(Debug, Clone, PartialEq)]
pub struct BestResponse {
    pub strategy: Vec<f64>,
    pub total_t: f64,
    pub objective_t: f64,
    /// Number of fixed-`t` subproblem evaluations (grid points for the oracle).
    pub evaluations: usize,
}

/// Golden-section search for a minimizer of `f` on `[a, b]`; stops when the
/// bracket is shorter than `tol` and returns its midpoint.
pub fn golden_section(mut f: impl FnMut(f64) -> f64, mut a: f64, mut b: f64, tol: f64) -> f64 {
    let mut a1 = b - GOLDEN * (b - a);
    let mut a2 = a + GOLDEN * (b - a);
    let mut f1 = f(a1);
    let mut f2 = f(a2);
    while b - a >= tol {
        if f1 > f2 {
            a = a1;
            a1 = a2;
            f1 = f2;
            a2 = a + GOLDEN * (b - a);
            f2 = f(a2);
        } else {
            b = a2;
            a2 = a1;
            f2 = f1;
            a1 = b - GOLDEN * (b - a);
            f1 = f(a1);
        }
        // 0.618 is not the exact ratio, so the reused point drifts relative
        // to the shrinking bracket; restart both probes once it leaves order.
        if !(a <= a1 && a1 < a2 && a2 <= b) {
            a1 = b - GOLDEN * (b - a);
            a2 = a + GOLDEN * (b - a);
            f1 = f(a1);
            f2 = f(a2);
        }
    }
    0.5 * (a + b)
}

/// Minimum response time over splits of total offload `t`; `+inf` when no
/// split of `t` is feasible.
pub fn t_objective(sc: &Scenario, profile: &StrategyProfile, i: usize, t: f64) -> f64 {
    let problem = DeviceProblem::new(sc, profile, i);
    objective_at(&problem, t).0
}

fn objective_at(problem: &DeviceProblem, t: f64) -> (f64, Vec<f64>) {
    let n = problem.num_servers();
    if t <= 0.0 {
        let zeros = vec![0.0; n];
        let f = if problem.power(&zeros) > problem.power_cap + 1e-9 { f64::INFINITY } else { problem.local_time };
        return (f, zeros);
    }
    match problem.solve_p3(t) {
        Ok(c) => (c.objective, c.allocation),
        Err(_) => (f64::INFINITY, vec![0.0; n]),
    }
}

pub fn best_response(sc: &Scenario, profile: &StrategyProfile, i: usize) -> Result<BestResponse> {
    let problem = DeviceProblem::new(sc, profile, i);
    let lambda = problem.lambda;
    let mut evaluations = 0;
    let mut eval = |t: f64| {
        evaluations += 1;
        objective_at(&problem, t)
    };

    let grid: Vec<f64> = (0..PRESCAN_POINTS).map(|k| lambda * k as f64 / (PRESCAN_POINTS - 1) as f64).collect();
    let scan: Vec<(f64, Vec<f64>)> = grid.iter().map(|&t| eval(t)).collect();
    let k_best = (0..scan.len()).min_by(|&a, &b| scan[a].0.total_cmp(&scan[b].0)).unwrap();
    let mut best = (scan[k_best].0, scan[k_best].1.clone());

    let lo = grid[k_best.saturating_sub(1)];
    let hi = grid[(k_best + 1).min(grid.len() - 1)];
    let t_star = golden_section(|t| eval(t).0, lo, hi, 1e-6 * lambda);
    let refined = eval(t_star);
    if refined.0 < best.0 {
        best = refined;
    }

    let current = profile.row(i).to_vec();
    let t_current: f64 = current.iter().sum();
    if t_current <= lambda && problem.is_feasible(&current, t_current) {
        let f = problem.objective(&current);
        if f < best.0 {
            best = (f, current);
        }
    }
    if !best.0.is_finite() {
        return Err(Error::Infeasible { device: i, t: 0.0 });
    }

    let strategy = best.1;
    let with_row = profile.with_row(i, &strategy);
    Ok(BestResponse {
        total_t: strategy.iter().sum(),
        objective_t: response_time_md(sc, &with_row, i)?,
        strategy,
        evaluations,
    })
}

/// Exhaustive search over the grid `{k * resolution}` of feasible strategies
/// (at most three servers).
pub fn grid_oracle(sc: &Scenario, profile: &StrategyProfile, i: usize, resolution: f64) -> Result<BestResponse> {
    let problem = DeviceProblem::new(sc, profile, i);
    let n = problem.num_servers();
    let lambda = problem.lambda;
    if n > 3 {
        return Err(Error::Unsupported(format!("grid oracle needs at most 3 servers, got {n}")));
    }
    if !(resolution > 0.0 && resolution.is_finite() && resolution <= lambda) {
        return Err(Error::ResolutionTooCoarse { resolution, lambda });
    }
    let steps = (lambda / resolution * (1.0 + 1e-12)).floor() as usize;
    let mut best: Option<(f64, Vec<f64>)> = None;
    let mut evaluations = 0;
    let mut point = vec![0.0; n];
    let mut visit = |x: &[f64]| {
        evaluations += 1;
        let t: f64 = x.iter().sum();
        let stable = t == 0.0
            || problem.terms.iter().zip(x).all(|(term, &v)| v == 0.0 || term.utilization(v, t) <= UTILIZATION_GUARD);
        if !stable || problem.power(x) > problem.power_cap + 1e-9 {
            return;
        }
        let f = problem.objective(x);
        if best.as_ref().is_none_or(|(b, _)| f < *b) {
            best = Some((f, x.to_vec()));
        }
    };
    grid_walk(&mut point, 0, steps, resolution, &mut visit);
    let (_, strategy) = best.ok_or(Error::Infeasible { device: i, t: 0.0 })?;
    let with_row = profile.with_row(i, &strategy);
    Ok(BestResponse {
        total_t: strategy.iter().sum(),
        objective_t: response_time_md(sc, &with_row, i)?,
        strategy,
        evaluations,
    })
}

/// Visits every `point` with entries `k_j * h`, `sum k_j <= budget`.
fn grid_walk(point: &mut [f64], axis: usize, budget: usize, h: f64, visit: &mut impl FnMut(&[f64])) {
    if axis == point.len() {
        visit(point);
        return;
    }
    for k in 0..=budget {
        point[axis] = k as f64 * h;
        grid_walk(point, axis + 1, budget - k, h, visit);
    }
    point[axis] = 0.0;
}
