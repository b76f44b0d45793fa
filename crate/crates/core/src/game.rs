//! Iterated best-response dynamics and equilibrium diagnostics.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::analytic::{md_power, response_time_md, server_load};
use crate::best_response::{best_response, grid_oracle};
use crate::error::{Error, Result};
use crate::model::{MdConfig, Scenario, StrategyProfile};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SweepMode {
    /// Devices update in index order, each seeing the latest rows.
    #[default]
    GaussSeidel,
    /// All devices respond to the previous profile and commit together.
    Jacobi,
}

impl std::fmt::Display for SweepMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            SweepMode::GaussSeidel => "gauss-seidel",
            SweepMode::Jacobi => "jacobi",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GameOptions {
    pub max_iters: usize,
    pub eps: f64,
    pub sweep: SweepMode,
    /// Grid resolution (as a fraction of each task rate) for an extra
    /// deviation probe in the residual; only used with at most 3 servers.
    pub probe_resolution: Option<f64>,
}

impl Default for GameOptions {
    fn default() -> Self {
        GameOptions { max_iters: 200, eps: 1e-4, sweep: SweepMode::GaussSeidel, probe_resolution: None }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct IterationRecord {
    pub profile: StrategyProfile,
    pub response_times: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GameTrace {
    /// The initial profile followed by the profile after each sweep.
    pub iterations: Vec<IterationRecord>,
    pub converged: bool,
    pub final_profile: StrategyProfile,
    pub ne_residual: f64,
}

impl GameTrace {
    pub fn sweeps(&self) -> usize {
        self.iterations.len() - 1
    }

    pub fn final_response_times(&self) -> &[f64] {
        &self.iterations.last().unwrap().response_times
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MixedStrategy {
    pub local_prob: f64,
    pub offload_probs: Vec<f64>,
}

pub fn mixed_strategy(md: &MdConfig, row: &[f64]) -> Result<MixedStrategy> {
    let lambda = md.task_rate;
    let sum: f64 = row.iter().sum();
    if sum > lambda * (1.0 + 1e-9) {
        return Err(Error::RowSumExceedsLambda { device: 0, row_sum: sum, lambda });
    }
    let offload_probs: Vec<f64> = row.iter().map(|x| (x / lambda).clamp(0.0, 1.0)).collect();
    let local_prob = (1.0 - offload_probs.iter().sum::<f64>()).clamp(0.0, 1.0);
    Ok(MixedStrategy { local_prob, offload_probs })
}

fn response_times(sc: &Scenario, profile: &StrategyProfile) -> Result<Vec<f64>> {
    (0..sc.num_devices()).map(|i| response_time_md(sc, profile, i)).collect()
}

/// Checks that every device's row respects its task rate, power budget and
/// server stability.
pub fn check_feasible(sc: &Scenario, profile: &StrategyProfile) -> Result<()> {
    let infeasible = |device, reason: String| Err(Error::InfeasibleInitial { device, reason });
    if profile.num_devices() != sc.num_devices() || profile.num_servers() != sc.num_servers() {
        return infeasible(0, "profile dimensions do not match the scenario".into());
    }
    for i in 0..sc.num_devices() {
        let row = profile.row(i);
        if row.iter().any(|x| !(x.is_finite() && *x >= 0.0)) {
            return infeasible(i, "negative or non-finite rate".into());
        }
        let lambda = sc.md(i).task_rate;
        if profile.row_sum(i) > lambda * (1.0 + 1e-9) {
            return infeasible(i, format!("offloads {} tasks/s but generates {}", profile.row_sum(i), lambda));
        }
        let power = md_power(sc, profile, i);
        if power.slack < -1e-9 {
            return infeasible(i, format!("power {} exceeds budget by {}", power.total_power_p, -power.slack));
        }
        for j in 0..sc.num_servers() {
            if row[j] > 0.0 && server_load(sc, profile, j).utilization_zeta >= 1.0 {
                return infeasible(i, format!("server {j} is saturated"));
            }
        }
    }
    Ok(())
}

/// Runs best-response sweeps from `initial` until the profile stops moving,
/// the equilibrium residual drops to `eps`, or `max_iters` sweeps are done.
pub fn iterate(sc: &Scenario, initial: &StrategyProfile, opts: &GameOptions) -> Result<GameTrace> {
    check_feasible(sc, initial)?;
    let max_lambda = sc.config().mds.iter().map(|m| m.task_rate).fold(0.0, f64::max);
    let mut profile = initial.clone();
    let mut iterations = vec![IterationRecord { profile: profile.clone(), response_times: response_times(sc, &profile)? }];
    let mut residual = f64::INFINITY;
    for _ in 0..opts.max_iters {
        let next = sweep(sc, &profile, opts.sweep)?;
        let change = next.max_abs_diff(&profile);
        profile = next;
        iterations.push(IterationRecord { profile: profile.clone(), response_times: response_times(sc, &profile)? });
        residual = ne_residual(sc, &profile, opts.probe_resolution)?;
        log::debug!("sweep {}: change {change:.3e}, residual {residual:.3e}", iterations.len() - 1);
        if change < 1e-6 * max_lambda || residual <= opts.eps {
            break;
        }
    }
    if opts.max_iters == 0 {
        residual = ne_residual(sc, &profile, opts.probe_resolution)?;
    }
    Ok(GameTrace { iterations, converged: residual <= opts.eps, final_profile: profile, ne_residual: residual })
}

fn sweep(sc: &Scenario, profile: &StrategyProfile, mode: SweepMode) -> Result<StrategyProfile> {
    match mode {
        SweepMode::GaussSeidel => {
            let mut next = profile.clone();
            for i in 0..sc.num_devices() {
                let br = best_response(sc, &next, i)?;
                next.set_row(i, &br.strategy);
            }
            Ok(next)
        }
        SweepMode::Jacobi => {
            let rows = (0..sc.num_devices())
                .into_par_iter()
                .map(|i| best_response(sc, profile, i).map(|br| br.strategy))
                .collect::<Result<Vec<_>>>()?;
            StrategyProfile::from_rows(&rows)
        }
    }
}

/// Largest gain any single device gets by deviating unilaterally from
/// `profile`, clamped at zero.
pub fn ne_residual(sc: &Scenario, profile: &StrategyProfile, probe_resolution: Option<f64>) -> Result<f64> {
    let mut worst: f64 = 0.0;
    for i in 0..sc.num_devices() {
        let current = response_time_md(sc, profile, i)?;
        let mut best = best_response(sc, profile, i)?.objective_t;
        if let Some(fraction) = probe_resolution {
            if sc.num_servers() <= 3 {
                let grid = grid_oracle(sc, profile, i, fraction * sc.md(i).task_rate)?;
                best = best.min(grid.objective_t);
            }
        }
        worst = worst.max(current - best);
    }
    Ok(worst)
}
