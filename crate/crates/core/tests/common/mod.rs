//! Random instances and direct formula oracles shared by the integration
//! tests. The oracles work from the raw config only.
#![allow(dead_code)]

use mec_offload::model::{LinkParams, MdConfig, MecConfig, ModelOptions, ScenarioConfig, SystemConfig};
use mec_offload::kkt::{KktCandidate, UTILIZATION_GUARD};
use mec_offload::{Scenario, StrategyProfile};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Random 2x2-ish scenario. `tight_budget` draws power caps that can bind.
pub fn random_config(rng: &mut ChaCha8Rng, devices: usize, servers: usize, tight_budget: bool) -> ScenarioConfig {
    let mds = (0..devices)
        .map(|_| {
            let exec_mean = rng.gen_range(0.5..2.0);
            MdConfig {
                task_rate: rng.gen_range(1.0..6.0),
                cpu_speed: rng.gen_range(1.0..3.0),
                exec_mean,
                exec_second_moment: exec_mean * exec_mean * rng.gen_range(0.3..2.5),
                energy_efficiency: rng.gen_range(0.05..0.3),
                harvest_rate: if tight_budget { rng.gen_range(0.5..3.0) } else { rng.gen_range(5.0..20.0) },
                power_budget: if tight_budget { rng.gen_range(0.0..3.0) } else { rng.gen_range(50.0..100.0) },
            }
        })
        .collect();
    let servers_cfg = (0..servers).map(|_| MecConfig { cpu_speed: rng.gen_range(5.0..30.0) }).collect();
    let links = (0..devices)
        .map(|_| {
            (0..servers)
                .map(|_| {
                    let data_mean = rng.gen_range(0.5..1.5);
                    LinkParams {
                        data_mean,
                        data_second_moment: data_mean * data_mean * rng.gen_range(0.3..2.5),
                        rate: rng.gen_range(3.0..10.0),
                        channel_gain: rng.gen_range(0.05..0.6),
                        tx_power: 0.0,
                    }
                })
                .collect()
        })
        .collect();
    ScenarioConfig {
        system: SystemConfig { bandwidth: 10.0, noise_power: 0.1, static_power: rng.gen_range(0.05..0.3) },
        mds,
        servers: servers_cfg,
        links,
        options: ModelOptions { corrected_second_moment: rng.gen_bool(0.3), ..ModelOptions::default() },
    }
}

/// First valid scenario drawn from `rng`.
pub fn random_scenario(rng: &mut ChaCha8Rng, devices: usize, servers: usize, tight_budget: bool) -> Scenario {
    loop {
        if let Ok(sc) = Scenario::new(random_config(rng, devices, servers, tight_budget)) {
            return sc;
        }
    }
}

pub fn phi(cfg: &ScenarioConfig, i: usize, j: usize) -> f64 {
    cfg.mds[i].exec_mean / cfg.servers[j].cpu_speed + cfg.links[i][j].data_mean / cfg.links[i][j].rate
}

pub fn theta(cfg: &ScenarioConfig, i: usize, j: usize) -> f64 {
    let (md, l, f) = (&cfg.mds[i], &cfg.links[i][j], cfg.servers[j].cpu_speed);
    let (f2, r2) = if cfg.options.corrected_second_moment { (f * f, l.rate * l.rate) } else { (f, l.rate) };
    md.exec_second_moment / f2 + 2.0 * md.exec_mean * l.data_mean / (f * l.rate) + l.data_second_moment / r2
}

/// `(pi, zeta, omega)` of server `j` with routing-probability weights.
pub fn server(cfg: &ScenarioConfig, rows: &[Vec<f64>], j: usize) -> (f64, f64, f64) {
    let mut pi = 0.0;
    let mut tau = 0.0;
    let mut tau2 = 0.0;
    for (k, row) in rows.iter().enumerate() {
        let total: f64 = row.iter().sum();
        pi += row[j];
        if total > 0.0 {
            tau += row[j] / total * phi(cfg, k, j);
            tau2 += row[j] / total * theta(cfg, k, j);
        }
    }
    let zeta = pi * tau;
    let omega = if pi == 0.0 { 0.0 } else { pi * tau2 / (2.0 * (1.0 - zeta)) };
    (pi, zeta, omega)
}

pub fn response_time(cfg: &ScenarioConfig, rows: &[Vec<f64>], i: usize) -> f64 {
    let md = &cfg.mds[i];
    let total: f64 = rows[i].iter().sum();
    let mut t = (md.task_rate - total) / md.task_rate * md.exec_mean / md.cpu_speed;
    for j in 0..cfg.servers.len() {
        if rows[i][j] > 0.0 {
            t += rows[i][j] / md.task_rate * (phi(cfg, i, j) + server(cfg, rows, j).2);
        }
    }
    t
}

/// `x * (phi + omega)` at server `j` when device `i` sends `x` there out of a
/// total `t`; the device's other rates only enter through `t`.
pub fn link_delay(cfg: &ScenarioConfig, rows: &[Vec<f64>], i: usize, j: usize, x: f64, t: f64) -> f64 {
    let mut pi = x;
    let mut tau = x / t * phi(cfg, i, j);
    let mut tau2 = x / t * theta(cfg, i, j);
    for (k, row) in rows.iter().enumerate().filter(|(k, _)| *k != i) {
        let total: f64 = row.iter().sum();
        pi += row[j];
        if total > 0.0 {
            tau += row[j] / total * phi(cfg, k, j);
            tau2 += row[j] / total * theta(cfg, k, j);
        }
    }
    let omega = pi * tau2 / (2.0 * (1.0 - pi * tau));
    x * (phi(cfg, i, j) + omega)
}

/// Random profile with every row strictly inside `[0, lambda]`, every entry
/// positive when `interior`, and routing-probability utilization at most
/// `max_zeta` on every server.
pub fn random_profile(sc: &Scenario, rng: &mut ChaCha8Rng, interior: bool, max_zeta: f64) -> Option<StrategyProfile> {
    let cfg = sc.config();
    let (m, n) = (sc.num_devices(), sc.num_servers());
    for _ in 0..500 {
        let rows: Vec<Vec<f64>> = (0..m)
            .map(|i| {
                let share = rng.gen_range(0.05..0.95);
                let w: Vec<f64> = (0..n)
                    .map(|_| if interior || rng.gen_bool(0.7) { rng.gen_range(0.1..1.0) } else { 0.0 })
                    .collect();
                let s: f64 = w.iter().sum();
                w.iter().map(|x| if s > 0.0 { share * cfg.mds[i].task_rate * x / s } else { 0.0 }).collect()
            })
            .collect();
        if (0..n).all(|j| server(cfg, &rows, j).1 <= max_zeta) {
            return Some(StrategyProfile::from_rows(&rows).unwrap());
        }
    }
    None
}

/// Central difference with step `h`.
pub fn central(f: impl Fn(f64) -> f64, x: f64, h: f64) -> f64 {
    (f(x + h) - f(x - h)) / (2.0 * h)
}

/// Five-point central difference, for tight relative checks.
pub fn central5(f: impl Fn(f64) -> f64, x: f64, h: f64) -> f64 {
    (-f(x + 2.0 * h) + 8.0 * f(x + h) - 8.0 * f(x - h) + f(x - 2.0 * h)) / (12.0 * h)
}

pub fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-12)
}

/// Utilization of server `j` when device `i` sends `x` there out of `t`.
pub fn link_utilization(cfg: &ScenarioConfig, rows: &[Vec<f64>], i: usize, j: usize, x: f64, t: f64) -> f64 {
    let mut pi = x;
    let mut tau = x / t * phi(cfg, i, j);
    for (k, row) in rows.iter().enumerate().filter(|(k, _)| *k != i) {
        let total: f64 = row.iter().sum();
        pi += row[j];
        if total > 0.0 {
            tau += row[j] / total * phi(cfg, k, j);
        }
    }
    pi * tau
}

/// Per-task power cost of link `(i, j)` from the solved transmit power.
pub fn power_cost(cfg: &ScenarioConfig, i: usize, j: usize) -> f64 {
    let (md, l) = (&cfg.mds[i], &cfg.links[i][j]);
    l.tx_power * l.data_mean / l.rate + md.exec_mean / md.cpu_speed * md.energy_efficiency * md.cpu_speed.powi(3)
}

/// Copy of `sc` where device `i`'s power cap sits a fraction `u` of the way
/// between the cheapest and the dearest way to offload `t`.
pub fn calibrated_budget(sc: &Scenario, i: usize, t: f64, u: f64) -> Scenario {
    let mut cfg = sc.config().clone();
    let costs: Vec<f64> = (0..cfg.servers.len()).map(|j| power_cost(&cfg, i, j)).collect();
    let lo = costs.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = costs.iter().cloned().fold(0.0, f64::max);
    let cap = cfg.system.static_power + t * (lo + u * (hi - lo));
    cfg.mds[i].harvest_rate = 0.5 * cap;
    cfg.mds[i].power_budget = 0.5 * cap;
    Scenario::with_powers(cfg)
}

/// Stationarity and complementarity tolerance of KKT checks.
pub const KKT_TOL: f64 = 1e-6;

/// Checks a feasible candidate against finite-difference gradients of the
/// direct delay formula.
pub fn check_candidate(sc: &Scenario, rows: &[Vec<f64>], i: usize, t: f64, c: &KktCandidate) -> Result<(), String> {
    let cfg = sc.config();
    let mu = &c.multipliers;
    let sum: f64 = c.allocation.iter().sum();
    if (sum - t).abs() > 1e-9 * t.max(1.0) {
        return Err(format!("allocation sums to {sum}, t = {t}"));
    }
    for (j, &x) in c.allocation.iter().enumerate() {
        let price = mu.chi + mu.rho * power_cost(cfg, i, j);
        let zeta = link_utilization(cfg, rows, i, j, x, t);
        if x > 0.0 && zeta >= UTILIZATION_GUARD * (1.0 - 1e-12) {
            // At the guard only the sign matters; the slope is too steep for
            // finite differences.
            if mu.varpi[j] < -1e-9 {
                return Err(format!("server {j}: negative guard multiplier {}", mu.varpi[j]));
            }
            continue;
        }
        if x > 0.0 {
            let g = central5(|v| link_delay(cfg, rows, i, j, v, t), x, 1e-5 * x.min(t - x).max(1e-3 * x));
            let r = g + price;
            if r.abs() > KKT_TOL * g.abs().max(1.0) {
                return Err(format!("server {j}: stationarity residual {r:e} (grad {g}, price {price})"));
            }
        } else {
            let h = 1e-6 * t;
            let g = (link_delay(cfg, rows, i, j, h, t) - link_delay(cfg, rows, i, j, 0.0, t)) / h;
            if g + price < -1e-5 * g.abs().max(1.0) {
                return Err(format!("server {j}: negative bound multiplier {}", g + price));
            }
        }
    }
    if mu.rho < 0.0 || (mu.rho * c.power_slack).abs() > KKT_TOL {
        return Err(format!("power complementarity: rho {} slack {}", mu.rho, c.power_slack));
    }
    if c.stationarity_residual >= KKT_TOL || c.complementary_residual >= KKT_TOL {
        return Err(format!("reported residuals {} {}", c.stationarity_residual, c.complementary_residual));
    }
    Ok(())
}
