//! Fixed-total subproblem: for a given total offload `t`, split it across the
//! servers to minimize the device's response time under the utilization and
//! power constraints.
//!
//! Stationarity of each link term reduces to one polynomial per server
//! ([`quintic`]); for a fixed coupling multiplier `chi` each server's rate is
//! the in-domain root of its polynomial, and `chi` is searched so the rates sum
//! to `t`. Active sets are enumerated and the power multiplier `rho` is
//! searched when the budget binds.

pub mod quintic;
pub mod roots;

pub use quintic::{quintic_coefficients, QuinticCoeffs, QuinticContext, QuinticForm};
pub use roots::{bracketed_root, real_roots};

use crate::analytic::LinkTerm;
use crate::error::{Error, Result};
use crate::model::{Scenario, StrategyProfile};

/// Servers whose utilization would exceed this are treated as saturated.
pub const UTILIZATION_GUARD: f64 = 1.0 - 1e-6;
const SINGULAR: f64 = 1e-12;
/// Above this many servers only the full water-filling set is solved instead
/// of every active set.
const MAX_ENUMERATED_SERVERS: usize = 8;

#[derive(Debug, Clone, PartialEq)]
pub struct Multipliers {
    pub eps: Vec<f64>,
    pub chi: f64,
    pub varpi: Vec<f64>,
    pub rho: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct KktCandidate {
    pub allocation: Vec<f64>,
    pub multipliers: Multipliers,
    /// Response time `T_i*(t)` of the allocation.
    pub objective: f64,
    /// Sum-to-`t`, nonnegativity, utilization guard and power budget hold.
    pub feasible: bool,
    /// Stationarity and dual feasibility hold; false for fallback allocations.
    pub kkt_valid: bool,
    /// Largest `|grad_j - eps_j + chi + rho * cost_j|`.
    pub stationarity_residual: f64,
    /// Largest of `|rho * slack|` and the guard complementarity products.
    pub complementary_residual: f64,
    /// Power budget minus power drawn.
    pub power_slack: f64,
}

/// Per-`t` data of one server.
#[derive(Debug, Clone, Copy)]
struct ServerAtT {
    cap: f64,
    slope0: f64,
    slope_cap: f64,
    /// Stationarity polynomial with `X = 0`.
    base: QuinticCoeffs,
    /// Part of the polynomial multiplying `X`.
    per_x: QuinticCoeffs,
}

/// Device `i`'s subproblem with every other device's row frozen.
#[derive(Debug, Clone)]
pub struct DeviceProblem {
    pub device: usize,
    pub lambda: f64,
    pub local_time: f64,
    pub terms: Vec<LinkTerm>,
    pub power_cap: f64,
    pub static_power: f64,
}

impl DeviceProblem {
    pub fn new(sc: &Scenario, profile: &StrategyProfile, i: usize) -> Self {
        let md = sc.md(i);
        DeviceProblem {
            device: i,
            lambda: md.task_rate,
            local_time: md.local_time(),
            terms: (0..sc.num_servers()).map(|j| LinkTerm::new(sc, profile, i, j)).collect(),
            power_cap: md.power_cap(),
            static_power: sc.config().system.static_power,
        }
    }

    pub fn num_servers(&self) -> usize {
        self.terms.len()
    }

    /// Response time of the allocation; `+inf` if a used server saturates.
    pub fn objective(&self, alloc: &[f64]) -> f64 {
        let t: f64 = alloc.iter().sum();
        let mut total = (self.lambda - t) * self.local_time;
        if t > 0.0 {
            for (term, &x) in self.terms.iter().zip(alloc) {
                total += term.weighted_delay(x, t);
            }
        }
        total / self.lambda
    }

    pub fn power(&self, alloc: &[f64]) -> f64 {
        self.static_power + self.terms.iter().zip(alloc).map(|(term, x)| term.power_cost * x).sum::<f64>()
    }

    /// Primal feasibility with the solver's guard bands.
    pub fn is_feasible(&self, alloc: &[f64], t: f64) -> bool {
        let sum: f64 = alloc.iter().sum();
        alloc.iter().all(|&x| x >= 0.0)
            && (sum - t).abs() <= 1e-9 * t.max(1.0)
            && self
                .terms
                .iter()
                .zip(alloc)
                .all(|(term, &x)| x == 0.0 || term.utilization(x, t) <= UTILIZATION_GUARD)
            && self.power_cap - self.power(alloc) >= -1e-9
    }

    /// Partial derivative of `lambda_i * T_i*(t)` in the rate towards server `j`.
    pub fn grad_p3(&self, j: usize, t: f64, x: f64) -> Result<f64> {
        let term = &self.terms[j];
        let den = term.scaled_slack(x, t);
        if den < SINGULAR {
            return Err(Error::SingularPoint { server: j, denominator: den });
        }
        Ok(term.delay_slope(x, t))
    }

    /// The same partial with the sign of the quotient-rule cross term flipped,
    /// as the closed form is usually printed.
    pub fn grad_p3_printed(&self, j: usize, t: f64, x: f64) -> Result<f64> {
        let term = &self.terms[j];
        let den = term.scaled_slack(x, t);
        if den.abs() < SINGULAR {
            return Err(Error::SingularPoint { server: j, denominator: den });
        }
        Ok(term.delay_slope_printed(x, t))
    }

    pub fn quintic_context(&self, j: usize, t: f64, x_big: f64) -> QuinticContext {
        let term = &self.terms[j];
        QuinticContext { t, phi: term.phi, theta: term.theta, coeffs: term.coeffs, x_big, varpi: 0.0 }
    }

    fn servers_at(&self, t: f64) -> Vec<ServerAtT> {
        (0..self.num_servers())
            .map(|j| {
                let term = &self.terms[j];
                let cap = term.max_rate(t, UTILIZATION_GUARD);
                let base = quintic_coefficients(&self.quintic_context(j, t, 0.0), QuinticForm::Derived);
                let one = quintic_coefficients(&self.quintic_context(j, t, 1.0), QuinticForm::Derived);
                ServerAtT {
                    cap,
                    slope0: term.delay_slope(0.0, t),
                    slope_cap: if cap > 0.0 { term.delay_slope(cap, t) } else { f64::INFINITY },
                    base,
                    per_x: one.add_scaled(&base, -1.0),
                }
            })
            .collect()
    }

    /// Rate towards one server for given multipliers: zero when the marginal
    /// cost at zero already exceeds the price, the guard cap when even the cap
    /// is cheaper, otherwise the polynomial's root on `(0, cap)`.
    fn server_rate(&self, s: &ServerAtT, j: usize, chi: f64, rho: f64) -> f64 {
        let target = -chi - rho * self.terms[j].power_cost;
        if s.cap <= 0.0 || target <= s.slope0 {
            0.0
        } else if target >= s.slope_cap {
            s.cap
        } else {
            let x_big = self.terms[j].phi + chi + rho * self.terms[j].power_cost;
            let poly = s.base.add_scaled(&s.per_x, x_big);
            bracketed_root(&poly, 0.0, s.cap)
        }
    }

    /// Water-filling over the servers in `mask`: searches `chi` so the rates
    /// sum to `t`. `None` when the caps cannot carry `t`.
    fn water_fill(&self, servers: &[ServerAtT], mask: u64, t: f64, rho: f64) -> Option<(Vec<f64>, f64)> {
        let n = self.num_servers();
        let members: Vec<usize> = (0..n).filter(|j| mask >> j & 1 == 1).collect();
        let cost = |j: usize| rho * self.terms[j].power_cost;
        let cap_sum: f64 = members.iter().map(|&j| servers[j].cap).sum();
        let tol = 1e-13 * t.max(1.0);
        if cap_sum < t - tol {
            return None;
        }
        let rates = |chi: f64| -> Vec<f64> {
            let mut x = vec![0.0; n];
            for &j in &members {
                x[j] = self.server_rate(&servers[j], j, chi, rho);
            }
            x
        };
        let excess = |chi: f64| rates(chi).iter().sum::<f64>() - t;
        let mut lo = members.iter().map(|&j| -servers[j].slope_cap - cost(j)).fold(f64::INFINITY, f64::min);
        let mut hi = members.iter().map(|&j| -servers[j].slope0 - cost(j)).fold(f64::NEG_INFINITY, f64::max);
        if !lo.is_finite() {
            // Some member has no usable capacity.
            return None;
        }
        let mut f_lo = excess(lo);
        let mut f_hi = excess(hi);
        if f_lo.abs() <= tol {
            return Some((rates(lo), lo));
        }
        // Illinois false position on the decreasing function `excess`.
        let mut side = 0;
        let mut chi = 0.5 * (lo + hi);
        for _ in 0..400 {
            chi = (lo * f_hi - hi * f_lo) / (f_hi - f_lo);
            if !(chi > lo && chi < hi) {
                chi = 0.5 * (lo + hi);
            }
            let f = excess(chi);
            if f.abs() <= tol {
                break;
            }
            if f > 0.0 {
                lo = chi;
                f_lo = f;
                if side == 1 {
                    f_hi *= 0.5;
                }
                side = 1;
            } else {
                hi = chi;
                f_hi = f;
                if side == -1 {
                    f_lo *= 0.5;
                }
                side = -1;
            }
            if hi - lo <= 4.0 * f64::EPSILON * lo.abs().max(hi.abs()) {
                break;
            }
        }
        let x = rates(chi);
        Some((x, chi))
    }

    fn candidate(&self, alloc: Vec<f64>, chi: f64, rho: f64, t: f64) -> KktCandidate {
        let n = self.num_servers();
        let mut eps = vec![0.0; n];
        let mut varpi = vec![0.0; n];
        let mut stationarity: f64 = 0.0;
        let mut complementary: f64 = 0.0;
        let mut kkt_valid = true;
        for j in 0..n {
            let term = &self.terms[j];
            let price = chi + rho * term.power_cost;
            match self.grad_p3(j, t, alloc[j]) {
                Ok(g) if alloc[j] > 0.0 => {
                    let zeta = term.utilization(alloc[j], t);
                    if zeta >= UTILIZATION_GUARD * (1.0 - 1e-12) {
                        // Held at the guard: the guard multiplier absorbs the
                        // remaining slope and must be nonnegative.
                        let c = &term.coeffs;
                        let dzeta = 2.0 * term.phi * alloc[j] / t + c.delta + c.mu / t;
                        varpi[j] = -(g + price) / dzeta;
                        if varpi[j] < -1e-9 {
                            kkt_valid = false;
                        }
                        complementary = complementary.max((varpi[j] * (UTILIZATION_GUARD - zeta)).abs());
                    } else {
                        stationarity = stationarity.max((g + price).abs());
                    }
                }
                Ok(g) => {
                    eps[j] = g + price;
                    if eps[j] < -1e-9 {
                        kkt_valid = false;
                    }
                }
                Err(_) => {
                    kkt_valid = false;
                    stationarity = f64::INFINITY;
                }
            }
        }
        let power_slack = self.power_cap - self.power(&alloc);
        let complementary = complementary.max((rho * power_slack).abs());
        let feasible = self.is_feasible(&alloc, t);
        KktCandidate {
            objective: self.objective(&alloc),
            feasible,
            kkt_valid: kkt_valid && stationarity < 1e-6 && complementary < 1e-8,
            stationarity_residual: stationarity,
            complementary_residual: complementary,
            power_slack,
            multipliers: Multipliers { eps, chi, varpi, rho },
            allocation: alloc,
        }
    }

    /// KKT points of every active set at a fixed power multiplier. A set is
    /// kept only when each of its servers carries a positive rate (otherwise
    /// it repeats a smaller set) and every multiplier has the right sign.
    pub fn enumerate_candidates(&self, t: f64, rho: f64) -> Vec<KktCandidate> {
        let n = self.num_servers();
        let servers = self.servers_at(t);
        let masks: Box<dyn Iterator<Item = u64>> =
            if n > MAX_ENUMERATED_SERVERS { Box::new(std::iter::once((1u64 << n) - 1)) } else { Box::new(1u64..(1u64 << n)) };
        let mut out = Vec::new();
        for mask in masks {
            if let Some((x, chi)) = self.water_fill(&servers, mask, t, rho) {
                let all_positive = (0..n).all(|j| (mask >> j & 1 == 0) || x[j] > 0.0);
                if all_positive {
                    let c = self.candidate(x, chi, rho, t);
                    if c.kkt_valid {
                        out.push(c);
                    }
                }
            }
        }
        out
    }

    /// Unique stationary point over all servers at a fixed `rho`.
    fn kkt_point(&self, servers: &[ServerAtT], t: f64, rho: f64) -> Option<KktCandidate> {
        let n = self.num_servers();
        let (x, chi) = self.water_fill(servers, (1u64 << n) - 1, t, rho)?;
        Some(self.candidate(x, chi, rho, t))
    }

    /// Best allocation of total offload `t`.
    pub fn solve_p3(&self, t: f64) -> Result<KktCandidate> {
        if !(t > 0.0) || t > self.lambda * (1.0 + 1e-12) {
            return Err(Error::Infeasible { device: self.device, t });
        }
        let free = self.enumerate_candidates(t, 0.0);
        match best_of(free.iter()) {
            None => return self.fallback_candidate(t),
            Some(c) if c.power_slack >= -1e-9 => return Ok(c.clone()),
            Some(_) => {}
        }
        // The budget binds: the least-power allocation must fit first.
        let fallback = self.fallback(t)?;
        let servers = self.servers_at(t);
        let slack_at = |rho: f64| self.kkt_point(&servers, t, rho).map(|c| c.power_slack);
        let mut lo = 0.0;
        let mut hi = 1e-6;
        loop {
            match slack_at(hi) {
                Some(s) if s >= 0.0 => break,
                _ if hi > 1e12 => return Ok(self.mark_fallback(self.candidate(fallback, 0.0, 0.0, t))),
                _ => {
                    lo = hi;
                    hi *= 2.0;
                }
            }
        }
        let mut rho = hi;
        for _ in 0..300 {
            let s = slack_at(rho).unwrap_or(f64::NEG_INFINITY);
            if s >= 0.0 && (rho * s <= 1e-10 && s <= 1e-9) {
                break;
            }
            if s >= 0.0 {
                hi = rho;
            } else {
                lo = rho;
            }
            if hi - lo <= 4.0 * f64::EPSILON * hi {
                rho = hi;
                break;
            }
            rho = 0.5 * (lo + hi);
        }
        let cands = self.enumerate_candidates(t, rho);
        match best_of(cands.iter().filter(|c| c.feasible)) {
            Some(c) => Ok(c.clone()),
            None => self.fallback_candidate(t),
        }
    }

    fn mark_fallback(&self, mut c: KktCandidate) -> KktCandidate {
        c.kkt_valid = false;
        c
    }

    fn fallback_candidate(&self, t: f64) -> Result<KktCandidate> {
        let alloc = self.fallback(t)?;
        Ok(self.mark_fallback(self.candidate(alloc, 0.0, 0.0, t)))
    }

    /// Least-power allocation of `t`: servers in order of per-task power cost
    /// (index breaks ties), each filled up to its utilization guard.
    pub fn fallback(&self, t: f64) -> Result<Vec<f64>> {
        let n = self.num_servers();
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| self.terms[a].power_cost.total_cmp(&self.terms[b].power_cost));
        let mut alloc = vec![0.0; n];
        let mut left = t;
        for j in order {
            if left <= 0.0 {
                break;
            }
            let take = self.terms[j].max_rate(t, UTILIZATION_GUARD).min(left);
            alloc[j] = take;
            left -= take;
        }
        if left > 1e-12 * t.max(1.0) || self.power_cap - self.power(&alloc) < -1e-9 {
            return Err(Error::Infeasible { device: self.device, t });
        }
        Ok(alloc)
    }
}

/// Lowest objective, ties broken by the lexicographically smallest allocation.
fn best_of<'a>(cands: impl Iterator<Item = &'a KktCandidate>) -> Option<&'a KktCandidate> {
    cands.min_by(|a, b| {
        a.objective.total_cmp(&b.objective).then_with(|| {
            a.allocation
                .iter()
                .zip(&b.allocation)
                .map(|(x, y)| x.total_cmp(y))
                .find(|o| o.is_ne())
                .unwrap_or(std::cmp::Ordering::Equal)
        })
    })
}

pub fn solve_p3(sc: &Scenario, profile: &StrategyProfile, i: usize, t: f64) -> Result<KktCandidate> {
    DeviceProblem::new(sc, profile, i).solve_p3(t)
}

pub fn fallback_allocation(sc: &Scenario, profile: &StrategyProfile, i: usize, t: f64) -> Result<Vec<f64>> {
    DeviceProblem::new(sc, profile, i).fallback(t)
}
