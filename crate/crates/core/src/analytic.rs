//! Closed-form queueing quantities for a strategy profile.
//!
//! Servers are M/G/1 FCFS queues; waiting time follows Pollaczek-Khinchine.
//! Service moments are mixed with the routing probabilities
//! `p_{k,j} = lambda_{k,j} / sum_l lambda_{k,l}` exactly as the game model
//! defines them. [`stream_server_load`] gives the physical stream mixture
//! instead, which is what a simulation of the same system measures.

use crate::error::{Error, Result};
use crate::model::{Scenario, StrategyProfile};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TaskMoments {
    /// Mean service time `r_i / F_j + A_{i,j} / R_{i,j}`.
    pub phi: f64,
    /// Second-moment term of the service time.
    pub theta: f64,
}

pub fn task_moments(sc: &Scenario, i: usize, j: usize) -> TaskMoments {
    TaskMoments { phi: sc.phi(i, j), theta: sc.theta(i, j) }
}

/// Exact first and second moments of `r_i / F_j + A_{i,j} / R_{i,j}` for
/// independent `r_i`, `A_{i,j}`.
pub fn physical_moments(sc: &Scenario, i: usize, j: usize) -> TaskMoments {
    let md = sc.md(i);
    let link = sc.link(i, j);
    let f = sc.config().servers[j].cpu_speed;
    let r = link.rate;
    TaskMoments {
        phi: md.exec_mean / f + link.data_mean / r,
        theta: md.exec_second_moment / (f * f)
            + 2.0 * md.exec_mean * link.data_mean / (f * r)
            + link.data_second_moment / (r * r),
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ServerLoad {
    /// Total arrival rate `pi_j`.
    pub arrival_pi: f64,
    pub service_mean_tau: f64,
    pub service_second_moment_tau2: f64,
    /// `arrival_pi * service_mean_tau`.
    pub utilization_zeta: f64,
    /// Mean waiting time; `+inf` when `utilization_zeta >= 1`.
    pub waiting_omega: f64,
}

/// Pollaczek-Khinchine mean waiting time `pi * tau2 / (2 (1 - zeta))`.
pub fn pk_waiting_time(arrival: f64, second_moment: f64, utilization: f64) -> f64 {
    if arrival == 0.0 {
        0.0
    } else if utilization >= 1.0 {
        f64::INFINITY
    } else {
        arrival * second_moment / (2.0 * (1.0 - utilization))
    }
}

/// Routing probability of device `i` towards server `j`; zero for a device
/// that offloads nothing.
pub fn routing_probability(profile: &StrategyProfile, i: usize, j: usize) -> f64 {
    let total = profile.row_sum(i);
    if total > 0.0 {
        profile.get(i, j) / total
    } else {
        0.0
    }
}

pub fn server_load(sc: &Scenario, profile: &StrategyProfile, j: usize) -> ServerLoad {
    let mut tau = 0.0;
    let mut tau2 = 0.0;
    for k in 0..sc.num_devices() {
        let p = routing_probability(profile, k, j);
        tau += p * sc.phi(k, j);
        tau2 += p * sc.theta(k, j);
    }
    load_from_moments(profile.column_sum(j), tau, tau2)
}

/// Server load with service moments weighted by each device's share of the
/// arrival stream and exact second moments. This is the M/G/1 model of the
/// simulated system.
pub fn stream_server_load(sc: &Scenario, profile: &StrategyProfile, j: usize) -> ServerLoad {
    let pi = profile.column_sum(j);
    let mut tau = 0.0;
    let mut tau2 = 0.0;
    if pi > 0.0 {
        for k in 0..sc.num_devices() {
            let w = profile.get(k, j) / pi;
            let m = physical_moments(sc, k, j);
            tau += w * m.phi;
            tau2 += w * m.theta;
        }
    }
    load_from_moments(pi, tau, tau2)
}

fn load_from_moments(pi: f64, tau: f64, tau2: f64) -> ServerLoad {
    let zeta = pi * tau;
    ServerLoad {
        arrival_pi: pi,
        service_mean_tau: tau,
        service_second_moment_tau2: tau2,
        utilization_zeta: zeta,
        waiting_omega: pk_waiting_time(pi, tau2, zeta),
    }
}

fn check_row(sc: &Scenario, profile: &StrategyProfile, i: usize) -> Result<f64> {
    let lambda = sc.md(i).task_rate;
    let row_sum = profile.row_sum(i);
    if row_sum > lambda * (1.0 + 1e-9) {
        return Err(Error::RowSumExceedsLambda { device: i, row_sum, lambda });
    }
    Ok(row_sum)
}

/// Mean response time of device `i`: local share at `r_i / f_i` plus each
/// offloaded share at service plus waiting time. `+inf` when a used server is
/// saturated.
pub fn response_time_md(sc: &Scenario, profile: &StrategyProfile, i: usize) -> Result<f64> {
    let offloaded = check_row(sc, profile, i)?;
    let md = sc.md(i);
    let lambda = md.task_rate;
    let mut t = (lambda - offloaded) / lambda * md.local_time();
    for j in 0..sc.num_servers() {
        let rate = profile.get(i, j);
        if rate > 0.0 {
            let load = server_load(sc, profile, j);
            if load.utilization_zeta >= 1.0 {
                return Ok(f64::INFINITY);
            }
            t += rate / lambda * (sc.phi(i, j) + load.waiting_omega);
        }
    }
    Ok(t)
}

/// Mean response time of device `i` under the stream-mixture server model,
/// the quantity a simulation of the profile measures.
pub fn stream_response_time(sc: &Scenario, profile: &StrategyProfile, i: usize) -> Result<f64> {
    let offloaded = check_row(sc, profile, i)?;
    let md = sc.md(i);
    let lambda = md.task_rate;
    let mut t = (lambda - offloaded) / lambda * md.local_time();
    for j in 0..sc.num_servers() {
        let rate = profile.get(i, j);
        if rate > 0.0 {
            let load = stream_server_load(sc, profile, j);
            t += rate / lambda * (physical_moments(sc, i, j).phi + load.waiting_omega);
        }
    }
    Ok(t)
}

/// The six constants that summarize how the other devices load server `j`,
/// as seen by device `i`.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct InterferenceCoeffs {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    pub delta: f64,
    pub mu: f64,
    pub nu: f64,
}

pub fn interference_coeffs(sc: &Scenario, profile: &StrategyProfile, i: usize, j: usize) -> InterferenceCoeffs {
    let mut others_rate = 0.0;
    let mut alpha = 0.0;
    let mut delta = 0.0;
    for k in (0..sc.num_devices()).filter(|&k| k != i) {
        let total = profile.row_sum(k);
        if total > 0.0 {
            let rate = profile.get(k, j);
            others_rate += rate;
            alpha += rate * sc.theta(k, j) / total;
            delta += rate * sc.phi(k, j) / total;
        }
    }
    InterferenceCoeffs {
        alpha,
        beta: sc.theta(i, j) * others_rate,
        gamma: others_rate * alpha,
        delta,
        mu: sc.phi(i, j) * others_rate,
        nu: others_rate * delta,
    }
}

/// Device `i`'s view of one server with the other devices frozen: everything
/// needed to evaluate its share of the response time as a function of its own
/// rate `x` towards the server and its total offload `t`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinkTerm {
    pub phi: f64,
    pub theta: f64,
    pub coeffs: InterferenceCoeffs,
    /// Power spent per offloaded task on this link.
    pub power_cost: f64,
}

impl LinkTerm {
    pub fn new(sc: &Scenario, profile: &StrategyProfile, i: usize, j: usize) -> Self {
        LinkTerm {
            phi: sc.phi(i, j),
            theta: sc.theta(i, j),
            coeffs: interference_coeffs(sc, profile, i, j),
            power_cost: sc.power_cost(i, j),
        }
    }

    /// Server utilization when device `i` sends `x` of its total `t`.
    pub fn utilization(&self, x: f64, t: f64) -> f64 {
        let c = &self.coeffs;
        self.phi * x * x / t + c.delta * x + c.mu * x / t + c.nu
    }

    /// `pi_j * tau2_j` as a function of `x`.
    fn load_numerator(&self, x: f64, t: f64) -> f64 {
        let c = &self.coeffs;
        self.theta * x * x / t + c.alpha * x + c.beta * x / t + c.gamma
    }

    /// Largest `x` keeping the utilization at or below `limit`.
    pub fn max_rate(&self, t: f64, limit: f64) -> f64 {
        let c = &self.coeffs;
        let qa = self.phi / t;
        let qb = c.delta + c.mu / t;
        let qc = c.nu - limit;
        if qc >= 0.0 {
            return 0.0;
        }
        // qa > 0, qc < 0: exactly one positive root.
        let disc = qb * qb - 4.0 * qa * qc;
        let mut x = 2.0 * (-qc) / (qb + disc.sqrt());
        // The root can land an ulp above the limit.
        while x > 0.0 && self.utilization(x, t) > limit {
            x -= 4.0 * f64::EPSILON * x;
        }
        x
    }

    /// `x * (phi + omega)`: the rate-weighted delay of this link, `+inf` when
    /// `x > 0` saturates the server.
    pub fn weighted_delay(&self, x: f64, t: f64) -> f64 {
        if x == 0.0 {
            return 0.0;
        }
        let d = 1.0 - self.utilization(x, t);
        if d <= 0.0 {
            return f64::INFINITY;
        }
        x * (self.phi + 0.5 * self.load_numerator(x, t) / d)
    }

    /// `t * (1 - zeta)`: the denominator shared by the slope formulas.
    pub fn scaled_slack(&self, x: f64, t: f64) -> f64 {
        let c = &self.coeffs;
        -self.phi * x * x - (c.mu + c.delta * t) * x + t - c.nu * t
    }

    /// Derivative of [`Self::weighted_delay`] in `x` with `t` held fixed.
    pub fn delay_slope(&self, x: f64, t: f64) -> f64 {
        let (num, num_d, den, den_d) = self.slope_parts(x, t);
        self.phi + 0.5 * (num_d * den - num * den_d) / (den * den)
    }

    /// The same slope with the sign of the quotient-rule cross term as it is
    /// commonly printed (`+ num * den'`); kept to measure that variant.
    pub fn delay_slope_printed(&self, x: f64, t: f64) -> f64 {
        let (num, num_d, den, den_d) = self.slope_parts(x, t);
        self.phi + 0.5 * (num_d * den + num * den_d) / (den * den)
    }

    fn slope_parts(&self, x: f64, t: f64) -> (f64, f64, f64, f64) {
        let c = &self.coeffs;
        let a = c.beta + c.alpha * t;
        let m = c.mu + c.delta * t;
        let num = self.theta * x * x * x + a * x * x + c.gamma * t * x;
        let num_d = 3.0 * self.theta * x * x + 2.0 * a * x + c.gamma * t;
        let den = self.scaled_slack(x, t);
        let den_d = -2.0 * self.phi * x - m;
        (num, num_d, den, den_d)
    }
}

/// Response time of device `i` through the interference-coefficient form:
/// identical to [`response_time_md`] but built from [`LinkTerm`]s.
pub fn response_time_rewritten(sc: &Scenario, profile: &StrategyProfile, i: usize) -> Result<f64> {
    let t = check_row(sc, profile, i)?;
    let md = sc.md(i);
    let lambda = md.task_rate;
    let mut total = (lambda - t) / lambda * md.local_time();
    if t > 0.0 {
        for j in 0..sc.num_servers() {
            total += LinkTerm::new(sc, profile, i, j).weighted_delay(profile.get(i, j), t) / lambda;
        }
    }
    Ok(total)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PowerReport {
    /// Mean transmit energy per offloaded task.
    pub tx_energy_et: f64,
    /// Computation power term of the constraint.
    pub compute_power_pc: f64,
    pub total_power_p: f64,
    /// `harvest + budget - total_power_p`.
    pub slack: f64,
}

/// Power drawn by device `i`: transmit energy and the per-task computation
/// term for every offloaded task, plus static power.
pub fn md_power(sc: &Scenario, profile: &StrategyProfile, i: usize) -> PowerReport {
    let md = sc.md(i);
    let offloaded = profile.row_sum(i);
    let mut tx_power = 0.0;
    for j in 0..sc.num_servers() {
        let link = sc.link(i, j);
        tx_power += profile.get(i, j) * link.tx_power * link.data_mean / link.rate;
    }
    let compute = offloaded * md.compute_energy_per_task();
    let total = tx_power + compute + sc.config().system.static_power;
    PowerReport {
        tx_energy_et: if offloaded > 0.0 { tx_power / offloaded } else { 0.0 },
        compute_power_pc: compute,
        total_power_p: total,
        slack: md.power_cap() - total,
    }
}

const SINGULAR: f64 = 1e-12;

/// Gradient of `T_i` with respect to device `i`'s own offload rates.
///
/// Every link term depends on the own rate `x_j` directly and on the row sum
/// `t` (through the routing probabilities), so the partial for server `j`
/// collects the direct term of link `j` plus the `t`-dependence of every link.
pub fn grad_ti(sc: &Scenario, profile: &StrategyProfile, i: usize) -> Result<Vec<f64>> {
    let t = check_row(sc, profile, i)?;
    let n = sc.num_servers();
    let md = sc.md(i);
    let lambda = md.task_rate;
    if t <= 0.0 {
        return Err(Error::SingularPoint { server: 0, denominator: t });
    }
    let mut via_total = 0.0;
    let mut direct = vec![0.0; n];
    for (j, slot) in direct.iter_mut().enumerate() {
        let term = LinkTerm::new(sc, profile, i, j);
        let x = profile.get(i, j);
        let c = &term.coeffs;
        let d = 1.0 - term.utilization(x, t);
        if t * d < SINGULAR {
            return Err(Error::SingularPoint { server: j, denominator: t * d });
        }
        let num = term.load_numerator(x, t);
        let num_x = 2.0 * term.theta * x / t + c.alpha + c.beta / t;
        let num_t = -(term.theta * x * x + c.beta * x) / (t * t);
        let d_x = -(2.0 * term.phi * x / t + c.delta + c.mu / t);
        let d_t = (term.phi * x * x + c.mu * x) / (t * t);
        let h = num / d;
        let h_x = (num_x * d - num * d_x) / (d * d);
        let h_t = (num_t * d - num * d_t) / (d * d);
        *slot = term.phi + 0.5 * h + 0.5 * x * h_x;
        via_total += 0.5 * x * h_t;
    }
    let local = -md.local_time() / lambda;
    Ok(direct.into_iter().map(|g| local + (g + via_total) / lambda).collect())
}

/// The partial derivative of `T_i` in the commonly printed closed form:
/// local term `-1 / (lambda_i f_i)`, own-link term only, and the derivative of
/// `H` with a `+` sign on its first fraction. Used only to measure how far that
/// form is from the true gradient.
pub fn grad_ti_printed(sc: &Scenario, profile: &StrategyProfile, i: usize) -> Result<Vec<f64>> {
    check_row(sc, profile, i)?;
    let md = sc.md(i);
    let lambda = md.task_rate;
    let mut out = Vec::with_capacity(sc.num_servers());
    for j in 0..sc.num_servers() {
        let term = LinkTerm::new(sc, profile, i, j);
        let c = &term.coeffs;
        let x = profile.get(i, j);
        let rest = profile.row_sum(i) - x;
        let num = (term.theta + c.alpha) * x * x + (c.alpha * rest + c.gamma + c.beta) * x + c.gamma * rest;
        let den = rest + x
            - (term.phi + c.delta) * x * x
            - (c.delta * rest + c.nu + c.mu) * x
            - c.nu * rest;
        if den.abs() < SINGULAR {
            return Err(Error::SingularPoint { server: j, denominator: den });
        }
        let den_d = 1.0 - 2.0 * (term.phi + c.delta) * x - (c.delta * rest + c.nu + c.mu);
        let num_d = 2.0 * (term.theta + c.alpha) * x + c.alpha * rest + c.gamma + c.beta;
        let h = num / den;
        let h_d = den_d / (den * den) * num + num_d / den;
        out.push(-1.0 / (lambda * md.cpu_speed) + (term.phi + 0.5 * h + 0.5 * x * h_d) / lambda);
    }
    Ok(out)
}
