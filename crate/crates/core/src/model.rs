//! Static scenario description, validation and the rate/power relation.
//!
//! All quantities are dimensionless model units; the reference scenario uses
//! the magnitudes of the two-device, two-server evaluation setup.

use serde::{Deserialize, Serialize};

use crate::error::{ConfigError, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemConfig {
    /// Channel bandwidth `B`.
    pub bandwidth: f64,
    /// Noise power `N0`.
    pub noise_power: f64,
    /// Device power draw when nothing is computed.
    pub static_power: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MdConfig {
    /// Poisson task generation rate `lambda_i`.
    pub task_rate: f64,
    /// Local processor speed `f_i`.
    pub cpu_speed: f64,
    /// Mean execution requirement `r_i`.
    pub exec_mean: f64,
    /// Second moment of the execution requirement. Taken as an independent
    /// input; it may be smaller than `exec_mean^2`.
    pub exec_second_moment: f64,
    /// Computation energy efficiency `eta_i` (power is `eta_i * f_i^3`).
    pub energy_efficiency: f64,
    /// Mean harvested power.
    pub harvest_rate: f64,
    /// Extra power the device may draw beyond what it harvests.
    pub power_budget: f64,
}

impl MdConfig {
    /// Local processing time of one task, `r_i / f_i`.
    pub fn local_time(&self) -> f64 {
        self.exec_mean / self.cpu_speed
    }

    /// Total power the device may spend: harvest plus budget.
    pub fn power_cap(&self) -> f64 {
        self.harvest_rate + self.power_budget
    }

    /// Computation power per task, `(r_i / f_i) * eta_i * f_i^3`.
    pub fn compute_energy_per_task(&self) -> f64 {
        self.local_time() * self.energy_efficiency * self.cpu_speed.powi(3)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MecConfig {
    pub cpu_speed: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinkParams {
    /// Mean amount of data per task.
    pub data_mean: f64,
    pub data_second_moment: f64,
    /// Transmission rate `R_{i,j}`.
    pub rate: f64,
    /// Channel power gain `|h_{i,j}|^2`.
    pub channel_gain: f64,
    /// Transmit power; derived by [`solve_transmit_powers`].
    #[serde(default)]
    pub tx_power: f64,
}

/// Which transmitters interfere at a server.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InterferenceModel {
    /// Only the other devices' links towards the same server interfere:
    /// `I_j = sum_{l != i} P_{l,j} |h_{l,j}|^2`.
    #[default]
    SameServer,
    /// Every link of every other device interferes:
    /// `I_j = sum_{l != i} sum_k P_{l,k} |h_{l,j}|^2`.
    AllLinks,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelOptions {
    /// Use `F_j^2` and `R_{i,j}^2` in the service-time second moment.
    #[serde(default)]
    pub corrected_second_moment: bool,
    #[serde(default)]
    pub interference: InterferenceModel,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioConfig {
    pub system: SystemConfig,
    pub mds: Vec<MdConfig>,
    pub servers: Vec<MecConfig>,
    /// `links[i][j]` describes device `i` to server `j`.
    pub links: Vec<Vec<LinkParams>>,
    #[serde(default)]
    pub options: ModelOptions,
}

impl ScenarioConfig {
    pub fn num_devices(&self) -> usize {
        self.mds.len()
    }

    pub fn num_servers(&self) -> usize {
        self.servers.len()
    }

    /// The two-device, two-server reference scenario with literal channel
    /// gains `gains[i][j]`.
    pub fn reference(gains: [[f64; 2]; 2]) -> Self {
        let md = |task_rate, exec_mean, exec_second_moment, energy_efficiency, harvest_rate, power_budget| MdConfig {
            task_rate,
            cpu_speed: 2.0,
            exec_mean,
            exec_second_moment,
            energy_efficiency,
            harvest_rate,
            power_budget,
        };
        let link = |data_second_moment, rate, channel_gain| LinkParams {
            data_mean: 1.0,
            data_second_moment,
            rate,
            channel_gain,
            tx_power: 0.0,
        };
        ScenarioConfig {
            system: SystemConfig { bandwidth: 10.0, noise_power: 0.1, static_power: 0.3 },
            mds: vec![md(5.0, 1.5, 0.7, 0.55, 12.0, 80.0), md(4.0, 1.1, 0.9, 0.6, 11.0, 85.0)],
            servers: vec![MecConfig { cpu_speed: 20.0 }, MecConfig { cpu_speed: 18.0 }],
            links: vec![
                vec![link(0.6, 7.0, gains[0][0]), link(0.4, 5.0, gains[0][1])],
                vec![link(0.5, 7.0, gains[1][0]), link(0.5, 6.0, gains[1][1])],
            ],
            options: ModelOptions::default(),
        }
    }
}

/// Channel gains of the first convergence experiment.
pub const REFERENCE_GAINS_A: [[f64; 2]; 2] = [[0.1375, 0.4655], [0.3196, 0.1509]];
/// Channel gains of the second convergence experiment.
pub const REFERENCE_GAINS_B: [[f64; 2]; 2] = [[0.0615, 0.0198], [0.5159, 0.0227]];

/// Checks every type invariant and returns the config unchanged, or every
/// violation found.
pub fn validate_config(cfg: ScenarioConfig) -> Result<ScenarioConfig> {
    let mut errs = Vec::new();
    let mut positive = |value: f64, field: String| {
        if !(value.is_finite() && value > 0.0) {
            errs.push(ConfigError::NonPositiveParameter(field));
        }
    };
    positive(cfg.system.bandwidth, "system.bandwidth".into());
    positive(cfg.system.noise_power, "system.noise_power".into());
    for (i, md) in cfg.mds.iter().enumerate() {
        positive(md.task_rate, format!("mds[{i}].task_rate"));
        positive(md.cpu_speed, format!("mds[{i}].cpu_speed"));
        positive(md.exec_mean, format!("mds[{i}].exec_mean"));
        positive(md.exec_second_moment, format!("mds[{i}].exec_second_moment"));
        positive(md.energy_efficiency, format!("mds[{i}].energy_efficiency"));
        positive(md.harvest_rate, format!("mds[{i}].harvest_rate"));
    }
    for (j, s) in cfg.servers.iter().enumerate() {
        positive(s.cpu_speed, format!("servers[{j}].cpu_speed"));
    }
    for (i, row) in cfg.links.iter().enumerate() {
        for (j, l) in row.iter().enumerate() {
            positive(l.data_mean, format!("links[{i}][{j}].data_mean"));
            positive(l.data_second_moment, format!("links[{i}][{j}].data_second_moment"));
            positive(l.rate, format!("links[{i}][{j}].rate"));
            positive(l.channel_gain, format!("links[{i}][{j}].channel_gain"));
        }
    }

    let mut nonneg = |value: f64, field: String| {
        if !(value.is_finite() && value >= 0.0) {
            errs.push(ConfigError::NonPositiveParameter(field));
        }
    };
    nonneg(cfg.system.static_power, "system.static_power".into());
    for (i, md) in cfg.mds.iter().enumerate() {
        nonneg(md.power_budget, format!("mds[{i}].power_budget"));
    }
    for (i, row) in cfg.links.iter().enumerate() {
        for (j, l) in row.iter().enumerate() {
            nonneg(l.tx_power, format!("links[{i}][{j}].tx_power"));
        }
    }

    let (m, n) = (cfg.mds.len(), cfg.servers.len());
    if m == 0 {
        errs.push(ConfigError::DimensionMismatch("at least one device is required".into()));
    }
    if n == 0 {
        errs.push(ConfigError::DimensionMismatch("at least one server is required".into()));
    }
    if cfg.links.len() != m {
        errs.push(ConfigError::DimensionMismatch(format!(
            "links has {} rows, expected {m} (one per device)",
            cfg.links.len()
        )));
    }
    for (i, row) in cfg.links.iter().enumerate() {
        if row.len() != n {
            errs.push(ConfigError::DimensionMismatch(format!(
                "links[{i}] has {} entries, expected {n} (one per server)",
                row.len()
            )));
        }
    }

    for (i, md) in cfg.mds.iter().enumerate() {
        if md.exec_second_moment < md.exec_mean * md.exec_mean {
            log::debug!(
                "mds[{i}]: exec_second_moment {} < exec_mean^2 {}; moments accepted as given",
                md.exec_second_moment,
                md.exec_mean * md.exec_mean
            );
        }
    }

    if errs.is_empty() {
        Ok(cfg)
    } else {
        Err(Error::Config(errs))
    }
}

const POWER_TOL: f64 = 1e-10;
const POWER_MAX_ROUNDS: usize = 10_000;
const POWER_DIVERGENCE: f64 = 1e12;
const POWER_DAMPING: f64 = 0.5;

/// Solves the coupled rate/power relation
/// `P_{i,j} = (N0 + I_j) / |h_{i,j}|^2 * (2^(R_{i,j}/B) - 1)` by damped
/// fixed-point iteration from zero interference.
///
/// Returns `powers[i][j]`. Fails with [`Error::NoConvergence`] when the
/// iteration blows up, which means the rates are not jointly achievable.
pub fn solve_transmit_powers(cfg: &ScenarioConfig) -> Result<Vec<Vec<f64>>> {
    let m = cfg.num_devices();
    let n = cfg.num_servers();
    let b = cfg.system.bandwidth;
    let n0 = cfg.system.noise_power;
    let snr_factor: Vec<Vec<f64>> = cfg
        .links
        .iter()
        .map(|row| row.iter().map(|l| (l.rate / b).exp2() - 1.0).collect())
        .collect();

    let mut power = vec![vec![0.0; n]; m];
    let mut next = power.clone();
    for round in 1..=POWER_MAX_ROUNDS {
        let mut max_change: f64 = 0.0;
        let mut max_power: f64 = 0.0;
        for i in 0..m {
            for j in 0..n {
                let interference = received_interference(cfg, &power, i, j);
                let target = (n0 + interference) / cfg.links[i][j].channel_gain * snr_factor[i][j];
                let damped = POWER_DAMPING * power[i][j] + (1.0 - POWER_DAMPING) * target;
                max_change = max_change.max((damped - power[i][j]).abs());
                max_power = max_power.max(damped);
                next[i][j] = damped;
            }
        }
        std::mem::swap(&mut power, &mut next);
        if !max_power.is_finite() || max_power > POWER_DIVERGENCE {
            return Err(Error::NoConvergence { rounds: round, max_power });
        }
        if max_change < POWER_TOL {
            return Ok(power);
        }
    }
    let max_power = power.iter().flatten().fold(0.0_f64, |a, &p| a.max(p));
    Err(Error::NoConvergence { rounds: POWER_MAX_ROUNDS, max_power })
}

/// Interference seen by device `i`'s transmission at server `j`.
pub fn received_interference(cfg: &ScenarioConfig, power: &[Vec<f64>], i: usize, j: usize) -> f64 {
    let mut total = 0.0;
    for (l, row) in power.iter().enumerate() {
        if l == i {
            continue;
        }
        let gain = cfg.links[l][j].channel_gain;
        total += match cfg.options.interference {
            InterferenceModel::SameServer => row[j] * gain,
            InterferenceModel::AllLinks => row.iter().sum::<f64>() * gain,
        };
    }
    total
}

/// Offload rates `lambda_{i,j}` of every device towards every server.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StrategyProfile {
    devices: usize,
    servers: usize,
    rates: Vec<f64>,
}

impl StrategyProfile {
    pub fn zeros(devices: usize, servers: usize) -> Self {
        StrategyProfile { devices, servers, rates: vec![0.0; devices * servers] }
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let devices = rows.len();
        let servers = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != servers) {
            return Err(Error::Config(vec![ConfigError::DimensionMismatch(
                "strategy rows have different lengths".into(),
            )]));
        }
        Ok(StrategyProfile { devices, servers, rates: rows.concat() })
    }

    pub fn num_devices(&self) -> usize {
        self.devices
    }

    pub fn num_servers(&self) -> usize {
        self.servers
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.rates[i * self.servers + j]
    }

    pub fn set(&mut self, i: usize, j: usize, rate: f64) {
        self.rates[i * self.servers + j] = rate;
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.rates[i * self.servers..(i + 1) * self.servers]
    }

    pub fn set_row(&mut self, i: usize, row: &[f64]) {
        self.rates[i * self.servers..(i + 1) * self.servers].copy_from_slice(row);
    }

    pub fn with_row(&self, i: usize, row: &[f64]) -> Self {
        let mut p = self.clone();
        p.set_row(i, row);
        p
    }

    pub fn row_sum(&self, i: usize) -> f64 {
        self.row(i).iter().sum()
    }

    /// Total arrival rate at server `j` from every device.
    pub fn column_sum(&self, j: usize) -> f64 {
        (0..self.devices).map(|i| self.get(i, j)).sum()
    }

    pub fn rows(&self) -> Vec<Vec<f64>> {
        self.rates.chunks(self.servers.max(1)).map(<[f64]>::to_vec).collect()
    }

    pub fn max_abs_diff(&self, other: &StrategyProfile) -> f64 {
        self.rates.iter().zip(&other.rates).fold(0.0, |acc, (a, b)| acc.max((a - b).abs()))
    }

    /// Swaps device rows `a` and `b`.
    pub fn swap_devices(&mut self, a: usize, b: usize) {
        for j in 0..self.servers {
            self.rates.swap(a * self.servers + j, b * self.servers + j);
        }
    }
}

/// A validated scenario with solved transmit powers and the per-link moments
/// every other module needs.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    cfg: ScenarioConfig,
    phi: Vec<f64>,
    theta: Vec<f64>,
    power_cost: Vec<f64>,
}

impl Scenario {
    /// Validates `cfg`, solves transmit powers and precomputes link moments.
    pub fn new(cfg: ScenarioConfig) -> Result<Self> {
        let mut cfg = validate_config(cfg)?;
        let powers = solve_transmit_powers(&cfg)?;
        for (row, prow) in cfg.links.iter_mut().zip(&powers) {
            for (link, &p) in row.iter_mut().zip(prow) {
                link.tx_power = p;
            }
        }
        Ok(Self::with_powers(cfg))
    }

    /// Uses the `tx_power` fields as given. `cfg` must already be valid.
    pub fn with_powers(cfg: ScenarioConfig) -> Self {
        let (m, n) = (cfg.num_devices(), cfg.num_servers());
        let mut phi = Vec::with_capacity(m * n);
        let mut theta = Vec::with_capacity(m * n);
        let mut power_cost = Vec::with_capacity(m * n);
        for (md, row) in cfg.mds.iter().zip(&cfg.links) {
            for (server, link) in cfg.servers.iter().zip(row) {
                let f = server.cpu_speed;
                let r = link.rate;
                phi.push(md.exec_mean / f + link.data_mean / r);
                let (f2, r2) = if cfg.options.corrected_second_moment { (f * f, r * r) } else { (f, r) };
                theta.push(
                    md.exec_second_moment / f2 + 2.0 * md.exec_mean * link.data_mean / (f * r) + link.data_second_moment / r2,
                );
                power_cost.push(link.tx_power * link.data_mean / r + md.compute_energy_per_task());
            }
        }
        Scenario { cfg, phi, theta, power_cost }
    }

    pub fn config(&self) -> &ScenarioConfig {
        &self.cfg
    }

    pub fn num_devices(&self) -> usize {
        self.cfg.num_devices()
    }

    pub fn num_servers(&self) -> usize {
        self.cfg.num_servers()
    }

    pub fn md(&self, i: usize) -> &MdConfig {
        &self.cfg.mds[i]
    }

    pub fn link(&self, i: usize, j: usize) -> &LinkParams {
        &self.cfg.links[i][j]
    }

    /// Mean service time of a device-`i` task at server `j`.
    pub fn phi(&self, i: usize, j: usize) -> f64 {
        self.phi[i * self.num_servers() + j]
    }

    /// Service-time second moment term of a device-`i` task at server `j`.
    pub fn theta(&self, i: usize, j: usize) -> f64 {
        self.theta[i * self.num_servers() + j]
    }

    /// Power spent per offloaded task: transmit energy plus the computation
    /// term that the power constraint attaches to every offloaded task.
    pub fn power_cost(&self, i: usize, j: usize) -> f64 {
        self.power_cost[i * self.num_servers() + j]
    }

    pub fn zero_profile(&self) -> StrategyProfile {
        StrategyProfile::zeros(self.num_devices(), self.num_servers())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn single(noise: f64, gain: f64, rate: f64, bandwidth: f64) -> ScenarioConfig {
        ScenarioConfig {
            system: SystemConfig { bandwidth, noise_power: noise, static_power: 0.1 },
            mds: vec![MdConfig {
                task_rate: 1.0,
                cpu_speed: 1.0,
                exec_mean: 1.0,
                exec_second_moment: 1.0,
                energy_efficiency: 0.1,
                harvest_rate: 1.0,
                power_budget: 1.0,
            }],
            servers: vec![MecConfig { cpu_speed: 10.0 }],
            links: vec![vec![LinkParams {
                data_mean: 1.0,
                data_second_moment: 1.0,
                rate,
                channel_gain: gain,
                tx_power: 0.0,
            }]],
            options: ModelOptions::default(),
        }
    }

    #[test]
    fn reference_scenario_is_valid() {
        let cfg = ScenarioConfig::reference(REFERENCE_GAINS_A);
        assert_eq!(validate_config(cfg.clone()).unwrap(), cfg);
    }

    #[test]
    fn zero_bandwidth_is_rejected() {
        let mut cfg = ScenarioConfig::reference(REFERENCE_GAINS_A);
        cfg.system.bandwidth = 0.0;
        match validate_config(cfg) {
            Err(Error::Config(errs)) => {
                assert_eq!(errs, vec![ConfigError::NonPositiveParameter("system.bandwidth".into())])
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn link_matrix_shape_is_checked() {
        let mut cfg = ScenarioConfig::reference(REFERENCE_GAINS_A);
        let extra = cfg.links[0].clone();
        cfg.links.push(extra);
        let err = validate_config(cfg).unwrap_err();
        assert!(matches!(err, Error::Config(ref e) if matches!(e[0], ConfigError::DimensionMismatch(_))));
    }

    #[test]
    fn zero_budget_is_allowed_but_negative_is_not() {
        let mut cfg = ScenarioConfig::reference(REFERENCE_GAINS_A);
        cfg.mds[0].power_budget = 0.0;
        assert!(validate_config(cfg.clone()).is_ok());
        cfg.mds[0].power_budget = -1.0;
        assert!(validate_config(cfg).is_err());
    }

    #[test]
    fn validation_is_idempotent() {
        let cfg = ScenarioConfig::reference(REFERENCE_GAINS_B);
        let once = validate_config(cfg).unwrap();
        let twice = validate_config(once.clone()).unwrap();
        assert_eq!(once, twice);
    }

    #[test]
    fn single_link_power_has_no_interference() {
        let p = solve_transmit_powers(&single(0.1, 0.25, 5.0, 10.0)).unwrap();
        assert!((p[0][0] - 0.4 * (2f64.sqrt() - 1.0)).abs() < 1e-9);
        assert!((p[0][0] - 0.165_685_4).abs() < 1e-7);
    }

    #[test]
    fn zero_rates_need_zero_power() {
        let mut cfg = ScenarioConfig::reference(REFERENCE_GAINS_A);
        for row in &mut cfg.links {
            for l in row {
                l.rate = 0.0;
            }
        }
        let p = solve_transmit_powers(&cfg).unwrap();
        assert!(p.iter().flatten().all(|&x| x == 0.0));
    }

    #[test]
    fn reference_powers_match_fixed_point_script() {
        // Frozen from an independent damped fixed-point script.
        let p = solve_transmit_powers(&ScenarioConfig::reference(REFERENCE_GAINS_A)).unwrap();
        let expected = [[1.20956352, 0.17150959], [0.5203848, 0.61461423]];
        for i in 0..2 {
            for j in 0..2 {
                assert!((p[i][j] - expected[i][j]).abs() < 1e-7, "{i},{j}: {}", p[i][j]);
            }
        }
    }

    #[test]
    fn all_links_interference_diverges_on_reference() {
        let mut cfg = ScenarioConfig::reference(REFERENCE_GAINS_A);
        cfg.options.interference = InterferenceModel::AllLinks;
        assert!(matches!(solve_transmit_powers(&cfg), Err(Error::NoConvergence { .. })));
    }

    #[test]
    fn profile_rows_and_columns() {
        let p = StrategyProfile::from_rows(&[vec![1.0, 2.0], vec![3.0, 4.0]]).unwrap();
        assert_eq!(p.row(1), &[3.0, 4.0]);
        assert_eq!(p.row_sum(0), 3.0);
        assert_eq!(p.column_sum(1), 6.0);
        let mut q = p.clone();
        q.swap_devices(0, 1);
        assert_eq!(q.rows(), vec![vec![3.0, 4.0], vec![1.0, 2.0]]);
        assert!(StrategyProfile::from_rows(&[vec![1.0], vec![1.0, 2.0]]).is_err());
    }
}
