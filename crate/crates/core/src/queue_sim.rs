//! Discrete-event simulation of the offloading system.
//!
//! Devices generate Poisson tasks; each task runs locally or is routed to a
//! server with the device's mixed-strategy probabilities. Servers are FCFS
//! single-server queues. Execution size and upload size are drawn from
//! two-point distributions matching their configured first two moments.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::analytic::stream_server_load;
use crate::error::{ConfigError, Error, Result};
use crate::model::{Scenario, StrategyProfile};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SimConfig {
    /// Tasks generated per replication, warmup included.
    pub horizon_tasks: u64,
    pub warmup_tasks: u64,
    pub seed: u64,
    pub replications: usize,
}

impl SimConfig {
    /// Warmup of 10% of the horizon and 20 replications.
    pub fn new(horizon_tasks: u64, seed: u64) -> Self {
        SimConfig { horizon_tasks, warmup_tasks: horizon_tasks / 10, seed, replications: 20 }
    }

    /// A horizon whose post-warmup part holds at least `tasks` tasks.
    pub fn with_measured_tasks(tasks: u64, seed: u64) -> Self {
        let horizon = (tasks as f64 / 0.9).ceil() as u64;
        let mut cfg = SimConfig::new(horizon, seed);
        cfg.warmup_tasks = horizon - tasks;
        cfg
    }

    fn validate(&self) -> Result<()> {
        let mut errors = Vec::new();
        if self.horizon_tasks <= self.warmup_tasks {
            errors.push(ConfigError::NonPositiveParameter("sim.horizon_tasks - sim.warmup_tasks".into()));
        }
        if self.replications == 0 {
            errors.push(ConfigError::NonPositiveParameter("sim.replications".into()));
        }
        if errors.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(errors))
        }
    }
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig::new(1_000_000, 0)
    }
}

/// Shape of the per-task service time at a server.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ServiceDistribution {
    /// Execution and upload sizes from moment-matched two-point laws.
    #[default]
    TwoPoint,
    /// Exponential service time with the configured mean (M/M/1 check).
    Exponential,
}

/// Mean with its 99% confidence half-width across replications.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Estimate {
    pub mean: f64,
    pub half_width: f64,
}

impl Estimate {
    /// Whether `value` is inside the interval, allowing summation rounding
    /// for intervals of zero width.
    pub fn contains(&self, value: f64) -> bool {
        (value - self.mean).abs() <= self.half_width + 1e-9 * value.abs()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ServerStats {
    pub waiting_time: Estimate,
    pub utilization: Estimate,
    /// Time-average number of tasks at the server (queue plus service).
    pub in_system: Estimate,
    pub arrival_rate: Estimate,
    pub service_mean: Estimate,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimResult {
    pub servers: Vec<ServerStats>,
    /// Mean response time per device.
    pub devices: Vec<Estimate>,
    pub replications: usize,
}

/// Two-point law: `low` with probability `p_low`, otherwise `high`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TwoPoint {
    pub low: f64,
    pub high: f64,
    pub p_low: f64,
}

impl TwoPoint {
    pub fn point(value: f64) -> Self {
        TwoPoint { low: value, high: value, p_low: 1.0 }
    }

    pub fn mean(&self) -> f64 {
        self.p_low * self.low + (1.0 - self.p_low) * self.high
    }

    pub fn second_moment(&self) -> f64 {
        self.p_low * self.low * self.low + (1.0 - self.p_low) * self.high * self.high
    }

    fn sample(&self, rng: &mut impl Rng) -> f64 {
        if self.p_low >= 1.0 || rng.gen::<f64>() < self.p_low {
            self.low
        } else {
            self.high
        }
    }
}

/// Two-point law with the given mean and second moment, its low point fixed
/// at half the mean. A second moment below `mean^2` cannot be matched and
/// degrades to a point mass at the mean.
pub fn moment_matching(mean: f64, second_moment: f64) -> TwoPoint {
    let variance = second_moment - mean * mean;
    if variance < -1e-12 * mean * mean {
        log::warn!("second moment {second_moment} is below mean^2 = {}; using a point mass", mean * mean);
    }
    if variance <= 0.0 || mean <= 0.0 {
        return TwoPoint::point(mean);
    }
    TwoPoint { low: 0.5 * mean, high: mean + 2.0 * variance / mean, p_low: 4.0 * variance / (mean * mean + 4.0 * variance) }
}

pub fn simulate(sc: &Scenario, profile: &StrategyProfile, sim: &SimConfig) -> Result<SimResult> {
    simulate_with(sc, profile, sim, ServiceDistribution::TwoPoint)
}

/// Where a generated task goes.
#[derive(Debug, Clone, Copy)]
struct Route {
    cumulative: f64,
    device: usize,
    server: Option<usize>,
}

struct Model {
    routes: Vec<Route>,
    total_rate: f64,
    exec: Vec<TwoPoint>,
    upload: Vec<Vec<TwoPoint>>,
    local_speed: Vec<f64>,
    server_speed: Vec<f64>,
    link_rate: Vec<Vec<f64>>,
    service: ServiceDistribution,
}

impl Model {
    fn new(sc: &Scenario, profile: &StrategyProfile, service: ServiceDistribution) -> Self {
        let cfg = sc.config();
        let total_rate: f64 = cfg.mds.iter().map(|m| m.task_rate).sum();
        let mut routes = Vec::new();
        let mut acc = 0.0;
        for (i, md) in cfg.mds.iter().enumerate() {
            let local = md.task_rate - profile.row_sum(i);
            acc += local.max(0.0) / total_rate;
            routes.push(Route { cumulative: acc, device: i, server: None });
            for j in 0..sc.num_servers() {
                acc += profile.get(i, j) / total_rate;
                routes.push(Route { cumulative: acc, device: i, server: Some(j) });
            }
        }
        Model {
            routes,
            total_rate,
            exec: cfg.mds.iter().map(|m| moment_matching(m.exec_mean, m.exec_second_moment)).collect(),
            upload: cfg
                .links
                .iter()
                .map(|row| row.iter().map(|l| moment_matching(l.data_mean, l.data_second_moment)).collect())
                .collect(),
            local_speed: cfg.mds.iter().map(|m| m.cpu_speed).collect(),
            server_speed: cfg.servers.iter().map(|s| s.cpu_speed).collect(),
            link_rate: cfg.links.iter().map(|row| row.iter().map(|l| l.rate).collect()).collect(),
            service,
        }
    }

    fn route(&self, u: f64) -> Route {
        let k = self.routes.partition_point(|r| r.cumulative <= u);
        self.routes[k.min(self.routes.len() - 1)]
    }

    fn service_time(&self, i: usize, j: usize, rng: &mut impl Rng) -> f64 {
        match self.service {
            ServiceDistribution::TwoPoint => {
                self.exec[i].sample(rng) / self.server_speed[j] + self.upload[i][j].sample(rng) / self.link_rate[i][j]
            }
            ServiceDistribution::Exponential => {
                let mean = self.exec[i].mean() / self.server_speed[j] + self.upload[i][j].mean() / self.link_rate[i][j];
                Exp::new(1.0 / mean).unwrap().sample(rng)
            }
        }
    }
}

#[derive(Debug, Clone, Default)]
struct ServerAcc {
    free_at: f64,
    waits: f64,
    services: f64,
    count: u64,
    busy: f64,
    occupancy: f64,
}

#[derive(Debug, Clone)]
struct Replication {
    wait: Vec<f64>,
    utilization: Vec<f64>,
    in_system: Vec<f64>,
    arrival_rate: Vec<f64>,
    service_mean: Vec<f64>,
    response: Vec<f64>,
}

fn overlap(a: f64, b: f64, lo: f64, hi: f64) -> f64 {
    (b.min(hi) - a.max(lo)).max(0.0)
}

fn run_replication(model: &Model, sim: &SimConfig, rep: usize, devices: usize, servers: usize) -> Replication {
    let mut rng = ChaCha8Rng::seed_from_u64(sim.seed);
    rng.set_stream(rep as u64);
    let gap = Exp::new(model.total_rate).unwrap();

    // Arrival times are needed up front to know the measurement window.
    let mut now = 0.0;
    let mut window_start = 0.0;
    let mut tasks = Vec::with_capacity(sim.horizon_tasks as usize);
    for k in 0..sim.horizon_tasks {
        now += gap.sample(&mut rng);
        if k == sim.warmup_tasks {
            window_start = now;
        }
        tasks.push((now, rng.gen::<f64>()));
    }
    let window_end = now;
    let span = window_end - window_start;

    let mut acc = vec![ServerAcc::default(); servers];
    let mut response = vec![(0.0, 0u64); devices];
    for (k, &(arrival, u)) in tasks.iter().enumerate() {
        let measured = k as u64 >= sim.warmup_tasks;
        let route = model.route(u);
        let i = route.device;
        let sojourn = match route.server {
            None => model.exec[i].sample(&mut rng) / model.local_speed[i],
            Some(j) => {
                let s = &mut acc[j];
                let service = model.service_time(i, j, &mut rng);
                let start = s.free_at.max(arrival);
                s.free_at = start + service;
                s.busy += overlap(start, s.free_at, window_start, window_end);
                s.occupancy += overlap(arrival, s.free_at, window_start, window_end);
                if measured {
                    s.waits += start - arrival;
                    s.services += service;
                    s.count += 1;
                }
                s.free_at - arrival
            }
        };
        if measured {
            response[i].0 += sojourn;
            response[i].1 += 1;
        }
    }
    let mean = |sum: f64, n: u64| if n > 0 { sum / n as f64 } else { 0.0 };
    Replication {
        wait: acc.iter().map(|s| mean(s.waits, s.count)).collect(),
        utilization: acc.iter().map(|s| (s.busy / span).clamp(0.0, 1.0)).collect(),
        in_system: acc.iter().map(|s| s.occupancy / span).collect(),
        arrival_rate: acc.iter().map(|s| s.count as f64 / span).collect(),
        service_mean: acc.iter().map(|s| mean(s.services, s.count)).collect(),
        response: response.iter().map(|&(sum, n)| mean(sum, n)).collect(),
    }
}

/// Sample mean and 99% Student-t half-width; zero width for one sample.
pub fn confidence_interval(samples: &[f64]) -> Estimate {
    let n = samples.len();
    let mean = samples.iter().sum::<f64>() / n as f64;
    if n < 2 {
        return Estimate { mean, half_width: 0.0 };
    }
    let var = samples.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1) as f64;
    let t = StudentsT::new(0.0, 1.0, (n - 1) as f64).unwrap().inverse_cdf(0.995);
    Estimate { mean, half_width: t * (var / n as f64).sqrt() }
}

pub fn simulate_with(
    sc: &Scenario,
    profile: &StrategyProfile,
    sim: &SimConfig,
    service: ServiceDistribution,
) -> Result<SimResult> {
    sim.validate()?;
    for j in 0..sc.num_servers() {
        let load = stream_server_load(sc, profile, j);
        if load.utilization_zeta >= 1.0 {
            return Err(Error::UnstableSystem { server: j, utilization: load.utilization_zeta });
        }
    }
    let model = Model::new(sc, profile, service);
    let (m, n) = (sc.num_devices(), sc.num_servers());
    let reps: Vec<Replication> =
        (0..sim.replications).into_par_iter().map(|r| run_replication(&model, sim, r, m, n)).collect();
    let column = |f: &dyn Fn(&Replication) -> f64| confidence_interval(&reps.iter().map(f).collect::<Vec<_>>());
    Ok(SimResult {
        servers: (0..n)
            .map(|j| ServerStats {
                waiting_time: column(&|r| r.wait[j]),
                utilization: column(&|r| r.utilization[j]),
                in_system: column(&|r| r.in_system[j]),
                arrival_rate: column(&|r| r.arrival_rate[j]),
                service_mean: column(&|r| r.service_mean[j]),
            })
            .collect(),
        devices: (0..m).map(|i| column(&|r| r.response[i])).collect(),
        replications: sim.replications,
    })
}
