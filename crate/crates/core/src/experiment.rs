//! Experiment files, parameter sweeps, simulator validation and oracle audits.
//!
//! An experiment file is TOML:
//!
//! ```toml
//! seed = 7
//!
//! [system]
//! bandwidth = 10.0
//! noise_power = 0.1
//! static_power = 0.3
//!
//! [[devices]]
//! task_rate = 5.0
//! cpu_speed = 2.0
//! exec_mean = 1.5
//! exec_second_moment = 0.7
//! energy_efficiency = 0.55
//! harvest_rate = 12.0
//! power_budget = 80.0
//!
//! [[servers]]
//! cpu_speed = 20.0
//!
//! [links]                 # one row per device, one column per server
//! data_mean = [[1.0]]
//! data_second_moment = [[0.6]]
//! rate = [[7.0]]
//!
//! [channel]
//! gains = [[0.1375]]      # or gain_means = [[...]] for exponential draws
//! ```
//!
//! Optional sections: `[options]` (model switches), `[game]` (`max_iters`,
//! `eps`, `sweep`, `initial`) and `[sim]` (`horizon_tasks`, `warmup_tasks`,
//! `replications`).

use std::fmt;
use std::fs::File;
use std::io::Write;
use std::path::Path;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::analytic::{server_load, stream_response_time, stream_server_load};
use crate::best_response::{best_response, grid_oracle};
use crate::error::{ConfigError, Error, Result};
use crate::game::{check_feasible, iterate, mixed_strategy, GameOptions, GameTrace, SweepMode};
use crate::model::{LinkParams, MdConfig, MecConfig, ModelOptions, Scenario, ScenarioConfig, StrategyProfile, SystemConfig};
use crate::queue_sim::{simulate, Estimate, SimConfig};

/// Servers above this utilization are left out of simulator validation.
pub const VALIDATION_CEILING: f64 = 0.9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentFile {
    #[serde(default)]
    pub seed: u64,
    pub system: SystemConfig,
    #[serde(default)]
    pub options: ModelOptions,
    pub devices: Vec<MdConfig>,
    pub servers: Vec<MecConfig>,
    pub links: LinkTables,
    pub channel: ChannelSpec,
    #[serde(default)]
    pub game: GameSection,
    #[serde(default)]
    pub sim: SimSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LinkTables {
    pub data_mean: Vec<Vec<f64>>,
    pub data_second_moment: Vec<Vec<f64>>,
    pub rate: Vec<Vec<f64>>,
}

/// Literal channel gains, or means of exponentially distributed gains drawn
/// with the experiment seed.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChannelSpec {
    pub gains: Option<Vec<Vec<f64>>>,
    pub gain_means: Option<Vec<Vec<f64>>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GameSection {
    pub max_iters: usize,
    pub eps: f64,
    pub sweep: SweepMode,
    /// Starting profile; the zero profile when absent.
    pub initial: Option<Vec<Vec<f64>>>,
}

impl Default for GameSection {
    fn default() -> Self {
        let d = GameOptions::default();
        GameSection { max_iters: d.max_iters, eps: d.eps, sweep: d.sweep, initial: None }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimSection {
    pub horizon_tasks: u64,
    pub warmup_tasks: Option<u64>,
    pub replications: usize,
}

impl Default for SimSection {
    fn default() -> Self {
        let d = SimConfig::default();
        SimSection { horizon_tasks: d.horizon_tasks, warmup_tasks: None, replications: d.replications }
    }
}

/// Command-line settings that take precedence over the file.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Overrides {
    pub sweep: Option<SweepMode>,
    pub eps: Option<f64>,
    pub max_iters: Option<usize>,
    pub seed: Option<u64>,
    pub corrected_second_moment: bool,
}

impl ExperimentFile {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(vec![ConfigError::Parse(e.to_string())]))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| Error::Io { path: path.to_path_buf(), source })?;
        let file = Self::from_toml(&text)?;
        file.warn_inconsistent_moments();
        Ok(file)
    }

    /// Logs every size whose second moment is below its squared mean.
    pub fn warn_inconsistent_moments(&self) {
        for (i, md) in self.devices.iter().enumerate() {
            if md.exec_second_moment < md.exec_mean * md.exec_mean {
                log::warn!(
                    "device {}: exec_second_moment {} < exec_mean^2 {}; the simulator uses a point mass",
                    i + 1,
                    md.exec_second_moment,
                    md.exec_mean * md.exec_mean
                );
            }
        }
        for (i, (means, seconds)) in self.links.data_mean.iter().zip(&self.links.data_second_moment).enumerate() {
            for (j, (m, s)) in means.iter().zip(seconds).enumerate() {
                if s < &(m * m) {
                    log::warn!("link {}-{}: data_second_moment {s} < data_mean^2 {}", i + 1, j + 1, m * m);
                }
            }
        }
    }

    pub fn apply(&mut self, o: &Overrides) {
        if let Some(s) = o.sweep {
            self.game.sweep = s;
        }
        if let Some(e) = o.eps {
            self.game.eps = e;
        }
        if let Some(m) = o.max_iters {
            self.game.max_iters = m;
        }
        if let Some(s) = o.seed {
            self.seed = s;
        }
        if o.corrected_second_moment {
            self.options.corrected_second_moment = true;
        }
    }

    /// Scenario description with channel gains resolved.
    pub fn scenario_config(&self) -> Result<ScenarioConfig> {
        let (m, n) = (self.devices.len(), self.servers.len());
        let mut errs = Vec::new();
        let mut check = |name: &str, table: &[Vec<f64>]| {
            if table.len() != m || table.iter().any(|row| row.len() != n) {
                errs.push(ConfigError::DimensionMismatch(format!("{name} must be {m} x {n}")));
            }
        };
        check("links.data_mean", &self.links.data_mean);
        check("links.data_second_moment", &self.links.data_second_moment);
        check("links.rate", &self.links.rate);
        let gains = match (&self.channel.gains, &self.channel.gain_means) {
            (Some(g), None) => {
                check("channel.gains", g);
                g.clone()
            }
            (None, Some(means)) => {
                check("channel.gain_means", means);
                draw_gains(means, self.seed)
            }
            _ => {
                errs.push(ConfigError::Parse("channel needs exactly one of gains or gain_means".into()));
                Vec::new()
            }
        };
        if !errs.is_empty() {
            return Err(Error::Config(errs));
        }
        let links = (0..m)
            .map(|i| {
                (0..n)
                    .map(|j| LinkParams {
                        data_mean: self.links.data_mean[i][j],
                        data_second_moment: self.links.data_second_moment[i][j],
                        rate: self.links.rate[i][j],
                        channel_gain: gains[i][j],
                        tx_power: 0.0,
                    })
                    .collect()
            })
            .collect();
        Ok(ScenarioConfig {
            system: self.system,
            mds: self.devices.clone(),
            servers: self.servers.clone(),
            links,
            options: self.options,
        })
    }

    pub fn game_options(&self) -> GameOptions {
        GameOptions { max_iters: self.game.max_iters, eps: self.game.eps, sweep: self.game.sweep, probe_resolution: None }
    }

    pub fn sim_config(&self) -> SimConfig {
        let mut s = SimConfig::new(self.sim.horizon_tasks, self.seed);
        if let Some(w) = self.sim.warmup_tasks {
            s.warmup_tasks = w;
        }
        s.replications = self.sim.replications;
        s
    }

    pub fn initial_profile(&self) -> Result<StrategyProfile> {
        match &self.game.initial {
            Some(rows) => StrategyProfile::from_rows(rows),
            None => Ok(StrategyProfile::zeros(self.devices.len(), self.servers.len())),
        }
    }
}

fn draw_gains(means: &[Vec<f64>], seed: u64) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    means
        .iter()
        .map(|row| {
            row.iter()
                .map(|&m| if m > 0.0 { Exp::new(1.0 / m).unwrap().sample(&mut rng) } else { m })
                .collect()
        })
        .collect()
}

/// Parameter family scaled by a sweep.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SweepTarget {
    #[serde(rename = "server_speed_F1")]
    ServerSpeedF1,
    #[serde(rename = "server_speed_F2")]
    ServerSpeedF2,
    #[serde(rename = "server_speed_all")]
    ServerSpeedAll,
    #[serde(rename = "rate_R11")]
    RateR11,
    #[serde(rename = "rate_R22")]
    RateR22,
    #[serde(rename = "md1_load")]
    Md1Load,
    #[serde(rename = "md2_load")]
    Md2Load,
}

impl SweepTarget {
    pub const ALL: [SweepTarget; 7] = [
        SweepTarget::ServerSpeedF1,
        SweepTarget::ServerSpeedF2,
        SweepTarget::ServerSpeedAll,
        SweepTarget::RateR11,
        SweepTarget::RateR22,
        SweepTarget::Md1Load,
        SweepTarget::Md2Load,
    ];

    pub fn name(self) -> &'static str {
        match self {
            SweepTarget::ServerSpeedF1 => "server_speed_F1",
            SweepTarget::ServerSpeedF2 => "server_speed_F2",
            SweepTarget::ServerSpeedAll => "server_speed_all",
            SweepTarget::RateR11 => "rate_R11",
            SweepTarget::RateR22 => "rate_R22",
            SweepTarget::Md1Load => "md1_load",
            SweepTarget::Md2Load => "md2_load",
        }
    }
}

impl fmt::Display for SweepTarget {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SweepTarget {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        SweepTarget::ALL.into_iter().find(|t| t.name() == s).ok_or_else(|| {
            let names: Vec<_> = SweepTarget::ALL.iter().map(|t| t.name()).collect();
            format!("unknown sweep target '{s}' (expected one of {})", names.join(", "))
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepSpec {
    pub target: SweepTarget,
    pub coefficients: Vec<f64>,
}

impl SweepSpec {
    /// `c = 0.4, 0.6, ..., 2.0`.
    pub fn default_coefficients() -> Vec<f64> {
        (2..=10).map(|k| k as f64 / 5.0).collect()
    }

    pub fn validate(&self) -> Result<()> {
        if self.coefficients.is_empty() || self.coefficients.iter().any(|c| !(c.is_finite() && *c > 0.0)) {
            return Err(Error::Config(vec![ConfigError::NonPositiveParameter("sweep coefficients".into())]));
        }
        Ok(())
    }
}

/// Copy of `cfg` with the sweep target scaled by `c`. Load targets scale the
/// task rate and mean sizes by `c` and their second moments by `c^2`.
pub fn scale_config(cfg: &ScenarioConfig, target: SweepTarget, c: f64) -> Result<ScenarioConfig> {
    let (m, n) = (cfg.num_devices(), cfg.num_servers());
    let need = |devices: usize, servers: usize| {
        if m < devices || n < servers {
            Err(Error::Config(vec![ConfigError::DimensionMismatch(format!(
                "sweep {target} needs {devices} device(s) and {servers} server(s)"
            ))]))
        } else {
            Ok(())
        }
    };
    let mut out = cfg.clone();
    match target {
        SweepTarget::ServerSpeedF1 => {
            need(1, 1)?;
            out.servers[0].cpu_speed *= c;
        }
        SweepTarget::ServerSpeedF2 => {
            need(1, 2)?;
            out.servers[1].cpu_speed *= c;
        }
        SweepTarget::ServerSpeedAll => out.servers.iter_mut().for_each(|s| s.cpu_speed *= c),
        SweepTarget::RateR11 => {
            need(1, 1)?;
            out.links[0][0].rate *= c;
        }
        SweepTarget::RateR22 => {
            need(2, 2)?;
            out.links[1][1].rate *= c;
        }
        SweepTarget::Md1Load | SweepTarget::Md2Load => {
            let i = if target == SweepTarget::Md1Load { 0 } else { 1 };
            need(i + 1, 1)?;
            let md = &mut out.mds[i];
            md.task_rate *= c;
            md.exec_mean *= c;
            md.exec_second_moment *= c * c;
            for link in &mut out.links[i] {
                link.data_mean *= c;
                link.data_second_moment *= c * c;
            }
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub c: f64,
    pub outcome: std::result::Result<GameTrace, String>,
}

/// Solves the game from the zero profile for every coefficient. Rows run in
/// parallel; a failing row keeps its error and the sweep goes on.
pub fn run_sweep(cfg: &ScenarioConfig, opts: &GameOptions, spec: &SweepSpec) -> Result<Vec<SweepRow>> {
    spec.validate()?;
    scale_config(cfg, spec.target, 1.0)?;
    let rows = spec
        .coefficients
        .par_iter()
        .map(|&c| {
            let outcome = scale_config(cfg, spec.target, c)
                .and_then(Scenario::new)
                .and_then(|sc| iterate(&sc, &sc.zero_profile(), opts))
                .map_err(|e| {
                    log::warn!("sweep {} c={c}: {e}", spec.target);
                    e.to_string()
                });
            SweepRow { c, outcome }
        })
        .collect();
    Ok(rows)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum RowStatus {
    Pass,
    Fail,
    Skipped,
}

impl fmt::Display for RowStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            RowStatus::Pass => "pass",
            RowStatus::Fail => "fail",
            RowStatus::Skipped => "skipped",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Quantity {
    WaitingTime,
    ResponseTime,
}

impl fmt::Display for Quantity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Quantity::WaitingTime => "waiting_time",
            Quantity::ResponseTime => "response_time",
        })
    }
}

/// Analytic value against simulation for one server or device.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ValidationRow {
    pub instance: usize,
    pub quantity: Quantity,
    /// Server index for waiting times, device index for response times.
    pub index: usize,
    pub utilization: f64,
    /// Stream-mixture M/G/1 value, what the simulator should reproduce.
    pub analytic: f64,
    /// Value of the game's own model, for reference.
    pub game_model: f64,
    pub simulated: Option<Estimate>,
    pub status: RowStatus,
}

fn moments_consistent(sc: &Scenario, i: usize, j: usize) -> bool {
    let md = sc.md(i);
    let link = sc.link(i, j);
    md.exec_second_moment >= md.exec_mean * md.exec_mean * (1.0 - 1e-12)
        && link.data_second_moment >= link.data_mean * link.data_mean * (1.0 - 1e-12)
}

/// Compares analytic waiting and response times with the simulator. A row is
/// skipped when a server it involves runs above [`VALIDATION_CEILING`] or has
/// traffic whose size moments no distribution can match.
pub fn validate_profile(
    sc: &Scenario,
    profile: &StrategyProfile,
    sim: &SimConfig,
    instance: usize,
) -> Result<Vec<ValidationRow>> {
    let (m, n) = (sc.num_devices(), sc.num_servers());
    let loads: Vec<_> = (0..n).map(|j| stream_server_load(sc, profile, j)).collect();
    let server_ok: Vec<bool> = (0..n)
        .map(|j| {
            loads[j].utilization_zeta <= VALIDATION_CEILING
                && (0..m).all(|i| profile.get(i, j) == 0.0 || moments_consistent(sc, i, j))
        })
        .collect();
    let result = match simulate(sc, profile, sim) {
        Ok(r) => Some(r),
        Err(Error::UnstableSystem { .. }) => None,
        Err(e) => return Err(e),
    };
    let status = |ok: bool, analytic: f64, est: Option<Estimate>| match est {
        Some(e) if ok => {
            if e.contains(analytic) {
                RowStatus::Pass
            } else {
                RowStatus::Fail
            }
        }
        _ => RowStatus::Skipped,
    };
    let mut rows = Vec::with_capacity(n + m);
    for j in 0..n {
        let est = result.as_ref().map(|r| r.servers[j].waiting_time);
        let analytic = loads[j].waiting_omega;
        rows.push(ValidationRow {
            instance,
            quantity: Quantity::WaitingTime,
            index: j,
            utilization: loads[j].utilization_zeta,
            analytic,
            game_model: server_load(sc, profile, j).waiting_omega,
            simulated: est,
            status: status(server_ok[j], analytic, est),
        });
    }
    for i in 0..m {
        let used: Vec<usize> = (0..n).filter(|&j| profile.get(i, j) > 0.0).collect();
        let ok = used.iter().all(|&j| server_ok[j]);
        let est = result.as_ref().map(|r| r.devices[i]);
        let analytic = stream_response_time(sc, profile, i)?;
        rows.push(ValidationRow {
            instance,
            quantity: Quantity::ResponseTime,
            index: i,
            utilization: used.iter().map(|&j| loads[j].utilization_zeta).fold(0.0, f64::max),
            analytic,
            game_model: crate::analytic::response_time_md(sc, profile, i)?,
            simulated: est,
            status: status(ok, analytic, est),
        });
    }
    Ok(rows)
}

/// A random feasible profile whose servers all stay at or below
/// `max_utilization` in the stream model; `None` after 1000 rejected draws.
pub fn random_profile(sc: &Scenario, rng: &mut impl Rng, max_utilization: f64) -> Option<StrategyProfile> {
    let (m, n) = (sc.num_devices(), sc.num_servers());
    for _ in 0..1000 {
        let rows: Vec<Vec<f64>> = (0..m)
            .map(|i| {
                let share: f64 = rng.gen();
                let w: Vec<f64> = (0..n).map(|_| rng.gen::<f64>()).collect();
                let total: f64 = w.iter().sum();
                w.iter().map(|x| share * sc.md(i).task_rate * x / total).collect()
            })
            .collect();
        let p = StrategyProfile::from_rows(&rows).ok()?;
        if check_feasible(sc, &p).is_ok()
            && (0..n).all(|j| stream_server_load(sc, &p, j).utilization_zeta <= max_utilization)
        {
            return Some(p);
        }
    }
    None
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AuditRow {
    pub device: usize,
    pub best_response: Option<f64>,
    pub grid: Option<f64>,
    /// `|best_response - grid|` when both are feasible.
    pub disagreement: Option<f64>,
    pub status: String,
}

/// Best response against the grid oracle for every device at `profile`, the
/// grid step being `resolution * lambda_i`.
pub fn audit(sc: &Scenario, profile: &StrategyProfile, resolution: f64) -> Result<Vec<AuditRow>> {
    let mut rows = Vec::new();
    for i in 0..sc.num_devices() {
        let step = resolution * sc.md(i).task_rate;
        let grid = match grid_oracle(sc, profile, i, step) {
            Ok(g) => Some(g.objective_t),
            Err(Error::Infeasible { .. }) => None,
            Err(e) => return Err(e),
        };
        let br = match best_response(sc, profile, i) {
            Ok(b) => Some(b.objective_t),
            Err(Error::Infeasible { .. }) => None,
            Err(e) => return Err(e),
        };
        let (disagreement, status) = match (br, grid) {
            (Some(b), Some(g)) => (Some((b - g).abs()), "ok"),
            (None, None) => (None, "infeasible"),
            _ => (None, "mismatch"),
        };
        rows.push(AuditRow { device: i, best_response: br, grid, disagreement, status: status.into() });
    }
    Ok(rows)
}

/// Everything needed to rerun a command.
#[derive(Debug, Clone, Serialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub command: String,
    pub config_path: String,
    pub seed: u64,
    pub sweep_mode: SweepMode,
    pub game: GameOptions,
    pub scenario: ScenarioConfig,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepSpec>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sim: Option<SimConfig>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub audit_resolution: Option<f64>,
}

impl Manifest {
    pub fn new(command: &str, config_path: &Path, file: &ExperimentFile, scenario: &Scenario) -> Self {
        let game = file.game_options();
        Manifest {
            tool: env!("CARGO_PKG_NAME").into(),
            version: env!("CARGO_PKG_VERSION").into(),
            command: command.into(),
            config_path: config_path.display().to_string(),
            seed: file.seed,
            sweep_mode: game.sweep,
            game,
            scenario: scenario.config().clone(),
            sweep: None,
            sim: None,
            audit_resolution: None,
        }
    }

    pub fn write(&self, dir: &Path) -> Result<()> {
        let path = dir.join(MANIFEST_FILE);
        let text = serde_json::to_string_pretty(self).expect("manifest serializes");
        std::fs::write(&path, text + "\n").map_err(|source| Error::Io { path, source })
    }
}

pub const MANIFEST_FILE: &str = "manifest.json";

/// Nine significant digits.
pub fn num(x: f64) -> String {
    format!("{x:.8e}")
}

fn opt_num(x: Option<f64>) -> String {
    x.map(num).unwrap_or_default()
}

/// CSV writer whose first line is a `#` comment naming the manifest.
pub struct CsvOut {
    writer: csv::Writer<File>,
    path: std::path::PathBuf,
}

impl CsvOut {
    pub fn create(path: &Path) -> Result<Self> {
        let io = |source| Error::Io { path: path.to_path_buf(), source };
        let mut file = File::create(path).map_err(io)?;
        writeln!(file, "# manifest={MANIFEST_FILE}").map_err(io)?;
        Ok(CsvOut { writer: csv::Writer::from_writer(file), path: path.to_path_buf() })
    }

    pub fn row<I, S>(&mut self, fields: I) -> Result<()>
    where
        I: IntoIterator<Item = S>,
        S: AsRef<[u8]>,
    {
        self.writer.write_record(fields).map_err(|e| self.err(e.into()))
    }

    pub fn finish(mut self) -> Result<()> {
        self.writer.flush().map_err(|e| self.err(e))
    }

    fn err(&self, source: std::io::Error) -> Error {
        Error::Io { path: self.path.clone(), source }
    }
}

fn strategy_header(m: usize, n: usize) -> Vec<String> {
    (0..m).flat_map(|i| (0..n).map(move |j| format!("x_{}_{}", i + 1, j + 1))).collect()
}

pub fn write_trace(path: &Path, trace: &GameTrace) -> Result<()> {
    let n = trace.final_profile.num_servers();
    let mut out = CsvOut::create(path)?;
    let mut header = vec!["iteration".to_string(), "device".into(), "response_time".into()];
    header.extend((0..n).map(|j| format!("x_{}", j + 1)));
    out.row(&header)?;
    for (k, rec) in trace.iterations.iter().enumerate() {
        for (i, t) in rec.response_times.iter().enumerate() {
            let mut row = vec![k.to_string(), (i + 1).to_string(), num(*t)];
            row.extend(rec.profile.row(i).iter().map(|&x| num(x)));
            out.row(&row)?;
        }
    }
    out.finish()
}

pub fn write_equilibrium(path: &Path, sc: &Scenario, trace: &GameTrace) -> Result<()> {
    let n = sc.num_servers();
    let mut out = CsvOut::create(path)?;
    let mut header = vec!["device".to_string()];
    header.extend((0..n).map(|j| format!("x_{}", j + 1)));
    header.push("p_local".into());
    header.extend((0..n).map(|j| format!("p_{}", j + 1)));
    header.extend(["response_time".into(), "ne_residual".into(), "converged".into(), "sweeps".into()]);
    out.row(&header)?;
    let times = trace.final_response_times();
    for i in 0..sc.num_devices() {
        let row_rates = trace.final_profile.row(i);
        let mixed = mixed_strategy(sc.md(i), row_rates)?;
        let mut row = vec![(i + 1).to_string()];
        row.extend(row_rates.iter().map(|&x| num(x)));
        row.push(num(mixed.local_prob));
        row.extend(mixed.offload_probs.iter().map(|&p| num(p)));
        row.extend([num(times[i]), num(trace.ne_residual), trace.converged.to_string(), trace.sweeps().to_string()]);
        out.row(&row)?;
    }
    out.finish()
}

pub fn write_sweep(path: &Path, cfg: &ScenarioConfig, rows: &[SweepRow]) -> Result<()> {
    let (m, n) = (cfg.num_devices(), cfg.num_servers());
    let mut out = CsvOut::create(path)?;
    let mut header = vec!["c".to_string()];
    header.extend((0..m).map(|i| format!("T_{}", i + 1)));
    header.extend(strategy_header(m, n));
    header.extend(["ne_residual".into(), "converged".into(), "error".into()]);
    out.row(&header)?;
    for r in rows {
        let mut row = vec![num(r.c)];
        match &r.outcome {
            Ok(trace) => {
                row.extend(trace.final_response_times().iter().map(|&t| num(t)));
                row.extend((0..m).flat_map(|i| trace.final_profile.row(i).iter().map(|&x| num(x)).collect::<Vec<_>>()));
                row.extend([num(trace.ne_residual), trace.converged.to_string(), String::new()]);
            }
            Err(e) => {
                row.extend(std::iter::repeat_n(String::new(), m + m * n + 2));
                row.push(e.clone());
            }
        }
        out.row(&row)?;
    }
    out.finish()
}

pub fn write_validation(path: &Path, rows: &[ValidationRow]) -> Result<()> {
    let mut out = CsvOut::create(path)?;
    out.row([
        "instance",
        "quantity",
        "index",
        "utilization",
        "analytic",
        "game_model",
        "simulated",
        "half_width",
        "status",
    ])?;
    for r in rows {
        out.row([
            r.instance.to_string(),
            r.quantity.to_string(),
            (r.index + 1).to_string(),
            num(r.utilization),
            num(r.analytic),
            num(r.game_model),
            opt_num(r.simulated.map(|e| e.mean)),
            opt_num(r.simulated.map(|e| e.half_width)),
            r.status.to_string(),
        ])?;
    }
    out.finish()
}

pub fn write_audit(path: &Path, rows: &[AuditRow]) -> Result<()> {
    let mut out = CsvOut::create(path)?;
    out.row(["device", "best_response", "grid", "disagreement", "status"])?;
    for r in rows {
        out.row([
            (r.device + 1).to_string(),
            opt_num(r.best_response),
            opt_num(r.grid),
            opt_num(r.disagreement),
            r.status.clone(),
        ])?;
    }
    out.finish()
}

/// Reads a profile from a headerless CSV with one row of rates per device.
pub fn read_profile(path: &Path) -> Result<StrategyProfile> {
    let text = std::fs::read_to_string(path).map_err(|source| Error::Io { path: path.to_path_buf(), source })?;
    let parse_err = |msg: String| Error::Config(vec![ConfigError::Parse(format!("{}: {msg}", path.display()))]);
    let mut rows = Vec::new();
    for line in text.lines().map(str::trim).filter(|l| !l.is_empty() && !l.starts_with('#')) {
        let row = line
            .split(',')
            .map(|f| f.trim().parse::<f64>().map_err(|e| parse_err(format!("'{f}': {e}"))))
            .collect::<Result<Vec<_>>>()?;
        rows.push(row);
    }
    StrategyProfile::from_rows(&rows)
}

/// Outcome of `solve` kept for the caller.
pub fn solve(file: &ExperimentFile) -> Result<(Scenario, GameTrace)> {
    let sc = Scenario::new(file.scenario_config()?)?;
    let initial = file.initial_profile()?;
    let trace = iterate(&sc, &initial, &file.game_options())?;
    Ok((sc, trace))
}
