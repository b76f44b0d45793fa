use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use mec_offload::experiment::{
    audit, random_profile, read_profile, run_sweep, solve, validate_profile, write_audit, write_equilibrium,
    write_sweep, write_trace, write_validation, ExperimentFile, Manifest, Overrides, RowStatus, SweepSpec,
    SweepTarget, VALIDATION_CEILING,
};
use mec_offload::game::SweepMode;
use mec_offload::{Error, Scenario};

#[derive(Parser)]
#[command(name = "mec-offload", version, about = "Equilibrium offloading strategies for edge computing")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    common: Common,
}

#[derive(Args)]
struct Common {
    /// Experiment file (TOML).
    #[arg(long, global = true, default_value = "configs/reference.toml")]
    config: PathBuf,
    /// Update order of best-response sweeps.
    #[arg(long, global = true, value_parser = parse_sweep_mode)]
    sweep: Option<SweepMode>,
    /// Equilibrium residual tolerance.
    #[arg(long, global = true)]
    eps: Option<f64>,
    #[arg(long, global = true)]
    max_iters: Option<usize>,
    /// Seed for channel draws and simulation.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    /// Square server speeds and link rates in the second-moment term.
    #[arg(long, global = true)]
    corrected_second_moment: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Run best-response dynamics to an equilibrium.
    Solve,
    /// Re-solve the game while scaling one parameter family.
    Sweep {
        #[arg(long)]
        target: SweepTarget,
        /// Comma-separated scale factors (default 0.4,0.6,...,2.0).
        #[arg(long, value_delimiter = ',')]
        coefficients: Option<Vec<f64>>,
    },
    /// Compare analytic waiting and response times with simulation.
    Validate {
        /// Headerless CSV of offload rates; defaults to a fresh equilibrium.
        #[arg(long, conflicts_with = "zero_profile")]
        profile: Option<PathBuf>,
        /// Validate the all-local profile.
        #[arg(long)]
        zero_profile: bool,
        /// Extra random feasible profiles to validate.
        #[arg(long, default_value_t = 0)]
        instances: usize,
        #[arg(long)]
        horizon: Option<u64>,
        #[arg(long)]
        replications: Option<usize>,
    },
    /// Compare best responses with the brute-force grid oracle.
    Audit {
        /// Grid step as a fraction of each device's task rate.
        #[arg(long, default_value_t = 1e-3)]
        resolution: f64,
    },
}

fn parse_sweep_mode(s: &str) -> Result<SweepMode, String> {
    match s {
        "gauss-seidel" => Ok(SweepMode::GaussSeidel),
        "jacobi" => Ok(SweepMode::Jacobi),
        _ => Err(format!("expected gauss-seidel or jacobi, got '{s}'")),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                Error::InfeasibleInitial { .. } => ExitCode::from(2),
                _ => ExitCode::from(1),
            }
        }
    }
}

fn run(cli: &Cli) -> Result<(), Error> {
    let c = &cli.common;
    let mut file = ExperimentFile::load(&c.config)?;
    file.apply(&Overrides {
        sweep: c.sweep,
        eps: c.eps,
        max_iters: c.max_iters,
        seed: c.seed,
        corrected_second_moment: c.corrected_second_moment,
    });
    std::fs::create_dir_all(&c.out).map_err(|source| Error::Io { path: c.out.clone(), source })?;
    match &cli.command {
        Command::Solve => cmd_solve(&file, &c.config, &c.out),
        Command::Sweep { target, coefficients } => {
            let spec = SweepSpec {
                target: *target,
                coefficients: coefficients.clone().unwrap_or_else(SweepSpec::default_coefficients),
            };
            cmd_sweep(&file, &c.config, &c.out, spec)
        }
        Command::Validate { profile, zero_profile, instances, horizon, replications } => {
            if let Some(h) = horizon {
                file.sim.horizon_tasks = *h;
            }
            if let Some(r) = replications {
                file.sim.replications = *r;
            }
            let source = match (profile, zero_profile) {
                (Some(p), _) => ProfileSource::File(p.clone()),
                (None, true) => ProfileSource::Zero,
                (None, false) => ProfileSource::Solve,
            };
            cmd_validate(&file, &c.config, &c.out, source, *instances)
        }
        Command::Audit { resolution } => cmd_audit(&file, &c.config, &c.out, *resolution),
    }
}

fn cmd_solve(file: &ExperimentFile, config: &Path, out: &Path) -> Result<(), Error> {
    let (sc, trace) = solve(file)?;
    write_trace(&out.join("trace.csv"), &trace)?;
    write_equilibrium(&out.join("equilibrium.csv"), &sc, &trace)?;
    Manifest::new("solve", config, file, &sc).write(out)?;
    let times: Vec<String> = trace.final_response_times().iter().map(|t| format!("{t:.6}")).collect();
    println!(
        "{} after {} sweeps, residual {:.3e}, response times [{}]",
        if trace.converged { "converged" } else { "not converged" },
        trace.sweeps(),
        trace.ne_residual,
        times.join(", ")
    );
    Ok(())
}

fn cmd_sweep(file: &ExperimentFile, config: &Path, out: &Path, spec: SweepSpec) -> Result<(), Error> {
    let cfg = file.scenario_config()?;
    let sc = Scenario::new(cfg.clone())?;
    let rows = run_sweep(&cfg, &file.game_options(), &spec)?;
    write_sweep(&out.join("sweep.csv"), &cfg, &rows)?;
    let failed = rows.iter().filter(|r| r.outcome.is_err()).count();
    let mut manifest = Manifest::new("sweep", config, file, &sc);
    manifest.sweep = Some(spec);
    manifest.write(out)?;
    println!("{} rows, {failed} failed", rows.len());
    Ok(())
}

enum ProfileSource {
    File(PathBuf),
    Zero,
    Solve,
}

fn cmd_validate(
    file: &ExperimentFile,
    config: &Path,
    out: &Path,
    source: ProfileSource,
    instances: usize,
) -> Result<(), Error> {
    let sim = file.sim_config();
    let (sc, base) = match source {
        ProfileSource::File(p) => (Scenario::new(file.scenario_config()?)?, read_profile(&p)?),
        ProfileSource::Zero => {
            let sc = Scenario::new(file.scenario_config()?)?;
            let p = sc.zero_profile();
            (sc, p)
        }
        ProfileSource::Solve => {
            let (sc, trace) = solve(file)?;
            (sc, trace.final_profile)
        }
    };
    let mut profiles = vec![base];
    let mut rng = ChaCha8Rng::seed_from_u64(file.seed);
    for k in 0..instances {
        match random_profile(&sc, &mut rng, VALIDATION_CEILING) {
            Some(p) => profiles.push(p),
            None => log::warn!("no random profile below utilization {VALIDATION_CEILING} for instance {}", k + 1),
        }
    }
    let mut rows = Vec::new();
    for (k, p) in profiles.iter().enumerate() {
        rows.extend(validate_profile(&sc, p, &sim, k)?);
    }
    write_validation(&out.join("validation.csv"), &rows)?;
    let mut manifest = Manifest::new("validate", config, file, &sc);
    manifest.sim = Some(sim);
    manifest.write(out)?;
    let count = |s| rows.iter().filter(|r| r.status == s).count();
    println!(
        "{} pass, {} fail, {} skipped",
        count(RowStatus::Pass),
        count(RowStatus::Fail),
        count(RowStatus::Skipped)
    );
    Ok(())
}

fn cmd_audit(file: &ExperimentFile, config: &Path, out: &Path, resolution: f64) -> Result<(), Error> {
    let sc = Scenario::new(file.scenario_config()?)?;
    let profile = file.initial_profile()?;
    let rows = audit(&sc, &profile, resolution)?;
    write_audit(&out.join("audit.csv"), &rows)?;
    let mut manifest = Manifest::new("audit", config, file, &sc);
    manifest.audit_resolution = Some(resolution);
    manifest.write(out)?;
    let worst = rows.iter().filter_map(|r| r.disagreement).fold(0.0, f64::max);
    let infeasible = rows.iter().filter(|r| r.status != "ok").count();
    println!("max disagreement {worst:.3e}, {infeasible} device(s) infeasible or mismatched");
    Ok(())
}
