use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;

use sphereflock::atlas::{full_battery_time, regime_battery};
use sphereflock::diagnostics::ClassifyParams;
use sphereflock::integrator::Projection;
use sphereflock::landscape::{minimize_config_energy, MinimizeConfig};
use sphereflock::runner::summarize;
use sphereflock::scenario::{scenario, scenario_names};
use sphereflock::verify::verify;
use sphereflock::{run, sweep, FlockError, RunConfig, SigmaKernel};

const EXIT_CONFIG: u8 = 2;
const EXIT_NUMERICAL: u8 = 3;
const EXIT_VERIFY: u8 = 4;

#[derive(Parser)]
#[command(
    name = "sphereflock",
    version,
    about = "Flocking of agents on the unit sphere"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one configuration and write trajectory, diagnostics and metadata.
    Simulate(RunArgs),
    /// Run a configuration once per value of one scalar parameter.
    Sweep {
        #[command(flatten)]
        run: RunArgs,
        /// Dot path of the parameter, e.g. `sigma.sigma_r`.
        #[arg(long)]
        param: String,
        /// Comma-separated values; may be empty.
        #[arg(long, default_value = "")]
        values: String,
        #[arg(long, default_value_t = 1)]
        jobs: usize,
    },
    /// Minimize the configuration energy and print the minimizer as JSON.
    Minimize {
        /// Take N and the kernel from a config or scenario instead of flags.
        #[command(flatten)]
        source: SourceArgs,
        #[arg(long)]
        n: Option<usize>,
        #[arg(long)]
        sigma_a: Option<f64>,
        #[arg(long)]
        sigma_r: Option<f64>,
        #[arg(long, default_value_t = 1.0)]
        beta: f64,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        restarts: Option<usize>,
    },
    /// Run the invariant suite, or the regime battery with `--battery regimes`.
    Verify {
        #[arg(long)]
        battery: Option<Battery>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Simulated-time budget for the battery; defaults to the full battery.
        #[arg(long)]
        budget: Option<f64>,
    },
    /// List registered scenarios, or print one as JSON.
    Scenarios {
        #[arg(long)]
        show: Option<String>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Battery {
    Regimes,
}

#[derive(Clone, Copy, ValueEnum)]
enum ProjectionArg {
    None,
    Renormalize,
}

#[derive(Args)]
#[group(required = false, multiple = false)]
struct SourceArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    scenario: Option<String>,
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    source: SourceArgs,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    dt: Option<f64>,
    #[arg(long)]
    t_final: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    projection: Option<ProjectionArg>,
}

fn load(source: &SourceArgs) -> Result<RunConfig, FlockError> {
    match (&source.config, &source.scenario) {
        (Some(path), _) => RunConfig::from_json(&fs::read_to_string(path)?),
        (None, Some(name)) => scenario(name),
        (None, None) => Err(FlockError::Config(
            "one of --config or --scenario is required".into(),
        )),
    }
}

impl RunArgs {
    fn config(&self) -> Result<RunConfig, FlockError> {
        let mut cfg = load(&self.source)?;
        if let Some(dt) = self.dt {
            cfg.integrator.dt = dt;
        }
        if let Some(t) = self.t_final {
            cfg.integrator.t_final = t;
        }
        if let Some(seed) = self.seed {
            cfg.initial.reseed(seed);
            cfg.minimize.seed = seed;
        }
        if let Some(p) = self.projection {
            cfg.integrator.projection = match p {
                ProjectionArg::None => Projection::None,
                ProjectionArg::Renormalize => Projection::Renormalize,
            };
        }
        if self.out.is_some() {
            cfg.out_dir = self.out.clone();
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn simulate(args: &RunArgs) -> Result<(), FlockError> {
    let cfg = args.config()?;
    let log = run(&cfg)?;
    let summary = summarize(&log, &ClassifyParams::default());
    let last = log.diagnostics.last().expect("at least the initial record");
    let report = json!({
        "name": cfg.name,
        "t_final": last.t,
        "snapshots": log.snapshots.len(),
        "e_total": last.e_total,
        "max_diameter": summary.max_diameter,
        "rho_tail_mean": summary.rho_tail_mean,
        "regime": summary.regime.map(|r| r.to_string()),
        "warnings": log.metadata.warnings,
        "out_dir": cfg.out_dir,
    });
    println!("{}", serde_json::to_string_pretty(&report)?);
    Ok(())
}

fn parse_values(list: &str) -> Result<Vec<f64>, FlockError> {
    list.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| {
            s.parse()
                .map_err(|_| FlockError::Config(format!("bad sweep value `{s}`")))
        })
        .collect()
}

fn sweep_cmd(args: &RunArgs, param: &str, values: &str, jobs: usize) -> Result<(), FlockError> {
    let cfg = args.config()?;
    let report = sweep(&cfg, param, &parse_values(values)?, jobs)?;
    print!("{}", String::from_utf8_lossy(&report.to_csv()?));
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn minimize(
    source: &SourceArgs,
    n: Option<usize>,
    sigma_a: Option<f64>,
    sigma_r: Option<f64>,
    beta: f64,
    seed: Option<u64>,
    restarts: Option<usize>,
) -> Result<(), FlockError> {
    let (mut n_agents, mut sk, mut mcfg) = (None, None, MinimizeConfig::default());
    if source.config.is_some() || source.scenario.is_some() {
        let cfg = load(source)?;
        n_agents = Some(cfg.initial_ensemble()?.len());
        sk = Some(cfg.model.energy_kernel());
        mcfg = cfg.minimize;
    }
    let n = n
        .or(n_agents)
        .ok_or_else(|| FlockError::Config("--n is required".into()))?;
    let sk = match (sigma_a, sigma_r, sk) {
        (Some(a), Some(r), _) => SigmaKernel::with_beta(a, r, beta),
        (None, None, Some(sk)) => sk,
        _ => {
            return Err(FlockError::Config(
                "give both --sigma-a and --sigma-r, or a config/scenario".into(),
            ))
        }
    };
    if let Some(s) = seed {
        mcfg.seed = s;
    }
    if let Some(r) = restarts {
        mcfg.restarts = r;
    }
    let m = minimize_config_energy(n, sk, &mcfg)?;
    let out = json!({
        "n": n,
        "sigma": sk,
        "e_c_min": m.e_c_min,
        "grad_norm": m.grad_norm,
        "restart": m.restart,
        "iterations": m.iterations,
        "positions": m.positions,
    });
    println!("{}", serde_json::to_string_pretty(&out)?);
    Ok(())
}

fn verify_cmd(
    battery: Option<Battery>,
    seed: u64,
    budget: Option<f64>,
) -> Result<bool, FlockError> {
    match battery {
        None => {
            let report = verify();
            println!("{}", serde_json::to_string_pretty(&report)?);
            eprint!("{}", report.table());
            Ok(report.passed())
        }
        Some(Battery::Regimes) => {
            let report = regime_battery(seed, budget.unwrap_or_else(full_battery_time));
            println!("{}", serde_json::to_string_pretty(&report)?);
            eprint!("{}", report.table());
            Ok(report.passed())
        }
    }
}

fn scenarios(show: Option<&str>) -> Result<(), FlockError> {
    match show {
        Some(name) => println!("{}", scenario(name)?.to_json()?),
        None => {
            for name in scenario_names() {
                println!("{name}");
            }
        }
    }
    Ok(())
}

fn exit_code(e: &FlockError) -> ExitCode {
    eprintln!("error: {e}");
    if e.is_numerical() {
        ExitCode::from(EXIT_NUMERICAL)
    } else {
        ExitCode::from(EXIT_CONFIG)
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Simulate(args) => simulate(args),
        Command::Sweep {
            run,
            param,
            values,
            jobs,
        } => sweep_cmd(run, param, values, *jobs),
        Command::Minimize {
            source,
            n,
            sigma_a,
            sigma_r,
            beta,
            seed,
            restarts,
        } => minimize(source, *n, *sigma_a, *sigma_r, *beta, *seed, *restarts),
        Command::Verify {
            battery,
            seed,
            budget,
        } => match verify_cmd(*battery, *seed, *budget) {
            Ok(true) => Ok(()),
            Ok(false) => return ExitCode::from(EXIT_VERIFY),
            Err(e) => Err(e),
        },
        Command::Scenarios { show } => scenarios(show.as_deref()),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => exit_code(&e),
    }
}
