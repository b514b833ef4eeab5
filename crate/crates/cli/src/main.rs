use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};

use omega_core::experiment::{
    cmd_dump_belief, cmd_run, cmd_sweep, cmd_threshold_scan, compile_model_file, write_file,
    write_sweep_csv, write_threshold_csv, CompileRequest, ExperimentError, SweepSpec,
};
use omega_core::movement::DEFAULT_SMOOTHING;
use omega_core::planner::{PolicyConfig, PolicyKind};
use omega_core::scenario::{Scenario, ScenarioConfig};
use omega_core::strategy::StrategySpec;

/// Multi-UAV search for goal-oriented moving targets.
#[derive(Parser, Debug)]
#[command(name = "omega", version)]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct Global {
    /// Master seed.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Worker threads (0 = one per core).
    #[arg(long, global = true, default_value_t = 0)]
    jobs: usize,
    /// Output file, or directory for `sweep`.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Compile a movement model from strategy traces.
    CompileModel {
        #[arg(long)]
        graph: PathBuf,
        /// Strategy as `name[:key=value,...]`, e.g. `random_walk:beta=4`. Repeatable.
        #[arg(long = "strategy", required = true)]
        strategies: Vec<String>,
        /// Grid radius r in meters; edges are refined against the grid it induces.
        #[arg(long)]
        radius: f64,
        #[arg(long, default_value_t = 5.0)]
        tick: f64,
        #[arg(long, default_value_t = 3)]
        runs_per_pair: usize,
        #[arg(long, default_value_t = 8.0)]
        min_kmh: f64,
        #[arg(long, default_value_t = 12.0)]
        max_kmh: f64,
        #[arg(long, default_value_t = DEFAULT_SMOOTHING)]
        smoothing: f64,
        #[arg(long, default_value = "default")]
        class: String,
    },
    /// Run a batch of trials of one scenario.
    Run {
        scenario: PathBuf,
        #[arg(long, default_value_t = 100)]
        trials: usize,
        /// Override the scenario's policy.
        #[arg(long)]
        policy: Option<PolicyKind>,
    },
    /// Evaluate the Cartesian product of a sweep file's axes.
    Sweep { spec: PathBuf },
    /// Success rate over a threshold × detection-probability grid.
    ThresholdScan {
        scenario: PathBuf,
        #[arg(long, value_delimiter = ',', required = true)]
        thresholds: Vec<f64>,
        #[arg(long, value_delimiter = ',', required = true)]
        detect_probs: Vec<f64>,
        #[arg(long, default_value_t = 100)]
        trials: usize,
    },
    /// Write every belief of a single trial as `t target edge_id mass` lines.
    DumpBelief { scenario: PathBuf },
}

/// Failure classes mapped to exit codes 1 and 2.
enum Failure {
    Validation(anyhow::Error),
    Runtime(anyhow::Error),
}

impl From<ExperimentError> for Failure {
    fn from(e: ExperimentError) -> Self {
        if e.is_validation() {
            Failure::Validation(e.into())
        } else {
            Failure::Runtime(e.into())
        }
    }
}

fn load_config(path: &Path) -> Result<(ScenarioConfig, PathBuf), Failure> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("cannot read {}", path.display()))
        .map_err(Failure::Validation)?;
    let cfg = ScenarioConfig::from_toml(&text, path).map_err(|e| Failure::Validation(e.into()))?;
    let dir = path.parent().unwrap_or(Path::new(".")).to_path_buf();
    Ok((cfg, dir))
}

fn load_scenario(path: &Path, policy: Option<PolicyKind>) -> Result<Scenario, Failure> {
    let (mut cfg, dir) = load_config(path)?;
    if let Some(kind) = policy {
        cfg.policy = PolicyConfig {
            policy: kind,
            ..cfg.policy
        };
    }
    Scenario::resolve(cfg, &dir).map_err(|e| ExperimentError::from(e).into())
}

fn emit(out: Option<&Path>, bytes: &[u8]) -> Result<(), Failure> {
    match out {
        Some(p) => write_file(p, bytes).map_err(Failure::from),
        None => {
            use std::io::Write;
            std::io::stdout()
                .write_all(bytes)
                .context("writing to stdout")
                .map_err(Failure::Runtime)
        }
    }
}

fn run(cli: Cli) -> Result<(), Failure> {
    let g = &cli.global;
    let out = g.out.as_deref();
    match cli.command {
        Command::CompileModel {
            graph,
            strategies,
            radius,
            tick,
            runs_per_pair,
            min_kmh,
            max_kmh,
            smoothing,
            class,
        } => {
            let specs = strategies
                .iter()
                .map(|s| StrategySpec::parse(s))
                .collect::<Result<Vec<_>, _>>()
                .map_err(|e| Failure::Validation(e.into()))?;
            let Some(out) = out else {
                return Err(Failure::Validation(anyhow::anyhow!("compile-model requires --out")));
            };
            let req = CompileRequest {
                graph,
                strategies: specs,
                class,
                radius,
                tick,
                velocity_kmh: (min_kmh, max_kmh),
                runs_per_pair,
                smoothing,
                seed: g.seed,
            };
            let model = omega_core::batch::with_jobs(g.jobs, || compile_model_file(&req, out))?;
            log::info!("wrote model with {} sources to {}", model.n_sources(), out.display());
        }
        Command::Run {
            scenario,
            trials,
            policy,
        } => {
            let scn = load_scenario(&scenario, policy)?;
            let (stats, csv) = cmd_run(&scn, trials, g.seed, g.jobs)?;
            eprintln!(
                "success rate {:.4} (95% CI {:.4}..{:.4}) over {} trials, {} timeouts",
                stats.success_rate, stats.ci_low, stats.ci_high, stats.trials, stats.timeouts
            );
            emit(out, &csv)?;
        }
        Command::Sweep { spec } => {
            let sweep = SweepSpec::load(&spec)?;
            let dir = spec.parent().unwrap_or(Path::new("."));
            let rows = cmd_sweep(&sweep, dir, g.jobs)?;
            let mut buf = Vec::new();
            write_sweep_csv(&mut buf, &rows).map_err(|e| Failure::Runtime(e.into()))?;
            match out {
                Some(d) => emit(Some(&d.join("sweep.csv")), &buf)?,
                None => emit(None, &buf)?,
            }
        }
        Command::ThresholdScan {
            scenario,
            thresholds,
            detect_probs,
            trials,
        } => {
            let (cfg, dir) = load_config(&scenario)?;
            let rows = cmd_threshold_scan(&cfg, &dir, &thresholds, &detect_probs, trials, g.seed, g.jobs)?;
            let mut buf = Vec::new();
            write_threshold_csv(&mut buf, &rows).map_err(|e| Failure::Runtime(e.into()))?;
            emit(out, &buf)?;
        }
        Command::DumpBelief { scenario } => {
            let scn = load_scenario(&scenario, None)?;
            let mut buf = Vec::new();
            let result = cmd_dump_belief(&scn, g.seed, &mut buf)?;
            eprintln!("trial ended: {} after {} ticks", result.outcome.as_str(), result.ticks);
            emit(out, &buf)?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Validation(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
        Err(Failure::Runtime(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
