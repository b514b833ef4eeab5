//! Experiment drivers behind the command-line verbs: model compilation,
//! batches, parameter sweeps, threshold scans and belief dumps.

use std::io::Write;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::batch::{run_batch, stats_fields, with_jobs, BatchStats, STATS_COLUMNS};
use crate::graph::{load_graph, GraphError};
use crate::grid::overlay_grid;
use crate::movement::{validate_stochastic, write_model, ModelError, TransitionModel, VelocityRange};
use crate::rng::split_seed;
use crate::scenario::{compile_for_strategies, Scenario, ScenarioConfig, ScenarioError};
use crate::sim::{run_trial_observed, SimError, TrialResult};
use crate::strategy::StrategySpec;

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
    #[error("{path}: {msg}")]
    Invalid { path: String, msg: String },
    #[error("graph: {0}")]
    Graph(#[from] GraphError),
    #[error("model: {0}")]
    Model(#[from] ModelError),
    #[error("simulation: {0}")]
    Sim(#[from] SimError),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

impl ExperimentError {
    /// Input problems as opposed to failures while running.
    pub fn is_validation(&self) -> bool {
        match self {
            ExperimentError::Scenario(e) => e.is_validation(),
            ExperimentError::Invalid { .. } | ExperimentError::Graph(_) => true,
            ExperimentError::Io { source, .. } => source.kind() == std::io::ErrorKind::NotFound,
            _ => false,
        }
    }

    fn invalid(path: impl Into<String>, msg: impl Into<String>) -> Self {
        ExperimentError::Invalid {
            path: path.into(),
            msg: msg.into(),
        }
    }
}

fn read(path: &Path) -> Result<String, ExperimentError> {
    std::fs::read_to_string(path).map_err(|source| ExperimentError::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Writes `bytes` to `path`, creating parent directories.
pub fn write_file(path: &Path, bytes: &[u8]) -> Result<(), ExperimentError> {
    let io = |source| ExperimentError::Io {
        path: path.to_path_buf(),
        source,
    };
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(io)?;
    }
    std::fs::write(path, bytes).map_err(io)
}

#[derive(Clone, Debug)]
pub struct CompileRequest {
    pub graph: PathBuf,
    pub strategies: Vec<StrategySpec>,
    pub class: String,
    /// Grid radius r used for edge refinement.
    pub radius: f64,
    pub tick: f64,
    pub velocity_kmh: (f64, f64),
    pub runs_per_pair: usize,
    pub smoothing: f64,
    pub seed: u64,
}

/// Traces every strategy over the refined graph and compiles one model.
pub fn cmd_compile_model(req: &CompileRequest) -> Result<TransitionModel, ExperimentError> {
    if req.strategies.is_empty() {
        return Err(ExperimentError::invalid("strategies", "at least one strategy is required"));
    }
    if !(req.radius > 0.0) {
        return Err(ExperimentError::invalid("radius", "must be positive"));
    }
    if !(req.tick > 0.0) {
        return Err(ExperimentError::invalid("tick", "must be positive"));
    }
    if req.runs_per_pair == 0 {
        return Err(ExperimentError::invalid("runs_per_pair", "must be at least 1"));
    }
    let velocity = VelocityRange::new(req.velocity_kmh.0, req.velocity_kmh.1)
        .map_err(|e| ExperimentError::invalid("velocity", e.to_string()))?;
    let graph = load_graph(&read(&req.graph)?)?;
    let (refined, _) = overlay_grid(&graph, req.radius)?;
    let model = compile_for_strategies(
        &refined,
        &req.strategies,
        &req.class,
        req.tick,
        velocity,
        req.runs_per_pair,
        req.smoothing,
        req.seed,
    )?;
    if let Err(v) = validate_stochastic(&model) {
        return Err(ModelError::Parse {
            line: 0,
            msg: format!("compiled model violates stochasticity: {:?}", v[0]),
        }
        .into());
    }
    Ok(model)
}

pub fn compile_model_file(req: &CompileRequest, out: &Path) -> Result<TransitionModel, ExperimentError> {
    let model = cmd_compile_model(req)?;
    write_file(out, write_model(&model).as_bytes())?;
    Ok(model)
}

/// Stats for one scenario plus the per-trial CSV bytes.
pub fn cmd_run(
    scn: &Scenario,
    trials: usize,
    seed: u64,
    jobs: usize,
) -> Result<(BatchStats, Vec<u8>), ExperimentError> {
    if trials == 0 {
        return Err(ExperimentError::invalid("trials", "must be at least 1"));
    }
    let batch = run_batch(scn, trials, seed, jobs)?;
    let mut buf = Vec::new();
    crate::batch::write_trials_csv(&mut buf, &batch.trials)?;
    Ok((batch.stats, buf))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Axis {
    NUavs,
    NTargets,
    DelayKm,
    Threshold,
    DetectProb,
}

impl Axis {
    pub const ORDER: [Axis; 5] = [
        Axis::NUavs,
        Axis::NTargets,
        Axis::DelayKm,
        Axis::Threshold,
        Axis::DetectProb,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            Axis::NUavs => "n_uavs",
            Axis::NTargets => "n_targets",
            Axis::DelayKm => "delay_km",
            Axis::Threshold => "threshold",
            Axis::DetectProb => "detect_prob",
        }
    }

    fn format(&self, v: f64) -> String {
        match self {
            Axis::NUavs | Axis::NTargets => format!("{}", v as usize),
            _ => format!("{v}"),
        }
    }

    fn apply(&self, scn: &mut Scenario, v: f64) -> Result<(), ScenarioError> {
        match self {
            Axis::NUavs => scn.set_n_uavs(v as usize),
            Axis::NTargets => scn.set_n_targets(v as usize),
            Axis::DelayKm => scn.set_delay_km(v),
            Axis::Threshold => scn.set_threshold(v),
            Axis::DetectProb => scn.set_detect_prob(v),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepAxes {
    #[serde(default)]
    pub n_uavs: Vec<usize>,
    #[serde(default)]
    pub n_targets: Vec<usize>,
    #[serde(default)]
    pub delay_km: Vec<f64>,
    #[serde(default)]
    pub threshold: Vec<f64>,
    #[serde(default)]
    pub detect_prob: Vec<f64>,
}

impl SweepAxes {
    fn values(&self, axis: Axis) -> Vec<f64> {
        match axis {
            Axis::NUavs => self.n_uavs.iter().map(|&v| v as f64).collect(),
            Axis::NTargets => self.n_targets.iter().map(|&v| v as f64).collect(),
            Axis::DelayKm => self.delay_km.clone(),
            Axis::Threshold => self.threshold.clone(),
            Axis::DetectProb => self.detect_prob.clone(),
        }
    }

    /// Non-empty axes in canonical order.
    pub fn active(&self) -> Vec<(Axis, Vec<f64>)> {
        Axis::ORDER
            .iter()
            .map(|&a| (a, self.values(a)))
            .filter(|(_, v)| !v.is_empty())
            .collect()
    }
}

/// A sweep file: base scenario, axes, trials per point and master seed.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    pub scenario: PathBuf,
    pub trials: usize,
    #[serde(default)]
    pub seed: u64,
    pub axes: SweepAxes,
}

impl SweepSpec {
    pub fn load(path: &Path) -> Result<Self, ExperimentError> {
        let text = read(path)?;
        let spec: SweepSpec = toml::from_str(&text)
            .map_err(|e| ExperimentError::invalid(path.display().to_string(), e.to_string()))?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<(), ExperimentError> {
        if self.trials == 0 {
            return Err(ExperimentError::invalid("trials", "must be at least 1"));
        }
        if self.axes.active().is_empty() {
            return Err(ExperimentError::invalid("axes", "at least one axis must list values"));
        }
        Ok(())
    }
}

/// One evaluated grid point.
#[derive(Clone, Debug, PartialEq)]
pub struct SweepRow {
    pub point: Vec<(Axis, f64)>,
    pub stats: BatchStats,
}

/// Cartesian product of the axes, last axis varying fastest.
pub fn grid_points(axes: &[(Axis, Vec<f64>)]) -> Vec<Vec<(Axis, f64)>> {
    let mut points = vec![Vec::new()];
    for (axis, values) in axes {
        points = points
            .into_iter()
            .flat_map(|p| {
                values.iter().map(move |&v| {
                    let mut q = p.clone();
                    q.push((*axis, v));
                    q
                })
            })
            .collect();
    }
    points
}

/// Evaluates every grid point on a copy of the base scenario. Point `i`
/// uses master seed `split_seed(seed, i)`.
pub fn run_sweep(
    base: &ScenarioConfig,
    base_dir: &Path,
    axes: &[(Axis, Vec<f64>)],
    trials: usize,
    seed: u64,
    jobs: usize,
) -> Result<Vec<SweepRow>, ExperimentError> {
    let template = Scenario::resolve(base.clone(), base_dir)?;
    let points = grid_points(axes);
    let mut scenarios = Vec::with_capacity(points.len());
    for point in &points {
        let mut scn = template.clone();
        for &(axis, v) in point {
            axis.apply(&mut scn, v)?;
        }
        scenarios.push(scn);
    }
    with_jobs(jobs, || {
        scenarios
            .par_iter()
            .enumerate()
            .map(|(i, scn)| {
                let stats = run_batch(scn, trials, split_seed(seed, i as u64), 0)?.stats;
                Ok(SweepRow {
                    point: points[i].clone(),
                    stats,
                })
            })
            .collect()
    })
}

pub fn cmd_sweep(spec: &SweepSpec, spec_dir: &Path, jobs: usize) -> Result<Vec<SweepRow>, ExperimentError> {
    spec.validate()?;
    let scenario_path = spec_dir.join(&spec.scenario);
    let base = ScenarioConfig::from_toml(&read(&scenario_path)?, &scenario_path)?;
    let base_dir = scenario_path.parent().unwrap_or(Path::new("."));
    run_sweep(&base, base_dir, &spec.axes.active(), spec.trials, spec.seed, jobs)
}

/// Tidy CSV: one column per axis, then [`STATS_COLUMNS`].
pub fn write_sweep_csv(out: impl Write, rows: &[SweepRow]) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let axes: Vec<Axis> = rows
        .first()
        .map(|r| r.point.iter().map(|p| p.0).collect())
        .unwrap_or_default();
    let mut header: Vec<&str> = axes.iter().map(Axis::as_str).collect();
    header.extend(STATS_COLUMNS);
    w.write_record(&header)?;
    for r in rows {
        let mut rec: Vec<String> = r.point.iter().map(|(a, v)| a.format(*v)).collect();
        rec.extend(stats_fields(&r.stats));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

/// Per detection probability, the threshold with the highest success rate
/// (lowest threshold among ties).
pub fn best_thresholds(rows: &[SweepRow]) -> Vec<(f64, f64)> {
    let mut best: Vec<(f64, f64, f64)> = Vec::new();
    for r in rows {
        let get = |a: Axis| r.point.iter().find(|p| p.0 == a).map(|p| p.1);
        let (Some(th), Some(p)) = (get(Axis::Threshold), get(Axis::DetectProb)) else {
            continue;
        };
        match best.iter_mut().find(|b| b.0 == p) {
            Some(b) => {
                if r.stats.success_rate > b.2 {
                    *b = (p, th, r.stats.success_rate);
                }
            }
            None => best.push((p, th, r.stats.success_rate)),
        }
    }
    best.into_iter().map(|b| (b.0, b.1)).collect()
}

/// Sweeps threshold × detection probability; rows are ordered by detection
/// probability, then threshold.
pub fn cmd_threshold_scan(
    base: &ScenarioConfig,
    base_dir: &Path,
    thresholds: &[f64],
    detect_probs: &[f64],
    trials: usize,
    seed: u64,
    jobs: usize,
) -> Result<Vec<SweepRow>, ExperimentError> {
    if thresholds.is_empty() || detect_probs.is_empty() {
        return Err(ExperimentError::invalid("grid", "threshold and detect_prob grids must be non-empty"));
    }
    if trials == 0 {
        return Err(ExperimentError::invalid("trials", "must be at least 1"));
    }
    let axes = vec![
        (Axis::DetectProb, detect_probs.to_vec()),
        (Axis::Threshold, thresholds.to_vec()),
    ];
    run_sweep(base, base_dir, &axes, trials, seed, jobs)
}

/// Threshold-scan CSV: `detect_prob,threshold,<stats>,best` where `best`
/// marks the winning threshold of each detection probability.
pub fn write_threshold_csv(out: impl Write, rows: &[SweepRow]) -> csv::Result<()> {
    let best = best_thresholds(rows);
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["detect_prob", "threshold"];
    header.extend(STATS_COLUMNS);
    header.push("best");
    w.write_record(&header)?;
    for r in rows {
        let get = |a: Axis| r.point.iter().find(|p| p.0 == a).map_or(f64::NAN, |p| p.1);
        let (p, th) = (get(Axis::DetectProb), get(Axis::Threshold));
        let mut rec = vec![format!("{p}"), format!("{th}")];
        rec.extend(stats_fields(&r.stats));
        rec.push(best.contains(&(p, th)).to_string());
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

/// Runs one trial and writes every active target's belief after every
/// tick as `t target edge_id mass` lines. Edge ids are refined-graph ids.
pub fn cmd_dump_belief(scn: &Scenario, seed: u64, mut out: impl Write) -> Result<TrialResult, ExperimentError> {
    let mut err = None;
    let result = run_trial_observed(scn, seed, |view| {
        if err.is_some() {
            return;
        }
        for b in view.beliefs.iter().flatten() {
            for &(e, m) in b.mass() {
                if let Err(e) = writeln!(out, "{} {} {} {:.12e}", view.tick, b.target, e.0, m) {
                    err = Some(e);
                    return;
                }
            }
        }
    })?;
    if let Some(source) = err {
        return Err(ExperimentError::Io {
            path: PathBuf::from("<belief dump>"),
            source,
        });
    }
    Ok(result)
}
