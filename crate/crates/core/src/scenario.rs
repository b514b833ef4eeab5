//! Scenario files: the full description of one experiment point, and its
//! resolution into graph, grid, movement models and strategies.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::{load_graph, EdgeId, GraphError};
use crate::grid::{overlay_grid, GridOverlay, RefinedGraph};
use crate::movement::{
    compile_model, generate_training_traces, read_model, validate_stochastic, ModelError,
    TransitionModel, VelocityRange, DEFAULT_SMOOTHING,
};
use crate::planner::PolicyConfig;
use crate::rng::split_seed;
use crate::strategy::{builtin_pool, split_pool, Strategy, StrategyError, StrategySpec};

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("{path}: {msg}")]
    Invalid { path: String, msg: String },
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{path}: {msg}")]
    Syntax { path: PathBuf, msg: String },
    #[error("graph: {0}")]
    Graph(#[from] GraphError),
    #[error("class `{class}`: {source}")]
    Model { class: String, source: ModelError },
    #[error("class `{class}`: {source}")]
    Strategy {
        class: String,
        source: StrategyError,
    },
}

impl ScenarioError {
    fn invalid(path: impl Into<String>, msg: impl fmt::Display) -> Self {
        ScenarioError::Invalid {
            path: path.into(),
            msg: msg.to_string(),
        }
    }

    /// Whether the error stems from the user's input rather than from a
    /// failure while computing.
    pub fn is_validation(&self) -> bool {
        !matches!(self, ScenarioError::Model { .. } | ScenarioError::Strategy { .. })
    }
}

fn one() -> usize {
    1
}
fn default_tick() -> f64 {
    5.0
}
fn default_max_ticks() -> u64 {
    20_000
}
fn default_velocity() -> [f64; 2] {
    [8.0, 12.0]
}
fn default_runs() -> usize {
    3
}
fn default_smoothing() -> f64 {
    DEFAULT_SMOOTHING
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UavGroup {
    #[serde(default = "one")]
    pub count: usize,
    /// `[x, y]` meters.
    pub depot: [f64; 2],
    pub velocity_kmh: f64,
    /// Detection radius r_i, meters.
    pub radius: f64,
    pub detect_prob: f64,
}

/// `entry = "uniform"` or `entry = <edge id>`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum EntryDraw {
    Fixed(u64),
    Named(String),
}

impl Default for EntryDraw {
    fn default() -> Self {
        EntryDraw::Named("uniform".into())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TargetGroup {
    #[serde(default = "one")]
    pub count: usize,
    pub class: String,
    #[serde(default)]
    pub entry: EntryDraw,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PoolSplit {
    Train,
    Test,
}

/// A split of the built-in strategy population.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PoolRef {
    pub size: usize,
    #[serde(default)]
    pub seed: u64,
    pub train: usize,
    pub test: usize,
    pub split: PoolSplit,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TargetClass {
    #[serde(default)]
    pub strategies: Option<Vec<StrategySpec>>,
    #[serde(default)]
    pub pool: Option<PoolRef>,
    /// Compiled model file; compiled in memory from the training strategies
    /// when absent.
    #[serde(default)]
    pub model: Option<PathBuf>,
    #[serde(default = "default_velocity")]
    pub velocity_kmh: [f64; 2],
    #[serde(default = "default_runs")]
    pub model_runs_per_pair: usize,
    #[serde(default)]
    pub model_seed: u64,
    #[serde(default = "default_smoothing")]
    pub smoothing: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub graph: PathBuf,
    /// Grid radius r; defaults to the smallest UAV detection radius.
    #[serde(default)]
    pub radius: Option<f64>,
    #[serde(default = "default_tick")]
    pub tick: f64,
    #[serde(default = "default_max_ticks")]
    pub max_ticks: u64,
    #[serde(default)]
    pub delay_km: f64,
    pub policy: PolicyConfig,
    #[serde(default, rename = "uav")]
    pub uavs: Vec<UavGroup>,
    #[serde(rename = "target")]
    pub targets: Vec<TargetGroup>,
    #[serde(rename = "class")]
    pub classes: BTreeMap<String, TargetClass>,
}

impl ScenarioConfig {
    pub fn from_toml(text: &str, origin: &Path) -> Result<Self, ScenarioError> {
        toml::from_str(text).map_err(|e| ScenarioError::Syntax {
            path: origin.to_path_buf(),
            msg: e.to_string(),
        })
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("scenario serializes")
    }

    pub fn validate(&self) -> Result<(), ScenarioError> {
        if !(self.tick > 0.0 && self.tick.is_finite()) {
            return Err(ScenarioError::invalid("tick", "must be positive"));
        }
        if self.max_ticks == 0 {
            return Err(ScenarioError::invalid("max_ticks", "must be at least 1"));
        }
        if !(self.delay_km >= 0.0 && self.delay_km.is_finite()) {
            return Err(ScenarioError::invalid("delay_km", "must be >= 0"));
        }
        if let Some(r) = self.radius {
            if !(r > 0.0 && r.is_finite()) {
                return Err(ScenarioError::invalid("radius", "must be positive"));
            }
        }
        self.policy
            .validate()
            .map_err(|m| ScenarioError::invalid("policy", m))?;
        for (i, u) in self.uavs.iter().enumerate() {
            let at = |f: &str| format!("uav[{i}].{f}");
            if !(u.detect_prob > 0.0 && u.detect_prob <= 1.0) {
                return Err(ScenarioError::invalid(at("detect_prob"), format!("must lie in (0, 1], got {}", u.detect_prob)));
            }
            if !(u.radius > 0.0 && u.radius.is_finite()) {
                return Err(ScenarioError::invalid(at("radius"), "must be positive"));
            }
            if !(u.velocity_kmh > 0.0 && u.velocity_kmh.is_finite()) {
                return Err(ScenarioError::invalid(at("velocity_kmh"), "must be positive"));
            }
            if !u.depot.iter().all(|c| c.is_finite()) {
                return Err(ScenarioError::invalid(at("depot"), "must be finite"));
            }
        }
        if self.radius.is_none() && self.uavs.is_empty() {
            return Err(ScenarioError::invalid("radius", "required when the scenario has no UAVs"));
        }
        if self.targets.iter().map(|t| t.count).sum::<usize>() == 0 {
            return Err(ScenarioError::invalid("target", "at least one target is required"));
        }
        for (i, t) in self.targets.iter().enumerate() {
            if !self.classes.contains_key(&t.class) {
                return Err(ScenarioError::invalid(format!("target[{i}].class"), format!("unknown class `{}`", t.class)));
            }
            if let EntryDraw::Named(n) = &t.entry {
                if n != "uniform" {
                    return Err(ScenarioError::invalid(
                        format!("target[{i}].entry"),
                        format!("expected \"uniform\" or an edge id, got `{n}`"),
                    ));
                }
            }
        }
        for (name, c) in &self.classes {
            let at = |f: &str| format!("class.{name}.{f}");
            match (&c.strategies, &c.pool) {
                (Some(s), None) if !s.is_empty() => {}
                (Some(_), None) => return Err(ScenarioError::invalid(at("strategies"), "must not be empty")),
                (None, Some(p)) => {
                    if p.train + p.test > p.size {
                        return Err(ScenarioError::invalid(at("pool"), "train + test exceeds pool size"));
                    }
                    if p.train == 0 && c.model.is_none() {
                        return Err(ScenarioError::invalid(at("pool.train"), "empty training split and no model file"));
                    }
                    let used = match p.split {
                        PoolSplit::Train => p.train,
                        PoolSplit::Test => p.test,
                    };
                    if used == 0 {
                        return Err(ScenarioError::invalid(at("pool.split"), "selected split is empty"));
                    }
                }
                _ => return Err(ScenarioError::invalid(name.clone(), "exactly one of `strategies` or `pool` is required")),
            }
            let [lo, hi] = c.velocity_kmh;
            if VelocityRange::new(lo, hi).is_err() {
                return Err(ScenarioError::invalid(at("velocity_kmh"), format!("invalid interval [{lo}, {hi}]")));
            }
            if c.model_runs_per_pair == 0 {
                return Err(ScenarioError::invalid(at("model_runs_per_pair"), "must be at least 1"));
            }
            if !(c.smoothing >= 0.0) {
                return Err(ScenarioError::invalid(at("smoothing"), "must be >= 0"));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct UavSpec {
    pub depot: (f64, f64),
    pub velocity_kmh: f64,
    pub radius: f64,
    pub detect_prob: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TargetSpec {
    pub class: usize,
    /// Original-graph entry edge; drawn uniformly when `None`.
    pub entry: Option<EdgeId>,
}

#[derive(Debug)]
pub struct ResolvedClass {
    pub name: String,
    pub strategies: Vec<Box<dyn Strategy>>,
    pub model: Arc<TransitionModel>,
    pub velocity: VelocityRange,
}

/// A scenario ready to simulate. Clones share the graph, grid and models.
#[derive(Clone, Debug)]
pub struct Scenario {
    pub config: ScenarioConfig,
    pub refined: Arc<RefinedGraph>,
    pub overlay: Arc<GridOverlay>,
    pub classes: Arc<Vec<ResolvedClass>>,
    pub uavs: Vec<UavSpec>,
    pub targets: Vec<TargetSpec>,
    base_uavs: Vec<UavSpec>,
    base_targets: Vec<TargetSpec>,
    /// Meters of head start before the UAVs move.
    pub delay_m: f64,
}

fn read(path: &Path) -> Result<String, ScenarioError> {
    std::fs::read_to_string(path).map_err(|source| ScenarioError::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Compiles a movement model from every listed strategy.
pub fn compile_for_strategies(
    refined: &RefinedGraph,
    specs: &[StrategySpec],
    class: &str,
    tick: f64,
    velocity: VelocityRange,
    runs_per_pair: usize,
    smoothing: f64,
    seed: u64,
) -> Result<TransitionModel, ModelError> {
    let mut traces = Vec::new();
    for (i, spec) in specs.iter().enumerate() {
        let strategy = spec.build()?;
        traces.extend(generate_training_traces(
            refined,
            strategy.as_ref(),
            tick,
            velocity,
            runs_per_pair,
            split_seed(seed, i as u64),
        )?);
    }
    compile_model(&traces, refined, smoothing, class, tick)
}

impl Scenario {
    pub fn load(path: &Path) -> Result<Self, ScenarioError> {
        let cfg = ScenarioConfig::from_toml(&read(path)?, path)?;
        Self::resolve(cfg, path.parent().unwrap_or(Path::new(".")))
    }

    /// Resolves relative paths against `base_dir`.
    pub fn resolve(config: ScenarioConfig, base_dir: &Path) -> Result<Self, ScenarioError> {
        config.validate()?;
        let graph_path = base_dir.join(&config.graph);
        let graph = load_graph(&read(&graph_path)?)?;
        let radius = config.radius.unwrap_or_else(|| {
            config
                .uavs
                .iter()
                .map(|u| u.radius)
                .fold(f64::INFINITY, f64::min)
        });
        let (refined, overlay) = overlay_grid(&graph, radius)?;
        let original = &refined.original;
        if original.entries().is_empty() {
            return Err(ScenarioError::invalid("graph", "has no entry edges"));
        }
        if original.goals().is_empty() {
            return Err(ScenarioError::invalid("graph", "has no goals"));
        }

        let mut names: Vec<&String> = config.classes.keys().collect();
        names.sort();
        let mut classes = Vec::with_capacity(names.len());
        for name in &names {
            let c = &config.classes[*name];
            let velocity = VelocityRange::new(c.velocity_kmh[0], c.velocity_kmh[1]).map_err(|e| {
                ScenarioError::Model {
                    class: name.to_string(),
                    source: e,
                }
            })?;
            let (used, train) = match (&c.strategies, &c.pool) {
                (Some(list), _) => (list.clone(), list.clone()),
                (None, Some(p)) => {
                    let pool = split_pool(builtin_pool(p.size, p.seed), p.train, p.test, p.seed)
                        .map_err(|source| ScenarioError::Strategy {
                            class: name.to_string(),
                            source,
                        })?;
                    let used = match p.split {
                        PoolSplit::Train => pool.train_specs(),
                        PoolSplit::Test => pool.test_specs(),
                    };
                    (used, pool.train_specs())
                }
                (None, None) => unreachable!("validated"),
            };
            let strategies = used
                .iter()
                .map(StrategySpec::build)
                .collect::<Result<Vec<_>, _>>()
                .map_err(|source| ScenarioError::Strategy {
                    class: name.to_string(),
                    source,
                })?;
            let model_err = |source| ScenarioError::Model {
                class: name.to_string(),
                source,
            };
            let model = match &c.model {
                Some(file) => {
                    let m = read_model(&read(&base_dir.join(file))?).map_err(model_err)?;
                    m.check_covers(refined.graph.n_edges()).map_err(model_err)?;
                    if (m.tick - config.tick).abs() > 1e-9 {
                        return Err(ScenarioError::invalid(
                            format!("class.{name}.model"),
                            format!("model tick {} differs from scenario tick {}", m.tick, config.tick),
                        ));
                    }
                    if let Err(v) = validate_stochastic(&m) {
                        return Err(ScenarioError::invalid(
                            format!("class.{name}.model"),
                            format!("{} stochasticity violations", v.len()),
                        ));
                    }
                    m
                }
                None => compile_for_strategies(
                    &refined,
                    &train,
                    name,
                    config.tick,
                    velocity,
                    c.model_runs_per_pair,
                    c.smoothing,
                    c.model_seed,
                )
                .map_err(model_err)?,
            };
            classes.push(ResolvedClass {
                name: name.to_string(),
                strategies,
                model: Arc::new(model),
                velocity,
            });
        }

        let uavs: Vec<UavSpec> = config
            .uavs
            .iter()
            .flat_map(|g| {
                std::iter::repeat_n(UavSpec {
                    depot: (g.depot[0], g.depot[1]),
                    velocity_kmh: g.velocity_kmh,
                    radius: g.radius,
                    detect_prob: g.detect_prob,
                }, g.count)
            })
            .collect();
        let mut targets = Vec::new();
        for (i, t) in config.targets.iter().enumerate() {
            let class = names.iter().position(|n| **n == t.class).expect("validated");
            let entry = match t.entry {
                EntryDraw::Fixed(label) => {
                    let e = original.edge_by_label(label).ok_or_else(|| {
                        ScenarioError::invalid(format!("target[{i}].entry"), format!("unknown edge id {label}"))
                    })?;
                    if !original.is_entry(e) {
                        return Err(ScenarioError::invalid(
                            format!("target[{i}].entry"),
                            format!("edge {label} is not an entry edge"),
                        ));
                    }
                    Some(e)
                }
                EntryDraw::Named(_) => None,
            };
            targets.extend(std::iter::repeat_n(TargetSpec { class, entry }, t.count));
        }

        Ok(Self {
            delay_m: config.delay_km * 1000.0,
            config,
            refined: Arc::new(refined),
            overlay: Arc::new(overlay),
            classes: Arc::new(classes),
            base_uavs: uavs.clone(),
            base_targets: targets.clone(),
            uavs,
            targets,
        })
    }

    /// Uses `n` UAVs, cycling through the configured ones.
    pub fn set_n_uavs(&mut self, n: usize) -> Result<(), ScenarioError> {
        if n > 0 && self.base_uavs.is_empty() {
            return Err(ScenarioError::invalid("uav", "no UAV template to replicate"));
        }
        self.uavs = (0..n)
            .map(|i| self.base_uavs[i % self.base_uavs.len()].clone())
            .collect();
        Ok(())
    }

    /// Uses `n` targets, cycling through the configured ones.
    pub fn set_n_targets(&mut self, n: usize) -> Result<(), ScenarioError> {
        if n == 0 {
            return Err(ScenarioError::invalid("target", "at least one target is required"));
        }
        self.targets = (0..n)
            .map(|i| self.base_targets[i % self.base_targets.len()].clone())
            .collect();
        Ok(())
    }

    pub fn set_delay_km(&mut self, km: f64) -> Result<(), ScenarioError> {
        if !(km >= 0.0) {
            return Err(ScenarioError::invalid("delay_km", "must be >= 0"));
        }
        self.delay_m = km * 1000.0;
        Ok(())
    }

    pub fn set_threshold(&mut self, th: f64) -> Result<(), ScenarioError> {
        self.config.policy.threshold = th;
        self.config
            .policy
            .validate()
            .map_err(|m| ScenarioError::invalid("policy.threshold", m))
    }

    /// Sets every UAV's detection probability.
    pub fn set_detect_prob(&mut self, p: f64) -> Result<(), ScenarioError> {
        if !(p > 0.0 && p <= 1.0) {
            return Err(ScenarioError::invalid("detect_prob", format!("must lie in (0, 1], got {p}")));
        }
        for u in self.uavs.iter_mut().chain(self.base_uavs.iter_mut()) {
            u.detect_prob = p;
        }
        Ok(())
    }

    pub fn set_policy(&mut self, policy: PolicyConfig) -> Result<(), ScenarioError> {
        policy.validate().map_err(|m| ScenarioError::invalid("policy", m))?;
        self.config.policy = policy;
        Ok(())
    }

    /// Planning detection probability: the configured one or the team minimum.
    pub fn planning_detect_prob(&self) -> f64 {
        self.config.policy.detect_prob.unwrap_or_else(|| {
            self.uavs
                .iter()
                .map(|u| u.detect_prob)
                .fold(1.0, f64::min)
        })
    }
}
