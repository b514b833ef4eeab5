//! Pluggable target strategies: given the road graph and an entry edge,
//! produce the full path a target will drive.

use std::fmt;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::{distance_to_edges, shortest_path_weighted, EdgeId, RoadGraph};

/// Random walks give up after this multiple of the shortest distance.
pub const WANDER_FACTOR: f64 = 50.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum StrategyError {
    #[error("no goal is reachable from entry edge {0}")]
    Unreachable(EdgeId),
    #[error("goal index {0} does not exist")]
    UnknownGoal(usize),
    #[error("edge {0} is not part of the graph")]
    UnknownEdge(EdgeId),
    #[error("wandering strategy: walk from entry {entry} exceeded {limit:.0} m")]
    Wandering { entry: EdgeId, limit: f64 },
    #[error("invalid path: {0}")]
    InvalidPath(String),
    #[error("invalid strategy parameter: {0}")]
    Parameter(String),
    #[error("pool of {size} strategies cannot supply {train} train + {test} test")]
    InsufficientPool {
        size: usize,
        train: usize,
        test: usize,
    },
}

pub trait Strategy: Send + Sync + fmt::Debug {
    fn name(&self) -> String;

    /// Path starting at `entry` and ending on a goal edge. `goal` forces the
    /// goal set O_i; `None` lets the strategy choose.
    fn generate(
        &self,
        g: &RoadGraph,
        entry: EdgeId,
        goal: Option<usize>,
        seed: u64,
    ) -> Result<Vec<EdgeId>, StrategyError>;
}

/// Checks the contract every strategy must honor.
pub fn validate_path(g: &RoadGraph, entry: EdgeId, path: &[EdgeId]) -> Result<(), StrategyError> {
    let bad = |m: String| Err(StrategyError::InvalidPath(m));
    match (path.first(), path.last()) {
        (Some(&first), Some(&last)) => {
            if first != entry {
                return bad(format!("starts at {first}, expected entry {entry}"));
            }
            if !g.is_goal(last) {
                return bad(format!("ends at non-goal edge {last}"));
            }
        }
        _ => return bad("empty path".into()),
    }
    if let Some(e) = path.iter().find(|e| !g.contains(**e)) {
        return Err(StrategyError::UnknownEdge(*e));
    }
    g.check_connected(path)
        .or_else(|(a, b)| bad(format!("disconnected hop {a} -> {b}")))
}

fn check_entry(g: &RoadGraph, entry: EdgeId, goal: Option<usize>) -> Result<(), StrategyError> {
    if !g.contains(entry) {
        return Err(StrategyError::UnknownEdge(entry));
    }
    match goal {
        Some(i) if i >= g.goals().len() => Err(StrategyError::UnknownGoal(i)),
        _ if g.goals().is_empty() => Err(StrategyError::Unreachable(entry)),
        _ => Ok(()),
    }
}

/// Shortest path under `weight` to a forced goal, or to a goal drawn
/// uniformly among the reachable ones.
fn weighted_route(
    g: &RoadGraph,
    entry: EdgeId,
    goal: Option<usize>,
    seed: u64,
    weight: impl Fn(EdgeId) -> f64 + Copy,
) -> Result<Vec<EdgeId>, StrategyError> {
    check_entry(g, entry, goal)?;
    let route = |i: usize| {
        shortest_path_weighted(g, entry, &g.goals()[i], weight)
            .map_err(|_| StrategyError::UnknownEdge(entry))
    };
    if let Some(i) = goal {
        return route(i)?.ok_or(StrategyError::Unreachable(entry));
    }
    let mut reachable = Vec::new();
    for i in 0..g.goals().len() {
        if let Some(p) = route(i)? {
            reachable.push(p);
        }
    }
    if reachable.is_empty() {
        return Err(StrategyError::Unreachable(entry));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let pick = rng.gen_range(0..reachable.len());
    Ok(reachable.swap_remove(pick))
}

/// Shortest path to a uniformly chosen goal.
#[derive(Clone, Debug, Default)]
pub struct ShortestPath;

impl Strategy for ShortestPath {
    fn name(&self) -> String {
        "shortest".into()
    }

    fn generate(
        &self,
        g: &RoadGraph,
        entry: EdgeId,
        goal: Option<usize>,
        seed: u64,
    ) -> Result<Vec<EdgeId>, StrategyError> {
        weighted_route(g, entry, goal, seed, |e| g.edge(e).length)
    }
}

/// Shortest path after inflating edges that lead into busy junctions:
/// weight = length · (1 + penalty · deg(head) / max deg).
#[derive(Clone, Debug)]
pub struct SideRoads {
    pub penalty: f64,
}

impl Strategy for SideRoads {
    fn name(&self) -> String {
        format!("side_roads:penalty={}", self.penalty)
    }

    fn generate(
        &self,
        g: &RoadGraph,
        entry: EdgeId,
        goal: Option<usize>,
        seed: u64,
    ) -> Result<Vec<EdgeId>, StrategyError> {
        let degree: Vec<f64> = g
            .vertices()
            .iter()
            .enumerate()
            .map(|(v, _)| {
                let v = crate::graph::VertexId(v);
                (g.in_edges(v).len() + g.out_edges(v).len()) as f64
            })
            .collect();
        let max_deg = degree.iter().copied().fold(1.0, f64::max);
        let penalty = self.penalty;
        weighted_route(g, entry, goal, seed, |e| {
            let edge = g.edge(e);
            edge.length * (1.0 + penalty * degree[edge.head.0] / max_deg)
        })
    }
}

/// Goal-biased random walk. At every junction an outgoing edge is chosen
/// with probability ∝ exp(−β·Δ), Δ being the detour in kilometres the edge
/// adds over the best remaining route: `len(e) + d(head e) − d(v)`.
#[derive(Clone, Debug)]
pub struct RandomWalk {
    pub beta: f64,
}

impl Strategy for RandomWalk {
    fn name(&self) -> String {
        format!("random_walk:beta={}", self.beta)
    }

    fn generate(
        &self,
        g: &RoadGraph,
        entry: EdgeId,
        goal: Option<usize>,
        seed: u64,
    ) -> Result<Vec<EdgeId>, StrategyError> {
        check_entry(g, entry, goal)?;
        let targets: Vec<EdgeId> = match goal {
            Some(i) => g.goals()[i].clone(),
            None => g.goals().iter().flatten().copied().collect(),
        };
        let dist = distance_to_edges(g, &targets, |e| g.edge(e).length);
        let start = g.edge(entry).head;
        if !dist[start.0].is_finite() {
            return Err(StrategyError::Unreachable(entry));
        }
        let limit = WANDER_FACTOR * (dist[start.0] + g.edge(entry).length);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut path = vec![entry];
        let mut travelled = g.edge(entry).length;
        let mut cur = entry;
        let mut options: Vec<(EdgeId, f64)> = Vec::new();
        while !g.is_goal(cur) {
            let v = g.edge(cur).head;
            options.clear();
            for &e in g.out_edges(v) {
                let edge = g.edge(e);
                let detour = if targets.contains(&e) {
                    0.0
                } else {
                    edge.length + dist[edge.head.0] - dist[v.0]
                };
                if detour.is_finite() {
                    options.push((e, detour / 1000.0));
                }
            }
            if options.is_empty() || travelled > limit {
                return Err(StrategyError::Wandering { entry, limit });
            }
            let best = options.iter().map(|o| o.1).fold(f64::INFINITY, f64::min);
            let weights: Vec<f64> = options
                .iter()
                .map(|o| (-self.beta * (o.1 - best)).exp())
                .collect();
            let total: f64 = weights.iter().sum();
            let mut u = rng.gen::<f64>() * total;
            let mut pick = options.len() - 1;
            for (i, w) in weights.iter().enumerate() {
                if u < *w {
                    pick = i;
                    break;
                }
                u -= w;
            }
            cur = options[pick].0;
            travelled += g.edge(cur).length;
            path.push(cur);
        }
        Ok(path)
    }
}

/// Serializable description of a built-in strategy.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum StrategySpec {
    Shortest,
    RandomWalk { beta: f64 },
    SideRoads { penalty: f64 },
}

impl StrategySpec {
    pub fn build(&self) -> Result<Box<dyn Strategy>, StrategyError> {
        Ok(match *self {
            StrategySpec::Shortest => Box::new(ShortestPath),
            StrategySpec::RandomWalk { beta } => {
                if !(beta >= 0.0) {
                    return Err(StrategyError::Parameter(format!("beta must be >= 0, got {beta}")));
                }
                Box::new(RandomWalk { beta })
            }
            StrategySpec::SideRoads { penalty } => {
                if !(penalty >= 0.0) {
                    return Err(StrategyError::Parameter(format!(
                        "penalty must be >= 0, got {penalty}"
                    )));
                }
                Box::new(SideRoads { penalty })
            }
        })
    }

    /// Parses `name[:key=value,...]`, e.g. `random_walk:beta=2.5`.
    pub fn parse(text: &str) -> Result<Self, StrategyError> {
        let (name, params) = text.split_once(':').unwrap_or((text, ""));
        let mut kv = std::collections::BTreeMap::new();
        for p in params.split(',').filter(|p| !p.is_empty()) {
            let (k, v) = p
                .split_once('=')
                .ok_or_else(|| StrategyError::Parameter(format!("expected key=value in `{p}`")))?;
            let v: f64 = v
                .parse()
                .map_err(|_| StrategyError::Parameter(format!("`{v}` is not a number")))?;
            kv.insert(k.to_string(), v);
        }
        let mut take = |key: &str| {
            kv.remove(key)
                .ok_or_else(|| StrategyError::Parameter(format!("`{name}` requires `{key}`")))
        };
        let spec = match name {
            "shortest" => StrategySpec::Shortest,
            "random_walk" => StrategySpec::RandomWalk { beta: take("beta")? },
            "side_roads" => StrategySpec::SideRoads {
                penalty: take("penalty")?,
            },
            other => return Err(StrategyError::Parameter(format!("unknown strategy `{other}`"))),
        };
        if let Some(k) = kv.keys().next() {
            return Err(StrategyError::Parameter(format!("unexpected parameter `{k}`")));
        }
        Ok(spec)
    }
}

/// A deterministic population of parameterized strategies standing in for
/// externally authored target agents.
pub fn builtin_pool(size: usize, seed: u64) -> Vec<StrategySpec> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..size)
        .map(|i| match i % 4 {
            0 => StrategySpec::Shortest,
            1 => StrategySpec::RandomWalk {
                beta: rng.gen_range(1.0..4.0),
            },
            2 => StrategySpec::SideRoads {
                penalty: rng.gen_range(0.5..4.0),
            },
            _ => StrategySpec::RandomWalk {
                beta: rng.gen_range(4.0..12.0),
            },
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq)]
pub struct StrategyPool {
    pub strategies: Vec<StrategySpec>,
    /// Indices into `strategies`.
    pub train: Vec<usize>,
    pub test: Vec<usize>,
}

impl StrategyPool {
    pub fn train_specs(&self) -> Vec<StrategySpec> {
        self.train.iter().map(|&i| self.strategies[i].clone()).collect()
    }

    pub fn test_specs(&self) -> Vec<StrategySpec> {
        self.test.iter().map(|&i| self.strategies[i].clone()).collect()
    }
}

/// Uniform random disjoint train/test split.
pub fn split_pool(
    pool: Vec<StrategySpec>,
    train_count: usize,
    test_count: usize,
    seed: u64,
) -> Result<StrategyPool, StrategyError> {
    if train_count + test_count > pool.len() {
        return Err(StrategyError::InsufficientPool {
            size: pool.len(),
            train: train_count,
            test: test_count,
        });
    }
    if test_count == 0 {
        log::warn!("strategy pool split leaves the test set empty");
    }
    let mut idx: Vec<usize> = (0..pool.len()).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut train = idx[..train_count].to_vec();
    let mut test = idx[train_count..train_count + test_count].to_vec();
    train.sort_unstable();
    test.sort_unstable();
    Ok(StrategyPool {
        strategies: pool,
        train,
        test,
    })
}
