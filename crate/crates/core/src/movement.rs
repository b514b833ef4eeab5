//! Offline compilation of target strategies into a sparse Markov transition
//! model over refined edges, at the simulator's tick resolution.

use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use thiserror::Error;

use crate::graph::EdgeId;
use crate::grid::RefinedGraph;
use crate::rng::split_seed;
use crate::strategy::{Strategy, StrategyError};
use crate::KMH_TO_MS;

/// Row-sum tolerance for a valid model.
pub const ROW_TOL: f64 = 1e-9;

/// Default Laplace smoothing mass.
pub const DEFAULT_SMOOTHING: f64 = 0.01;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("strategy `{strategy}` produced a disconnected hop {from} -> {to}")]
    InvalidHop {
        strategy: String,
        from: EdgeId,
        to: EdgeId,
    },
    #[error(transparent)]
    Strategy(#[from] StrategyError),
    #[error("no training traces")]
    NoTraces,
    #[error("invalid velocity interval [{0}, {1}] km/h")]
    Velocity(f64, f64),
    #[error("model file line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("model covers {model} edges but the refined graph has {graph}")]
    Mismatch { model: usize, graph: usize },
}

/// Forward (row-stochastic) view of the movement model: for every source
/// edge, the distribution of the edge occupied one tick later.
#[derive(Clone, Debug, PartialEq)]
pub struct TransitionModel {
    pub target_class: String,
    /// Seconds per step.
    pub tick: f64,
    rows: Vec<Vec<(EdgeId, f64)>>,
}

impl TransitionModel {
    pub fn new(target_class: impl Into<String>, tick: f64, rows: Vec<Vec<(EdgeId, f64)>>) -> Self {
        Self {
            target_class: target_class.into(),
            tick,
            rows,
        }
    }

    /// Outgoing distribution of `source`; empty when the model has no row.
    pub fn row(&self, source: EdgeId) -> &[(EdgeId, f64)] {
        self.rows.get(source.0).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn n_sources(&self) -> usize {
        self.rows.len()
    }

    pub fn rows(&self) -> impl Iterator<Item = (EdgeId, &[(EdgeId, f64)])> {
        self.rows
            .iter()
            .enumerate()
            .map(|(i, r)| (EdgeId(i), r.as_slice()))
    }

    /// Incoming view: for every destination, the `(source, probability)`
    /// pairs feeding it.
    pub fn incoming(&self) -> Vec<Vec<(EdgeId, f64)>> {
        let mut inc = vec![Vec::new(); self.rows.len()];
        for (s, row) in self.rows() {
            for &(d, p) in row {
                if d.0 >= inc.len() {
                    inc.resize(d.0 + 1, Vec::new());
                }
                inc[d.0].push((s, p));
            }
        }
        inc
    }

    /// Ensures every edge of a graph with `n_edges` edges has a row.
    pub fn check_covers(&self, n_edges: usize) -> Result<(), ModelError> {
        let covered = self.rows.iter().filter(|r| !r.is_empty()).count();
        if self.rows.len() != n_edges || covered != n_edges {
            return Err(ModelError::Mismatch {
                model: covered,
                graph: n_edges,
            });
        }
        Ok(())
    }
}

/// Occupancy samples of one simulated target run.
#[derive(Clone, Debug, PartialEq)]
pub struct PathTrace {
    /// `(tick, refined edge)`. When a target crosses several edges within
    /// one tick the intermediate edges are recorded with the same tick so
    /// that consecutive samples are always a stay or a single hop.
    pub samples: Vec<(u64, EdgeId)>,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct VelocityRange {
    pub min_kmh: f64,
    pub max_kmh: f64,
}

impl VelocityRange {
    pub fn new(min_kmh: f64, max_kmh: f64) -> Result<Self, ModelError> {
        if !(min_kmh > 0.0 && max_kmh >= min_kmh && max_kmh.is_finite()) {
            return Err(ModelError::Velocity(min_kmh, max_kmh));
        }
        Ok(Self { min_kmh, max_kmh })
    }

    pub fn sample(&self, rng: &mut impl Rng) -> f64 {
        if self.max_kmh > self.min_kmh {
            rng.gen_range(self.min_kmh..=self.max_kmh)
        } else {
            self.min_kmh
        }
    }
}

/// Samples the refined edge occupied every `tick` seconds by a target moving
/// at `speed` m/s along `path`, until it first enters a goal edge.
pub fn sample_path(rg: &RefinedGraph, path: &[EdgeId], speed: f64, tick: f64) -> PathTrace {
    let g = &rg.graph;
    let mut samples = vec![(0, path[0])];
    if g.is_goal(path[0]) {
        return PathTrace { samples };
    }
    let step = speed * tick;
    let mut idx = 0;
    // distance to the end of the current edge, relative to the start of the path
    let mut edge_end = g.edge(path[0]).length;
    let mut k = 0u64;
    loop {
        k += 1;
        let pos = step * k as f64;
        while pos >= edge_end - 1e-9 && idx + 1 < path.len() {
            idx += 1;
            edge_end += g.edge(path[idx]).length;
            samples.push((k, path[idx]));
            if g.is_goal(path[idx]) {
                return PathTrace { samples };
            }
        }
        if idx + 1 == path.len() && pos >= edge_end - 1e-9 {
            // strategy path ended off-goal; nothing further to sample
            return PathTrace { samples };
        }
        if samples.last().map(|s| s.0) != Some(k) {
            samples.push((k, path[idx]));
        }
    }
}

/// Runs `strategy` from every entry edge towards every goal, `runs_per_pair`
/// times, and samples edge occupancy at `tick` resolution.
pub fn generate_training_traces(
    rg: &RefinedGraph,
    strategy: &dyn Strategy,
    tick: f64,
    velocity: VelocityRange,
    runs_per_pair: usize,
    seed: u64,
) -> Result<Vec<PathTrace>, ModelError> {
    let g = &rg.original;
    let mut jobs = Vec::new();
    for &entry in g.entries() {
        for goal in 0..g.goals().len() {
            for run in 0..runs_per_pair {
                jobs.push((entry, goal, run));
            }
        }
    }
    jobs.into_par_iter()
        .enumerate()
        .map(|(i, (entry, goal, _))| {
            let mut rng = ChaCha8Rng::seed_from_u64(split_seed(seed, i as u64));
            let path = strategy.generate(g, entry, Some(goal), rng.gen())?;
            if let Err((from, to)) = g.check_connected(&path) {
                return Err(ModelError::InvalidHop {
                    strategy: strategy.name(),
                    from,
                    to,
                });
            }
            let speed = velocity.sample(&mut rng) * KMH_TO_MS;
            Ok(sample_path(rg, &rg.expand_path(&path), speed, tick))
        })
        .collect()
}

/// Frequency-counts tick transitions into a row-stochastic model with
/// Laplace smoothing `smoothing` over `{s} ∪ outgoing(s)`.
pub fn compile_model(
    traces: &[PathTrace],
    rg: &RefinedGraph,
    smoothing: f64,
    target_class: &str,
    tick: f64,
) -> Result<TransitionModel, ModelError> {
    if traces.is_empty() {
        return Err(ModelError::NoTraces);
    }
    let g = &rg.graph;
    let n = g.n_edges();
    let mut counts: Vec<Vec<(EdgeId, u64)>> = (0..n)
        .map(|s| g.successors(EdgeId(s)).map(|d| (d, 0)).collect())
        .collect();
    for trace in traces {
        for w in trace.samples.windows(2) {
            let (s, d) = (w[0].1, w[1].1);
            if let Some(slot) = counts[s.0].iter_mut().find(|(e, _)| *e == d) {
                slot.1 += 1;
            }
        }
    }

    let rows = counts
        .into_iter()
        .enumerate()
        .map(|(s, row)| {
            let s = EdgeId(s);
            if g.is_goal(s) {
                return vec![(s, 1.0)];
            }
            let departures: u64 = row.iter().map(|(_, c)| c).sum();
            let width = row.len() as f64;
            let denom = departures as f64 + smoothing * width;
            if departures == 0 || denom <= 0.0 {
                return row.iter().map(|&(d, _)| (d, 1.0 / width)).collect();
            }
            row.iter()
                .map(|&(d, c)| (d, (c as f64 + smoothing) / denom))
                .filter(|&(_, p)| p > 0.0)
                .collect()
        })
        .collect();
    Ok(TransitionModel::new(target_class, tick, rows))
}

#[derive(Clone, Debug, PartialEq)]
pub enum Violation {
    RowSum { source: EdgeId, sum: f64 },
    Range { source: EdgeId, dest: EdgeId, prob: f64 },
}

/// Every row whose probabilities leave `[0, 1]` or do not sum to one.
pub fn validate_stochastic(m: &TransitionModel) -> Result<(), Vec<Violation>> {
    let mut out = Vec::new();
    for (s, row) in m.rows() {
        if row.is_empty() {
            continue;
        }
        for &(d, p) in row {
            if !(0.0..=1.0).contains(&p) || !p.is_finite() {
                out.push(Violation::Range {
                    source: s,
                    dest: d,
                    prob: p,
                });
            }
        }
        let sum: f64 = row.iter().map(|(_, p)| p).sum();
        if (sum - 1.0).abs() > ROW_TOL {
            out.push(Violation::RowSum { source: s, sum });
        }
    }
    if out.is_empty() {
        Ok(())
    } else {
        Err(out)
    }
}

pub fn write_model(m: &TransitionModel) -> String {
    let mut out = format!("#model tick={} class={}\n", m.tick, m.target_class);
    for (s, row) in m.rows() {
        for &(d, p) in row {
            let _ = writeln!(out, "{} {} {:.16e}", s.0, d.0, p);
        }
    }
    out
}

pub fn read_model(text: &str) -> Result<TransitionModel, ModelError> {
    let err = |line: usize, msg: String| ModelError::Parse { line, msg };
    let mut lines = text.lines().enumerate();
    let (_, header) = lines
        .next()
        .ok_or_else(|| err(1, "empty model file".into()))?;
    let rest = header
        .strip_prefix("#model")
        .ok_or_else(|| err(1, "missing `#model` header".into()))?;
    let mut tick = None;
    let mut class = None;
    for kv in rest.split_whitespace() {
        match kv.split_once('=') {
            Some(("tick", v)) => {
                tick = Some(
                    v.parse::<f64>()
                        .map_err(|_| err(1, format!("bad tick `{v}`")))?,
                )
            }
            Some(("class", v)) => class = Some(v.to_string()),
            _ => return Err(err(1, format!("unexpected header field `{kv}`"))),
        }
    }
    let tick = tick.ok_or_else(|| err(1, "header lacks tick=".into()))?;
    let class = class.ok_or_else(|| err(1, "header lacks class=".into()))?;

    let mut rows: Vec<Vec<(EdgeId, f64)>> = Vec::new();
    for (i, line) in lines {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let f: Vec<&str> = line.split_whitespace().collect();
        if f.len() != 3 {
            return Err(err(i + 1, format!("expected `src dst prob`, found `{line}`")));
        }
        let id = |s: &str| {
            s.parse::<usize>()
                .map_err(|_| err(i + 1, format!("bad edge id `{s}`")))
        };
        let (s, d) = (id(f[0])?, id(f[1])?);
        let p = f[2]
            .parse::<f64>()
            .map_err(|_| err(i + 1, format!("bad probability `{}`", f[2])))?;
        if rows.len() <= s.max(d) {
            rows.resize(s.max(d) + 1, Vec::new());
        }
        rows[s].push((EdgeId(d), p));
    }
    Ok(TransitionModel::new(class, tick, rows))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::load_graph;
    use crate::grid::overlay_grid;

    fn two_edge() -> RefinedGraph {
        // 100 m entry edge followed by a goal edge; one big cell
        let g = load_graph(
            "#vertices\n0 0 0\n1 100 0\n2 110 0\n#edges\n0 0 1\n1 1 2\n#entries\n0\n#goals\n0 1\n",
        )
        .unwrap();
        overlay_grid(&g, 1000.0).unwrap().0
    }

    #[test]
    fn hundred_meters_at_ten_kmh_is_four_ticks() {
        let rg = two_edge();
        let path = rg.expand_path(&[EdgeId(0), EdgeId(1)]);
        let trace = sample_path(&rg, &path, 10.0 * KMH_TO_MS, 9.0);
        let on_entry = trace.samples.iter().filter(|s| s.1 == EdgeId(0)).count();
        assert_eq!(on_entry, 4);
        assert_eq!(trace.samples.last(), Some(&(4, EdgeId(1))));
    }

    #[test]
    fn half_stay_half_hop_frequencies() {
        let rg = two_edge();
        let mut traces = Vec::new();
        for _ in 0..50 {
            traces.push(PathTrace {
                samples: vec![(0, EdgeId(0)), (1, EdgeId(0))],
            });
            traces.push(PathTrace {
                samples: vec![(0, EdgeId(0)), (1, EdgeId(1))],
            });
        }
        let m = compile_model(&traces, &rg, 0.0, "t", 1.0).unwrap();
        assert_eq!(m.row(EdgeId(0)), &[(EdgeId(0), 0.5), (EdgeId(1), 0.5)]);
        assert_eq!(m.row(EdgeId(1)), &[(EdgeId(1), 1.0)]);
    }

    #[test]
    fn always_hop_approaches_one() {
        let rg = two_edge();
        let traces = vec![
            PathTrace {
                samples: vec![(0, EdgeId(0)), (1, EdgeId(1))],
            };
            100
        ];
        let m = compile_model(&traces, &rg, 1e-6, "t", 1.0).unwrap();
        let p = m.row(EdgeId(0)).iter().find(|x| x.0 == EdgeId(1)).unwrap().1;
        assert!(p > 1.0 - 1e-7);
        validate_stochastic(&m).unwrap();
    }

    #[test]
    fn validation_cases() {
        let m = TransitionModel::new("x", 1.0, vec![vec![(EdgeId(0), 0.4), (EdgeId(1), 0.5)]]);
        let v = validate_stochastic(&m).unwrap_err();
        assert_eq!(v.len(), 1);
        assert!(matches!(v[0], Violation::RowSum { source: EdgeId(0), .. }));
        assert!(validate_stochastic(&TransitionModel::new("x", 1.0, vec![])).is_ok());
    }

    #[test]
    fn model_file_is_stable() {
        let m = TransitionModel::new(
            "shortest",
            5.0,
            vec![
                vec![(EdgeId(0), 1.0 / 3.0), (EdgeId(1), 2.0 / 3.0)],
                vec![(EdgeId(1), 1.0)],
            ],
        );
        let text = write_model(&m);
        assert!(text.starts_with("#model tick=5 class=shortest\n"));
        let back = read_model(&text).unwrap();
        assert_eq!(back, m);
        assert_eq!(write_model(&back), text);
        assert!(read_model("0 1 0.5\n").is_err());
    }
}
