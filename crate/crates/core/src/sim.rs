//! Discrete-time Monte Carlo trial: targets follow their strategy paths,
//! UAVs fly to planned cells, detections are Bernoulli draws, and beliefs
//! run the propagate, observe, plan loop.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::belief::{Belief, BeliefError, CellBelief};
use crate::graph::EdgeId;
use crate::grid::CellId;
use crate::planner::{match_uavs_to_cells, PlanError};
use crate::scenario::Scenario;
use crate::strategy::StrategyError;
use crate::KMH_TO_MS;

/// Fresh seeds tried when a strategy fails to produce a path.
const PATH_ATTEMPTS: usize = 16;

/// Slack on the per-tick displacement bound.
pub const MOVE_TOL: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("target {target}: {source}")]
    Strategy {
        target: usize,
        source: StrategyError,
    },
    #[error("target {target}: {source}")]
    Belief { target: usize, source: BeliefError },
    #[error("planner: {0}")]
    Plan(#[from] PlanError),
}

#[derive(Clone, Debug, PartialEq)]
pub struct UavState {
    pub id: usize,
    pub position: (f64, f64),
    pub velocity_kmh: f64,
    pub radius: f64,
    pub detect_prob: f64,
    pub assigned: Option<CellId>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TargetStatus {
    Active,
    Detected,
    ReachedGoal,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TargetState {
    pub id: usize,
    /// Refined edges, entry piece first.
    pub path: Vec<EdgeId>,
    pub index: usize,
    /// Meters along `path[index]`, within `[0, length]`.
    pub offset: f64,
    pub velocity_kmh: f64,
    pub status: TargetStatus,
    pub traveled: f64,
}

impl TargetState {
    pub fn edge(&self) -> EdgeId {
        self.path[self.index]
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Outcome {
    Win,
    Lose,
}

impl Outcome {
    pub fn as_str(&self) -> &'static str {
        match self {
            Outcome::Win => "win",
            Outcome::Lose => "lose",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrialResult {
    pub outcome: Outcome,
    /// Tick of detection per target.
    pub detections: Vec<Option<u64>>,
    pub losing_target: Option<usize>,
    pub ticks: u64,
    pub seed: u64,
    /// Lost because `max_ticks` elapsed, not because a goal was reached.
    pub timeout: bool,
}

/// State handed to a [`run_trial_observed`] observer after every tick.
pub struct TickView<'a> {
    pub tick: u64,
    pub uavs: &'a [UavState],
    pub targets: &'a [TargetState],
    /// `None` for targets no longer active.
    pub beliefs: &'a [Option<Belief>],
}

pub fn run_trial(scn: &Scenario, seed: u64) -> Result<TrialResult, SimError> {
    run_trial_observed(scn, seed, |_| {})
}

fn draw_path(
    scn: &Scenario,
    rng: &mut ChaCha8Rng,
    target: usize,
) -> Result<(usize, EdgeId, Vec<EdgeId>), SimError> {
    let spec = &scn.targets[target];
    let class = &scn.classes[spec.class];
    let g = &scn.refined.original;
    let entry = match spec.entry {
        Some(e) => e,
        None => g.entries()[rng.gen_range(0..g.entries().len())],
    };
    let strategy = &class.strategies[rng.gen_range(0..class.strategies.len())];
    let mut last = None;
    for _ in 0..PATH_ATTEMPTS {
        match strategy.generate(g, entry, None, rng.gen()) {
            Ok(path) => return Ok((spec.class, entry, scn.refined.expand_path(&path))),
            Err(e @ StrategyError::Wandering { .. }) => last = Some(e),
            Err(source) => return Err(SimError::Strategy { target, source }),
        }
    }
    Err(SimError::Strategy {
        target,
        source: last.expect("at least one attempt"),
    })
}

/// Moves `t` by `dist` meters; true if it entered a goal edge.
fn advance(scn: &Scenario, t: &mut TargetState, dist: f64) -> bool {
    let g = &scn.refined.graph;
    t.traveled += dist;
    let mut left = dist;
    loop {
        let len = g.edge(t.edge()).length;
        if t.offset + left < len - MOVE_TOL || t.index + 1 == t.path.len() {
            t.offset = (t.offset + left).min(len);
            return false;
        }
        left -= len - t.offset;
        t.index += 1;
        t.offset = 0.0;
        if g.is_goal(t.edge()) {
            return true;
        }
    }
}

fn fly(u: &mut UavState, to: (f64, f64), step: f64) {
    let (dx, dy) = (to.0 - u.position.0, to.1 - u.position.1);
    let d = dx.hypot(dy);
    if d <= step {
        u.position = to;
    } else {
        u.position.0 += dx / d * step;
        u.position.1 += dy / d * step;
    }
}

/// [`run_trial`], calling `observe` after every completed tick (and once
/// for the initial state at tick 0).
pub fn run_trial_observed(
    scn: &Scenario,
    seed: u64,
    mut observe: impl FnMut(&TickView),
) -> Result<TrialResult, SimError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dt = scn.config.tick;
    let g = &scn.refined.graph;
    let overlay = &scn.overlay;
    let grid = &overlay.spec;

    let mut targets = Vec::with_capacity(scn.targets.len());
    let mut models = Vec::with_capacity(scn.targets.len());
    let mut beliefs: Vec<Option<Belief>> = Vec::with_capacity(scn.targets.len());
    for id in 0..scn.targets.len() {
        let (class, _, path) = draw_path(scn, &mut rng, id)?;
        let velocity_kmh = scn.classes[class].velocity.sample(&mut rng);
        let belief = Belief::init(g, id, path[0])
            .map_err(|source| SimError::Belief { target: id, source })?;
        models.push(&scn.classes[class].model);
        beliefs.push(Some(belief));
        targets.push(TargetState {
            id,
            path,
            index: 0,
            offset: 0.0,
            velocity_kmh,
            status: TargetStatus::Active,
            traveled: 0.0,
        });
    }
    let mut uavs: Vec<UavState> = scn
        .uavs
        .iter()
        .enumerate()
        .map(|(id, u)| UavState {
            id,
            position: u.depot,
            velocity_kmh: u.velocity_kmh,
            radius: u.radius,
            detect_prob: u.detect_prob,
            assigned: None,
        })
        .collect();
    let plan_p = scn.planning_detect_prob();

    let plan = |beliefs: &[Option<Belief>], uavs: &mut [UavState]| -> Result<(), SimError> {
        if uavs.is_empty() {
            return Ok(());
        }
        let cells: Vec<CellBelief> = beliefs
            .iter()
            .flatten()
            .map(|b| b.cell_marginal(overlay))
            .collect();
        if cells.is_empty() {
            return Ok(());
        }
        let chosen = scn.config.policy.select(&cells, uavs.len(), plan_p)?;
        let positions: Vec<(f64, f64)> = uavs.iter().map(|u| u.position).collect();
        let assignment = match_uavs_to_cells(&positions, &chosen, grid, Some(scn.config.policy.policy));
        for (i, u) in uavs.iter_mut().enumerate() {
            u.assigned = assignment.cells.get(&i).copied();
        }
        Ok(())
    };

    let mut detections = vec![None; targets.len()];
    let mut started = scn.delay_m <= 0.0;
    if started {
        plan(&beliefs, &mut uavs)?;
    }
    observe(&TickView {
        tick: 0,
        uavs: &uavs,
        targets: &targets,
        beliefs: &beliefs,
    });

    for tick in 1..=scn.config.max_ticks {
        // (1) targets move
        for t in targets.iter_mut().filter(|t| t.status == TargetStatus::Active) {
            let step = t.velocity_kmh * KMH_TO_MS * dt;
            if advance(scn, t, step) {
                t.status = TargetStatus::ReachedGoal;
                return Ok(TrialResult {
                    outcome: Outcome::Lose,
                    detections,
                    losing_target: Some(t.id),
                    ticks: tick,
                    seed,
                    timeout: false,
                });
            }
        }

        // (2) UAVs move once every target has its head start
        let was_started = started;
        started = started
            || targets
                .iter()
                .filter(|t| t.status == TargetStatus::Active)
                .all(|t| t.traveled >= scn.delay_m);
        if was_started {
            for u in &mut uavs {
                if let Some(c) = u.assigned {
                    fly(u, grid.center(c), u.velocity_kmh * KMH_TO_MS * dt);
                }
            }
        }

        // (3) one detection attempt per UAV and in-range active target
        for u in &uavs {
            for t in targets.iter_mut().filter(|t| t.status == TargetStatus::Active) {
                let (x, y) = g.point_on(t.edge(), t.offset);
                let in_range = (x - u.position.0).hypot(y - u.position.1) <= u.radius;
                if in_range && rng.gen::<f64>() < u.detect_prob {
                    t.status = TargetStatus::Detected;
                    detections[t.id] = Some(tick);
                }
            }
        }
        if targets.iter().all(|t| t.status == TargetStatus::Detected) {
            beliefs.iter_mut().for_each(|b| *b = None);
            observe(&TickView {
                tick,
                uavs: &uavs,
                targets: &targets,
                beliefs: &beliefs,
            });
            return Ok(TrialResult {
                outcome: Outcome::Win,
                detections,
                losing_target: None,
                ticks: tick,
                seed,
                timeout: false,
            });
        }

        // (4) beliefs: predict, then condition on the cells searched in vain
        let searched: Vec<(CellId, f64)> = uavs
            .iter()
            .flat_map(|u| {
                grid.cells_covered_by_disk(u.position.0, u.position.1, u.radius)
                    .into_iter()
                    .map(move |c| (c, u.detect_prob))
            })
            .collect();
        for (j, slot) in beliefs.iter_mut().enumerate() {
            if targets[j].status != TargetStatus::Active {
                *slot = None;
                continue;
            }
            let Some(b) = slot.as_ref() else { continue };
            let next = b
                .propagate(models[j])
                .map_err(|source| SimError::Belief { target: j, source })?;
            *slot = Some(match next.negative_update_weighted(&searched, overlay) {
                Ok(updated) => updated,
                // the belief rules out the true position; keep the prediction
                Err(BeliefError::CertainDetection) => next,
                Err(source) => return Err(SimError::Belief { target: j, source }),
            });
        }

        // (5) replan
        if started {
            plan(&beliefs, &mut uavs)?;
        }
        observe(&TickView {
            tick,
            uavs: &uavs,
            targets: &targets,
            beliefs: &beliefs,
        });
    }

    Ok(TrialResult {
        outcome: Outcome::Lose,
        detections,
        losing_target: None,
        ticks: scn.config.max_ticks,
        seed,
        timeout: true,
    })
}
