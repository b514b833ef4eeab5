//! Multi-UAV search for goal-oriented moving targets on a road network.
//!
//! The pipeline: a [`graph::RoadGraph`] is refined against a square grid
//! ([`grid`]), target movement models are compiled offline from strategy
//! traces ([`movement`], [`strategy`]), per-target beliefs are propagated
//! and conditioned on unsuccessful searches ([`belief`]), the [`planner`]
//! chooses which cells the UAVs search, and [`sim`] / [`batch`] run Monte
//! Carlo trials described by [`scenario`] files.

pub mod batch;
pub mod belief;
pub mod experiment;
pub mod graph;
pub mod grid;
pub mod movement;
pub mod planner;
pub mod rng;
pub mod scenario;
pub mod sim;
pub mod strategy;

/// km/h to m/s.
pub const KMH_TO_MS: f64 = 1.0 / 3.6;
