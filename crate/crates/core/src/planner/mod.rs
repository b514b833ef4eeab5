//! Entropy-gain objective and the cell-assignment policies built on it.

mod gain;
mod matching;
mod policy;
mod select;

use thiserror::Error;

use crate::grid::CellId;

pub use gain::{conditioned, entropy_gain, team_gain, temporal_entropy};
pub use matching::{match_uavs_to_cells, Assignment};
pub use policy::{
    assign_general, assign_single_entry, mean_belief, policy_adaptive, policy_entropy_only,
    policy_max_avg_prob, policy_max_prob, PolicyConfig, PolicyKind, DEFAULT_THRESHOLD,
};
pub use select::{
    brute_force_select, brute_force_select_with, greedy_select, BRUTE_MAX_CELLS, BRUTE_MAX_K,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PlanError {
    #[error("detection probability {0} outside (0, 1]")]
    DetectProb(f64),
    #[error("cell {0} is outside the grid")]
    UnknownCell(CellId),
    #[error("target certainly detected: searched cells hold all of the belief")]
    CertainDetection,
    #[error("instance too large for exhaustive search ({cells} cells, k = {k})")]
    TooLarge { cells: usize, k: usize },
}
