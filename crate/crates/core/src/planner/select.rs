//! Greedy maximization of the team entropy gain, and the exhaustive oracle.

use crate::belief::CellBelief;
use crate::grid::CellId;

use super::gain::{check_p, team_gain, GainTracker};
use super::PlanError;

/// Largest instance [`brute_force_select`] accepts.
pub const BRUTE_MAX_CELLS: usize = 15;
pub const BRUTE_MAX_K: usize = 4;

fn n_cells(beliefs: &[CellBelief]) -> usize {
    beliefs.first().map_or(0, CellBelief::n_cells)
}

/// Picks `k` cells one at a time, each maximizing the marginal increase of
/// `Σ_j G^j(excluded ∪ chosen ∪ {c})`. Cells in `excluded` are never
/// returned but take part in every gain evaluation. Ties go to the lowest
/// cell id. Returns fewer than `k` cells only if the grid runs out.
pub fn greedy_select(
    beliefs: &[CellBelief],
    k: usize,
    p: f64,
    excluded: &[CellId],
) -> Result<Vec<CellId>, PlanError> {
    check_p(p)?;
    let n = n_cells(beliefs);
    let mut taken = vec![false; n];
    let mut trackers: Vec<GainTracker> = beliefs.iter().map(|cb| GainTracker::new(cb, p)).collect();
    for &c in excluded {
        if c.0 >= n {
            return Err(PlanError::UnknownCell(c));
        }
        if !taken[c.0] {
            taken[c.0] = true;
            trackers.iter_mut().for_each(|t| t.add(c.0));
        }
    }
    // cells nobody can be in add exactly zero gain
    let live: Vec<bool> = (0..n)
        .map(|c| beliefs.iter().any(|cb| cb.mass[c] > 0.0))
        .collect();

    let mut chosen = Vec::with_capacity(k);
    for _ in 0..k {
        let current: Vec<f64> = trackers.iter().map(GainTracker::gain).collect();
        let mut best: Option<(usize, f64)> = None;
        for c in (0..n).filter(|&c| !taken[c]) {
            let marginal = if live[c] {
                trackers
                    .iter()
                    .zip(&current)
                    .map(|(t, g)| t.gain_with(c) - g)
                    .sum()
            } else {
                0.0
            };
            if best.is_none_or(|(_, b)| marginal > b) {
                best = Some((c, marginal));
            }
        }
        let Some((c, _)) = best else { break };
        taken[c] = true;
        trackers.iter_mut().for_each(|t| t.add(c));
        chosen.push(CellId(c));
    }
    Ok(chosen)
}

/// Calls `f` with every k-subset of `items` in lexicographic order.
pub(crate) fn for_each_combination(items: &[usize], k: usize, mut f: impl FnMut(&[usize])) {
    if k > items.len() {
        return;
    }
    let mut idx: Vec<usize> = (0..k).collect();
    let mut buf = vec![0; k];
    loop {
        for (b, &i) in buf.iter_mut().zip(&idx) {
            *b = items[i];
        }
        f(&buf);
        let mut i = k;
        loop {
            if i == 0 {
                return;
            }
            i -= 1;
            if idx[i] != i + items.len() - k {
                break;
            }
            if i == 0 {
                return;
            }
        }
        idx[i] += 1;
        for j in i + 1..k {
            idx[j] = idx[j - 1] + 1;
        }
    }
}

/// Exhaustive maximizer of the team gain over all k-subsets of the cells.
pub fn brute_force_select(beliefs: &[CellBelief], k: usize, p: f64) -> Result<Vec<CellId>, PlanError> {
    brute_force_select_with(beliefs, k, p, &[])
}

/// As [`brute_force_select`], optimizing `base ∪ S` over k-subsets `S` of
/// the cells outside `base`; returns `S`.
pub fn brute_force_select_with(
    beliefs: &[CellBelief],
    k: usize,
    p: f64,
    base: &[CellId],
) -> Result<Vec<CellId>, PlanError> {
    check_p(p)?;
    let n = n_cells(beliefs);
    if n > BRUTE_MAX_CELLS || k > BRUTE_MAX_K {
        return Err(PlanError::TooLarge { cells: n, k });
    }
    let free: Vec<usize> = (0..n).filter(|c| !base.contains(&CellId(*c))).collect();
    let mut best: Option<(f64, Vec<CellId>)> = None;
    let mut failure = None;
    for_each_combination(&free, k.min(free.len()), |combo| {
        let mut set: Vec<CellId> = base.to_vec();
        set.extend(combo.iter().map(|&c| CellId(c)));
        match team_gain(beliefs, &set, p) {
            Ok(v) => {
                if best.as_ref().is_none_or(|(b, _)| v > *b) {
                    best = Some((v, combo.iter().map(|&c| CellId(c)).collect()));
                }
            }
            Err(e) => failure = Some(e),
        }
    });
    if let Some(e) = failure {
        return Err(e);
    }
    Ok(best.map(|b| b.1).unwrap_or_default())
}
