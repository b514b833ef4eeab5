//! Temporal entropy and entropy gain of searching a set of cells.

use crate::belief::{entropy_bits, CellBelief, ETA_EPS};
use crate::grid::CellId;

use super::PlanError;

pub(crate) fn check_p(p: f64) -> Result<(), PlanError> {
    if p > 0.0 && p <= 1.0 {
        Ok(())
    } else {
        Err(PlanError::DetectProb(p))
    }
}

/// Validated, sorted, de-duplicated cell indices.
fn distinct(cb: &CellBelief, cells: &[CellId]) -> Result<Vec<usize>, PlanError> {
    let mut idx = Vec::with_capacity(cells.len());
    for &c in cells {
        if c.0 >= cb.n_cells() {
            return Err(PlanError::UnknownCell(c));
        }
        idx.push(c.0);
    }
    idx.sort_unstable();
    idx.dedup();
    Ok(idx)
}

/// The belief conditioned on an unsuccessful search of `cells`
/// (`P_temp`): searched cells scaled by `(1 − p)/η`, others by `1/η`,
/// with `η = 1 − p·Σ_{cells} P(c)`.
pub fn conditioned(cb: &CellBelief, cells: &[CellId], p: f64) -> Result<Vec<f64>, PlanError> {
    check_p(p)?;
    let idx = distinct(cb, cells)?;
    let searched: f64 = idx.iter().map(|&i| cb.mass[i]).sum();
    let eta = 1.0 - searched * p;
    if eta <= ETA_EPS {
        return Err(PlanError::CertainDetection);
    }
    let mut out: Vec<f64> = cb.mass.iter().map(|m| m / eta).collect();
    for i in idx {
        out[i] = cb.mass[i] * (1.0 - p) / eta;
    }
    Ok(out)
}

/// Entropy (bits) of the belief after the UAVs searched `cells` and did not
/// detect the target. The input belief is not modified.
pub fn temporal_entropy(cb: &CellBelief, cells: &[CellId], p: f64) -> Result<f64, PlanError> {
    conditioned(cb, cells, p).map(|q| entropy_bits(&q))
}

/// `G = E − Π_{c ∈ cells}(1 − p·P(c)) · Ē(cells)`.
///
/// When the search cannot fail (η = 0) the remaining entropy is zero and the
/// gain is the whole current entropy.
pub fn entropy_gain(cb: &CellBelief, cells: &[CellId], p: f64) -> Result<f64, PlanError> {
    check_p(p)?;
    let idx = distinct(cb, cells)?;
    let e = cb.entropy();
    let miss: f64 = idx.iter().map(|&i| 1.0 - p * cb.mass[i]).product();
    match temporal_entropy(cb, cells, p) {
        Ok(te) => Ok(e - miss * te),
        Err(PlanError::CertainDetection) => Ok(e),
        Err(other) => Err(other),
    }
}

/// Team objective: `Σ_j G^j(cells)`.
pub fn team_gain(beliefs: &[CellBelief], cells: &[CellId], p: f64) -> Result<f64, PlanError> {
    beliefs.iter().map(|cb| entropy_gain(cb, cells, p)).sum()
}

/// Incremental evaluation of [`entropy_gain`] for one target while a cell
/// set grows one cell at a time. Uses
/// `Ē = −(Σ q·log₂ q)/η + log₂ η` where `q` is the unnormalized
/// conditioned mass, so adding a cell costs O(1).
#[derive(Clone, Debug)]
pub(crate) struct GainTracker<'a> {
    mass: &'a [f64],
    p: f64,
    entropy: f64,
    /// Σ P·log₂ P over all cells.
    base: f64,
    /// Per cell: q·log₂ q − P·log₂ P for q = (1 − p)·P.
    delta: Vec<f64>,
    searched: f64,
    miss: f64,
    corr: f64,
}

fn xlogx(x: f64) -> f64 {
    if x > 0.0 {
        x * x.log2()
    } else {
        0.0
    }
}

impl<'a> GainTracker<'a> {
    pub fn new(cb: &'a CellBelief, p: f64) -> Self {
        let base: f64 = cb.mass.iter().map(|&m| xlogx(m)).sum();
        let delta = cb
            .mass
            .iter()
            .map(|&m| xlogx((1.0 - p) * m) - xlogx(m))
            .collect();
        Self {
            mass: &cb.mass,
            p,
            entropy: -base,
            base,
            delta,
            searched: 0.0,
            miss: 1.0,
            corr: 0.0,
        }
    }

    fn eval(&self, searched: f64, miss: f64, corr: f64) -> f64 {
        let eta = 1.0 - self.p * searched;
        if eta <= ETA_EPS {
            return self.entropy;
        }
        let te = -(self.base + corr) / eta + eta.log2();
        self.entropy - miss * te
    }

    pub fn gain(&self) -> f64 {
        self.eval(self.searched, self.miss, self.corr)
    }

    pub fn gain_with(&self, c: usize) -> f64 {
        let m = self.mass[c];
        self.eval(
            self.searched + m,
            self.miss * (1.0 - self.p * m),
            self.corr + self.delta[c],
        )
    }

    pub fn add(&mut self, c: usize) {
        let m = self.mass[c];
        self.searched += m;
        self.miss *= 1.0 - self.p * m;
        self.corr += self.delta[c];
    }
}
