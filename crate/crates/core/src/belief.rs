//! Per-target location belief over refined edges: initialization, Markov
//! propagation, cell marginals and the negative-observation update.

use thiserror::Error;

use crate::graph::{EdgeId, RoadGraph};
use crate::grid::{CellId, GridOverlay};
use crate::movement::TransitionModel;

/// Allowed drift of total mass from one.
pub const MASS_TOL: f64 = 1e-9;

/// Entries below this are pruned after every update.
pub const PRUNE: f64 = 1e-15;

/// η at or below this means the searched cells held all the mass and the
/// search could not have failed.
pub const ETA_EPS: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BeliefError {
    #[error("edge {0} is not an entry edge")]
    NotEntry(EdgeId),
    #[error("movement model has no row for edge {0}")]
    MissingSource(EdgeId),
    #[error("detection probability {0} outside (0, 1]")]
    DetectProb(f64),
    #[error("target certainly detected: searched cells hold all of the belief")]
    CertainDetection,
}

/// `P^j(·, t)` as a sparse vector sorted by edge id.
#[derive(Clone, Debug, PartialEq)]
pub struct Belief {
    pub target: usize,
    pub t: u64,
    mass: Vec<(EdgeId, f64)>,
}

impl Belief {
    /// Point mass on `entry`.
    pub fn init(g: &RoadGraph, target: usize, entry: EdgeId) -> Result<Self, BeliefError> {
        if !g.contains(entry) || !g.is_entry(entry) {
            return Err(BeliefError::NotEntry(entry));
        }
        Ok(Self {
            target,
            t: 0,
            mass: vec![(entry, 1.0)],
        })
    }

    /// Builds a belief from arbitrary non-negative weights, normalizing them.
    pub fn from_weights(target: usize, t: u64, weights: impl IntoIterator<Item = (EdgeId, f64)>) -> Self {
        let mut mass: Vec<(EdgeId, f64)> = weights.into_iter().filter(|w| w.1 > 0.0).collect();
        mass.sort_by_key(|w| w.0);
        let mut b = Self { target, t, mass };
        b.normalize();
        b
    }

    pub fn mass(&self) -> &[(EdgeId, f64)] {
        &self.mass
    }

    pub fn total(&self) -> f64 {
        self.mass.iter().map(|m| m.1).sum()
    }

    pub fn get(&self, e: EdgeId) -> f64 {
        self.mass
            .binary_search_by_key(&e, |m| m.0)
            .map(|i| self.mass[i].1)
            .unwrap_or(0.0)
    }

    fn normalize(&mut self) {
        self.mass.retain(|m| m.1 >= PRUNE);
        let total = self.total();
        if total > 0.0 {
            for m in &mut self.mass {
                m.1 /= total;
            }
        }
    }

    /// One step of the Markov push-forward:
    /// `out(d) = Σ_s b(s) · Pr(s → d)`.
    pub fn propagate(&self, m: &TransitionModel) -> Result<Self, BeliefError> {
        let mut dense: Vec<f64> = Vec::new();
        for &(s, w) in &self.mass {
            let row = m.row(s);
            if row.is_empty() {
                return Err(BeliefError::MissingSource(s));
            }
            for &(d, p) in row {
                if d.0 >= dense.len() {
                    dense.resize(d.0 + 1, 0.0);
                }
                dense[d.0] += w * p;
            }
        }
        let mut out = Self {
            target: self.target,
            t: self.t + 1,
            mass: dense
                .into_iter()
                .enumerate()
                .filter(|(_, w)| *w > 0.0)
                .map(|(i, w)| (EdgeId(i), w))
                .collect(),
        };
        out.normalize();
        Ok(out)
    }

    /// `P^j(c, t) = Σ_{e ∈ c} P^j(e, t)` for every cell of the overlay.
    pub fn cell_marginal(&self, o: &GridOverlay) -> CellBelief {
        let mut mass = vec![0.0; o.n_cells()];
        for &(e, w) in &self.mass {
            mass[o.cell_of(e).0] += w;
        }
        CellBelief { t: self.t, mass }
    }

    /// Conditions on an unsuccessful search of `cells` with detection
    /// probability `p`.
    pub fn negative_update(
        &self,
        cells: &[CellId],
        p: f64,
        o: &GridOverlay,
    ) -> Result<Self, BeliefError> {
        let searched: Vec<(CellId, f64)> = cells.iter().map(|&c| (c, p)).collect();
        self.negative_update_weighted(&searched, o)
    }

    /// Negative update where each searched cell carries its own detection
    /// probability. A cell listed twice is treated as two independent looks.
    pub fn negative_update_weighted(
        &self,
        searched: &[(CellId, f64)],
        o: &GridOverlay,
    ) -> Result<Self, BeliefError> {
        if searched.is_empty() {
            return Ok(self.clone());
        }
        let mut miss = vec![1.0; o.n_cells()];
        for &(c, p) in searched {
            if !(p > 0.0 && p <= 1.0) {
                return Err(BeliefError::DetectProb(p));
            }
            miss[c.0] *= 1.0 - p;
        }
        let mut mass = self.mass.clone();
        let mut eta = 0.0;
        for m in &mut mass {
            m.1 *= miss[o.cell_of(m.0).0];
            eta += m.1;
        }
        if eta <= ETA_EPS {
            return Err(BeliefError::CertainDetection);
        }
        for m in &mut mass {
            m.1 /= eta;
        }
        let mut out = Self {
            target: self.target,
            t: self.t,
            mass,
        };
        out.normalize();
        Ok(out)
    }
}

/// `P^j(·, t)` aggregated per cell; dense over all cells of the overlay.
#[derive(Clone, Debug, PartialEq)]
pub struct CellBelief {
    pub t: u64,
    pub mass: Vec<f64>,
}

impl CellBelief {
    pub fn new(mass: Vec<f64>) -> Self {
        Self { t: 0, mass }
    }

    pub fn n_cells(&self) -> usize {
        self.mass.len()
    }

    pub fn get(&self, c: CellId) -> f64 {
        self.mass[c.0]
    }

    pub fn total(&self) -> f64 {
        self.mass.iter().sum()
    }

    /// Highest-probability cell, lowest id on ties.
    pub fn argmax(&self) -> CellId {
        let mut best = 0;
        for (i, &m) in self.mass.iter().enumerate() {
            if m > self.mass[best] {
                best = i;
            }
        }
        CellId(best)
    }

    /// Shannon entropy in bits.
    pub fn entropy(&self) -> f64 {
        entropy_bits(&self.mass)
    }
}

/// `−Σ p·log₂ p` with `0·log 0 = 0`.
pub fn entropy_bits(p: &[f64]) -> f64 {
    -p.iter()
        .filter(|&&x| x > 0.0)
        .map(|&x| x * x.log2())
        .sum::<f64>()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::load_graph;
    use crate::grid::{overlay_grid, refine, GridSpec};
    use approx::assert_abs_diff_eq;

    /// Two edges, each in its own cell: e0 in cell 0, e1 in cell 1.
    fn two_cells() -> (RoadGraph, GridOverlay) {
        let g = load_graph(
            "#vertices\n0 1 1\n1 9 1\n2 11 1\n3 19 1\n#edges\n0 0 1\n1 2 3\n#entries\n0\n1\n",
        )
        .unwrap();
        let spec = GridSpec {
            cell_side: 10.0,
            origin: (0.0, 0.0),
            n_rows: 1,
            n_cols: 2,
        };
        let (rg, o) = refine(&g, &spec).unwrap();
        (rg.graph, o)
    }

    #[test]
    fn init_is_a_point_mass() {
        let (g, o) = two_cells();
        let b = Belief::init(&g, 0, EdgeId(0)).unwrap();
        assert_eq!(b.mass(), &[(EdgeId(0), 1.0)]);
        assert_eq!(b.cell_marginal(&o).entropy(), 0.0);
        let g2 = load_graph("#vertices\n0 0 0\n1 1 0\n#edges\n0 0 1\n").unwrap();
        assert_eq!(
            Belief::init(&g2, 0, EdgeId(0)),
            Err(BeliefError::NotEntry(EdgeId(0)))
        );
    }

    #[test]
    fn propagate_cases() {
        let m = TransitionModel::new("t", 1.0, vec![vec![(EdgeId(1), 1.0)], vec![(EdgeId(1), 1.0)]]);
        let b = Belief::from_weights(0, 0, [(EdgeId(0), 1.0)]);
        let next = b.propagate(&m).unwrap();
        assert_eq!(next.mass(), &[(EdgeId(1), 1.0)]);
        assert_eq!(next.t, 1);

        let m = TransitionModel::new(
            "t",
            1.0,
            vec![vec![(EdgeId(0), 0.5), (EdgeId(1), 0.5)], vec![(EdgeId(1), 1.0)]],
        );
        assert_eq!(
            b.propagate(&m).unwrap().mass(),
            &[(EdgeId(0), 0.5), (EdgeId(1), 0.5)]
        );

        let empty = TransitionModel::new("t", 1.0, vec![]);
        assert_eq!(b.propagate(&empty), Err(BeliefError::MissingSource(EdgeId(0))));
    }

    #[test]
    fn cell_marginal_sums_edges() {
        let g = load_graph("#vertices\n0 1 1\n1 4 1\n2 6 1\n#edges\n0 0 1\n1 1 2\n").unwrap();
        let (_, o) = overlay_grid(&g, 100.0).unwrap();
        let b = Belief::from_weights(0, 0, [(EdgeId(0), 0.3), (EdgeId(1), 0.2)]);
        let cb = b.cell_marginal(&o);
        assert_eq!(o.cell_of(EdgeId(0)), o.cell_of(EdgeId(1)));
        assert_abs_diff_eq!(cb.get(o.cell_of(EdgeId(0))), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn negative_update_cases() {
        let (_, o) = two_cells();
        let b = Belief::from_weights(0, 3, [(EdgeId(0), 0.5), (EdgeId(1), 0.5)]);
        let after = b.negative_update(&[CellId(0)], 1.0, &o).unwrap();
        assert_eq!(after.mass(), &[(EdgeId(1), 1.0)]);
        assert_eq!(after.t, 3);

        let b = Belief::from_weights(0, 0, [(EdgeId(0), 0.9), (EdgeId(1), 0.1)]);
        let after = b.negative_update(&[CellId(0)], 0.9, &o).unwrap();
        // η = 1 − 0.9·0.9 = 0.19
        assert_abs_diff_eq!(after.get(EdgeId(0)), 0.09 / 0.19, epsilon = 1e-12);
        assert_abs_diff_eq!(after.get(EdgeId(1)), 0.1 / 0.19, epsilon = 1e-12);
        assert_abs_diff_eq!(after.get(EdgeId(0)), 0.4737, epsilon = 5e-5);
        assert_abs_diff_eq!(after.get(EdgeId(1)), 0.5263, epsilon = 5e-5);

        assert_eq!(b.negative_update(&[], 0.9, &o).unwrap(), b);

        let point = Belief::from_weights(0, 0, [(EdgeId(0), 1.0)]);
        assert_eq!(
            point.negative_update(&[CellId(0)], 1.0, &o),
            Err(BeliefError::CertainDetection)
        );
        // searching an empty cell changes nothing
        assert_eq!(point.negative_update(&[CellId(1)], 0.7, &o).unwrap(), point);
        assert!(point.negative_update(&[CellId(1)], 0.0, &o).is_err());
    }

    #[test]
    fn entropy_values() {
        assert_eq!(CellBelief::new(vec![0.0, 1.0, 0.0]).entropy(), 0.0);
        assert_abs_diff_eq!(CellBelief::new(vec![0.9, 0.1]).entropy(), 0.469, epsilon = 5e-4);
        assert_abs_diff_eq!(CellBelief::new(vec![0.25; 4]).entropy(), 2.0, epsilon = 1e-12);
    }
}
