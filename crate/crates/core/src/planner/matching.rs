//! Which UAV flies to which selected cell.

use std::collections::BTreeMap;

use crate::grid::{CellId, GridSpec};

use super::policy::PolicyKind;

#[derive(Clone, Debug, PartialEq)]
pub struct Assignment {
    /// UAV index → cell; distinct cells.
    pub cells: BTreeMap<usize, CellId>,
    pub policy: Option<PolicyKind>,
}

impl Assignment {
    pub fn total_distance(&self, uavs: &[(f64, f64)], grid: &GridSpec) -> f64 {
        self.cells
            .iter()
            .map(|(&u, &c)| {
                let (cx, cy) = grid.center(c);
                (uavs[u].0 - cx).hypot(uavs[u].1 - cy)
            })
            .sum()
    }
}

/// Greedy nearest matching: repeatedly pair the globally closest
/// (UAV, cell center) among unmatched ones. Ties go to the lower UAV index,
/// then the lower cell id.
pub fn match_uavs_to_cells(
    uavs: &[(f64, f64)],
    cells: &[CellId],
    grid: &GridSpec,
    policy: Option<PolicyKind>,
) -> Assignment {
    let mut pairs: Vec<(f64, usize, CellId)> = Vec::with_capacity(uavs.len() * cells.len());
    for (u, &(x, y)) in uavs.iter().enumerate() {
        for &c in cells {
            let (cx, cy) = grid.center(c);
            pairs.push(((x - cx).hypot(y - cy), u, c));
        }
    }
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
    let mut out = BTreeMap::new();
    let mut used_cells = Vec::new();
    for (_, u, c) in pairs {
        if out.contains_key(&u) || used_cells.contains(&c) {
            continue;
        }
        out.insert(u, c);
        used_cells.push(c);
    }
    Assignment { cells: out, policy }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid() -> GridSpec {
        GridSpec {
            cell_side: 10.0,
            origin: (0.0, 0.0),
            n_rows: 3,
            n_cols: 3,
        }
    }

    #[test]
    fn single_pair() {
        let a = match_uavs_to_cells(&[(100.0, 100.0)], &[CellId(4)], &grid(), None);
        assert_eq!(a.cells, BTreeMap::from([(0, CellId(4))]));
    }

    #[test]
    fn uavs_on_centers_keep_their_cells() {
        let g = grid();
        let a = match_uavs_to_cells(&[g.center(CellId(8)), g.center(CellId(0))], &[CellId(0), CellId(8)], &g, None);
        assert_eq!(a.cells, BTreeMap::from([(0, CellId(8)), (1, CellId(0))]));
    }

    #[test]
    fn fewer_cells_than_uavs() {
        let g = grid();
        let a = match_uavs_to_cells(&[(0.0, 0.0), (30.0, 30.0)], &[CellId(8)], &g, None);
        assert_eq!(a.cells, BTreeMap::from([(1, CellId(8))]));
    }
}
