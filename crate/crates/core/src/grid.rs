//! Square cell grid laid over the road graph, and the edge-splitting pass
//! that pairs every refined edge with exactly one cell.

use std::fmt;

use crate::graph::{EdgeId, GraphError, RoadGraph, Vertex, VertexId};

/// Pieces shorter than this (meters) are merged into a neighbor.
pub const MIN_PIECE: f64 = 1e-3;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct CellId(pub usize);

impl fmt::Display for CellId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Grid geometry without the edge index.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GridSpec {
    pub cell_side: f64,
    pub origin: (f64, f64),
    pub n_rows: usize,
    pub n_cols: usize,
}

impl GridSpec {
    /// Grid with side `√2·r` covering the bounding box of `g` plus one cell
    /// of margin on every side.
    pub fn covering(g: &RoadGraph, r: f64) -> Self {
        let side = std::f64::consts::SQRT_2 * r;
        let (x0, y0, x1, y1) = g.bounding_box();
        let origin = (x0 - side, y0 - side);
        let n_cols = (((x1 - x0) + 2.0 * side) / side).ceil().max(1.0) as usize;
        let n_rows = (((y1 - y0) + 2.0 * side) / side).ceil().max(1.0) as usize;
        Self {
            cell_side: side,
            origin,
            n_rows,
            n_cols,
        }
    }

    pub fn n_cells(&self) -> usize {
        self.n_rows * self.n_cols
    }

    /// Cell containing the point, or `None` outside the grid.
    pub fn cell_at(&self, x: f64, y: f64) -> Option<CellId> {
        let c = ((x - self.origin.0) / self.cell_side).floor();
        let r = ((y - self.origin.1) / self.cell_side).floor();
        if c < 0.0 || r < 0.0 || c >= self.n_cols as f64 || r >= self.n_rows as f64 {
            return None;
        }
        Some(CellId(r as usize * self.n_cols + c as usize))
    }

    pub fn row_col(&self, c: CellId) -> (usize, usize) {
        (c.0 / self.n_cols, c.0 % self.n_cols)
    }

    pub fn center(&self, c: CellId) -> (f64, f64) {
        let (r, col) = self.row_col(c);
        (
            self.origin.0 + (col as f64 + 0.5) * self.cell_side,
            self.origin.1 + (r as f64 + 0.5) * self.cell_side,
        )
    }

    /// `(min_x, min_y, max_x, max_y)` of the cell square.
    pub fn bounds(&self, c: CellId) -> (f64, f64, f64, f64) {
        let (r, col) = self.row_col(c);
        let x = self.origin.0 + col as f64 * self.cell_side;
        let y = self.origin.1 + r as f64 * self.cell_side;
        (x, y, x + self.cell_side, y + self.cell_side)
    }

    /// Cells whose whole square lies within `radius` of `(x, y)`.
    pub fn cells_covered_by_disk(&self, x: f64, y: f64, radius: f64) -> Vec<CellId> {
        let tol = 1e-9 * radius.max(1.0);
        let s = self.cell_side;
        let c0 = (((x - radius - self.origin.0) / s).floor().max(0.0)) as usize;
        let r0 = (((y - radius - self.origin.1) / s).floor().max(0.0)) as usize;
        let c1 = ((x + radius - self.origin.0) / s).floor();
        let r1 = ((y + radius - self.origin.1) / s).floor();
        if c1 < 0.0 || r1 < 0.0 {
            return Vec::new();
        }
        let c1 = (c1 as usize).min(self.n_cols.saturating_sub(1));
        let r1 = (r1 as usize).min(self.n_rows.saturating_sub(1));
        let mut out = Vec::new();
        for row in r0..=r1 {
            for col in c0..=c1 {
                let id = CellId(row * self.n_cols + col);
                let (bx0, by0, bx1, by1) = self.bounds(id);
                let far_x = (x - bx0).abs().max((x - bx1).abs());
                let far_y = (y - by0).abs().max((y - by1).abs());
                if far_x.hypot(far_y) <= radius + tol {
                    out.push(id);
                }
            }
        }
        out
    }
}

/// The cell grid `C` paired to a refined graph.
#[derive(Clone, Debug)]
pub struct GridOverlay {
    pub spec: GridSpec,
    cell_edges: Vec<Vec<EdgeId>>,
    edge_cell: Vec<CellId>,
}

impl GridOverlay {
    pub fn cell_side(&self) -> f64 {
        self.spec.cell_side
    }

    pub fn n_cells(&self) -> usize {
        self.spec.n_cells()
    }

    pub fn edges_in(&self, c: CellId) -> &[EdgeId] {
        &self.cell_edges[c.0]
    }

    pub fn cell_of(&self, e: EdgeId) -> CellId {
        self.edge_cell[e.0]
    }

    pub fn n_edges(&self) -> usize {
        self.edge_cell.len()
    }

    pub fn center(&self, c: CellId) -> (f64, f64) {
        self.spec.center(c)
    }
}

/// The edge-split graph together with the mapping back to the original.
#[derive(Clone, Debug)]
pub struct RefinedGraph {
    pub graph: RoadGraph,
    pub original: RoadGraph,
    parent: Vec<EdgeId>,
    interval: Vec<(f64, f64)>,
    pieces: Vec<Vec<EdgeId>>,
}

impl RefinedGraph {
    pub fn parent(&self, e: EdgeId) -> EdgeId {
        self.parent[e.0]
    }

    /// Offset interval `[start, end)` in meters along the parent edge.
    pub fn interval(&self, e: EdgeId) -> (f64, f64) {
        self.interval[e.0]
    }

    /// Refined pieces of an original edge, in travel order.
    pub fn pieces(&self, original: EdgeId) -> &[EdgeId] {
        &self.pieces[original.0]
    }

    /// Expands a path over original edges into refined edges.
    pub fn expand_path(&self, path: &[EdgeId]) -> Vec<EdgeId> {
        path.iter()
            .flat_map(|e| self.pieces[e.0].iter().copied())
            .collect()
    }
}

/// Split parameters in (0, 1) where the segment crosses grid lines.
fn crossings(a: (f64, f64), b: (f64, f64), spec: &GridSpec) -> Vec<f64> {
    let mut ts = Vec::new();
    let mut axis = |p0: f64, p1: f64, o: f64| {
        let d = p1 - p0;
        if d == 0.0 {
            return;
        }
        let (lo, hi) = (p0.min(p1), p0.max(p1));
        let k0 = ((lo - o) / spec.cell_side).ceil() as i64;
        let k1 = ((hi - o) / spec.cell_side).floor() as i64;
        for k in k0..=k1 {
            let t = (o + k as f64 * spec.cell_side - p0) / d;
            if t > 0.0 && t < 1.0 {
                ts.push(t);
            }
        }
    };
    axis(a.0, b.0, spec.origin.0);
    axis(a.1, b.1, spec.origin.1);
    ts.sort_by(f64::total_cmp);
    ts
}

/// Breakpoints `0 = t_0 < ... < t_n = 1` with every piece at least
/// [`MIN_PIECE`] long (unless the whole edge is shorter).
fn breakpoints(a: (f64, f64), b: (f64, f64), length: f64, spec: &GridSpec) -> Vec<f64> {
    let mut ts = vec![0.0];
    ts.extend(crossings(a, b, spec));
    ts.push(1.0);
    loop {
        let short = ts
            .windows(2)
            .position(|w| (w[1] - w[0]) * length < MIN_PIECE);
        match short {
            Some(_) if ts.len() == 2 => break,
            // merge into the previous piece when this is the last one,
            // otherwise into the next
            Some(i) if i + 2 == ts.len() => {
                ts.remove(i);
            }
            Some(i) => {
                ts.remove(i + 1);
            }
            None => break,
        }
    }
    ts
}

/// Refines `g` against an explicit grid.
pub fn refine(g: &RoadGraph, spec: &GridSpec) -> Result<(RefinedGraph, GridOverlay), GraphError> {
    if g.n_edges() == 0 {
        return Err(GraphError::Empty);
    }
    let mut vertices: Vec<Vertex> = g
        .vertices()
        .iter()
        .enumerate()
        .map(|(i, v)| Vertex {
            label: i as u64,
            x: v.x,
            y: v.y,
        })
        .collect();
    let mut edges = Vec::new();
    let mut parent = Vec::new();
    let mut interval = Vec::new();
    let mut pieces = Vec::with_capacity(g.n_edges());
    let mut edge_cell = Vec::new();

    for (i, e) in g.edges().iter().enumerate() {
        let (va, vb) = (g.vertex(e.tail), g.vertex(e.head));
        let (a, b) = ((va.x, va.y), (vb.x, vb.y));
        let ts = breakpoints(a, b, e.length, spec);
        let mut own = Vec::with_capacity(ts.len() - 1);
        let mut prev = e.tail;
        for (k, w) in ts.windows(2).enumerate() {
            let next = if k + 2 == ts.len() {
                e.head
            } else {
                let t = w[1];
                vertices.push(Vertex {
                    label: vertices.len() as u64,
                    x: a.0 + t * (b.0 - a.0),
                    y: a.1 + t * (b.1 - a.1),
                });
                VertexId(vertices.len() - 1)
            };
            let mid = 0.5 * (w[0] + w[1]);
            let cell = spec
                .cell_at(a.0 + mid * (b.0 - a.0), a.1 + mid * (b.1 - a.1))
                .expect("grid covers the graph bounding box");
            let id = EdgeId(edges.len());
            edges.push((id.0 as u64, prev, next));
            parent.push(EdgeId(i));
            interval.push((w[0] * e.length, w[1] * e.length));
            edge_cell.push(cell);
            own.push(id);
            prev = next;
        }
        pieces.push(own);
    }

    let lift = |set: &[EdgeId]| -> Vec<EdgeId> {
        set.iter()
            .flat_map(|e| pieces[e.0].iter().copied())
            .collect()
    };
    let goals = g.goals().iter().map(|s| lift(s)).collect();
    let entries = lift(g.entries());
    let graph = RoadGraph::from_parts(vertices, edges, goals, entries)?;

    let mut cell_edges = vec![Vec::new(); spec.n_cells()];
    for (i, c) in edge_cell.iter().enumerate() {
        cell_edges[c.0].push(EdgeId(i));
    }
    Ok((
        RefinedGraph {
            graph,
            original: g.clone(),
            parent,
            interval,
            pieces,
        },
        GridOverlay {
            spec: *spec,
            cell_edges,
            edge_cell,
        },
    ))
}

/// Lays a `√2·r` grid over `g` and splits every edge at cell boundaries.
pub fn overlay_grid(g: &RoadGraph, r: f64) -> Result<(RefinedGraph, GridOverlay), GraphError> {
    if g.n_edges() == 0 {
        return Err(GraphError::Empty);
    }
    if !(r > 0.0 && r.is_finite()) {
        return Err(GraphError::Parse {
            line: 0,
            msg: format!("detection radius must be positive, got {r}"),
        });
    }
    refine(g, &GridSpec::covering(g, r))
}
