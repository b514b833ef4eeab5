//! Directed road graph nested in the plane, with goal sets and entry edges.
//!
//! Vertices and edges are stored densely; [`VertexId`] and [`EdgeId`] are
//! indices into the graph that owns them. The integer ids used in graph files
//! are kept as `label`s and resolved while loading.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BinaryHeap, HashMap};
use std::fmt;

use thiserror::Error;

/// Relative tolerance between a stored edge length and the Euclidean
/// distance of its endpoints.
pub const LENGTH_RTOL: f64 = 1e-6;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct VertexId(pub usize);

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct EdgeId(pub usize);

impl fmt::Display for EdgeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Vertex {
    pub label: u64,
    pub x: f64,
    pub y: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Edge {
    pub label: u64,
    pub tail: VertexId,
    pub head: VertexId,
    /// Meters.
    pub length: f64,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GraphError {
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("line {line}: unknown vertex id {id}")]
    UnknownVertex { line: usize, id: u64 },
    #[error("unknown edge id {0}")]
    UnknownEdge(u64),
    #[error("duplicate vertex id {0}")]
    DuplicateVertex(u64),
    #[error("duplicate edge id {0}")]
    DuplicateEdge(u64),
    #[error("edge {0} has zero length or identical endpoints")]
    DegenerateEdge(u64),
    #[error("vertex {0} has non-finite coordinates")]
    NonFinite(u64),
    #[error("goal {0} is empty")]
    EmptyGoal(usize),
    #[error("entry edge {0} is also a goal edge")]
    EntryIsGoal(u64),
    #[error("graph has no edges")]
    Empty,
}

/// A validated road graph.
#[derive(Clone, Debug)]
pub struct RoadGraph {
    vertices: Vec<Vertex>,
    edges: Vec<Edge>,
    goals: Vec<Vec<EdgeId>>,
    entries: Vec<EdgeId>,
    out_edges: Vec<Vec<EdgeId>>,
    in_edges: Vec<Vec<EdgeId>>,
    goal_mask: Vec<bool>,
    entry_mask: Vec<bool>,
    edge_by_label: HashMap<u64, EdgeId>,
}

impl RoadGraph {
    /// Builds a graph from vertices and `(label, tail, head)` edge triples.
    /// Lengths are the Euclidean distances between endpoints.
    pub fn from_parts(
        vertices: Vec<Vertex>,
        edges: Vec<(u64, VertexId, VertexId)>,
        goals: Vec<Vec<EdgeId>>,
        entries: Vec<EdgeId>,
    ) -> Result<Self, GraphError> {
        let mut seen = HashMap::with_capacity(vertices.len());
        for (i, v) in vertices.iter().enumerate() {
            if !v.x.is_finite() || !v.y.is_finite() {
                return Err(GraphError::NonFinite(v.label));
            }
            if seen.insert(v.label, i).is_some() {
                return Err(GraphError::DuplicateVertex(v.label));
            }
        }

        let mut built = Vec::with_capacity(edges.len());
        let mut edge_by_label = HashMap::with_capacity(edges.len());
        for (i, &(label, tail, head)) in edges.iter().enumerate() {
            if tail.0 >= vertices.len() || head.0 >= vertices.len() {
                return Err(GraphError::UnknownEdge(label));
            }
            let (a, b) = (&vertices[tail.0], &vertices[head.0]);
            let length = (b.x - a.x).hypot(b.y - a.y);
            if tail == head || length <= 0.0 {
                return Err(GraphError::DegenerateEdge(label));
            }
            if edge_by_label.insert(label, EdgeId(i)).is_some() {
                return Err(GraphError::DuplicateEdge(label));
            }
            built.push(Edge {
                label,
                tail,
                head,
                length,
            });
        }

        let n = built.len();
        let check = |e: EdgeId| {
            if e.0 < n {
                Ok(())
            } else {
                Err(GraphError::UnknownEdge(e.0 as u64))
            }
        };
        let mut goal_mask = vec![false; n];
        let mut goals_sorted = Vec::with_capacity(goals.len());
        for (gi, mut set) in goals.into_iter().enumerate() {
            if set.is_empty() {
                return Err(GraphError::EmptyGoal(gi));
            }
            set.sort_unstable();
            set.dedup();
            for &e in &set {
                check(e)?;
                goal_mask[e.0] = true;
            }
            goals_sorted.push(set);
        }
        let mut entries = entries;
        entries.sort_unstable();
        entries.dedup();
        let mut entry_mask = vec![false; n];
        for &e in &entries {
            check(e)?;
            if goal_mask[e.0] {
                return Err(GraphError::EntryIsGoal(built[e.0].label));
            }
            entry_mask[e.0] = true;
        }

        let mut out_edges = vec![Vec::new(); vertices.len()];
        let mut in_edges = vec![Vec::new(); vertices.len()];
        for (i, e) in built.iter().enumerate() {
            out_edges[e.tail.0].push(EdgeId(i));
            in_edges[e.head.0].push(EdgeId(i));
        }

        Ok(Self {
            vertices,
            edges: built,
            goals: goals_sorted,
            entries,
            out_edges,
            in_edges,
            goal_mask,
            entry_mask,
            edge_by_label,
        })
    }

    pub fn vertices(&self) -> &[Vertex] {
        &self.vertices
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn edge(&self, e: EdgeId) -> &Edge {
        &self.edges[e.0]
    }

    pub fn vertex(&self, v: VertexId) -> &Vertex {
        &self.vertices[v.0]
    }

    pub fn n_edges(&self) -> usize {
        self.edges.len()
    }

    /// Goal sets O_1..O_k, each sorted.
    pub fn goals(&self) -> &[Vec<EdgeId>] {
        &self.goals
    }

    pub fn entries(&self) -> &[EdgeId] {
        &self.entries
    }

    pub fn is_goal(&self, e: EdgeId) -> bool {
        self.goal_mask[e.0]
    }

    pub fn is_entry(&self, e: EdgeId) -> bool {
        self.entry_mask[e.0]
    }

    pub fn out_edges(&self, v: VertexId) -> &[EdgeId] {
        &self.out_edges[v.0]
    }

    pub fn in_edges(&self, v: VertexId) -> &[EdgeId] {
        &self.in_edges[v.0]
    }

    /// Resolves an edge id as written in a graph file.
    pub fn edge_by_label(&self, label: u64) -> Option<EdgeId> {
        self.edge_by_label.get(&label).copied()
    }

    pub fn contains(&self, e: EdgeId) -> bool {
        e.0 < self.edges.len()
    }

    pub fn point_on(&self, e: EdgeId, offset: f64) -> (f64, f64) {
        let edge = &self.edges[e.0];
        let (a, b) = (&self.vertices[edge.tail.0], &self.vertices[edge.head.0]);
        let t = (offset / edge.length).clamp(0.0, 1.0);
        (a.x + t * (b.x - a.x), a.y + t * (b.y - a.y))
    }

    /// `(min_x, min_y, max_x, max_y)` over all vertices.
    pub fn bounding_box(&self) -> (f64, f64, f64, f64) {
        self.vertices.iter().fold(
            (
                f64::INFINITY,
                f64::INFINITY,
                f64::NEG_INFINITY,
                f64::NEG_INFINITY,
            ),
            |(a, b, c, d), v| (a.min(v.x), b.min(v.y), c.max(v.x), d.max(v.y)),
        )
    }

    /// Every edge whose head is the tail of `e`.
    pub fn incoming_set(&self, e: EdgeId) -> Result<Vec<EdgeId>, GraphError> {
        if !self.contains(e) {
            return Err(GraphError::UnknownEdge(e.0 as u64));
        }
        Ok(self.in_edges[self.edges[e.0].tail.0].clone())
    }

    /// `{e} ∪ outgoing(e)`: the edges a target on `e` can occupy one step later.
    pub fn successors(&self, e: EdgeId) -> impl Iterator<Item = EdgeId> + '_ {
        std::iter::once(e).chain(self.out_edges[self.edges[e.0].head.0].iter().copied())
    }

    /// Checks that consecutive edges chain head to tail.
    pub fn check_connected(&self, path: &[EdgeId]) -> Result<(), (EdgeId, EdgeId)> {
        for w in path.windows(2) {
            if self.edges[w[0].0].head != self.edges[w[1].0].tail {
                return Err((w[0], w[1]));
            }
        }
        Ok(())
    }

    pub fn path_length(&self, path: &[EdgeId]) -> f64 {
        path.iter().map(|e| self.edges[e.0].length).sum()
    }
}

pub fn load_graph(text: &str) -> Result<RoadGraph, GraphError> {
    #[derive(PartialEq)]
    enum Section {
        None,
        Vertices,
        Edges,
        Entries,
        Goals,
    }

    let mut section = Section::None;
    let mut vertices: Vec<Vertex> = Vec::new();
    let mut vertex_idx: HashMap<u64, VertexId> = HashMap::new();
    let mut edges: Vec<(u64, VertexId, VertexId)> = Vec::new();
    let mut entry_labels: Vec<u64> = Vec::new();
    let mut goal_labels: BTreeMap<i64, Vec<u64>> = BTreeMap::new();

    for (i, raw) in text.lines().enumerate() {
        let line_no = i + 1;
        let line = raw.split(';').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        if let Some(header) = line.strip_prefix('#') {
            section = match header.trim() {
                "vertices" => Section::Vertices,
                "edges" => Section::Edges,
                "entries" => Section::Entries,
                "goals" => Section::Goals,
                other => {
                    return Err(GraphError::Parse {
                        line: line_no,
                        msg: format!("unknown section `{other}`"),
                    })
                }
            };
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        let parse_err = |msg: String| GraphError::Parse { line: line_no, msg };
        let int = |s: &str| {
            s.parse::<u64>()
                .map_err(|_| parse_err(format!("expected non-negative integer, found `{s}`")))
        };
        let expect = |n: usize| {
            if fields.len() == n {
                Ok(())
            } else {
                Err(parse_err(format!("expected {n} fields, found {}", fields.len())))
            }
        };
        match section {
            Section::None => return Err(parse_err("data before any section header".into())),
            Section::Vertices => {
                expect(3)?;
                let label = int(fields[0])?;
                let coord = |s: &str| {
                    s.parse::<f64>()
                        .map_err(|_| parse_err(format!("expected number, found `{s}`")))
                };
                let (x, y) = (coord(fields[1])?, coord(fields[2])?);
                if vertex_idx.insert(label, VertexId(vertices.len())).is_some() {
                    return Err(GraphError::DuplicateVertex(label));
                }
                vertices.push(Vertex { label, x, y });
            }
            Section::Edges => {
                expect(3)?;
                let label = int(fields[0])?;
                let resolve = |s: &str| -> Result<VertexId, GraphError> {
                    let id = int(s)?;
                    vertex_idx
                        .get(&id)
                        .copied()
                        .ok_or(GraphError::UnknownVertex { line: line_no, id })
                };
                let tail = resolve(fields[1])?;
                let head = resolve(fields[2])?;
                edges.push((label, tail, head));
            }
            Section::Entries => {
                expect(1)?;
                entry_labels.push(int(fields[0])?);
            }
            Section::Goals => {
                expect(2)?;
                let gi = fields[0]
                    .parse::<i64>()
                    .map_err(|_| parse_err(format!("bad goal index `{}`", fields[0])))?;
                goal_labels.entry(gi).or_default().push(int(fields[1])?);
            }
        }
    }

    if edges.is_empty() {
        return Err(GraphError::Empty);
    }
    let mut label_idx = HashMap::with_capacity(edges.len());
    for (i, &(label, _, _)) in edges.iter().enumerate() {
        if label_idx.insert(label, EdgeId(i)).is_some() {
            return Err(GraphError::DuplicateEdge(label));
        }
    }
    let resolve = |l: u64| label_idx.get(&l).copied().ok_or(GraphError::UnknownEdge(l));
    let entries = entry_labels
        .into_iter()
        .map(resolve)
        .collect::<Result<Vec<_>, _>>()?;
    let goals = goal_labels
        .into_values()
        .map(|set| set.into_iter().map(resolve).collect::<Result<Vec<_>, _>>())
        .collect::<Result<Vec<_>, _>>()?;
    RoadGraph::from_parts(vertices, edges, goals, entries)
}

/// Writes a graph in the line format read by [`load_graph`].
pub fn write_graph(g: &RoadGraph) -> String {
    let mut out = String::from("#vertices\n");
    for v in g.vertices() {
        out.push_str(&format!("{} {} {}\n", v.label, v.x, v.y));
    }
    out.push_str("#edges\n");
    for e in g.edges() {
        out.push_str(&format!(
            "{} {} {}\n",
            e.label,
            g.vertex(e.tail).label,
            g.vertex(e.head).label
        ));
    }
    out.push_str("#entries\n");
    for &e in g.entries() {
        out.push_str(&format!("{}\n", g.edge(e).label));
    }
    out.push_str("#goals\n");
    for (i, set) in g.goals().iter().enumerate() {
        for &e in set {
            out.push_str(&format!("{} {}\n", i, g.edge(e).label));
        }
    }
    out
}

#[derive(Clone, Copy, PartialEq)]
struct HeapItem {
    dist: f64,
    vertex: usize,
}

impl Eq for HeapItem {}

impl Ord for HeapItem {
    fn cmp(&self, other: &Self) -> Ordering {
        // min-heap on (dist, vertex)
        other
            .dist
            .total_cmp(&self.dist)
            .then_with(|| other.vertex.cmp(&self.vertex))
    }
}

impl PartialOrd for HeapItem {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Single-source shortest distances over vertices. Returns per-vertex
/// distance and the edge used to reach it.
pub fn dijkstra(
    g: &RoadGraph,
    source: VertexId,
    weight: impl Fn(EdgeId) -> f64,
) -> (Vec<f64>, Vec<Option<EdgeId>>) {
    let n = g.vertices.len();
    let mut dist = vec![f64::INFINITY; n];
    let mut pred = vec![None; n];
    let mut heap = BinaryHeap::new();
    dist[source.0] = 0.0;
    heap.push(HeapItem {
        dist: 0.0,
        vertex: source.0,
    });
    while let Some(HeapItem { dist: d, vertex }) = heap.pop() {
        if d > dist[vertex] {
            continue;
        }
        for &e in &g.out_edges[vertex] {
            let head = g.edges[e.0].head.0;
            let nd = d + weight(e);
            if nd < dist[head] {
                dist[head] = nd;
                pred[head] = Some(e);
                heap.push(HeapItem {
                    dist: nd,
                    vertex: head,
                });
            }
        }
    }
    (dist, pred)
}

/// Distance from every vertex to the nearest tail of an edge in `targets`,
/// following edge directions.
pub fn distance_to_edges(
    g: &RoadGraph,
    targets: &[EdgeId],
    weight: impl Fn(EdgeId) -> f64,
) -> Vec<f64> {
    let n = g.vertices.len();
    let mut dist = vec![f64::INFINITY; n];
    let mut heap = BinaryHeap::new();
    for &e in targets {
        let v = g.edges[e.0].tail.0;
        if dist[v] > 0.0 {
            dist[v] = 0.0;
            heap.push(HeapItem { dist: 0.0, vertex: v });
        }
    }
    while let Some(HeapItem { dist: d, vertex }) = heap.pop() {
        if d > dist[vertex] {
            continue;
        }
        for &e in &g.in_edges[vertex] {
            let tail = g.edges[e.0].tail.0;
            let nd = d + weight(e);
            if nd < dist[tail] {
                dist[tail] = nd;
                heap.push(HeapItem {
                    dist: nd,
                    vertex: tail,
                });
            }
        }
    }
    dist
}

/// Minimal-length path starting with `from` and ending on an edge of `goal`.
///
/// The cost is the distance from the head of `from` to the tail of the goal
/// edge. `Ok(None)` means no goal edge is reachable.
pub fn shortest_path(
    g: &RoadGraph,
    from: EdgeId,
    goal: &[EdgeId],
) -> Result<Option<Vec<EdgeId>>, GraphError> {
    shortest_path_weighted(g, from, goal, |e| g.edges[e.0].length)
}

/// [`shortest_path`] under an arbitrary positive edge weight.
pub fn shortest_path_weighted(
    g: &RoadGraph,
    from: EdgeId,
    goal: &[EdgeId],
    weight: impl Fn(EdgeId) -> f64,
) -> Result<Option<Vec<EdgeId>>, GraphError> {
    if !g.contains(from) {
        return Err(GraphError::UnknownEdge(from.0 as u64));
    }
    if let Some(&bad) = goal.iter().find(|e| !g.contains(**e)) {
        return Err(GraphError::UnknownEdge(bad.0 as u64));
    }
    if goal.contains(&from) {
        return Ok(Some(vec![from]));
    }
    let (dist, pred) = dijkstra(g, g.edges[from.0].head, weight);
    let best = goal
        .iter()
        .copied()
        .filter(|e| dist[g.edges[e.0].tail.0].is_finite())
        .min_by(|a, b| {
            dist[g.edges[a.0].tail.0]
                .total_cmp(&dist[g.edges[b.0].tail.0])
                .then(a.cmp(b))
        });
    let Some(last) = best else {
        return Ok(None);
    };

    let start = g.edges[from.0].head;
    let mut rev = vec![last];
    let mut v = g.edges[last.0].tail;
    while v != start {
        let e = pred[v.0].expect("finite distance implies a predecessor");
        rev.push(e);
        v = g.edges[e.0].tail;
    }
    rev.push(from);
    rev.reverse();
    Ok(Some(rev))
}
