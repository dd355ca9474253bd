//! Grid road network with one parking area per directed edge.
//!
//! Junction `(row, col)` sits at `x = col * spacing`, `y = row * spacing`.
//! Every undirected street between neighbouring junctions yields two directed
//! edges with consecutive ids, so the twin of edge `e` is `e ^ 1`.

use std::cmp::Reverse;
use std::collections::BinaryHeap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

const DIST_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct JunctionId(pub u32);

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct EdgeId(pub u32);

/// Parking areas are one-to-one with edges; area `i` lies on edge `i`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct AreaId(pub u32);

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct SpaceId(pub u32);

macro_rules! index_newtype {
    ($($t:ty),*) => {$(
        impl $t {
            #[inline]
            pub fn index(self) -> usize {
                self.0 as usize
            }
        }
    )*};
}
index_newtype!(JunctionId, EdgeId, AreaId, SpaceId);

impl AreaId {
    #[inline]
    pub fn edge(self) -> EdgeId {
        EdgeId(self.0)
    }
}

impl EdgeId {
    #[inline]
    pub fn area(self) -> AreaId {
        AreaId(self.0)
    }

    #[inline]
    pub fn twin(self) -> EdgeId {
        EdgeId(self.0 ^ 1)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Zone {
    Outer,
    Inner,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ZonePrices {
    pub outer: f64,
    pub inner: f64,
}

impl Default for ZonePrices {
    fn default() -> Self {
        Self {
            outer: 0.5,
            inner: 1.0,
        }
    }
}

impl ZonePrices {
    pub fn price(&self, zone: Zone) -> f64 {
        match zone {
            Zone::Outer => self.outer,
            Zone::Inner => self.inner,
        }
    }

    pub fn max(&self) -> f64 {
        self.outer.max(self.inner)
    }
}

/// Construction parameters for [`RoadNetwork::build_grid`].
#[derive(Debug, Clone, PartialEq)]
pub struct GridSpec {
    pub rows: usize,
    pub cols: usize,
    pub spacing: f64,
    pub capacity: usize,
    pub prices: ZonePrices,
    pub free_flow_speed: f64,
    /// Explicit Inner-zone edges. `None` applies the central-block rule.
    pub inner_edges: Option<Vec<EdgeId>>,
}

impl Default for GridSpec {
    fn default() -> Self {
        Self {
            rows: 6,
            cols: 6,
            spacing: 100.0,
            capacity: 15,
            prices: ZonePrices::default(),
            free_flow_speed: 13.9,
            inner_edges: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Junction {
    pub id: JunctionId,
    pub row: usize,
    pub col: usize,
    pub x: f64,
    pub y: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Edge {
    pub id: EdgeId,
    pub from: JunctionId,
    pub to: JunctionId,
    pub length: f64,
    pub free_flow_speed: f64,
    /// 0 for the outermost edges, increasing by one per junction toward the
    /// centre.
    pub ring: u32,
    pub zone: Zone,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParkingArea {
    pub id: AreaId,
    pub edge: EdgeId,
    pub capacity: usize,
    /// Global ids of the spaces, contiguous and in kerb order.
    pub first_space: SpaceId,
    pub position: f64,
    pub base_price: f64,
}

impl ParkingArea {
    pub fn spaces(&self) -> impl Iterator<Item = SpaceId> {
        let first = self.first_space.0;
        (first..first + self.capacity as u32).map(SpaceId)
    }
}

/// A point on a directed edge, `offset` metres from its upstream end.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EdgePos {
    pub edge: EdgeId,
    pub offset: f64,
}

impl EdgePos {
    pub fn new(edge: EdgeId, offset: f64) -> Self {
        Self { edge, offset }
    }
}

#[derive(Debug, Clone)]
pub struct RoadNetwork {
    rows: usize,
    cols: usize,
    spacing: f64,
    prices: ZonePrices,
    junctions: Vec<Junction>,
    edges: Vec<Edge>,
    areas: Vec<ParkingArea>,
    out_edges: Vec<Vec<EdgeId>>,
    /// Row-major `n_junctions x n_junctions`.
    junction_dist: Vec<f64>,
    /// First edge of the lowest-id shortest path between two junctions.
    next_hop: Vec<Option<EdgeId>>,
    /// Driving distance between edge midpoints, `n_edges x n_edges`.
    mid_dist: Vec<f64>,
    total_spaces: usize,
}

impl RoadNetwork {
    pub fn build_grid(spec: &GridSpec) -> Result<Self> {
        let GridSpec {
            rows,
            cols,
            spacing,
            capacity,
            prices,
            free_flow_speed,
            ..
        } = *spec;
        if rows < 2 || cols < 2 {
            return Err(Error::Config(format!(
                "grid must be at least 2x2, got {rows}x{cols}"
            )));
        }
        if !(spacing > 0.0 && spacing.is_finite()) {
            return Err(Error::Config(format!("spacing must be positive, got {spacing}")));
        }
        if capacity == 0 {
            return Err(Error::Config("parking capacity must be at least 1".into()));
        }
        if !(free_flow_speed > 0.0 && free_flow_speed.is_finite()) {
            return Err(Error::Config(format!(
                "free-flow speed must be positive, got {free_flow_speed}"
            )));
        }
        if !(prices.outer > 0.0 && prices.inner > 0.0) {
            return Err(Error::Config(format!(
                "zone prices must be positive, got outer={} inner={}",
                prices.outer, prices.inner
            )));
        }

        let junctions: Vec<Junction> = (0..rows)
            .flat_map(|row| (0..cols).map(move |col| (row, col)))
            .enumerate()
            .map(|(i, (row, col))| Junction {
                id: JunctionId(i as u32),
                row,
                col,
                x: col as f64 * spacing,
                y: row as f64 * spacing,
            })
            .collect();
        let jid = |row: usize, col: usize| JunctionId((row * cols + col) as u32);

        // Junction level: Manhattan distance to the nearest corner. An edge's
        // ring is the smaller level of its two endpoints.
        let level = |j: JunctionId| {
            let jn = &junctions[j.index()];
            (jn.row.min(rows - 1 - jn.row) + jn.col.min(cols - 1 - jn.col)) as u32
        };
        let in_core = |j: JunctionId| {
            let jn = &junctions[j.index()];
            (1..rows - 1).contains(&jn.row) && (1..cols - 1).contains(&jn.col)
        };

        let mut streets = Vec::with_capacity(rows * (cols - 1) + cols * (rows - 1));
        for row in 0..rows {
            for col in 0..cols - 1 {
                streets.push((jid(row, col), jid(row, col + 1)));
            }
        }
        for row in 0..rows - 1 {
            for col in 0..cols {
                streets.push((jid(row, col), jid(row + 1, col)));
            }
        }

        let mut edges = Vec::with_capacity(streets.len() * 2);
        for (a, b) in streets {
            for (from, to) in [(a, b), (b, a)] {
                let id = EdgeId(edges.len() as u32);
                edges.push(Edge {
                    id,
                    from,
                    to,
                    length: spacing,
                    free_flow_speed,
                    ring: level(from).min(level(to)),
                    zone: if in_core(from) && in_core(to) {
                        Zone::Inner
                    } else {
                        Zone::Outer
                    },
                });
            }
        }

        if let Some(inner) = &spec.inner_edges {
            for e in inner {
                if e.index() >= edges.len() {
                    return Err(Error::Config(format!(
                        "inner-zone override names edge {} but the grid has {} edges",
                        e.0,
                        edges.len()
                    )));
                }
            }
            for edge in &mut edges {
                edge.zone = if inner.contains(&edge.id) {
                    Zone::Inner
                } else {
                    Zone::Outer
                };
            }
        }

        let areas: Vec<ParkingArea> = edges
            .iter()
            .map(|e| ParkingArea {
                id: e.id.area(),
                edge: e.id,
                capacity,
                first_space: SpaceId((e.id.index() * capacity) as u32),
                position: e.length / 2.0,
                base_price: prices.price(e.zone),
            })
            .collect();

        let mut out_edges = vec![Vec::new(); junctions.len()];
        for e in &edges {
            out_edges[e.from.index()].push(e.id);
        }

        let mut net = Self {
            rows,
            cols,
            spacing,
            prices,
            total_spaces: edges.len() * capacity,
            junctions,
            edges,
            areas,
            out_edges,
            junction_dist: Vec::new(),
            next_hop: Vec::new(),
            mid_dist: Vec::new(),
        };
        net.compute_shortest_paths();
        net.compute_mid_distances();
        Ok(net)
    }

    fn compute_shortest_paths(&mut self) {
        let n = self.junctions.len();
        let mut dist = vec![f64::INFINITY; n * n];
        for src in 0..n {
            let row = &mut dist[src * n..(src + 1) * n];
            row[src] = 0.0;
            // Lengths are multiples of the spacing in practice, but keep the
            // search general: a binary heap keyed on ordered bit patterns.
            let mut heap = BinaryHeap::new();
            heap.push(Reverse((0u64, src)));
            while let Some(Reverse((d_bits, j))) = heap.pop() {
                let d = f64::from_bits(d_bits);
                if d > row[j] {
                    continue;
                }
                for &e in &self.out_edges[j] {
                    let edge = &self.edges[e.index()];
                    let nd = d + edge.length;
                    let t = edge.to.index();
                    if nd < row[t] {
                        row[t] = nd;
                        heap.push(Reverse((nd.to_bits(), t)));
                    }
                }
            }
        }

        let mut next_hop = vec![None; n * n];
        for src in 0..n {
            for dst in 0..n {
                if src == dst || !dist[src * n + dst].is_finite() {
                    continue;
                }
                let target = dist[src * n + dst];
                next_hop[src * n + dst] = self.out_edges[src]
                    .iter()
                    .copied()
                    .filter(|&e| {
                        let edge = &self.edges[e.index()];
                        (edge.length + dist[edge.to.index() * n + dst] - target).abs() < DIST_TOL
                    })
                    .min();
            }
        }
        self.junction_dist = dist;
        self.next_hop = next_hop;
    }

    fn compute_mid_distances(&mut self) {
        let m = self.edges.len();
        let mut mid = vec![0.0; m * m];
        for a in 0..m {
            for b in 0..m {
                let from = EdgePos::new(EdgeId(a as u32), self.edges[a].length / 2.0);
                let to = EdgePos::new(EdgeId(b as u32), self.edges[b].length / 2.0);
                mid[a * m + b] = self.raw_distance(from, to);
            }
        }
        self.mid_dist = mid;
    }

    fn raw_distance(&self, from: EdgePos, to: EdgePos) -> f64 {
        if from.edge == to.edge && to.offset >= from.offset {
            return to.offset - from.offset;
        }
        let fe = &self.edges[from.edge.index()];
        let te = &self.edges[to.edge.index()];
        (fe.length - from.offset) + self.jd(fe.to, te.from) + to.offset
    }

    #[inline]
    fn jd(&self, a: JunctionId, b: JunctionId) -> f64 {
        self.junction_dist[a.index() * self.junctions.len() + b.index()]
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn spacing(&self) -> f64 {
        self.spacing
    }

    pub fn prices(&self) -> ZonePrices {
        self.prices
    }

    pub fn junctions(&self) -> &[Junction] {
        &self.junctions
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn areas(&self) -> &[ParkingArea] {
        &self.areas
    }

    pub fn edge(&self, id: EdgeId) -> &Edge {
        &self.edges[id.index()]
    }

    pub fn area(&self, id: AreaId) -> &ParkingArea {
        &self.areas[id.index()]
    }

    pub fn junction(&self, id: JunctionId) -> &Junction {
        &self.junctions[id.index()]
    }

    pub fn junction_at(&self, row: usize, col: usize) -> Option<JunctionId> {
        (row < self.rows && col < self.cols).then(|| JunctionId((row * self.cols + col) as u32))
    }

    pub fn out_edges(&self, j: JunctionId) -> &[EdgeId] {
        &self.out_edges[j.index()]
    }

    /// The directed edge `from -> to`, if the junctions are neighbours.
    pub fn edge_between(&self, from: JunctionId, to: JunctionId) -> Option<EdgeId> {
        self.out_edges[from.index()]
            .iter()
            .copied()
            .find(|&e| self.edges[e.index()].to == to)
    }

    pub fn total_spaces(&self) -> usize {
        self.total_spaces
    }

    /// Area that owns a global space id.
    pub fn area_of_space(&self, space: SpaceId) -> AreaId {
        // Uniform capacity: spaces are laid out area by area.
        AreaId((space.index() / self.areas[0].capacity) as u32)
    }

    pub fn area_position(&self, id: AreaId) -> EdgePos {
        let a = &self.areas[id.index()];
        EdgePos::new(a.edge, a.position)
    }

    pub fn edge_midpoint(&self, id: EdgeId) -> EdgePos {
        EdgePos::new(id, self.edges[id.index()].length / 2.0)
    }

    /// Geometric midpoint of an edge in metres.
    pub fn edge_midpoint_xy(&self, id: EdgeId) -> (f64, f64) {
        let e = &self.edges[id.index()];
        let a = &self.junctions[e.from.index()];
        let b = &self.junctions[e.to.index()];
        ((a.x + b.x) / 2.0, (a.y + b.y) / 2.0)
    }

    pub fn center_xy(&self) -> (f64, f64) {
        (
            (self.cols - 1) as f64 * self.spacing / 2.0,
            (self.rows - 1) as f64 * self.spacing / 2.0,
        )
    }

    pub fn zone_price(&self, edge: EdgeId) -> f64 {
        self.prices.price(self.edges[edge.index()].zone)
    }

    pub fn junction_distance(&self, a: JunctionId, b: JunctionId) -> Result<f64> {
        let d = self.jd(a, b);
        if d.is_finite() {
            Ok(d)
        } else {
            Err(Error::Unreachable {
                from: format!("junction {}", a.0),
                to: format!("junction {}", b.0),
            })
        }
    }

    /// Shortest directed driving distance between two on-edge positions.
    pub fn drive_distance(&self, from: EdgePos, to: EdgePos) -> Result<f64> {
        let d = self.raw_distance(from, to);
        if d.is_finite() {
            Ok(d)
        } else {
            Err(Error::Unreachable {
                from: format!("edge {} @ {:.1} m", from.edge.0, from.offset),
                to: format!("edge {} @ {:.1} m", to.edge.0, to.offset),
            })
        }
    }

    /// Distance between the midpoints of two edges (parking areas and human
    /// destinations both sit there). Table lookup.
    #[inline]
    pub fn mid_distance(&self, from: EdgeId, to: EdgeId) -> f64 {
        self.mid_dist[from.index() * self.edges.len() + to.index()]
    }

    /// Distance from a junction to a point on an edge.
    pub fn junction_to_pos(&self, from: JunctionId, to: EdgePos) -> f64 {
        self.jd(from, self.edges[to.edge.index()].from) + to.offset
    }

    /// Edge sequence of a shortest path from `from` to `to`. The first element
    /// is always `from.edge` and the last `to.edge`; when the target lies
    /// behind the start on the same edge the route loops around.
    pub fn route(&self, from: EdgePos, to: EdgePos) -> Result<Vec<EdgeId>> {
        if from.edge == to.edge && to.offset >= from.offset {
            return Ok(vec![from.edge]);
        }
        let mut route = vec![from.edge];
        let n = self.junctions.len();
        let mut at = self.edges[from.edge.index()].to;
        let goal = self.edges[to.edge.index()].from;
        while at != goal {
            let Some(e) = self.next_hop[at.index() * n + goal.index()] else {
                return Err(Error::Unreachable {
                    from: format!("junction {}", at.0),
                    to: format!("junction {}", goal.0),
                });
            };
            route.push(e);
            at = self.edges[e.index()].to;
        }
        route.push(to.edge);
        Ok(route)
    }

    /// Plain-text adjacency and zone listing.
    pub fn dump_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(
            s,
            "# grid {}x{} spacing_m={} edges={} spaces={}",
            self.rows,
            self.cols,
            self.spacing,
            self.edges.len(),
            self.total_spaces
        );
        let _ = writeln!(
            s,
            "# edge_id from_row from_col to_row to_col length_m ring zone capacity price_eur"
        );
        for e in &self.edges {
            let a = &self.junctions[e.from.index()];
            let b = &self.junctions[e.to.index()];
            let area = &self.areas[e.id.index()];
            let _ = writeln!(
                s,
                "{} {} {} {} {} {} {} {} {} {}",
                e.id.0,
                a.row,
                a.col,
                b.row,
                b.col,
                e.length,
                e.ring,
                match e.zone {
                    Zone::Outer => "outer",
                    Zone::Inner => "inner",
                },
                area.capacity,
                area.base_price
            );
        }
        s
    }
}
