//! Adaptive quadtree meshes of axis-aligned rectangular cells.
//!
//! Leaf cells are addressed by `(level, i, j)` and all vertex coordinates are
//! kept as integers on a `2^COORD_BITS` lattice, so node identification and
//! neighbour queries are exact. Adjacent leaves differ by at most one level;
//! every hanging node sits at the midpoint of a coarse edge and takes the
//! average of the two edge endpoints.

use std::collections::{BTreeSet, HashMap, HashSet};
use std::fmt::Write as _;
use std::sync::atomic::{AtomicU64, Ordering};

use crate::error::MeshError;
use crate::field::NodalField;
use crate::scalar::Real;

/// Resolution of the integer coordinate lattice.
pub const COORD_BITS: u32 = 24;
/// Deepest level any mesh may reach.
pub const MAX_SUPPORTED_LEVEL: u8 = 20;
const FULL: u32 = 1 << COORD_BITS;

static NEXT_MESH_ID: AtomicU64 = AtomicU64::new(1);

fn fresh_id() -> u64 {
    NEXT_MESH_ID.fetch_add(1, Ordering::Relaxed)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct CellKey {
    pub level: u8,
    pub i: u32,
    pub j: u32,
}

impl CellKey {
    pub fn new(level: u8, i: u32, j: u32) -> Self {
        Self { level, i, j }
    }

    /// Edge length in lattice units.
    pub fn size(&self) -> u32 {
        1 << (COORD_BITS - self.level as u32)
    }

    /// Lower-left corner in lattice units.
    pub fn origin(&self) -> (u32, u32) {
        let s = self.size();
        (self.i * s, self.j * s)
    }

    pub fn children(&self) -> [CellKey; 4] {
        let l = self.level + 1;
        let (i, j) = (2 * self.i, 2 * self.j);
        [
            CellKey::new(l, i, j),
            CellKey::new(l, i + 1, j),
            CellKey::new(l, i + 1, j + 1),
            CellKey::new(l, i, j + 1),
        ]
    }

    pub fn parent(&self) -> Option<CellKey> {
        (self.level > 0).then(|| CellKey::new(self.level - 1, self.i / 2, self.j / 2))
    }

    /// Ancestor at `level` (or `self` when the levels agree).
    pub fn ancestor(&self, level: u8) -> Option<CellKey> {
        (level <= self.level).then(|| {
            let d = (self.level - level) as u32;
            CellKey::new(level, self.i >> d, self.j >> d)
        })
    }

    /// Corner lattice coordinates, counter-clockwise from the lower left.
    pub fn corners(&self) -> [(u32, u32); 4] {
        let (x0, y0) = self.origin();
        let s = self.size();
        [(x0, y0), (x0 + s, y0), (x0 + s, y0 + s), (x0, y0 + s)]
    }

    fn sort_key(&self) -> (u32, u32, u8) {
        let (x, y) = self.origin();
        (y, x, self.level)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Domain {
    pub x0: f64,
    pub y0: f64,
    pub x1: f64,
    pub y1: f64,
}

impl Domain {
    pub fn unit() -> Self {
        Self { x0: 0.0, y0: 0.0, x1: 1.0, y1: 1.0 }
    }

    pub fn width(&self) -> f64 {
        self.x1 - self.x0
    }

    pub fn height(&self) -> f64 {
        self.y1 - self.y0
    }

    pub fn area(&self) -> f64 {
        self.width() * self.height()
    }

    pub fn point(&self, ix: u32, iy: u32) -> (f64, f64) {
        let f = FULL as f64;
        (
            self.x0 + self.width() * (ix as f64 / f),
            self.y0 + self.height() * (iy as f64 / f),
        )
    }
}

impl Default for Domain {
    fn default() -> Self {
        Self::unit()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Side {
    Bottom,
    Right,
    Top,
    Left,
}

impl Side {
    pub const ALL: [Side; 4] = [Side::Bottom, Side::Right, Side::Top, Side::Left];

    pub fn name(&self) -> &'static str {
        match self {
            Side::Bottom => "bottom",
            Side::Right => "right",
            Side::Top => "top",
            Side::Left => "left",
        }
    }

    pub fn parse(s: &str) -> Option<Side> {
        match s {
            "bottom" => Some(Side::Bottom),
            "right" => Some(Side::Right),
            "top" => Some(Side::Top),
            "left" => Some(Side::Left),
            _ => None,
        }
    }

    /// Outward unit normal.
    pub fn outward_normal(&self) -> [f64; 2] {
        match self {
            Side::Bottom => [0.0, -1.0],
            Side::Right => [1.0, 0.0],
            Side::Top => [0.0, 1.0],
            Side::Left => [-1.0, 0.0],
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BoundaryKind {
    Dirichlet,
    /// Neumann segment carrying a scenario load; the index identifies the segment.
    Neumann(usize),
}

/// A boundary segment as requested by the user, in domain coordinates along the side
/// (x for bottom/top, y for left/right).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SegmentSpec {
    pub side: Side,
    pub from: f64,
    pub to: f64,
    pub kind: BoundaryKind,
}

/// A boundary segment snapped to the lattice.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct BoundarySegment {
    pub side: Side,
    pub start: u32,
    pub end: u32,
    pub kind: BoundaryKind,
}

impl BoundarySegment {
    fn covers(&self, side: Side, a: u32, b: u32) -> bool {
        self.side == side && self.start <= a && b <= self.end
    }
}

/// Snap a segment to the cell edges of a uniform mesh at `level`. A segment that
/// would collapse is widened to the single cell containing its centre.
pub fn snap_segment(spec: &SegmentSpec, domain: &Domain, level: u8) -> Result<BoundarySegment, MeshError> {
    let (lo, len) = match spec.side {
        Side::Bottom | Side::Top => (domain.x0, domain.width()),
        Side::Left | Side::Right => (domain.y0, domain.height()),
    };
    let n = 1u64 << level;
    let (a, b) = ((spec.from - lo) / len, (spec.to - lo) / len);
    if !(a < b) || a < -1e-12 || b > 1.0 + 1e-12 {
        return Err(MeshError::InvalidSegment { from: spec.from, to: spec.to });
    }
    let mut s = (a * n as f64).round() as u64;
    let mut e = (b * n as f64).round() as u64;
    if e <= s {
        let c = ((0.5 * (a + b) * n as f64).floor() as u64).min(n - 1);
        s = c;
        e = c + 1;
    }
    let unit = (FULL as u64) / n;
    Ok(BoundarySegment {
        side: spec.side,
        start: (s * unit) as u32,
        end: (e.min(n) * unit) as u32,
        kind: spec.kind,
    })
}

/// Constraint attached to a geometric vertex.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum NodeKind {
    /// Carries the unknown with this index.
    Conforming { dof: usize },
    /// Average of two conforming unknowns.
    Hanging { parents: [usize; 2] },
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Node {
    pub ix: u32,
    pub iy: u32,
    pub kind: NodeKind,
}

#[derive(Clone, Debug)]
pub struct QuadMesh {
    id: u64,
    domain: Domain,
    base_level: u8,
    max_level: u8,
    cells: Vec<CellKey>,
    cell_lookup: HashMap<CellKey, usize>,
    cell_nodes: Vec<[usize; 4]>,
    nodes: Vec<Node>,
    node_lookup: HashMap<(u32, u32), usize>,
    dof_nodes: Vec<usize>,
    boundary: Vec<BoundarySegment>,
}

impl QuadMesh {
    /// Uniform mesh with `2^level × 2^level` cells.
    pub fn uniform(
        domain: Domain,
        level: u8,
        max_level: u8,
        segments: &[SegmentSpec],
    ) -> Result<Self, MeshError> {
        if level > max_level || max_level > MAX_SUPPORTED_LEVEL {
            return Err(MeshError::InvalidLevel(format!(
                "initial level {level}, max level {max_level} (supported up to {MAX_SUPPORTED_LEVEL})"
            )));
        }
        let boundary = segments
            .iter()
            .map(|s| snap_segment(s, &domain, level))
            .collect::<Result<Vec<_>, _>>()?;
        check_disjoint(&boundary)?;
        let n = 1u32 << level;
        let leaves = (0..n)
            .flat_map(|j| (0..n).map(move |i| CellKey::new(level, i, j)))
            .collect();
        Self::from_leaves(domain, level, max_level, leaves, boundary)
    }

    /// Builds a mesh from an explicit set of leaves. The leaves must tile the domain
    /// and satisfy the 2:1 balance condition.
    pub fn from_leaves(
        domain: Domain,
        base_level: u8,
        max_level: u8,
        mut leaves: Vec<CellKey>,
        boundary: Vec<BoundarySegment>,
    ) -> Result<Self, MeshError> {
        leaves.sort_by_key(|c| c.sort_key());
        let cell_lookup: HashMap<CellKey, usize> =
            leaves.iter().enumerate().map(|(k, c)| (*c, k)).collect();
        if cell_lookup.len() != leaves.len() {
            return Err(MeshError::Unbalanced("duplicate leaf cells".into()));
        }

        let mut coords: Vec<(u32, u32)> = leaves
            .iter()
            .flat_map(|c| c.corners())
            .collect::<HashSet<_>>()
            .into_iter()
            .collect();
        coords.sort_by_key(|&(x, y)| (y, x));
        let node_lookup: HashMap<(u32, u32), usize> =
            coords.iter().enumerate().map(|(k, p)| (*p, k)).collect();

        // hanging nodes: vertices lying at the midpoint of some leaf edge
        let mut hanging: HashMap<usize, [usize; 2]> = HashMap::new();
        for c in &leaves {
            let cs = c.corners();
            for e in 0..4 {
                let (a, b) = (cs[e], cs[(e + 1) % 4]);
                let mid = ((a.0 + b.0) / 2, (a.1 + b.1) / 2);
                if let Some(&m) = node_lookup.get(&mid) {
                    hanging.insert(m, [node_lookup[&a], node_lookup[&b]]);
                }
            }
        }

        let mut dof_of = vec![usize::MAX; coords.len()];
        let mut dof_nodes = Vec::with_capacity(coords.len() - hanging.len());
        for k in 0..coords.len() {
            if !hanging.contains_key(&k) {
                dof_of[k] = dof_nodes.len();
                dof_nodes.push(k);
            }
        }
        let mut nodes = Vec::with_capacity(coords.len());
        for (k, &(ix, iy)) in coords.iter().enumerate() {
            let kind = match hanging.get(&k) {
                None => NodeKind::Conforming { dof: dof_of[k] },
                Some(&[p, q]) => {
                    if dof_of[p] == usize::MAX || dof_of[q] == usize::MAX {
                        return Err(MeshError::Unbalanced(format!(
                            "hanging node ({ix}, {iy}) has a hanging parent"
                        )));
                    }
                    NodeKind::Hanging { parents: [dof_of[p], dof_of[q]] }
                }
            };
            nodes.push(Node { ix, iy, kind });
        }

        let cell_nodes = leaves
            .iter()
            .map(|c| c.corners().map(|p| node_lookup[&p]))
            .collect();

        Ok(Self {
            id: fresh_id(),
            domain,
            base_level,
            max_level,
            cells: leaves,
            cell_lookup,
            cell_nodes,
            nodes,
            node_lookup,
            dof_nodes,
            boundary,
        })
    }

    /// Identifier that changes whenever the mesh topology changes.
    pub fn id(&self) -> u64 {
        self.id
    }

    pub fn domain(&self) -> &Domain {
        &self.domain
    }

    pub fn base_level(&self) -> u8 {
        self.base_level
    }

    pub fn max_level(&self) -> u8 {
        self.max_level
    }

    pub fn num_cells(&self) -> usize {
        self.cells.len()
    }

    pub fn num_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn num_dofs(&self) -> usize {
        self.dof_nodes.len()
    }

    pub fn num_hanging(&self) -> usize {
        self.nodes.len() - self.dof_nodes.len()
    }

    pub fn cells(&self) -> &[CellKey] {
        &self.cells
    }

    pub fn cell(&self, c: usize) -> CellKey {
        self.cells[c]
    }

    pub fn cell_index(&self, key: &CellKey) -> Option<usize> {
        self.cell_lookup.get(key).copied()
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn node_index(&self, ix: u32, iy: u32) -> Option<usize> {
        self.node_lookup.get(&(ix, iy)).copied()
    }

    /// Node ids of a cell, counter-clockwise from the lower left.
    pub fn cell_nodes(&self, c: usize) -> [usize; 4] {
        self.cell_nodes[c]
    }

    /// Constraints of the four cell vertices.
    pub fn cell_constraints(&self, c: usize) -> [NodeKind; 4] {
        self.cell_nodes[c].map(|n| self.nodes[n].kind)
    }

    /// Node id carrying a conforming unknown.
    pub fn dof_node(&self, dof: usize) -> usize {
        self.dof_nodes[dof]
    }

    pub fn node_position(&self, n: usize) -> (f64, f64) {
        let node = &self.nodes[n];
        self.domain.point(node.ix, node.iy)
    }

    pub fn dof_position(&self, dof: usize) -> (f64, f64) {
        self.node_position(self.dof_nodes[dof])
    }

    /// Cell extents `(hx, hy)`.
    pub fn cell_size(&self, c: usize) -> (f64, f64) {
        let s = self.cells[c].size() as f64 / FULL as f64;
        (s * self.domain.width(), s * self.domain.height())
    }

    /// `(x0, y0, x1, y1)` of a cell.
    pub fn cell_bounds(&self, c: usize) -> (f64, f64, f64, f64) {
        let k = self.cells[c];
        let (ox, oy) = k.origin();
        let s = k.size();
        let (x0, y0) = self.domain.point(ox, oy);
        let (x1, y1) = self.domain.point(ox + s, oy + s);
        (x0, y0, x1, y1)
    }

    pub fn boundary(&self) -> &[BoundarySegment] {
        &self.boundary
    }

    /// Number of distinct Neumann segment ids.
    pub fn neumann_segments(&self) -> Vec<usize> {
        let mut ids: Vec<usize> = self
            .boundary
            .iter()
            .filter_map(|b| match b.kind {
                BoundaryKind::Neumann(s) => Some(s),
                BoundaryKind::Dirichlet => None,
            })
            .collect();
        ids.sort_unstable();
        ids.dedup();
        ids
    }

    /// Leaf boundary edges lying on a side, as `(cell, node_a, node_b, lattice start, lattice end)`.
    fn side_edges(&self, side: Side) -> impl Iterator<Item = (usize, usize, usize, u32, u32)> + '_ {
        self.cells.iter().enumerate().filter_map(move |(c, k)| {
            let (x0, y0) = k.origin();
            let s = k.size();
            let cn = self.cell_nodes[c];
            match side {
                Side::Bottom if y0 == 0 => Some((c, cn[0], cn[1], x0, x0 + s)),
                Side::Top if y0 + s == FULL => Some((c, cn[3], cn[2], x0, x0 + s)),
                Side::Left if x0 == 0 => Some((c, cn[0], cn[3], y0, y0 + s)),
                Side::Right if x0 + s == FULL => Some((c, cn[1], cn[2], y0, y0 + s)),
                _ => None,
            }
        })
    }

    /// Leaf edges of the given boundary kind as `(node_a, node_b, length)`.
    pub fn boundary_edges(&self, kind: BoundaryKind) -> Vec<(usize, usize, f64)> {
        let mut out = Vec::new();
        for side in Side::ALL {
            let segs: Vec<&BoundarySegment> = self
                .boundary
                .iter()
                .filter(|b| b.side == side && b.kind == kind)
                .collect();
            if segs.is_empty() {
                continue;
            }
            let len = match side {
                Side::Bottom | Side::Top => self.domain.width(),
                Side::Left | Side::Right => self.domain.height(),
            };
            for (_, a, b, s, e) in self.side_edges(side) {
                if segs.iter().any(|g| g.covers(side, s, e)) {
                    out.push((a, b, len * (e - s) as f64 / FULL as f64));
                }
            }
        }
        out
    }

    /// Conforming unknowns lying on the Dirichlet boundary.
    pub fn dirichlet_dofs(&self) -> Vec<usize> {
        self.dofs_on(|k| k == BoundaryKind::Dirichlet)
    }

    /// Conforming unknowns on any Neumann segment.
    pub fn neumann_dofs(&self) -> Vec<usize> {
        self.dofs_on(|k| matches!(k, BoundaryKind::Neumann(_)))
    }

    fn dofs_on(&self, pred: impl Fn(BoundaryKind) -> bool) -> Vec<usize> {
        let mut set = BTreeSet::new();
        let kinds: Vec<BoundaryKind> = {
            let mut v: Vec<BoundaryKind> = Vec::new();
            for b in &self.boundary {
                if pred(b.kind) && !v.contains(&b.kind) {
                    v.push(b.kind);
                }
            }
            v
        };
        for kind in kinds {
            for (a, b, _) in self.boundary_edges(kind) {
                for n in [a, b] {
                    if let NodeKind::Conforming { dof } = self.nodes[n].kind {
                        set.insert(dof);
                    }
                }
            }
        }
        set.into_iter().collect()
    }

    /// Leaf whose half-open region contains the lattice pixel `(px, py)`.
    pub fn leaf_at_pixel(&self, px: u32, py: u32) -> Option<usize> {
        leaf_at(&self.cell_lookup, px, py, self.max_level.max(self.deepest_level()))
    }

    fn deepest_level(&self) -> u8 {
        self.cells.iter().map(|c| c.level).max().unwrap_or(0)
    }

    /// Leaf containing the point `(x, y)`; points on the upper/right domain boundary
    /// are attributed to the adjacent cell.
    pub fn locate(&self, x: f64, y: f64) -> Option<usize> {
        let d = &self.domain;
        let tol = 1e-12 * d.width().max(d.height());
        if x < d.x0 - tol || x > d.x1 + tol || y < d.y0 - tol || y > d.y1 + tol {
            return None;
        }
        let fx = ((x - d.x0) / d.width() * FULL as f64).floor().clamp(0.0, (FULL - 1) as f64) as u32;
        let fy = ((y - d.y0) / d.height() * FULL as f64).floor().clamp(0.0, (FULL - 1) as f64) as u32;
        self.leaf_at_pixel(fx, fy)
    }

    /// Edge neighbours (left, right, bottom, top) of a leaf.
    pub fn edge_neighbors(&self, c: usize) -> Vec<usize> {
        let depth = self.max_level.max(self.deepest_level());
        neighbor_keys(&self.cells[c])
            .into_iter()
            .filter_map(|(px, py)| leaf_at(&self.cell_lookup, px, py, depth))
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect()
    }

    /// Splits the marked leaves and restores 2:1 balance.
    pub fn refine_cells(&self, marks: &[usize]) -> Result<QuadMesh, MeshError> {
        if marks.is_empty() {
            return Ok(self.clone());
        }
        let mut leaves: HashSet<CellKey> = self.cells.iter().copied().collect();
        for &m in marks {
            let key = *self.cells.get(m).ok_or(MeshError::UnknownCell(m))?;
            if key.level >= self.max_level {
                return Err(MeshError::MaxDepthExceeded { level: key.level, max_level: self.max_level });
            }
            if leaves.remove(&key) {
                leaves.extend(key.children());
            }
        }
        balance(&mut leaves, self.max_level);
        let new = QuadMesh::from_leaves(
            self.domain,
            self.base_level,
            self.max_level,
            leaves.into_iter().collect(),
            self.boundary.clone(),
        )?;
        Ok(new)
    }

    /// True if every leaf of `finer` lies inside a leaf of `self`.
    pub fn is_refined_by(&self, finer: &QuadMesh) -> bool {
        self.domain == finer.domain
            && self.boundary == finer.boundary
            && finer.cells.iter().all(|k| {
                (0..=k.level)
                    .rev()
                    .any(|l| self.cell_lookup.contains_key(&k.ancestor(l).unwrap()))
            })
    }

    /// Full consistency scan: tiling, 2:1 balance and hanging-node parents.
    pub fn check_consistency(&self) -> Result<(), MeshError> {
        let area: u128 = self.cells.iter().map(|c| (c.size() as u128).pow(2)).sum();
        if area != (FULL as u128).pow(2) {
            return Err(MeshError::Unbalanced("leaves do not tile the domain".into()));
        }
        for k in &self.cells {
            for l in 0..k.level {
                if self.cell_lookup.contains_key(&k.ancestor(l).unwrap()) {
                    return Err(MeshError::Unbalanced("overlapping leaves".into()));
                }
            }
        }
        for c in 0..self.cells.len() {
            for n in self.edge_neighbors(c) {
                if self.cells[c].level.abs_diff(self.cells[n].level) > 1 {
                    return Err(MeshError::Unbalanced(format!(
                        "cells {:?} and {:?} differ by more than one level",
                        self.cells[c], self.cells[n]
                    )));
                }
            }
        }
        for node in &self.nodes {
            if let NodeKind::Hanging { parents } = node.kind {
                let (a, b) = (
                    &self.nodes[self.dof_nodes[parents[0]]],
                    &self.nodes[self.dof_nodes[parents[1]]],
                );
                if a.ix + b.ix != 2 * node.ix || a.iy + b.iy != 2 * node.iy {
                    return Err(MeshError::Unbalanced("hanging node is not an edge midpoint".into()));
                }
            }
        }
        Ok(())
    }

    /// Plain-text dump: `mesh <ncells> <nnodes>`, one `x0 y0 x1 y1 level` line per cell,
    /// one `x y kind` line per node.
    pub fn dump(&self) -> String {
        let mut s = String::new();
        writeln!(s, "mesh {} {}", self.num_cells(), self.num_nodes()).unwrap();
        for c in 0..self.cells.len() {
            let (x0, y0, x1, y1) = self.cell_bounds(c);
            writeln!(s, "{x0} {y0} {x1} {y1} {}", self.cells[c].level).unwrap();
        }
        for n in 0..self.nodes.len() {
            let (x, y) = self.node_position(n);
            let kind = match self.nodes[n].kind {
                NodeKind::Conforming { .. } => "conforming",
                NodeKind::Hanging { .. } => "hanging",
            };
            writeln!(s, "{x} {y} {kind}").unwrap();
        }
        s
    }

    /// Parses a mesh dump. Returns the mesh and the number of lines consumed.
    /// Boundary tags are not part of the dump.
    pub fn parse_dump(text: &str) -> Result<(QuadMesh, usize), MeshError> {
        let mut lines = text.lines().enumerate();
        let err = |line: usize, msg: &str| MeshError::Parse { line: line + 1, msg: msg.to_string() };
        let (l0, header) = lines.next().ok_or_else(|| err(0, "empty input"))?;
        let mut h = header.split_whitespace();
        if h.next() != Some("mesh") {
            return Err(err(l0, "expected `mesh <ncells> <nnodes>`"));
        }
        let ncells: usize = h.next().and_then(|t| t.parse().ok()).ok_or_else(|| err(l0, "bad cell count"))?;
        let nnodes: usize = h.next().and_then(|t| t.parse().ok()).ok_or_else(|| err(l0, "bad node count"))?;

        let mut raw = Vec::with_capacity(ncells);
        for _ in 0..ncells {
            let (ln, line) = lines.next().ok_or_else(|| err(l0, "truncated cell list"))?;
            let t: Vec<&str> = line.split_whitespace().collect();
            if t.len() != 5 {
                return Err(err(ln, "expected `x0 y0 x1 y1 level`"));
            }
            let v: Vec<f64> = t[..4]
                .iter()
                .map(|s| s.parse::<f64>())
                .collect::<Result<_, _>>()
                .map_err(|_| err(ln, "bad coordinate"))?;
            let level: u8 = t[4].parse().map_err(|_| err(ln, "bad level"))?;
            if level > MAX_SUPPORTED_LEVEL {
                return Err(err(ln, "level too deep"));
            }
            raw.push((ln, v, level));
        }
        if raw.is_empty() {
            return Err(err(l0, "no cells"));
        }
        let domain = Domain {
            x0: raw.iter().map(|r| r.1[0]).fold(f64::INFINITY, f64::min),
            y0: raw.iter().map(|r| r.1[1]).fold(f64::INFINITY, f64::min),
            x1: raw.iter().map(|r| r.1[2]).fold(f64::NEG_INFINITY, f64::max),
            y1: raw.iter().map(|r| r.1[3]).fold(f64::NEG_INFINITY, f64::max),
        };
        let mut leaves = Vec::with_capacity(ncells);
        for (ln, v, level) in &raw {
            let n = (1u64 << level) as f64;
            let fi = (v[0] - domain.x0) / domain.width() * n;
            let fj = (v[1] - domain.y0) / domain.height() * n;
            let (i, j) = (fi.round(), fj.round());
            if (fi - i).abs() > 1e-6 || (fj - j).abs() > 1e-6 {
                return Err(err(*ln, "cell is not aligned with the quadtree lattice"));
            }
            leaves.push(CellKey::new(*level, i as u32, j as u32));
        }
        let base = leaves.iter().map(|c| c.level).min().unwrap();
        let deepest = leaves.iter().map(|c| c.level).max().unwrap();
        let mesh = QuadMesh::from_leaves(domain, base, deepest, leaves, Vec::new())?;
        mesh.check_consistency()?;
        if mesh.num_nodes() != nnodes {
            return Err(err(l0, "node count does not match the cell list"));
        }
        for n in 0..nnodes {
            let (ln, line) = lines.next().ok_or_else(|| err(l0, "truncated node list"))?;
            let t: Vec<&str> = line.split_whitespace().collect();
            if t.len() != 3 {
                return Err(err(ln, "expected `x y kind`"));
            }
            let (x, y) = mesh.node_position(n);
            let px: f64 = t[0].parse().map_err(|_| err(ln, "bad coordinate"))?;
            let py: f64 = t[1].parse().map_err(|_| err(ln, "bad coordinate"))?;
            let hanging = matches!(mesh.nodes[n].kind, NodeKind::Hanging { .. });
            let kind_ok = match t[2] {
                "conforming" => !hanging,
                "hanging" => hanging,
                _ => false,
            };
            if (px - x).abs() > 1e-9 || (py - y).abs() > 1e-9 || !kind_ok {
                return Err(err(ln, "node does not match the cell list"));
            }
        }
        Ok((mesh, 1 + ncells + nnodes))
    }
}

/// Cells whose average phase gradient exceeds `threshold`, together with their edge
/// neighbours.
pub fn mark_interface_cells<T: Real>(mesh: &QuadMesh, v: &NodalField<T>, threshold: f64) -> Vec<usize> {
    let mut marked = BTreeSet::new();
    for c in 0..mesh.num_cells() {
        let [v0, v1, v2, v3] = v.cell_values(mesh, c, 0).map(|x| x.as_f64());
        let (hx, hy) = mesh.cell_size(c);
        let gx = ((v1 - v0) + (v2 - v3)) / (2.0 * hx);
        let gy = ((v3 - v0) + (v2 - v1)) / (2.0 * hy);
        if gx.hypot(gy) > threshold {
            marked.insert(c);
            marked.extend(mesh.edge_neighbors(c));
        }
    }
    marked.into_iter().collect()
}

fn leaf_at(lookup: &HashMap<CellKey, usize>, px: u32, py: u32, depth: u8) -> Option<usize> {
    (0..=depth).find_map(|l| {
        let d = COORD_BITS - l as u32;
        lookup.get(&CellKey::new(l, px >> d, py >> d)).copied()
    })
}

/// Lattice pixels just across each edge of a cell, two per edge.
fn neighbor_keys(k: &CellKey) -> Vec<(u32, u32)> {
    let (x0, y0) = k.origin();
    let s = k.size();
    let (q1, q3) = (s / 4, 3 * s / 4);
    let mut out = Vec::with_capacity(8);
    if x0 > 0 {
        out.extend([(x0 - 1, y0 + q1), (x0 - 1, y0 + q3)]);
    }
    if x0 + s < FULL {
        out.extend([(x0 + s, y0 + q1), (x0 + s, y0 + q3)]);
    }
    if y0 > 0 {
        out.extend([(x0 + q1, y0 - 1), (x0 + q3, y0 - 1)]);
    }
    if y0 + s < FULL {
        out.extend([(x0 + q1, y0 + s), (x0 + q3, y0 + s)]);
    }
    out
}

fn balance(leaves: &mut HashSet<CellKey>, max_level: u8) {
    loop {
        let lookup: HashMap<CellKey, usize> = leaves.iter().map(|k| (*k, 0)).collect();
        let mut split = HashSet::new();
        for k in leaves.iter() {
            for (px, py) in neighbor_keys(k) {
                let found = (0..=max_level).find_map(|l| {
                    let d = COORD_BITS - l as u32;
                    let key = CellKey::new(l, px >> d, py >> d);
                    lookup.contains_key(&key).then_some(key)
                });
                if let Some(n) = found {
                    if n.level + 1 < k.level {
                        split.insert(n);
                    }
                }
            }
        }
        if split.is_empty() {
            return;
        }
        for k in split {
            leaves.remove(&k);
            leaves.extend(k.children());
        }
    }
}

fn check_disjoint(boundary: &[BoundarySegment]) -> Result<(), MeshError> {
    for d in boundary.iter().filter(|b| b.kind == BoundaryKind::Dirichlet) {
        for n in boundary.iter().filter(|b| matches!(b.kind, BoundaryKind::Neumann(_))) {
            if d.side == n.side && d.start.max(n.start) < d.end.min(n.end) {
                return Err(MeshError::BoundaryOverlap { side: d.side.name() });
            }
        }
    }
    Ok(())
}
