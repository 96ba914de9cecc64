//! Core geometric types: vertices, unit cells, and the cubic reference frame.

use serde::{Deserialize, Serialize};

use crate::error::{LatticeError, Result};

/// A point or displacement in cell units.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Vec3 {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Vec3 {
    pub const ZERO: Vec3 = Vec3 { x: 0.0, y: 0.0, z: 0.0 };

    pub fn new(x: f64, y: f64, z: f64) -> Self {
        Vec3 { x, y, z }
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.z.is_finite()
    }

    pub fn dot(&self, other: &Vec3) -> f64 {
        self.x * other.x + self.y * other.y + self.z * other.z
    }

    pub fn cross(&self, other: &Vec3) -> Vec3 {
        Vec3::new(
            self.y * other.z - self.z * other.y,
            self.z * other.x - self.x * other.z,
            self.x * other.y - self.y * other.x,
        )
    }

    pub fn norm(&self) -> f64 {
        self.dot(self).sqrt()
    }

    pub fn distance(&self, other: &Vec3) -> f64 {
        (*self - *other).norm()
    }

    pub fn normalized(&self) -> Vec3 {
        let n = self.norm();
        Vec3::new(self.x / n, self.y / n, self.z / n)
    }

    pub fn component(&self, axis: usize) -> f64 {
        match axis {
            0 => self.x,
            1 => self.y,
            2 => self.z,
            _ => panic!("axis out of range: {axis}"),
        }
    }

    pub fn set_component(&mut self, axis: usize, value: f64) {
        match axis {
            0 => self.x = value,
            1 => self.y = value,
            2 => self.z = value,
            _ => panic!("axis out of range: {axis}"),
        }
    }

    pub fn to_array(&self) -> [f64; 3] {
        [self.x, self.y, self.z]
    }

    pub fn from_array(a: [f64; 3]) -> Self {
        Vec3::new(a[0], a[1], a[2])
    }
}

impl std::ops::Add for Vec3 {
    type Output = Vec3;
    fn add(self, rhs: Vec3) -> Vec3 {
        Vec3::new(self.x + rhs.x, self.y + rhs.y, self.z + rhs.z)
    }
}

impl std::ops::Sub for Vec3 {
    type Output = Vec3;
    fn sub(self, rhs: Vec3) -> Vec3 {
        Vec3::new(self.x - rhs.x, self.y - rhs.y, self.z - rhs.z)
    }
}

impl std::ops::Mul<f64> for Vec3 {
    type Output = Vec3;
    fn mul(self, s: f64) -> Vec3 {
        Vec3::new(self.x * s, self.y * s, self.z * s)
    }
}

impl std::ops::Neg for Vec3 {
    type Output = Vec3;
    fn neg(self) -> Vec3 {
        Vec3::new(-self.x, -self.y, -self.z)
    }
}

/// One periodic cell: vertex coordinates plus an undirected edge list.
///
/// Edges are stored as index pairs `(i, j)`. A well-formed cell has
/// `i < j`, no self-loops and no duplicates; [`canonical_clean`] repairs
/// lists that violate this, and [`UnitCell::validate`] checks it.
#[derive(Debug, Clone, PartialEq)]
pub struct UnitCell {
    pub vertices: Vec<Vec3>,
    pub edges: Vec<(usize, usize)>,
    pub name: Option<String>,
}

impl UnitCell {
    pub fn new(vertices: Vec<Vec3>, edges: Vec<(usize, usize)>) -> Self {
        UnitCell { vertices, edges, name: None }
    }

    pub fn with_name(mut self, name: impl Into<String>) -> Self {
        self.name = Some(name.into());
        self
    }

    pub fn n_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn n_edges(&self) -> usize {
        self.edges.len()
    }

    /// Checks the structural invariants: indices in range, no self-loops,
    /// no duplicate edges (regardless of orientation), finite coordinates,
    /// and at least two vertices whenever any edge exists.
    pub fn validate(&self) -> Result<()> {
        for (idx, v) in self.vertices.iter().enumerate() {
            if !v.is_finite() {
                return Err(LatticeError::NonFiniteCoordinate(idx));
            }
        }
        if !self.edges.is_empty() && self.vertices.len() < 2 {
            return Err(LatticeError::EmptyCell);
        }
        let n = self.vertices.len();
        let mut seen = std::collections::HashSet::new();
        for &(i, j) in &self.edges {
            if i >= n || j >= n {
                return Err(LatticeError::EdgeOutOfRange { i, j, n });
            }
            if i == j {
                return Err(LatticeError::SelfLoop(i));
            }
            let key = (i.min(j), i.max(j));
            if !seen.insert(key) {
                return Err(LatticeError::DuplicateEdge(key.0, key.1));
            }
        }
        Ok(())
    }

    /// Vertex degree table over the current edge list.
    pub fn degrees(&self) -> Vec<usize> {
        let mut deg = vec![0usize; self.vertices.len()];
        for &(i, j) in &self.edges {
            if i < deg.len() {
                deg[i] += 1;
            }
            if j < deg.len() {
                deg[j] += 1;
            }
        }
        deg
    }
}

/// The axis-aligned cubic reference frame: faces at `center ± side/2`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Frame {
    pub center: Vec3,
    pub side: f64,
}

impl Frame {
    pub fn new(center: Vec3, side: f64) -> Self {
        Frame { center, side }
    }

    /// The unit frame `[0,1]^3`: the generator's coordinate space.
    pub fn unit() -> Self {
        Frame::new(Vec3::new(0.5, 0.5, 0.5), 1.0)
    }

    pub fn face_min(&self, axis: usize) -> f64 {
        self.center.component(axis) - self.side / 2.0
    }

    pub fn face_max(&self, axis: usize) -> f64 {
        self.center.component(axis) + self.side / 2.0
    }

    /// Componentwise clamp onto the frame box.
    pub fn clamp(&self, p: Vec3) -> Vec3 {
        let mut q = p;
        for axis in 0..3 {
            let lo = self.face_min(axis);
            let hi = self.face_max(axis);
            q.set_component(axis, q.component(axis).clamp(lo, hi));
        }
        q
    }
}

/// Tight axis-aligned bounding frame: center at the bounding-box midpoint,
/// side equal to the maximum per-axis extent (clamped to 1e-9).
pub fn bounding_frame(cell: &UnitCell) -> Result<Frame> {
    if cell.vertices.is_empty() {
        return Err(LatticeError::EmptyCell);
    }
    let mut lo = [f64::INFINITY; 3];
    let mut hi = [f64::NEG_INFINITY; 3];
    for v in &cell.vertices {
        for axis in 0..3 {
            lo[axis] = lo[axis].min(v.component(axis));
            hi[axis] = hi[axis].max(v.component(axis));
        }
    }
    let center = Vec3::new(
        (lo[0] + hi[0]) / 2.0,
        (lo[1] + hi[1]) / 2.0,
        (lo[2] + hi[2]) / 2.0,
    );
    let side = (hi[0] - lo[0]).max(hi[1] - lo[1]).max(hi[2] - lo[2]).max(1e-9);
    Ok(Frame::new(center, side))
}

/// Removes duplicate edges and self-loops and normalizes pairs to `i < j`.
/// Vertex order is preserved; idempotent.
pub fn canonical_clean(cell: &UnitCell) -> UnitCell {
    let n = cell.vertices.len();
    let mut seen = std::collections::HashSet::new();
    let mut edges = Vec::with_capacity(cell.edges.len());
    for &(i, j) in &cell.edges {
        if i == j || i >= n || j >= n {
            continue;
        }
        let key = (i.min(j), i.max(j));
        if seen.insert(key) {
            edges.push(key);
        }
    }
    edges.sort_unstable();
    UnitCell {
        vertices: cell.vertices.clone(),
        edges,
        name: cell.name.clone(),
    }
}

/// Union-find labeling over the edge list. Isolated vertices are singleton
/// components. Returns per-vertex component labels (0-based, in order of
/// first appearance) and the component count.
pub fn connected_components(cell: &UnitCell) -> (Vec<usize>, usize) {
    let n = cell.vertices.len();
    let mut parent: Vec<usize> = (0..n).collect();

    fn find(parent: &mut Vec<usize>, mut i: usize) -> usize {
        while parent[i] != i {
            parent[i] = parent[parent[i]];
            i = parent[i];
        }
        i
    }

    for &(i, j) in &cell.edges {
        if i >= n || j >= n {
            continue;
        }
        let (ri, rj) = (find(&mut parent, i), find(&mut parent, j));
        if ri != rj {
            let (lo, hi) = (ri.min(rj), ri.max(rj));
            parent[hi] = lo;
        }
    }

    let mut labels = vec![usize::MAX; n];
    let mut count = 0;
    for i in 0..n {
        let r = find(&mut parent, i);
        if labels[r] == usize::MAX {
            labels[r] = count;
            count += 1;
        }
        labels[i] = labels[r];
    }
    (labels, count)
}
