//! Canonical unit-cell constructors. These are the ground-truth cells used
//! for validity checks, refinement fixed points, homogenization oracles and
//! generator training data.
//!
//! All cells are normalized to the unit frame `[0,1]^3`, use exact dyadic
//! coordinates, list boundary struts in full (tiling physics accounts for
//! sharing via fractional weights, see the homogenize module), and are
//! mirror-symmetric about the frame mid-planes.

use crate::error::{LatticeError, Result};
use crate::geom::{UnitCell, Vec3};

const NAMES: [&str; 6] = ["simple_cubic", "bcc", "fcc", "octet", "kelvin", "diamond"];

/// All catalog entry names, in fixed order.
pub fn list() -> &'static [&'static str] {
    &NAMES
}

/// Builds a catalog cell by name. Vertex order and edge lists are
/// deterministic; edges are normalized `i < j` and sorted.
pub fn make(name: &str) -> Result<UnitCell> {
    let cell = match name {
        "simple_cubic" => simple_cubic(),
        "bcc" => bcc(),
        "fcc" => fcc(),
        "octet" => octet(),
        "kelvin" => kelvin(),
        "diamond" => diamond(),
        other => return Err(LatticeError::UnknownCatalogEntry(other.to_string())),
    };
    Ok(cell.with_name(name))
}

fn corners() -> Vec<Vec3> {
    let mut v = Vec::with_capacity(8);
    for z in [0.0, 1.0] {
        for y in [0.0, 1.0] {
            for x in [0.0, 1.0] {
                v.push(Vec3::new(x, y, z));
            }
        }
    }
    v
}

/// Face centers in axis order: x=0, x=1, y=0, y=1, z=0, z=1.
fn face_centers() -> Vec<Vec3> {
    vec![
        Vec3::new(0.0, 0.5, 0.5),
        Vec3::new(1.0, 0.5, 0.5),
        Vec3::new(0.5, 0.0, 0.5),
        Vec3::new(0.5, 1.0, 0.5),
        Vec3::new(0.5, 0.5, 0.0),
        Vec3::new(0.5, 0.5, 1.0),
    ]
}

/// Edges between all vertex pairs at an exact squared distance. Catalog
/// coordinates are dyadic, so the comparison is exact in f64.
fn edges_at_sq_dist(vertices: &[Vec3], sq: f64) -> Vec<(usize, usize)> {
    let mut edges = Vec::new();
    for i in 0..vertices.len() {
        for j in (i + 1)..vertices.len() {
            let d = vertices[i] - vertices[j];
            if d.dot(&d) == sq {
                edges.push((i, j));
            }
        }
    }
    edges
}

fn simple_cubic() -> UnitCell {
    let vertices = corners();
    let edges = edges_at_sq_dist(&vertices, 1.0);
    UnitCell::new(vertices, edges)
}

fn bcc() -> UnitCell {
    let mut vertices = corners();
    vertices.push(Vec3::new(0.5, 0.5, 0.5));
    let center = vertices.len() - 1;
    let edges = (0..center).map(|i| (i, center)).collect();
    UnitCell::new(vertices, edges)
}

fn fcc() -> UnitCell {
    let mut vertices = corners();
    vertices.extend(face_centers());
    // Corner to in-face face center: squared distance 1/2.
    let mut edges = Vec::new();
    for (fi, f) in vertices.iter().enumerate().skip(8) {
        for ci in 0..8 {
            let d = vertices[ci] - *f;
            if d.dot(&d) == 0.5 {
                edges.push((ci, fi));
            }
        }
    }
    edges.sort_unstable();
    UnitCell::new(vertices, edges)
}

fn octet() -> UnitCell {
    let base = fcc();
    let mut edges = base.edges.clone();
    // The six face centers form an octahedron: 12 edges at squared
    // distance 1/2 (opposite face centers excluded by distance).
    for i in 8..14 {
        for j in (i + 1)..14 {
            let d = base.vertices[i] - base.vertices[j];
            if d.dot(&d) == 0.5 {
                edges.push((i, j));
            }
        }
    }
    edges.sort_unstable();
    UnitCell::new(base.vertices, edges)
}

/// Truncated-octahedron skeleton: 24 vertices at the permutations of
/// (0, ±1/4, ±1/2) about the cell center, 36 edges of length sqrt(2)/4.
fn kelvin() -> UnitCell {
    let mut vertices = Vec::with_capacity(24);
    let perms: [[usize; 3]; 6] = [
        [0, 1, 2],
        [0, 2, 1],
        [1, 0, 2],
        [1, 2, 0],
        [2, 0, 1],
        [2, 1, 0],
    ];
    for perm in perms {
        for sa in [-1.0, 1.0] {
            for sb in [-1.0, 1.0] {
                // Components (0, sa/4, sb/2) distributed per `perm`.
                let raw = [0.0, sa * 0.25, sb * 0.5];
                let mut p = [0.0; 3];
                for (slot, &src) in perm.iter().enumerate() {
                    p[slot] = raw[src];
                }
                vertices.push(Vec3::new(0.5 + p[0], 0.5 + p[1], 0.5 + p[2]));
            }
        }
    }
    let edges = edges_at_sq_dist(&vertices, 0.125);
    UnitCell::new(vertices, edges)
}

/// Diamond-cubic strut cell carrying both tetrahedral bond sets of the
/// conventional cell (8 corners, 6 face centers, 8 quarter-point sites,
/// 32 bonds of length sqrt(3)/4). Listing both sublattices keeps the cell
/// mirror-symmetric about the frame mid-planes; a single sublattice has no
/// axis-mirror-symmetric finite listing.
fn diamond() -> UnitCell {
    let mut vertices = corners();
    vertices.extend(face_centers());
    for z in [0.25, 0.75] {
        for y in [0.25, 0.75] {
            for x in [0.25, 0.75] {
                vertices.push(Vec3::new(x, y, z));
            }
        }
    }
    let mut edges = Vec::new();
    for t in 14..22 {
        for other in 0..14 {
            let d = vertices[t] - vertices[other];
            if d.dot(&d) == 0.1875 {
                edges.push((other, t));
            }
        }
    }
    edges.sort_unstable();
    UnitCell::new(vertices, edges)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::{bounding_frame, connected_components};

    #[test]
    fn list_is_stable_and_complete() {
        assert_eq!(list().len(), 6);
        assert!(list().contains(&"octet"));
        assert_eq!(list(), list());
    }

    #[test]
    fn unknown_name_errors() {
        assert!(matches!(
            make("gyroid"),
            Err(LatticeError::UnknownCatalogEntry(_))
        ));
    }

    #[test]
    fn expected_counts() {
        let expect = [
            ("simple_cubic", 8, 12),
            ("bcc", 9, 8),
            ("fcc", 14, 24),
            ("octet", 14, 36),
            ("kelvin", 24, 36),
            ("diamond", 22, 32),
        ];
        for (name, nv, ne) in expect {
            let cell = make(name).unwrap();
            assert_eq!(cell.n_vertices(), nv, "{name} vertex count");
            assert_eq!(cell.n_edges(), ne, "{name} edge count");
        }
    }

    #[test]
    fn cells_are_clean_connected_and_unit_framed() {
        for name in list() {
            let cell = make(name).unwrap();
            cell.validate().unwrap();
            let (_, count) = connected_components(&cell);
            assert_eq!(count, 1, "{name} must be connected");
            let frame = bounding_frame(&cell).unwrap();
            assert_eq!(frame.side, 1.0, "{name} must span the unit frame");
            assert_eq!(frame.center, Vec3::new(0.5, 0.5, 0.5));
            for v in &cell.vertices {
                for axis in 0..3 {
                    let c = v.component(axis);
                    assert!((0.0..=1.0).contains(&c), "{name} vertex out of frame");
                }
            }
        }
    }

    #[test]
    fn opposite_face_patterns_match() {
        // Periodicity: the in-face coordinate pattern of each min face
        // matches its max face exactly.
        for name in list() {
            let cell = make(name).unwrap();
            for axis in 0..3 {
                let (o1, o2) = ((axis + 1) % 3, (axis + 2) % 3);
                let mut lo: Vec<(f64, f64)> = cell
                    .vertices
                    .iter()
                    .filter(|v| v.component(axis) == 0.0)
                    .map(|v| (v.component(o1), v.component(o2)))
                    .collect();
                let mut hi: Vec<(f64, f64)> = cell
                    .vertices
                    .iter()
                    .filter(|v| v.component(axis) == 1.0)
                    .map(|v| (v.component(o1), v.component(o2)))
                    .collect();
                lo.sort_by(|a, b| a.partial_cmp(b).unwrap());
                hi.sort_by(|a, b| a.partial_cmp(b).unwrap());
                assert_eq!(lo, hi, "{name} axis {axis} boundary pattern");
            }
        }
    }

    #[test]
    fn deterministic_construction() {
        for name in list() {
            let a = make(name).unwrap();
            let b = make(name).unwrap();
            assert_eq!(a, b);
        }
    }
}
