//! Frame isometries: inversion, axis-aligned mirrors, the 24 cube rotations,
//! and the property permutation induced by a rotation.
//!
//! Every operation here is a signed permutation of the axes acting about
//! the frame center, so images of dyadic-rational coordinates are exact.

use crate::error::{LatticeError, Result};
use crate::geom::{bounding_frame, Frame, UnitCell, Vec3};

/// An isometry of the cubic frame, stored as a signed permutation matrix.
/// Applied as `center + M (p - center)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct SymmetryOp {
    mat: [[i8; 3]; 3],
}

impl SymmetryOp {
    pub const IDENTITY: SymmetryOp = SymmetryOp {
        mat: [[1, 0, 0], [0, 1, 0], [0, 0, 1]],
    };

    pub const INVERSION: SymmetryOp = SymmetryOp {
        mat: [[-1, 0, 0], [0, -1, 0], [0, 0, -1]],
    };

    /// Mirror across the mid-plane perpendicular to `axis`.
    pub fn mirror(axis: usize) -> SymmetryOp {
        let mut mat = SymmetryOp::IDENTITY.mat;
        mat[axis][axis] = -1;
        SymmetryOp { mat }
    }

    fn from_signed_permutation(perm: [usize; 3], signs: [i8; 3]) -> SymmetryOp {
        let mut mat = [[0i8; 3]; 3];
        for (row, (&p, &s)) in perm.iter().zip(signs.iter()).enumerate() {
            mat[row][p] = s;
        }
        SymmetryOp { mat }
    }

    pub fn is_identity(&self) -> bool {
        *self == SymmetryOp::IDENTITY
    }

    pub fn determinant(&self) -> i8 {
        let m = &self.mat;
        m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1])
            - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
            + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
    }

    /// True for proper rotations (the 24 cube rotations).
    pub fn is_rotation(&self) -> bool {
        self.determinant() == 1
    }

    /// Image of `p` under the isometry fixing `frame.center`.
    pub fn apply(&self, p: Vec3, frame: &Frame) -> Vec3 {
        let d = p - frame.center;
        let dv = [d.x, d.y, d.z];
        let mut out = [0.0f64; 3];
        for row in 0..3 {
            let mut acc = 0.0;
            for col in 0..3 {
                let c = self.mat[row][col];
                if c != 0 {
                    acc += c as f64 * dv[col];
                }
            }
            out[row] = acc;
        }
        frame.center + Vec3::new(out[0], out[1], out[2])
    }

    /// Composition `self ∘ other` (apply `other` first).
    pub fn compose(&self, other: &SymmetryOp) -> SymmetryOp {
        let mut mat = [[0i8; 3]; 3];
        for i in 0..3 {
            for j in 0..3 {
                let mut acc = 0i8;
                for k in 0..3 {
                    acc += self.mat[i][k] * other.mat[k][j];
                }
                mat[i][j] = acc;
            }
        }
        SymmetryOp { mat }
    }

    /// Inverse (transpose, since the matrix is orthogonal with ±1 entries).
    pub fn inverse(&self) -> SymmetryOp {
        let mut mat = [[0i8; 3]; 3];
        for i in 0..3 {
            for j in 0..3 {
                mat[i][j] = self.mat[j][i];
            }
        }
        SymmetryOp { mat }
    }

    /// The axis permutation: column index carrying the nonzero entry of
    /// each row, i.e. new axis `row` reads from old axis `perm[row]`.
    pub fn axis_permutation(&self) -> [usize; 3] {
        let mut perm = [0usize; 3];
        for row in 0..3 {
            for col in 0..3 {
                if self.mat[row][col] != 0 {
                    perm[row] = col;
                }
            }
        }
        perm
    }
}

/// The 24 proper rotations of the cube in a fixed canonical order
/// (identity first; ordered by axis permutation, then sign pattern).
pub fn cube_rotations() -> Vec<SymmetryOp> {
    let perms = [
        [0, 1, 2],
        [0, 2, 1],
        [1, 0, 2],
        [1, 2, 0],
        [2, 0, 1],
        [2, 1, 0],
    ];
    let mut ops = Vec::with_capacity(24);
    for perm in perms {
        for bits in 0..8u8 {
            let signs = [
                if bits & 1 == 0 { 1i8 } else { -1 },
                if bits & 2 == 0 { 1 } else { -1 },
                if bits & 4 == 0 { 1 } else { -1 },
            ];
            let op = SymmetryOp::from_signed_permutation(perm, signs);
            if op.determinant() == 1 {
                ops.push(op);
            }
        }
    }
    debug_assert_eq!(ops.len(), 24);
    debug_assert!(ops[0].is_identity());
    ops
}

/// Named symmetry presets used by validity checks and refinement.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SymmetryPreset {
    /// {identity, point inversion}: the weakest nontrivial choice.
    Inversion,
    /// The three axis mid-plane mirrors, their compositions and inversion
    /// (order 8).
    Mirrors,
    /// The full octahedral group: 24 rotations with and without inversion
    /// (order 48).
    Cubic,
}

impl SymmetryPreset {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "inversion" => Ok(SymmetryPreset::Inversion),
            "mirrors" => Ok(SymmetryPreset::Mirrors),
            "cubic" => Ok(SymmetryPreset::Cubic),
            other => Err(LatticeError::InvalidConfig(format!(
                "unknown symmetry preset `{other}` (expected inversion|mirrors|cubic)"
            ))),
        }
    }
}

/// A closed set of frame isometries selected from a named preset.
#[derive(Debug, Clone, PartialEq)]
pub struct SymmetryGroup {
    preset: SymmetryPreset,
    ops: Vec<SymmetryOp>,
}

impl SymmetryGroup {
    pub fn preset(preset: SymmetryPreset) -> Self {
        let ops = match preset {
            SymmetryPreset::Inversion => vec![SymmetryOp::IDENTITY, SymmetryOp::INVERSION],
            SymmetryPreset::Mirrors => {
                let mx = SymmetryOp::mirror(0);
                let my = SymmetryOp::mirror(1);
                let mz = SymmetryOp::mirror(2);
                vec![
                    SymmetryOp::IDENTITY,
                    mx,
                    my,
                    mz,
                    mx.compose(&my),
                    mx.compose(&mz),
                    my.compose(&mz),
                    SymmetryOp::INVERSION,
                ]
            }
            SymmetryPreset::Cubic => {
                let mut ops = cube_rotations();
                let rotations = ops.clone();
                ops.extend(rotations.iter().map(|r| SymmetryOp::INVERSION.compose(r)));
                ops
            }
        };
        SymmetryGroup { preset, ops }
    }

    pub fn inversion() -> Self {
        Self::preset(SymmetryPreset::Inversion)
    }

    pub fn mirrors() -> Self {
        Self::preset(SymmetryPreset::Mirrors)
    }

    pub fn cubic() -> Self {
        Self::preset(SymmetryPreset::Cubic)
    }

    pub fn kind(&self) -> SymmetryPreset {
        self.preset
    }

    pub fn ops(&self) -> &[SymmetryOp] {
        &self.ops
    }

    pub fn len(&self) -> usize {
        self.ops.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ops.is_empty()
    }
}

/// A dataset-augmentation transform: one of the 24 cube rotations followed
/// by uniform scaling, both about the frame center.
#[derive(Debug, Clone, Copy)]
pub struct CellTransform {
    pub rotation: SymmetryOp,
    pub scale: f64,
}

impl CellTransform {
    pub fn new(rotation: SymmetryOp, scale: f64) -> Result<Self> {
        if !rotation.is_rotation() {
            return Err(LatticeError::NotACubeRotation);
        }
        if !(scale > 0.0) {
            return Err(LatticeError::NonPositiveScale(scale));
        }
        Ok(CellTransform { rotation, scale })
    }

    pub fn identity() -> Self {
        CellTransform { rotation: SymmetryOp::IDENTITY, scale: 1.0 }
    }
}

/// Rotates the cell about its bounding-frame center, then scales uniformly
/// about the same center. The strut radius co-scales so relative density is
/// invariant; the edge list is unchanged.
pub fn transform_cell(cell: &UnitCell, t: &CellTransform, radius: f64) -> Result<(UnitCell, f64)> {
    if !(radius > 0.0) {
        return Err(LatticeError::NonPositiveRadius(radius));
    }
    if !(t.scale > 0.0) {
        return Err(LatticeError::NonPositiveScale(t.scale));
    }
    if !t.rotation.is_rotation() {
        return Err(LatticeError::NotACubeRotation);
    }
    let frame = bounding_frame(cell)?;
    let vertices = cell
        .vertices
        .iter()
        .map(|&p| {
            let rotated = t.rotation.apply(p, &frame);
            frame.center + (rotated - frame.center) * t.scale
        })
        .collect();
    let out = UnitCell {
        vertices,
        edges: cell.edges.clone(),
        name: cell.name.clone(),
    };
    Ok((out, radius * t.scale))
}

/// The 9-component engineering property vector in the fixed order
/// `(E_x, E_y, E_z, G_yz, G_xz, G_xy, nu_yz, nu_xz, nu_xy)`.
pub type PropertyVector = [f64; 9];

/// Permutes a property vector according to the axis permutation of a cube
/// rotation. Young's moduli follow their axis; shear moduli and Poisson
/// ratios are indexed by the axis missing from their plane and follow that
/// axis. Signs are irrelevant: all nine quantities are axis-pair scalars.
pub fn permute_properties(p: &PropertyVector, rotation: &SymmetryOp) -> Result<PropertyVector> {
    if !rotation.is_rotation() {
        return Err(LatticeError::NotACubeRotation);
    }
    // New axis `a` reads from old axis `perm[a]`.
    let perm = rotation.axis_permutation();
    let mut out = [0.0; 9];
    for a in 0..3 {
        out[a] = p[perm[a]];
        out[3 + a] = p[3 + perm[a]];
        out[6 + a] = p[6 + perm[a]];
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn inversion_about_unit_frame_center() {
        let frame = Frame::unit();
        let img = SymmetryOp::INVERSION.apply(Vec3::ZERO, &frame);
        assert_eq!(img, Vec3::new(1.0, 1.0, 1.0));
    }

    #[test]
    fn mirror_across_x_midplane() {
        let frame = Frame::unit();
        let img = SymmetryOp::mirror(0).apply(Vec3::new(0.2, 0.3, 0.4), &frame);
        assert_abs_diff_eq!(img.x, 0.8, epsilon = 1e-15);
        assert_eq!(img.y, 0.3);
        assert_eq!(img.z, 0.4);
    }

    #[test]
    fn rotation_about_z() {
        // 90° about z maps (1,0,0) to (0,1,0) about the origin.
        let frame = Frame::new(Vec3::ZERO, 2.0);
        let rot = cube_rotations()
            .into_iter()
            .find(|r| {
                let img = r.apply(Vec3::new(1.0, 0.0, 0.0), &frame);
                img.distance(&Vec3::new(0.0, 1.0, 0.0)) < 1e-12
                    && r.apply(Vec3::new(0.0, 0.0, 1.0), &frame)
                        .distance(&Vec3::new(0.0, 0.0, 1.0))
                        < 1e-12
            })
            .expect("z rotation present");
        let img = rot.apply(Vec3::new(0.0, 1.0, 0.0), &frame);
        assert!(img.distance(&Vec3::new(-1.0, 0.0, 0.0)) < 1e-12);
    }

    #[test]
    fn presets_are_closed_and_frame_preserving() {
        for preset in [
            SymmetryPreset::Inversion,
            SymmetryPreset::Mirrors,
            SymmetryPreset::Cubic,
        ] {
            let group = SymmetryGroup::preset(preset);
            for a in group.ops() {
                assert_eq!(a.determinant().abs(), 1);
                for b in group.ops() {
                    let c = a.compose(b);
                    assert!(
                        group.ops().contains(&c),
                        "{preset:?} not closed under composition"
                    );
                }
            }
        }
    }

    #[test]
    fn op_inverse_roundtrip() {
        let frame = Frame::new(Vec3::new(0.3, -0.2, 0.7), 1.6);
        let p = Vec3::new(0.11, 0.52, -0.08);
        for op in SymmetryGroup::cubic().ops() {
            let roundtrip = op.apply(op.inverse().apply(p, &frame), &frame);
            assert!(roundtrip.distance(&p) < 1e-12);
        }
    }

    #[test]
    fn cube_rotation_count_and_uniqueness() {
        let rots = cube_rotations();
        assert_eq!(rots.len(), 24);
        let unique: std::collections::HashSet<_> = rots.iter().collect();
        assert_eq!(unique.len(), 24);
    }

    #[test]
    fn transform_identity_is_noop() {
        let cell = UnitCell::new(
            vec![Vec3::ZERO, Vec3::new(1.0, 0.0, 0.0)],
            vec![(0, 1)],
        );
        let (out, r) = transform_cell(&cell, &CellTransform::identity(), 0.05).unwrap();
        assert_eq!(out.vertices, cell.vertices);
        assert_eq!(r, 0.05);
    }

    #[test]
    fn transform_scale_coscales_radius() {
        let cell = UnitCell::new(
            vec![Vec3::ZERO, Vec3::new(1.0, 1.0, 1.0)],
            vec![(0, 1)],
        );
        let t = CellTransform::new(SymmetryOp::IDENTITY, 2.0).unwrap();
        let (out, r) = transform_cell(&cell, &t, 0.05).unwrap();
        let frame = bounding_frame(&out).unwrap();
        assert_abs_diff_eq!(frame.side, 2.0, epsilon = 1e-12);
        assert_abs_diff_eq!(r, 0.1, epsilon = 1e-15);
    }

    #[test]
    fn transform_scale_roundtrip() {
        let cell = UnitCell::new(
            vec![Vec3::new(0.1, 0.2, 0.3), Vec3::new(0.9, 0.8, 0.7)],
            vec![(0, 1)],
        );
        let s = 3.7;
        let up = CellTransform::new(SymmetryOp::IDENTITY, s).unwrap();
        let down = CellTransform::new(SymmetryOp::IDENTITY, 1.0 / s).unwrap();
        let (mid, r1) = transform_cell(&cell, &up, 0.01).unwrap();
        let (back, r2) = transform_cell(&mid, &down, r1).unwrap();
        for (a, b) in back.vertices.iter().zip(cell.vertices.iter()) {
            assert!(a.distance(b) < 1e-12);
        }
        assert_abs_diff_eq!(r2, 0.01, epsilon = 1e-15);
    }

    #[test]
    fn transform_rejects_nonpositive_scale() {
        assert!(CellTransform::new(SymmetryOp::IDENTITY, 0.0).is_err());
        assert!(CellTransform::new(SymmetryOp::IDENTITY, -1.0).is_err());
    }

    #[test]
    fn permute_identity_fixed() {
        let p = [1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0, 9.0];
        assert_eq!(permute_properties(&p, &SymmetryOp::IDENTITY).unwrap(), p);
    }

    #[test]
    fn permute_xy_swap() {
        // A rotation by 90° about z swaps the x and y axes.
        let frame = Frame::new(Vec3::ZERO, 2.0);
        let rot = cube_rotations()
            .into_iter()
            .find(|r| {
                r.apply(Vec3::new(1.0, 0.0, 0.0), &frame)
                    .distance(&Vec3::new(0.0, 1.0, 0.0))
                    < 1e-12
                    && r.apply(Vec3::new(0.0, 0.0, 1.0), &frame)
                        .distance(&Vec3::new(0.0, 0.0, 1.0))
                        < 1e-12
            })
            .unwrap();
        let p = [1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0, 9.0];
        let q = permute_properties(&p, &rot).unwrap();
        // E_x <-> E_y, G_yz <-> G_xz, nu_yz <-> nu_xz; the xy-plane scalars stay.
        assert_eq!(q, [2.0, 1.0, 3.0, 5.0, 4.0, 6.0, 8.0, 7.0, 9.0]);
    }

    #[test]
    fn permute_cubic_symmetric_vector_is_fixed_point() {
        let p = [1.0, 1.0, 1.0, 0.4, 0.4, 0.4, 0.3, 0.3, 0.3];
        for rot in cube_rotations() {
            assert_eq!(permute_properties(&p, &rot).unwrap(), p);
        }
    }

    #[test]
    fn permute_composes() {
        let rots = cube_rotations();
        let p = [1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0, 9.0];
        for r1 in rots.iter().take(6) {
            for r2 in rots.iter().take(6) {
                let step = permute_properties(&permute_properties(&p, r1).unwrap(), r2).unwrap();
                let combined = permute_properties(&p, &r2.compose(r1)).unwrap();
                assert_eq!(step, combined);
            }
        }
    }

    #[test]
    fn permute_rejects_improper_ops() {
        let p = [0.0; 9];
        assert!(permute_properties(&p, &SymmetryOp::INVERSION).is_err());
        assert!(permute_properties(&p, &SymmetryOp::mirror(0)).is_err());
    }
}
