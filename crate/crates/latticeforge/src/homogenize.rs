//! Periodic homogenization of a strut lattice treated as a 3D frame.
//!
//! The cell is assembled from two-node Euler-Bernoulli frame elements
//! (axial + torsion + bending, 6 dofs per node). Boundary struts listed in
//! full are counted with sharing weights 2^(-m) so tiled copies are not
//! double-counted. The six unit macroscopic strain cases are solved with
//! periodic master-slave constraints and the effective stiffness follows
//! from the energy bilinear form; engineering constants come from the
//! compliance.

use nalgebra::{DMatrix, DVector, Matrix6, SMatrix};

use crate::error::{LatticeError, Result};
use crate::geom::{bounding_frame, connected_components, Frame, UnitCell, Vec3};

/// Default boundary tolerance (fraction of side) for face detection,
/// sharing weights and periodic pairing. Catalog feature spacing is
/// >= 0.25 of the side, and refined noisy cells sit within ~0.005 of the
/// faces, so 0.01 separates the two cleanly.
pub const DEFAULT_BOUNDARY_TOL: f64 = 0.01;

type Mat12 = SMatrix<f64, 12, 12>;

/// Solid material: Young's modulus (relative units) and Poisson ratio.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MaterialSpec {
    pub e_s: f64,
    pub nu_s: f64,
}

impl Default for MaterialSpec {
    fn default() -> Self {
        MaterialSpec { e_s: 1.0, nu_s: 0.3 }
    }
}

impl MaterialSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.e_s > 0.0) {
            return Err(LatticeError::InvalidConfig(format!(
                "solid modulus must be positive, got {}",
                self.e_s
            )));
        }
        if !(self.nu_s > -1.0 && self.nu_s < 0.5) {
            return Err(LatticeError::InvalidConfig(format!(
                "solid Poisson ratio must lie in (-1, 0.5), got {}",
                self.nu_s
            )));
        }
        Ok(())
    }

    pub fn g_s(&self) -> f64 {
        self.e_s / (2.0 * (1.0 + self.nu_s))
    }
}

/// Circular strut cross-section.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StrutSection {
    pub radius: f64,
}

impl StrutSection {
    pub fn new(radius: f64) -> Result<Self> {
        if !(radius > 0.0) {
            return Err(LatticeError::NonPositiveRadius(radius));
        }
        Ok(StrutSection { radius })
    }

    pub fn area(&self) -> f64 {
        std::f64::consts::PI * self.radius * self.radius
    }

    pub fn bending_inertia(&self) -> f64 {
        std::f64::consts::PI * self.radius.powi(4) / 4.0
    }

    pub fn torsion_constant(&self) -> f64 {
        std::f64::consts::PI * self.radius.powi(4) / 2.0
    }
}

/// Slenderness guard: Euler-Bernoulli theory wants r well below the strut
/// length. Returns a warning string when r exceeds a quarter of the
/// shortest strut.
pub fn slenderness_warning(cell: &UnitCell, section: &StrutSection) -> Option<String> {
    let mut min_len = f64::INFINITY;
    for &(i, j) in &cell.edges {
        min_len = min_len.min(cell.vertices[i].distance(&cell.vertices[j]));
    }
    if min_len.is_finite() && section.radius > 0.25 * min_len {
        Some(format!(
            "strut radius {} exceeds 0.25 x shortest strut length {:.6}; beam theory degrades",
            section.radius, min_len
        ))
    } else {
        None
    }
}

/// Effective stiffness in Voigt order (exx, eyy, ezz, gyz, gxz, gxy) with
/// engineering shear strains, in units of the solid modulus.
#[derive(Debug, Clone, PartialEq)]
pub struct StiffnessMatrix {
    c: Matrix6<f64>,
}

impl StiffnessMatrix {
    pub fn from_matrix(c: Matrix6<f64>) -> Self {
        StiffnessMatrix { c }
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.c[(row, col)]
    }

    pub fn as_matrix(&self) -> &Matrix6<f64> {
        &self.c
    }

    fn max_abs(&self) -> f64 {
        self.c.iter().fold(0.0f64, |m, v| m.max(v.abs()))
    }

    /// Symmetric to 1e-8 of the largest entry.
    pub fn is_symmetric(&self) -> bool {
        let scale = self.max_abs().max(f64::MIN_POSITIVE);
        for i in 0..6 {
            for j in (i + 1)..6 {
                if (self.c[(i, j)] - self.c[(j, i)]).abs() > 1e-8 * scale {
                    return false;
                }
            }
        }
        true
    }

    /// Positive semidefinite: eigenvalues >= -1e-10 of the largest entry.
    pub fn is_psd(&self) -> bool {
        let scale = self.max_abs().max(f64::MIN_POSITIVE);
        let sym = (self.c + self.c.transpose()) * 0.5;
        let eig = nalgebra::SymmetricEigen::new(sym);
        eig.eigenvalues.iter().all(|&l| l >= -1e-10 * scale)
    }
}

/// Directional engineering constants plus relative density, all
/// dimensionless (moduli relative to the solid modulus).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ElasticProperties {
    pub e_x: f64,
    pub e_y: f64,
    pub e_z: f64,
    pub g_yz: f64,
    pub g_xz: f64,
    pub g_xy: f64,
    pub nu_yz: f64,
    pub nu_xz: f64,
    pub nu_xy: f64,
    pub rel_density: f64,
}

impl ElasticProperties {
    /// The 9-component property vector in augmentation order.
    pub fn to_property_vector(&self) -> crate::symmetry::PropertyVector {
        [
            self.e_x, self.e_y, self.e_z, self.g_yz, self.g_xz, self.g_xy, self.nu_yz,
            self.nu_xz, self.nu_xy,
        ]
    }
}

/// Fraction of a boundary strut owned by this cell: 2^(-m) where m counts
/// the axes on which both endpoints lie on the same frame face within
/// `tol * side`.
pub fn sharing_weight(a: Vec3, b: Vec3, frame: &Frame, tol: f64) -> f64 {
    let eps = tol * frame.side;
    let mut m = 0u32;
    for axis in 0..3 {
        for face in [frame.face_min(axis), frame.face_max(axis)] {
            if (a.component(axis) - face).abs() <= eps && (b.component(axis) - face).abs() <= eps {
                m += 1;
            }
        }
    }
    0.5f64.powi(m as i32)
}

/// Local axes for a strut: local x along the strut, local z from the cross
/// product with a global helper axis, local y completing the triad.
fn local_axes(dir: Vec3) -> (Vec3, Vec3, Vec3) {
    let x = dir.normalized();
    let helper = if x.dot(&Vec3::new(0.0, 0.0, 1.0)).abs() > 0.999 {
        Vec3::new(0.0, 1.0, 0.0)
    } else {
        Vec3::new(0.0, 0.0, 1.0)
    };
    let z = x.cross(&helper).normalized();
    let y = z.cross(&x);
    (x, y, z)
}

/// 12x12 global-frame stiffness of one Euler-Bernoulli frame element.
/// Dof order per node: (ux, uy, uz, rx, ry, rz).
pub fn element_stiffness(
    a: Vec3,
    b: Vec3,
    section: &StrutSection,
    material: &MaterialSpec,
) -> Result<Mat12> {
    element_stiffness_checked(a, b, section, material, 0, 1, 1.0)
}

fn element_stiffness_checked(
    a: Vec3,
    b: Vec3,
    section: &StrutSection,
    material: &MaterialSpec,
    idx_a: usize,
    idx_b: usize,
    min_len: f64,
) -> Result<Mat12> {
    let dir = b - a;
    let len = dir.norm();
    if len <= 1e-9 * min_len {
        return Err(LatticeError::ZeroLengthStrut(idx_a, idx_b));
    }
    let e = material.e_s;
    let g = material.g_s();
    let area = section.area();
    let inertia = section.bending_inertia();
    let torsion = section.torsion_constant();

    let mut k = Mat12::zeros();
    let ax = e * area / len;
    k[(0, 0)] = ax;
    k[(6, 6)] = ax;
    k[(0, 6)] = -ax;
    k[(6, 0)] = -ax;

    let to = g * torsion / len;
    k[(3, 3)] = to;
    k[(9, 9)] = to;
    k[(3, 9)] = -to;
    k[(9, 3)] = -to;

    let b1 = 12.0 * e * inertia / len.powi(3);
    let b2 = 6.0 * e * inertia / len.powi(2);
    let b3 = 4.0 * e * inertia / len;
    let b4 = 2.0 * e * inertia / len;

    // Bending in the local x-y plane (deflection v, rotation rz).
    let vy = [1usize, 5, 7, 11];
    let kv = [
        [b1, b2, -b1, b2],
        [b2, b3, -b2, b4],
        [-b1, -b2, b1, -b2],
        [b2, b4, -b2, b3],
    ];
    for (r, &dr) in vy.iter().enumerate() {
        for (c, &dc) in vy.iter().enumerate() {
            k[(dr, dc)] = kv[r][c];
        }
    }

    // Bending in the local x-z plane (deflection w, rotation ry).
    let wz = [2usize, 4, 8, 10];
    let kw = [
        [b1, -b2, -b1, -b2],
        [-b2, b3, b2, b4],
        [-b1, b2, b1, b2],
        [-b2, b4, b2, b3],
    ];
    for (r, &dr) in wz.iter().enumerate() {
        for (c, &dc) in wz.iter().enumerate() {
            k[(dr, dc)] = kw[r][c];
        }
    }

    // Transform to global coordinates: K_g = T^T K_l T with T carrying the
    // local axis rows in four 3x3 blocks.
    let (lx, ly, lz) = local_axes(dir);
    let lambda = [lx.to_array(), ly.to_array(), lz.to_array()];
    let mut t = Mat12::zeros();
    for block in 0..4 {
        for r in 0..3 {
            for c in 0..3 {
                t[(block * 3 + r, block * 3 + c)] = lambda[r][c];
            }
        }
    }
    Ok(t.transpose() * k * t)
}

/// A master-slave periodic constraint: the slave vertex is the master's
/// translate across `axis`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PeriodicPair {
    pub master: usize,
    pub slave: usize,
    pub axis: usize,
}

/// Groups vertices into periodic equivalence classes: positions equal
/// modulo the frame side (within `tol * side` per axis). Corner and edge
/// vertices related by multi-axis translations land in one class.
fn periodic_classes(cell: &UnitCell, frame: &Frame, tol: f64) -> Vec<usize> {
    let n = cell.vertices.len();
    let side = frame.side;
    let eps = tol * side;
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(parent: &mut Vec<usize>, mut i: usize) -> usize {
        while parent[i] != i {
            parent[i] = parent[parent[i]];
            i = parent[i];
        }
        i
    }
    for i in 0..n {
        for j in (i + 1)..n {
            let mut equivalent = true;
            for axis in 0..3 {
                let d = cell.vertices[i].component(axis) - cell.vertices[j].component(axis);
                let wrapped = d - side * (d / side).round();
                if wrapped.abs() > eps {
                    equivalent = false;
                    break;
                }
            }
            if equivalent {
                let (ri, rj) = (find(&mut parent, i), find(&mut parent, j));
                if ri != rj {
                    let (lo, hi) = (ri.min(rj), ri.max(rj));
                    parent[hi] = lo;
                }
            }
        }
    }
    let mut labels = vec![usize::MAX; n];
    let mut count = 0usize;
    for i in 0..n {
        let r = find(&mut parent, i);
        if labels[r] == usize::MAX {
            labels[r] = count;
            count += 1;
        }
        labels[i] = labels[r];
    }
    labels
}

/// Per-axis master-slave pairing of boundary vertices. Every max-face
/// vertex must pair with exactly one min-face vertex whose in-face
/// coordinates match modulo the side, and vice versa; an unmatched
/// boundary vertex is an error (refine first).
pub fn periodic_pairs(cell: &UnitCell, frame: &Frame, tol: f64) -> Result<Vec<PeriodicPair>> {
    let side = frame.side;
    let eps = tol * side;
    let mut pairs = Vec::new();
    for axis in 0..3 {
        let lo = frame.face_min(axis);
        let hi = frame.face_max(axis);
        let on_min: Vec<usize> = (0..cell.vertices.len())
            .filter(|&i| (cell.vertices[i].component(axis) - lo).abs() <= eps)
            .collect();
        let on_max: Vec<usize> = (0..cell.vertices.len())
            .filter(|&i| (cell.vertices[i].component(axis) - hi).abs() <= eps)
            .collect();

        let unmatched_err = |index: usize| {
            let v = cell.vertices[index];
            LatticeError::UnmatchedBoundaryVertex { index, x: v.x, y: v.y, z: v.z, axis }
        };

        let (o1, o2) = ((axis + 1) % 3, (axis + 2) % 3);
        let in_face_match = |s: usize, m: usize| -> Option<f64> {
            let mut dist_sq = 0.0;
            for o in [o1, o2] {
                let d = cell.vertices[s].component(o) - cell.vertices[m].component(o);
                let wrapped = d - side * (d / side).round();
                if wrapped.abs() > eps {
                    return None;
                }
                dist_sq += d * d;
            }
            Some(dist_sq)
        };

        let mut taken = vec![false; on_min.len()];
        for &s in &on_max {
            let mut best: Option<(usize, f64)> = None;
            for (slot, &m) in on_min.iter().enumerate() {
                if taken[slot] {
                    continue;
                }
                if let Some(d) = in_face_match(s, m) {
                    if best.map_or(true, |(_, bd)| d < bd) {
                        best = Some((slot, d));
                    }
                }
            }
            let (slot, _) = best.ok_or_else(|| unmatched_err(s))?;
            taken[slot] = true;
            pairs.push(PeriodicPair { master: on_min[slot], slave: s, axis });
        }
        if let Some(slot) = taken.iter().position(|t| !t) {
            return Err(unmatched_err(on_min[slot]));
        }
    }
    Ok(pairs)
}

/// Volume fraction of solid material: sum of w_e * A * L_e over struts,
/// divided by the frame volume. Node-overlap volume is ignored.
pub fn relative_density(cell: &UnitCell, section: &StrutSection, frame: &Frame) -> f64 {
    relative_density_with_tol(cell, section, frame, DEFAULT_BOUNDARY_TOL)
}

pub fn relative_density_with_tol(
    cell: &UnitCell,
    section: &StrutSection,
    frame: &Frame,
    tol: f64,
) -> f64 {
    let area = section.area();
    let mut volume = 0.0;
    for &(i, j) in &cell.edges {
        let a = cell.vertices[i];
        let b = cell.vertices[j];
        let w = sharing_weight(a, b, frame, tol);
        volume += w * area * a.distance(&b);
    }
    volume / frame.side.powi(3)
}

/// Voigt unit strain as a symmetric strain tensor (engineering shears).
fn strain_tensor(voigt: &[f64; 6]) -> [[f64; 3]; 3] {
    [
        [voigt[0], voigt[5] / 2.0, voigt[4] / 2.0],
        [voigt[5] / 2.0, voigt[1], voigt[3] / 2.0],
        [voigt[4] / 2.0, voigt[3] / 2.0, voigt[2]],
    ]
}

struct Assembly {
    n: usize,
    positions: Vec<Vec3>,
    k_global: DMatrix<f64>,
    reduction: DMatrix<f64>,
    chol: nalgebra::Cholesky<f64, nalgebra::Dyn>,
    volume: f64,
}

impl Assembly {
    fn build(
        cell: &UnitCell,
        frame: &Frame,
        section: &StrutSection,
        material: &MaterialSpec,
        tol: f64,
    ) -> Result<Assembly> {
        material.validate()?;
        if !(section.radius > 0.0) {
            return Err(LatticeError::NonPositiveRadius(section.radius));
        }
        cell.validate()?;
        if cell.vertices.is_empty() || cell.edges.is_empty() {
            return Err(LatticeError::EmptyCell);
        }
        let (_, components) = connected_components(cell);
        if components != 1 {
            return Err(LatticeError::Disconnected { components });
        }
        periodic_pairs(cell, frame, tol)?;

        let n = cell.vertices.len();
        let mut k_global = DMatrix::<f64>::zeros(6 * n, 6 * n);
        for &(i, j) in &cell.edges {
            let a = cell.vertices[i];
            let b = cell.vertices[j];
            let w = sharing_weight(a, b, frame, tol);
            let ke = element_stiffness_checked(a, b, section, material, i, j, frame.side)?;
            let dofs: Vec<usize> = (0..6)
                .map(|d| 6 * i + d)
                .chain((0..6).map(|d| 6 * j + d))
                .collect();
            for (r, &dr) in dofs.iter().enumerate() {
                for (c, &dc) in dofs.iter().enumerate() {
                    k_global[(dr, dc)] += w * ke[(r, c)];
                }
            }
        }

        // Periodic reduction: one 6-dof block per equivalence class; the
        // class of vertex 0 has its 3 translational fluctuation dofs
        // pinned to remove rigid translations (rotational dofs carry no
        // rigid mode under periodic constraints).
        let classes = periodic_classes(cell, frame, tol);
        let n_classes = classes.iter().copied().max().unwrap() + 1;
        let pinned_class = classes[0];
        let mut col_offset = vec![usize::MAX; n_classes];
        let mut next = 0usize;
        for (class, offset) in col_offset.iter_mut().enumerate() {
            *offset = next;
            next += if class == pinned_class { 3 } else { 6 };
        }
        let m = next;
        let mut reduction = DMatrix::<f64>::zeros(6 * n, m);
        for (v, &class) in classes.iter().enumerate() {
            let base = col_offset[class];
            if class == pinned_class {
                for d in 0..3 {
                    reduction[(6 * v + 3 + d, base + d)] = 1.0;
                }
            } else {
                for d in 0..6 {
                    reduction[(6 * v + d, base + d)] = 1.0;
                }
            }
        }

        let k_red = reduction.transpose() * &k_global * &reduction;
        let chol = match nalgebra::Cholesky::new(k_red.clone()) {
            Some(c) => c,
            None => {
                let eig = nalgebra::SymmetricEigen::new(k_red);
                let max_eig = eig.eigenvalues.iter().fold(0.0f64, |a, &b| a.max(b.abs()));
                let zero_modes = eig
                    .eigenvalues
                    .iter()
                    .filter(|&&l| l.abs() <= 1e-10 * max_eig.max(f64::MIN_POSITIVE))
                    .count();
                return Err(LatticeError::Mechanism { zero_modes });
            }
        };

        Ok(Assembly {
            n,
            positions: cell.vertices.clone(),
            k_global,
            reduction,
            chol,
            volume: frame.side.powi(3),
        })
    }

    /// Full displacement vector (affine + periodic fluctuation) for a
    /// macroscopic Voigt strain.
    fn solve(&self, voigt: &[f64; 6]) -> DVector<f64> {
        let eps = strain_tensor(voigt);
        let mut affine = DVector::<f64>::zeros(6 * self.n);
        for (v, p) in self.positions.iter().enumerate() {
            let x = p.to_array();
            for r in 0..3 {
                affine[6 * v + r] = eps[r][0] * x[0] + eps[r][1] * x[1] + eps[r][2] * x[2];
            }
        }
        let rhs = -(self.reduction.transpose() * (&self.k_global * &affine));
        let q = self.chol.solve(&rhs);
        &self.reduction * q + affine
    }

    #[cfg(test)]
    fn energy(&self, a: &DVector<f64>) -> f64 {
        0.5 * a.dot(&(&self.k_global * a))
    }
}

/// Homogenizes against the cell's bounding frame with the default boundary
/// tolerance.
pub fn homogenize(
    cell: &UnitCell,
    section: &StrutSection,
    material: &MaterialSpec,
) -> Result<StiffnessMatrix> {
    let frame = bounding_frame(cell)?;
    homogenize_in_frame(cell, &frame, section, material, DEFAULT_BOUNDARY_TOL)
}

/// Homogenizes against an explicit frame. Solves the six unit-strain cases
/// with periodic constraints and returns the symmetrized stiffness.
pub fn homogenize_in_frame(
    cell: &UnitCell,
    frame: &Frame,
    section: &StrutSection,
    material: &MaterialSpec,
    tol: f64,
) -> Result<StiffnessMatrix> {
    let assembly = Assembly::build(cell, frame, section, material, tol)?;
    let mut solutions = Vec::with_capacity(6);
    for k in 0..6 {
        let mut voigt = [0.0; 6];
        voigt[k] = 1.0;
        solutions.push(assembly.solve(&voigt));
    }
    let loads: Vec<DVector<f64>> = solutions.iter().map(|a| &assembly.k_global * a).collect();
    let mut c = Matrix6::<f64>::zeros();
    for k in 0..6 {
        for l in 0..6 {
            c[(k, l)] = solutions[k].dot(&loads[l]) / assembly.volume;
        }
    }
    let c = (c + c.transpose()) * 0.5;
    Ok(StiffnessMatrix::from_matrix(c))
}

/// Engineering constants from the compliance S = C^-1:
/// E_i = 1/S_ii, G from the shear diagonal, nu_ij = -S_ji/S_ii.
pub fn extract_engineering(c: &StiffnessMatrix, rel_density: f64) -> Result<ElasticProperties> {
    let s = c
        .as_matrix()
        .try_inverse()
        .ok_or(LatticeError::SingularStiffness)?;
    Ok(ElasticProperties {
        e_x: 1.0 / s[(0, 0)],
        e_y: 1.0 / s[(1, 1)],
        e_z: 1.0 / s[(2, 2)],
        g_yz: 1.0 / s[(3, 3)],
        g_xz: 1.0 / s[(4, 4)],
        g_xy: 1.0 / s[(5, 5)],
        nu_yz: -s[(2, 1)] / s[(1, 1)],
        nu_xz: -s[(2, 0)] / s[(0, 0)],
        nu_xy: -s[(1, 0)] / s[(0, 0)],
        rel_density,
    })
}

/// One-shot pipeline: homogenize in the cell's bounding frame and extract
/// the engineering constants plus relative density.
pub fn effective_properties(
    cell: &UnitCell,
    section: &StrutSection,
    material: &MaterialSpec,
) -> Result<(StiffnessMatrix, ElasticProperties)> {
    let frame = bounding_frame(cell)?;
    effective_properties_in_frame(cell, &frame, section, material, DEFAULT_BOUNDARY_TOL)
}

pub fn effective_properties_in_frame(
    cell: &UnitCell,
    frame: &Frame,
    section: &StrutSection,
    material: &MaterialSpec,
    tol: f64,
) -> Result<(StiffnessMatrix, ElasticProperties)> {
    let c = homogenize_in_frame(cell, frame, section, material, tol)?;
    let density = relative_density_with_tol(cell, section, frame, tol);
    let props = extract_engineering(&c, density)?;
    Ok((c, props))
}
