//! LatticeForge: a periodic lattice unit-cell toolkit.
//!
//! The crate covers the full desk-scale pipeline for strut-based cubic
//! lattice metamaterials:
//!
//! * core geometry, frame isometries and dataset augmentation ([`geom`],
//!   [`symmetry`]),
//! * canonical ground-truth cells ([`catalog`]),
//! * intra-/inter-cell validity metrics and population sweeps
//!   ([`validity`]),
//! * deterministic two-stage symmetry/periodicity refinement ([`refine`]),
//! * periodic frame homogenization producing directional Young's moduli,
//!   shear moduli and Poisson ratios ([`homogenize`]),
//! * corruption-based training-data synthesis ([`corrupt`]),
//! * a property-conditioned coordinate-diffusion generator with an MLP
//!   edge predictor ([`gen`]),
//! * file formats and report emitters ([`io`]).

pub mod catalog;
pub mod corrupt;
pub mod error;
pub mod gen;
pub mod geom;
pub mod homogenize;
pub mod io;
pub mod refine;
pub mod symmetry;
pub mod validity;

pub use error::{LatticeError, Result};
pub use geom::{bounding_frame, canonical_clean, connected_components, Frame, UnitCell, Vec3};
pub use symmetry::{
    cube_rotations, permute_properties, transform_cell, CellTransform, PropertyVector,
    SymmetryGroup, SymmetryOp, SymmetryPreset,
};
