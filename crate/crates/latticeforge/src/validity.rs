//! Structure validity metrics: intra-cell (connectivity + symmetry) and
//! inter-cell (frame containment), plus population threshold sweeps.
//!
//! All tolerances are fractions of the frame side, so verdicts are
//! invariant under uniform scaling.

use crate::error::{LatticeError, Result};
use crate::geom::{bounding_frame, connected_components, Frame, UnitCell};
use crate::symmetry::SymmetryGroup;

/// Threshold-independent measurements backing both verdicts.
///
/// `worst_pair_deviation` is the per-vertex symmetry deviation: half the
/// largest nearest-counterpart mismatch over all (vertex, non-identity op)
/// pairs, as a fraction of the frame side. The half attributes the pair
/// mismatch evenly to its two members, so a single vertex displaced by
/// `d` from an otherwise exact structure reads as a deviation of `d/2`,
/// and a self-paired vertex (fixed point of the op) displaced by `d`
/// reads as `d`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Diagnostics {
    pub worst_pair_deviation: f64,
    pub component_count: usize,
    pub worst_boundary_excess: f64,
}

/// Verdicts for one cell at one threshold, plus the diagnostics that
/// produced them.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ValidityReport {
    pub threshold: f64,
    pub intra_valid: bool,
    pub inter_valid: bool,
    pub diagnostics: Diagnostics,
}

/// Which frame a validity check runs against.
///
/// `Explicit` is the default for generated or corrupted populations: a
/// fitted bounding frame can never be exceeded on its defining axis, which
/// would make inter-cell validity vacuous there.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum FramePolicy {
    Explicit(Frame),
    Bounding,
}

impl FramePolicy {
    pub fn unit() -> Self {
        FramePolicy::Explicit(Frame::unit())
    }

    pub fn resolve(&self, cell: &UnitCell) -> Result<Frame> {
        match self {
            FramePolicy::Explicit(frame) => Ok(*frame),
            FramePolicy::Bounding => bounding_frame(cell),
        }
    }
}

/// Computes the threshold-independent diagnostics for a cell.
pub fn diagnostics(cell: &UnitCell, group: &SymmetryGroup, frame: &Frame) -> Result<Diagnostics> {
    if cell.vertices.is_empty() {
        return Err(LatticeError::EmptyCell);
    }
    let side = frame.side;
    let (_, component_count) = connected_components(cell);

    let mut worst_pair = 0.0f64;
    for op in group.ops() {
        if op.is_identity() {
            continue;
        }
        for v in &cell.vertices {
            let image = op.apply(*v, frame);
            let mut best = f64::INFINITY;
            for w in &cell.vertices {
                let d = image.distance(w);
                if d < best {
                    best = d;
                }
            }
            let deviation = best / 2.0;
            if deviation > worst_pair {
                worst_pair = deviation;
            }
        }
    }

    let mut worst_excess = 0.0f64;
    for v in &cell.vertices {
        for axis in 0..3 {
            let c = v.component(axis);
            let excess = (frame.face_min(axis) - c).max(c - frame.face_max(axis)).max(0.0);
            if excess > worst_excess {
                worst_excess = excess;
            }
        }
    }

    Ok(Diagnostics {
        worst_pair_deviation: worst_pair / side,
        component_count,
        worst_boundary_excess: worst_excess / side,
    })
}

fn report_from(diag: Diagnostics, threshold: f64) -> ValidityReport {
    ValidityReport {
        threshold,
        intra_valid: diag.component_count == 1 && diag.worst_pair_deviation <= threshold,
        inter_valid: diag.worst_boundary_excess <= threshold,
        diagnostics: diag,
    }
}

/// Full validity report: both metrics at one threshold.
pub fn validate_cell(
    cell: &UnitCell,
    threshold: f64,
    group: &SymmetryGroup,
    frame: &Frame,
) -> Result<ValidityReport> {
    if threshold < 0.0 {
        return Err(LatticeError::NegativeThreshold(threshold));
    }
    let diag = diagnostics(cell, group, frame)?;
    Ok(report_from(diag, threshold))
}

/// Intra-cell validity: one connected component, and every vertex has a
/// symmetric counterpart (possibly itself) within tolerance under every
/// group operation.
pub fn intra_cell_valid(
    cell: &UnitCell,
    threshold: f64,
    group: &SymmetryGroup,
    frame: &Frame,
) -> Result<ValidityReport> {
    validate_cell(cell, threshold, group, frame)
}

/// Inter-cell validity: no vertex component exceeds the frame boundary by
/// more than `threshold * side` on any axis.
pub fn inter_cell_valid(cell: &UnitCell, threshold: f64, frame: &Frame) -> ValidityReport {
    let side = frame.side;
    let (_, component_count) = connected_components(cell);
    let mut worst_excess = 0.0f64;
    for v in &cell.vertices {
        for axis in 0..3 {
            let c = v.component(axis);
            let excess = (frame.face_min(axis) - c).max(c - frame.face_max(axis)).max(0.0);
            worst_excess = worst_excess.max(excess);
        }
    }
    let diag = Diagnostics {
        worst_pair_deviation: 0.0,
        component_count,
        worst_boundary_excess: worst_excess / side,
    };
    ValidityReport {
        threshold,
        intra_valid: component_count == 1,
        inter_valid: diag.worst_boundary_excess <= threshold,
        diagnostics: diag,
    }
}

/// One row of a population sweep.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepRow {
    pub threshold: f64,
    pub intra_pct: f64,
    pub inter_pct: f64,
    pub n: usize,
}

/// Per-threshold validity percentages for a population.
#[derive(Debug, Clone, PartialEq)]
pub struct ThresholdSweep {
    pub rows: Vec<SweepRow>,
}

/// Evaluates a population at each threshold. Diagnostics are computed once
/// per cell, so percentages are nondecreasing in the threshold by
/// construction and independent of evaluation order.
pub fn sweep(
    population: &[UnitCell],
    thresholds: &[f64],
    group: &SymmetryGroup,
    policy: FramePolicy,
) -> Result<ThresholdSweep> {
    if population.is_empty() {
        return Err(LatticeError::EmptyPopulation);
    }
    if thresholds.is_empty() {
        return Err(LatticeError::ThresholdsNotIncreasing);
    }
    for pair in thresholds.windows(2) {
        if pair[1] <= pair[0] {
            return Err(LatticeError::ThresholdsNotIncreasing);
        }
    }
    if thresholds[0] < 0.0 {
        return Err(LatticeError::NegativeThreshold(thresholds[0]));
    }

    let mut diags = Vec::with_capacity(population.len());
    for cell in population {
        let frame = policy.resolve(cell)?;
        diags.push(diagnostics(cell, group, &frame)?);
    }

    let n = population.len();
    let rows = thresholds
        .iter()
        .map(|&threshold| {
            let mut intra = 0usize;
            let mut inter = 0usize;
            for diag in &diags {
                let report = report_from(*diag, threshold);
                if report.intra_valid {
                    intra += 1;
                }
                if report.inter_valid {
                    inter += 1;
                }
            }
            SweepRow {
                threshold,
                intra_pct: 100.0 * intra as f64 / n as f64,
                inter_pct: 100.0 * inter as f64 / n as f64,
                n,
            }
        })
        .collect();

    Ok(ThresholdSweep { rows })
}
