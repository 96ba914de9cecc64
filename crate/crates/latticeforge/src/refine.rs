//! Deterministic two-stage structure refinement: node refinement
//! (merge, orbit symmetrization, image completion, frame clamping) followed
//! by edge refinement (symmetry closure, periodic boundary repair,
//! cleanup), iterated until the cell is valid at the target threshold and a
//! cycle makes no further modification.
//!
//! The module also carries the line-based text serialization an external
//! (e.g. LLM-backed) refiner would consume instead of this algorithm.

use std::collections::BTreeSet;

use crate::error::{LatticeError, Result};
use crate::geom::{canonical_clean, Frame, UnitCell, Vec3};
use crate::symmetry::SymmetryGroup;
use crate::validity::{validate_cell, FramePolicy, ValidityReport};

/// Position changes at or below this fraction of the frame side are treated
/// as "no movement": the old coordinates are kept bit-for-bit, which makes
/// refinement exactly idempotent.
const FIXPOINT_TOL: f64 = 1e-13;

/// Tolerance (fraction of side) for locating a vertex at an exact symmetry
/// image during edge closure.
const IMAGE_TOL: f64 = 1e-7;

#[derive(Debug, Clone)]
pub struct RefineConfig {
    pub group: SymmetryGroup,
    /// Vertices closer than this fraction of the side are agglomerated.
    pub merge_tol: f64,
    /// Orbit-assignment radius as a fraction of the side.
    pub snap_tol: f64,
    /// Boundary-pair matching radius as a fraction of the side.
    pub pair_tol: f64,
    /// Validity threshold the refinement tries to achieve.
    pub target_threshold: f64,
    pub max_cycles: usize,
    pub frame_policy: FramePolicy,
}

impl Default for RefineConfig {
    fn default() -> Self {
        RefineConfig {
            group: SymmetryGroup::mirrors(),
            merge_tol: 0.01,
            snap_tol: 0.05,
            pair_tol: 0.02,
            target_threshold: 0.005,
            max_cycles: 5,
            frame_policy: FramePolicy::Bounding,
        }
    }
}

impl RefineConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.merge_tol >= 0.0 && self.merge_tol < self.snap_tol) {
            return Err(LatticeError::InvalidConfig(format!(
                "require 0 <= merge_tol < snap_tol, got {} and {}",
                self.merge_tol, self.snap_tol
            )));
        }
        if self.target_threshold < 0.0 {
            return Err(LatticeError::NegativeThreshold(self.target_threshold));
        }
        if self.max_cycles == 0 {
            return Err(LatticeError::InvalidConfig("max_cycles must be >= 1".into()));
        }
        if self.pair_tol < 0.0 {
            return Err(LatticeError::InvalidConfig("pair_tol must be >= 0".into()));
        }
        Ok(())
    }
}

/// Modification counts for one refinement cycle.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct CycleStats {
    pub nodes_moved: usize,
    pub nodes_added: usize,
    pub nodes_removed: usize,
    pub edges_added: usize,
    pub edges_removed: usize,
}

impl CycleStats {
    pub fn modified(&self) -> bool {
        self.nodes_moved > 0
            || self.nodes_added > 0
            || self.nodes_removed > 0
            || self.edges_added > 0
            || self.edges_removed > 0
    }

    fn absorb(&mut self, other: CycleStats) {
        self.nodes_moved += other.nodes_moved;
        self.nodes_added += other.nodes_added;
        self.nodes_removed += other.nodes_removed;
        self.edges_added += other.edges_added;
        self.edges_removed += other.edges_removed;
    }
}

/// One cycle of the trace: what changed, and the validity report after the
/// cycle.
#[derive(Debug, Clone)]
pub struct CycleRecord {
    pub stats: CycleStats,
    pub report: ValidityReport,
}

#[derive(Debug, Clone)]
pub struct RefineTrace {
    pub cycles: Vec<CycleRecord>,
    pub converged: bool,
}

fn keep_or_move(current: Vec3, proposed: Vec3, side: f64, moved: &mut usize) -> Vec3 {
    if current.distance(&proposed) <= FIXPOINT_TOL * side {
        current
    } else {
        *moved += 1;
        proposed
    }
}

/// Stage 1 of a cycle: merge near-duplicates, symmetrize vertex orbits,
/// add missing orbit images, clamp stray orbits onto the frame.
pub fn refine_nodes(cell: &UnitCell, cfg: &RefineConfig, frame: &Frame) -> UnitCell {
    refine_nodes_internal(cell, cfg, frame).0
}

fn refine_nodes_internal(
    cell: &UnitCell,
    cfg: &RefineConfig,
    frame: &Frame,
) -> (UnitCell, CycleStats) {
    let mut stats = CycleStats::default();
    let side = frame.side;
    let n = cell.vertices.len();
    if n == 0 {
        return (cell.clone(), stats);
    }

    // (1) Agglomerate vertices within merge_tol (transitively, union-find).
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(parent: &mut Vec<usize>, mut i: usize) -> usize {
        while parent[i] != i {
            parent[i] = parent[parent[i]];
            i = parent[i];
        }
        i
    }
    let merge_dist = cfg.merge_tol * side;
    for i in 0..n {
        for j in (i + 1)..n {
            if cell.vertices[i].distance(&cell.vertices[j]) <= merge_dist {
                let (ri, rj) = (find(&mut parent, i), find(&mut parent, j));
                if ri != rj {
                    let (lo, hi) = (ri.min(rj), ri.max(rj));
                    parent[hi] = lo;
                }
            }
        }
    }

    let mut cluster_of = vec![usize::MAX; n];
    let mut positions: Vec<Vec3> = Vec::new();
    let mut cluster_members: Vec<Vec<usize>> = Vec::new();
    for i in 0..n {
        let r = find(&mut parent, i);
        if cluster_of[r] == usize::MAX {
            cluster_of[r] = positions.len();
            positions.push(Vec3::ZERO);
            cluster_members.push(Vec::new());
        }
        cluster_of[i] = cluster_of[r];
        cluster_members[cluster_of[i]].push(i);
    }
    for (c, members) in cluster_members.iter().enumerate() {
        if members.len() == 1 {
            positions[c] = cell.vertices[members[0]];
        } else {
            let mut sum = Vec3::ZERO;
            for &m in members {
                sum = sum + cell.vertices[m];
            }
            positions[c] = sum * (1.0 / members.len() as f64);
            stats.nodes_removed += members.len() - 1;
            stats.nodes_moved += 1;
        }
    }

    let mut edges: Vec<(usize, usize)> = cell
        .edges
        .iter()
        .map(|&(i, j)| (cluster_of[i], cluster_of[j]))
        .collect();

    // (2) Orbit symmetrization: vertices in index order seed orbits; each
    // op claims the nearest vertex within snap_tol; first claim wins.
    let ops = cfg.group.ops();
    let snap_dist = cfg.snap_tol * side;
    let m = positions.len();
    let mut assigned: Vec<Option<usize>> = vec![None; m];
    let mut orbit_claims: Vec<Vec<Option<usize>>> = Vec::new();
    let mut orbit_canonical: Vec<Vec3> = Vec::new();

    for seed in 0..m {
        if assigned[seed].is_some() {
            continue;
        }
        let orbit_id = orbit_claims.len();
        assigned[seed] = Some(orbit_id);
        let mut claims: Vec<Option<usize>> = vec![None; ops.len()];
        claims[0] = Some(seed);
        for (k, op) in ops.iter().enumerate().skip(1) {
            let target = op.apply(positions[seed], frame);
            let mut best = usize::MAX;
            let mut best_dist = f64::INFINITY;
            for (w, pos) in positions.iter().enumerate() {
                let d = target.distance(pos);
                if d < best_dist {
                    best_dist = d;
                    best = w;
                }
            }
            if best != usize::MAX
                && best_dist <= snap_dist
                && (assigned[best].is_none() || assigned[best] == Some(orbit_id))
            {
                assigned[best] = Some(orbit_id);
                claims[k] = Some(best);
            }
        }

        // Canonical position: average of members pulled back through their
        // claiming ops. Exactly symmetric orbits short-circuit to the seed
        // position so perfect cells round-trip bit-identically.
        let mut pulled = Vec::new();
        for (k, claim) in claims.iter().enumerate() {
            if let Some(w) = claim {
                pulled.push(ops[k].inverse().apply(positions[*w], frame));
            }
        }
        let spread = pulled
            .iter()
            .map(|p| p.distance(&pulled[0]))
            .fold(0.0f64, f64::max);
        let mut canonical = if spread <= FIXPOINT_TOL * side {
            pulled[0]
        } else {
            let mut sum = Vec3::ZERO;
            for p in &pulled {
                sum = sum + *p;
            }
            sum * (1.0 / pulled.len() as f64)
        };

        // (4) Frame clamp, applied to the canonical position so the whole
        // orbit moves uniformly.
        canonical = frame.clamp(canonical);

        orbit_claims.push(claims);
        orbit_canonical.push(canonical);
    }

    // Move members onto the exact images of their orbit's canonical
    // position; (3) add vertices for images that claimed nothing. Every
    // op slot ends up with a vertex at its exact image: a vertex claimed
    // by several slots sits at its first claiming op's image, and any
    // later slot whose image differs materially is filled by a fresh
    // vertex. This keeps the output exactly group-symmetric.
    let dedupe_tol = 1e-12 * side;
    let mut new_positions = positions.clone();
    for (orbit_id, claims) in orbit_claims.iter().enumerate() {
        let canonical = orbit_canonical[orbit_id];
        let mut placed: Vec<bool> = vec![false; m];
        for (k, claim) in claims.iter().enumerate() {
            let image = ops[k].apply(canonical, frame);
            let filled = match claim {
                Some(w) if !placed[*w] => {
                    new_positions[*w] =
                        keep_or_move(positions[*w], image, side, &mut stats.nodes_moved);
                    placed[*w] = true;
                    true
                }
                Some(w) => new_positions[*w].distance(&image) <= dedupe_tol,
                None => false,
            };
            if !filled {
                let dup_existing = new_positions.iter().any(|p| p.distance(&image) <= dedupe_tol);
                if !dup_existing {
                    new_positions.push(image);
                    stats.nodes_added += 1;
                }
            }
        }
    }

    edges.retain(|&(i, j)| i != j);
    let out = canonical_clean(&UnitCell {
        vertices: new_positions,
        edges,
        name: cell.name.clone(),
    });
    (out, stats)
}

/// Stage 2 of a cycle: close the edge set under the symmetry group, repair
/// periodic boundary pairs, drop redundant elements.
pub fn refine_edges(cell: &UnitCell, cfg: &RefineConfig, frame: &Frame) -> UnitCell {
    refine_edges_internal(cell, cfg, frame).0
}

fn find_vertex_at(positions: &[Vec3], target: Vec3, tol: f64) -> Option<usize> {
    let mut best = None;
    let mut best_dist = tol;
    for (w, p) in positions.iter().enumerate() {
        let d = target.distance(p);
        if d <= best_dist {
            best_dist = d;
            best = Some(w);
        }
    }
    best
}

fn refine_edges_internal(
    cell: &UnitCell,
    cfg: &RefineConfig,
    frame: &Frame,
) -> (UnitCell, CycleStats) {
    let mut stats = CycleStats::default();
    let side = frame.side;
    let mut positions = cell.vertices.clone();
    let input_edge_count = canonical_clean(cell).edges.len();
    let mut edge_set: BTreeSet<(usize, usize)> =
        canonical_clean(cell).edges.into_iter().collect();

    // (1) Symmetry closure: for every edge and op, connect the vertices at
    // the images of both endpoints when they exist.
    let ops = cfg.group.ops();
    let image_tol = IMAGE_TOL * side;
    let base_edges: Vec<(usize, usize)> = edge_set.iter().copied().collect();
    for &(u, v) in &base_edges {
        for op in ops.iter().skip(1) {
            let pu = op.apply(positions[u], frame);
            let pv = op.apply(positions[v], frame);
            if let (Some(a), Some(b)) = (
                find_vertex_at(&positions, pu, image_tol),
                find_vertex_at(&positions, pv, image_tol),
            ) {
                if a != b {
                    edge_set.insert((a.min(b), a.max(b)));
                }
            }
        }
    }

    // (2) Periodicity repair, axis by axis: every min-face vertex needs a
    // max-face partner matching in the in-face coordinates; matched pairs
    // have their in-face coordinates averaged, unmatched ones get a
    // translated copy together with their in-face boundary edges.
    let pair_dist = cfg.pair_tol * side;
    let mut periodic_adds: BTreeSet<usize> = BTreeSet::new();
    for axis in 0..3 {
        let lo = frame.face_min(axis);
        let hi = frame.face_max(axis);
        let (o1, o2) = ((axis + 1) % 3, (axis + 2) % 3);
        let on_min: Vec<usize> = (0..positions.len())
            .filter(|&i| (positions[i].component(axis) - lo).abs() <= pair_dist)
            .collect();
        let on_max: Vec<usize> = (0..positions.len())
            .filter(|&i| (positions[i].component(axis) - hi).abs() <= pair_dist)
            .collect();

        let mut taken = vec![false; on_max.len()];
        let mut partner: std::collections::BTreeMap<usize, usize> = Default::default();
        let mut unmatched: Vec<usize> = Vec::new();
        for &i in &on_min {
            let mut best: Option<(usize, f64)> = None;
            for (slot, &j) in on_max.iter().enumerate() {
                if taken[slot] {
                    continue;
                }
                let d1 = (positions[i].component(o1) - positions[j].component(o1)).abs();
                let d2 = (positions[i].component(o2) - positions[j].component(o2)).abs();
                if d1 <= pair_dist && d2 <= pair_dist {
                    let d = (d1 * d1 + d2 * d2).sqrt();
                    if best.map_or(true, |(_, bd)| d < bd) {
                        best = Some((slot, d));
                    }
                }
            }
            match best {
                Some((slot, _)) => {
                    taken[slot] = true;
                    let j = on_max[slot];
                    partner.insert(i, j);
                    for o in [o1, o2] {
                        let a = positions[i].component(o);
                        let b = positions[j].component(o);
                        let avg = (a + b) / 2.0;
                        if (a - avg).abs() > FIXPOINT_TOL * side {
                            positions[i].set_component(o, avg);
                            positions[j].set_component(o, avg);
                            stats.nodes_moved += 2;
                        }
                    }
                }
                None => unmatched.push(i),
            }
        }

        // Translated copies for unmatched min-face vertices.
        let mut copy_of: std::collections::BTreeMap<usize, usize> = Default::default();
        for &i in &unmatched {
            let mut p = positions[i];
            p.set_component(axis, p.component(axis) + side);
            let new_idx = positions.len();
            positions.push(p);
            periodic_adds.insert(new_idx);
            copy_of.insert(i, new_idx);
            stats.nodes_added += 1;
        }
        // Copy in-face boundary edges by translation: the translated copy
        // of an edge between two min-face vertices connects their max-face
        // counterparts (matched partners or fresh copies).
        let current_edges: Vec<(usize, usize)> = edge_set.iter().copied().collect();
        for &i in &unmatched {
            let translated_i = copy_of[&i];
            for &(a, b) in &current_edges {
                let w = if a == i {
                    b
                } else if b == i {
                    a
                } else {
                    continue;
                };
                if (positions[w].component(axis) - lo).abs() > pair_dist {
                    continue;
                }
                let translated_w = partner.get(&w).copied().or_else(|| copy_of.get(&w).copied());
                if let Some(tw) = translated_w {
                    if tw != translated_i {
                        edge_set.insert((tw.min(translated_i), tw.max(translated_i)));
                    }
                }
            }
        }
    }

    // (3) Remove self-loops, duplicates and degree-0 vertices (except the
    // periodic partners this call just added).
    let mut degree = vec![0usize; positions.len()];
    for &(a, b) in &edge_set {
        degree[a] += 1;
        degree[b] += 1;
    }
    let mut remap = vec![usize::MAX; positions.len()];
    let mut kept_positions = Vec::with_capacity(positions.len());
    for (i, p) in positions.iter().enumerate() {
        if degree[i] > 0 || periodic_adds.contains(&i) {
            remap[i] = kept_positions.len();
            kept_positions.push(*p);
        } else {
            stats.nodes_removed += 1;
        }
    }
    let final_edges: Vec<(usize, usize)> = edge_set
        .iter()
        .map(|&(a, b)| (remap[a], remap[b]))
        .collect();

    let out = canonical_clean(&UnitCell {
        vertices: kept_positions,
        edges: final_edges,
        name: cell.name.clone(),
    });
    let out_edge_count = out.edges.len();
    if out_edge_count > input_edge_count {
        stats.edges_added += out_edge_count - input_edge_count;
    } else {
        stats.edges_removed += input_edge_count - out_edge_count;
    }
    (out, stats)
}

/// Alternates node and edge refinement until the cell is valid at the
/// target threshold and a full cycle makes no modification, or max_cycles
/// is reached. `converged` reports validity of the final cell at the
/// target threshold.
pub fn refine(cell: &UnitCell, cfg: &RefineConfig) -> Result<(UnitCell, RefineTrace)> {
    cfg.validate()?;
    if cell.vertices.is_empty() {
        return Err(LatticeError::EmptyCell);
    }
    let frame = cfg.frame_policy.resolve(cell)?;

    let mut current = canonical_clean(cell);
    let mut cycles = Vec::new();
    let mut converged = false;
    for _ in 0..cfg.max_cycles {
        let (after_nodes, node_stats) = refine_nodes_internal(&current, cfg, &frame);
        let (after_edges, edge_stats) = refine_edges_internal(&after_nodes, cfg, &frame);
        let mut stats = node_stats;
        stats.absorb(edge_stats);

        let report = validate_cell(&after_edges, cfg.target_threshold, &cfg.group, &frame)?;
        let valid = report.intra_valid && report.inter_valid;
        let modified = stats.modified();
        current = after_edges;
        cycles.push(CycleRecord { stats, report });
        converged = valid;
        if valid && !modified {
            break;
        }
    }

    Ok((current, RefineTrace { cycles, converged }))
}

/// Serializes a cell to the line-based text template (LF endings, six
/// decimal places):
///
/// ```text
/// LATTICE <name>
/// FRAME <cx> <cy> <cz> <side>
/// NODE <id> <x> <y> <z>
/// EDGE <i> <j>
/// END
/// ```
pub fn serialize_text(cell: &UnitCell, frame: &Frame) -> String {
    let mut out = String::new();
    let name = cell.name.as_deref().unwrap_or("unnamed");
    out.push_str(&format!("LATTICE {name}\n"));
    out.push_str(&format!(
        "FRAME {:.6} {:.6} {:.6} {:.6}\n",
        frame.center.x, frame.center.y, frame.center.z, frame.side
    ));
    for (id, v) in cell.vertices.iter().enumerate() {
        out.push_str(&format!("NODE {id} {:.6} {:.6} {:.6}\n", v.x, v.y, v.z));
    }
    let mut edges: Vec<(usize, usize)> = cell
        .edges
        .iter()
        .map(|&(i, j)| (i.min(j), i.max(j)))
        .collect();
    edges.sort_unstable();
    for (i, j) in edges {
        out.push_str(&format!("EDGE {i} {j}\n"));
    }
    out.push_str("END\n");
    out
}

/// Parses the text template back into a cell and its frame. Errors carry
/// the 1-based line number.
pub fn parse_text(text: &str) -> Result<(UnitCell, Frame)> {
    fn err(line: usize, reason: impl Into<String>) -> LatticeError {
        LatticeError::TextParse { line, reason: reason.into() }
    }
    fn parse_f64(tok: &str, line: usize) -> Result<f64> {
        tok.parse::<f64>()
            .map_err(|_| err(line, format!("invalid number `{tok}`")))
    }

    let mut name: Option<String> = None;
    let mut frame: Option<Frame> = None;
    let mut vertices: Vec<Vec3> = Vec::new();
    let mut edges: Vec<(usize, usize)> = Vec::new();
    let mut ended = false;

    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.trim_end();
        if line.is_empty() {
            continue;
        }
        if ended {
            return Err(err(line_no, "content after END"));
        }
        let mut parts = line.split_whitespace();
        let tag = parts.next().unwrap();
        match tag {
            "LATTICE" => {
                if name.is_some() {
                    return Err(err(line_no, "duplicate LATTICE line"));
                }
                let rest: Vec<&str> = parts.collect();
                if rest.is_empty() {
                    return Err(err(line_no, "LATTICE requires a name"));
                }
                name = Some(rest.join(" "));
            }
            "FRAME" => {
                if name.is_none() {
                    return Err(err(line_no, "FRAME before LATTICE"));
                }
                let vals: Vec<&str> = parts.collect();
                if vals.len() != 4 {
                    return Err(err(line_no, "FRAME requires cx cy cz side"));
                }
                let cx = parse_f64(vals[0], line_no)?;
                let cy = parse_f64(vals[1], line_no)?;
                let cz = parse_f64(vals[2], line_no)?;
                let side = parse_f64(vals[3], line_no)?;
                if !(side > 0.0) {
                    return Err(err(line_no, "frame side must be positive"));
                }
                frame = Some(Frame::new(Vec3::new(cx, cy, cz), side));
            }
            "NODE" => {
                if frame.is_none() {
                    return Err(err(line_no, "NODE before FRAME"));
                }
                let vals: Vec<&str> = parts.collect();
                if vals.len() != 4 {
                    return Err(err(line_no, "NODE requires id x y z"));
                }
                let id: usize = vals[0]
                    .parse()
                    .map_err(|_| err(line_no, format!("invalid node id `{}`", vals[0])))?;
                if id != vertices.len() {
                    return Err(err(
                        line_no,
                        format!("node ids must ascend from 0, expected {}", vertices.len()),
                    ));
                }
                let x = parse_f64(vals[1], line_no)?;
                let y = parse_f64(vals[2], line_no)?;
                let z = parse_f64(vals[3], line_no)?;
                vertices.push(Vec3::new(x, y, z));
            }
            "EDGE" => {
                let vals: Vec<&str> = parts.collect();
                if vals.len() != 2 {
                    return Err(err(line_no, "EDGE requires i j"));
                }
                let i: usize = vals[0]
                    .parse()
                    .map_err(|_| err(line_no, format!("invalid edge index `{}`", vals[0])))?;
                let j: usize = vals[1]
                    .parse()
                    .map_err(|_| err(line_no, format!("invalid edge index `{}`", vals[1])))?;
                if i >= vertices.len() || j >= vertices.len() {
                    return Err(err(
                        line_no,
                        format!("edge ({i}, {j}) references unknown node id"),
                    ));
                }
                if i == j {
                    return Err(err(line_no, format!("self-loop edge ({i}, {j})")));
                }
                edges.push((i.min(j), i.max(j)));
            }
            "END" => {
                ended = true;
            }
            other => return Err(err(line_no, format!("unknown tag `{other}`"))),
        }
    }
    if !ended {
        return Err(err(text.lines().count().max(1), "missing END"));
    }
    let frame = frame.ok_or_else(|| err(1, "missing FRAME"))?;
    let name = name.ok_or_else(|| err(1, "missing LATTICE"))?;
    let mut cell = UnitCell::new(vertices, edges);
    cell.name = Some(name);
    Ok((cell, frame))
}
