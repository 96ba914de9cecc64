//! Training-data synthesis: corrupt perfect catalog cells to mimic the
//! generator's failure patterns (coordinate noise, missing or excessive
//! nodes and edges) and emit (corrupted, clean) pairs.
//!
//! Everything here is fully seeded. The RNG is ChaCha20 keyed by the
//! config seed; `make_pairs` derives one seed per pair with SplitMix64 so
//! pairs are independent of each other and reproducible by index.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rand_distr::StandardNormal;

use crate::catalog;
use crate::error::{LatticeError, Result};
use crate::geom::{bounding_frame, UnitCell, Vec3};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CorruptionConfig {
    /// Gaussian coordinate-noise stdev as a fraction of the frame side.
    pub sigma: f64,
    pub p_node_remove: f64,
    pub p_node_add: f64,
    pub p_edge_remove: f64,
    pub p_edge_add: f64,
    pub seed: u64,
}

impl Default for CorruptionConfig {
    fn default() -> Self {
        CorruptionConfig {
            sigma: 0.01,
            p_node_remove: 0.05,
            p_node_add: 0.05,
            p_edge_remove: 0.1,
            p_edge_add: 0.1,
            seed: 0,
        }
    }
}

impl CorruptionConfig {
    /// Coordinate noise only: the regime of the validity-sweep
    /// experiments.
    pub fn noise_only(sigma: f64, seed: u64) -> Self {
        CorruptionConfig {
            sigma,
            p_node_remove: 0.0,
            p_node_add: 0.0,
            p_edge_remove: 0.0,
            p_edge_add: 0.0,
            seed,
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.sigma >= 0.0) {
            return Err(LatticeError::InvalidConfig(format!(
                "sigma must be >= 0, got {}",
                self.sigma
            )));
        }
        for (name, p) in [
            ("p_node_remove", self.p_node_remove),
            ("p_node_add", self.p_node_add),
            ("p_edge_remove", self.p_edge_remove),
            ("p_edge_add", self.p_edge_add),
        ] {
            if !(0.0..=1.0).contains(&p) {
                return Err(LatticeError::InvalidConfig(format!(
                    "{name} must lie in [0, 1], got {p}"
                )));
            }
        }
        Ok(())
    }
}

/// Applies the corruption pipeline in fixed order: node removal, node
/// addition, edge removal, edge addition, coordinate noise. At least two
/// vertices are always retained. Identical (cell, config) inputs produce
/// bit-identical outputs.
pub fn corrupt(cell: &UnitCell, cfg: &CorruptionConfig) -> UnitCell {
    let mut rng = ChaCha20Rng::seed_from_u64(cfg.seed);
    let frame = bounding_frame(cell).unwrap_or(crate::geom::Frame::unit());
    let side = frame.side;
    let n_orig = cell.vertices.len();
    let e_orig = cell.edges.len();

    // (1) Per-vertex Bernoulli removal, in index order.
    let mut removed: Vec<bool> = (0..n_orig)
        .map(|_| rng.random::<f64>() < cfg.p_node_remove)
        .collect();
    let mut survivors = removed.iter().filter(|r| !**r).count();
    for flag in removed.iter_mut() {
        if survivors >= 2.min(n_orig) {
            break;
        }
        if *flag {
            *flag = false;
            survivors += 1;
        }
    }
    let mut remap = vec![usize::MAX; n_orig];
    let mut vertices: Vec<Vec3> = Vec::with_capacity(n_orig);
    for (i, v) in cell.vertices.iter().enumerate() {
        if !removed[i] {
            remap[i] = vertices.len();
            vertices.push(*v);
        }
    }
    let mut edges: Vec<(usize, usize)> = cell
        .edges
        .iter()
        .filter(|&&(i, j)| !removed[i] && !removed[j])
        .map(|&(i, j)| (remap[i], remap[j]))
        .collect();

    // (2) Add ceil(p_node_add * n) vertices uniform in the frame.
    let n_add = (cfg.p_node_add * n_orig as f64).ceil() as usize;
    for _ in 0..n_add {
        let mut p = [0.0f64; 3];
        for (axis, coord) in p.iter_mut().enumerate() {
            let lo = frame.face_min(axis);
            let hi = frame.face_max(axis);
            *coord = lo + (hi - lo) * rng.random::<f64>();
        }
        vertices.push(Vec3::new(p[0], p[1], p[2]));
    }

    // (3) Per-edge Bernoulli removal, in (post-remap) list order.
    edges.retain(|_| !(rng.random::<f64>() < cfg.p_edge_remove));

    // (4) Add ceil(p_edge_add * |E|) random non-duplicate non-loop edges.
    let e_add = (cfg.p_edge_add * e_orig as f64).ceil() as usize;
    if vertices.len() >= 2 && e_add > 0 {
        let mut present: std::collections::HashSet<(usize, usize)> = edges
            .iter()
            .map(|&(i, j)| (i.min(j), i.max(j)))
            .collect();
        let max_edges = vertices.len() * (vertices.len() - 1) / 2;
        let mut added = 0;
        let mut attempts = 0;
        while added < e_add && present.len() < max_edges && attempts < 10_000 {
            attempts += 1;
            let i = rng.random_range(0..vertices.len());
            let j = rng.random_range(0..vertices.len());
            if i == j {
                continue;
            }
            let key = (i.min(j), i.max(j));
            if present.insert(key) {
                edges.push(key);
                added += 1;
            }
        }
    }

    // (5) Independent N(0, (sigma * side)^2) noise on every coordinate of
    // every surviving vertex, in vertex then axis order.
    let noise = cfg.sigma * side;
    for v in &mut vertices {
        let ex: f64 = rng.sample(StandardNormal);
        let ey: f64 = rng.sample(StandardNormal);
        let ez: f64 = rng.sample(StandardNormal);
        *v = *v + Vec3::new(ex * noise, ey * noise, ez * noise);
    }

    UnitCell {
        vertices,
        edges,
        name: cell.name.clone(),
    }
}

/// One (corrupted, clean) training pair with its derived seed.
#[derive(Debug, Clone)]
pub struct CorruptPair {
    pub name: String,
    pub seed: u64,
    pub clean: UnitCell,
    pub corrupted: UnitCell,
}

/// SplitMix64 finalizer used to derive independent per-pair seeds from a
/// master seed and pair index.
pub fn derive_seed(master: u64, index: u64) -> u64 {
    let mut z = master
        .wrapping_add(index.wrapping_mul(0x9E37_79B9_7F4A_7C15))
        .wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Builds a deterministic dataset of (corrupted, clean) pairs over the
/// named catalog entries. The pair at (entry e, repeat j) uses seed
/// `derive_seed(master_seed, e * n_per_entry + j)`.
pub fn make_pairs(
    entries: &[&str],
    cfg: &CorruptionConfig,
    n_per_entry: usize,
    master_seed: u64,
) -> Result<Vec<CorruptPair>> {
    cfg.validate()?;
    if n_per_entry == 0 {
        return Err(LatticeError::InvalidConfig("n_per_entry must be >= 1".into()));
    }
    let mut pairs = Vec::with_capacity(entries.len() * n_per_entry);
    for (entry_idx, name) in entries.iter().enumerate() {
        let clean = catalog::make(name)?;
        for j in 0..n_per_entry {
            let index = (entry_idx * n_per_entry + j) as u64;
            let seed = derive_seed(master_seed, index);
            let pair_cfg = cfg.with_seed(seed);
            let corrupted = corrupt(&clean, &pair_cfg);
            pairs.push(CorruptPair {
                name: name.to_string(),
                seed,
                clean: clean.clone(),
                corrupted,
            });
        }
    }
    Ok(pairs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::Frame;
    use crate::symmetry::SymmetryGroup;
    use crate::validity::intra_cell_valid;

    fn zero_cfg(seed: u64) -> CorruptionConfig {
        CorruptionConfig {
            sigma: 0.0,
            p_node_remove: 0.0,
            p_node_add: 0.0,
            p_edge_remove: 0.0,
            p_edge_add: 0.0,
            seed,
        }
    }

    #[test]
    fn all_zero_parameters_is_identity() {
        let cell = catalog::make("octet").unwrap();
        let out = corrupt(&cell, &zero_cfg(42));
        assert_eq!(out, cell);
    }

    #[test]
    fn full_edge_removal_keeps_vertices() {
        let cell = catalog::make("octet").unwrap();
        let cfg = CorruptionConfig {
            p_edge_remove: 1.0,
            ..zero_cfg(1)
        };
        let out = corrupt(&cell, &cfg);
        assert_eq!(out.n_edges(), 0);
        assert_eq!(out.n_vertices(), 14);
        assert_eq!(out.vertices, cell.vertices);
    }

    #[test]
    fn same_seed_is_bit_identical() {
        let cell = catalog::make("kelvin").unwrap();
        let cfg = CorruptionConfig::default().with_seed(123);
        let a = corrupt(&cell, &cfg);
        let b = corrupt(&cell, &cfg);
        assert_eq!(a, b);
    }

    #[test]
    fn different_seeds_differ() {
        let cell = catalog::make("kelvin").unwrap();
        let a = corrupt(&cell, &CorruptionConfig::default().with_seed(1));
        let b = corrupt(&cell, &CorruptionConfig::default().with_seed(2));
        assert_ne!(a, b);
    }

    #[test]
    fn at_least_two_vertices_retained() {
        let cell = catalog::make("bcc").unwrap();
        let cfg = CorruptionConfig {
            p_node_remove: 1.0,
            ..zero_cfg(5)
        };
        let out = corrupt(&cell, &cfg);
        assert_eq!(out.n_vertices(), 2);
        // The lowest-index vertices survive the retention guard.
        assert_eq!(out.vertices[0], cell.vertices[0]);
        assert_eq!(out.vertices[1], cell.vertices[1]);
    }

    #[test]
    fn added_edges_are_clean() {
        let cell = catalog::make("simple_cubic").unwrap();
        let cfg = CorruptionConfig {
            p_edge_add: 1.0,
            ..zero_cfg(9)
        };
        let out = corrupt(&cell, &cfg);
        assert_eq!(out.n_edges(), 24);
        out.validate().unwrap();
    }

    #[test]
    fn noise_stdev_matches_config() {
        // Distributional check: empirical stdev of perturbations over many
        // seeded runs within 5% of sigma * side.
        let cell = catalog::make("octet").unwrap();
        let sigma = 0.01;
        let mut sum_sq = 0.0;
        let mut count = 0usize;
        for seed in 0..1000 {
            let out = corrupt(&cell, &CorruptionConfig::noise_only(sigma, seed));
            for (a, b) in out.vertices.iter().zip(cell.vertices.iter()) {
                let d = *a - *b;
                sum_sq += d.x * d.x + d.y * d.y + d.z * d.z;
                count += 3;
            }
        }
        let stdev = (sum_sq / count as f64).sqrt();
        assert!(
            (stdev - sigma).abs() / sigma < 0.05,
            "empirical stdev {stdev} vs sigma {sigma}"
        );
    }

    #[test]
    fn expected_edge_removal_count() {
        let cell = catalog::make("octet").unwrap();
        let p = 0.1;
        let cfg_base = CorruptionConfig {
            p_edge_remove: p,
            ..zero_cfg(0)
        };
        let runs = 1000;
        let mut total_removed = 0usize;
        for seed in 0..runs {
            let out = corrupt(&cell, &cfg_base.with_seed(seed));
            total_removed += cell.n_edges() - out.n_edges();
        }
        let mean = total_removed as f64 / runs as f64;
        let expected = p * cell.n_edges() as f64;
        let se = (cell.n_edges() as f64 * p * (1.0 - p) / runs as f64).sqrt();
        assert!(
            (mean - expected).abs() <= 3.0 * se,
            "mean removed {mean} vs expected {expected} (se {se})"
        );
    }

    #[test]
    fn make_pairs_counts_and_clean_validity() {
        let pairs = make_pairs(catalog::list(), &CorruptionConfig::default(), 10, 7).unwrap();
        assert_eq!(pairs.len(), 60);
        let group = SymmetryGroup::mirrors();
        for pair in &pairs {
            let report = intra_cell_valid(&pair.clean, 1e-9, &group, &Frame::unit()).unwrap();
            assert!(report.intra_valid, "{} clean member invalid", pair.name);
        }
    }

    #[test]
    fn make_pairs_deterministic() {
        let a = make_pairs(&["octet", "bcc"], &CorruptionConfig::default(), 3, 99).unwrap();
        let b = make_pairs(&["octet", "bcc"], &CorruptionConfig::default(), 3, 99).unwrap();
        for (pa, pb) in a.iter().zip(b.iter()) {
            assert_eq!(pa.corrupted, pb.corrupted);
            assert_eq!(pa.seed, pb.seed);
        }
    }

    #[test]
    fn default_corruption_breaks_tight_intra_validity() {
        let pairs = make_pairs(catalog::list(), &CorruptionConfig::default(), 10, 3).unwrap();
        let group = SymmetryGroup::inversion();
        let frame = Frame::unit();
        let failing = pairs
            .iter()
            .filter(|p| {
                !intra_cell_valid(&p.corrupted, 0.005, &group, &frame)
                    .map(|r| r.intra_valid)
                    .unwrap_or(false)
            })
            .count();
        assert!(
            failing * 2 >= pairs.len(),
            "only {failing} of {} corrupted cells fail at 0.005",
            pairs.len()
        );
    }

    #[test]
    fn unknown_entry_errors() {
        assert!(matches!(
            make_pairs(&["gyroid"], &CorruptionConfig::default(), 1, 0),
            Err(LatticeError::UnknownCatalogEntry(_))
        ));
    }
}
