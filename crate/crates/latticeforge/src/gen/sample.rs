//! Ancestral DDPM sampling with the clean-coordinate parameterization:
//! at each step the model predicts x0 and the posterior mean is formed
//! from the schedule coefficients.

use ndarray::Array2;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rand_distr::StandardNormal;

use super::config::PROP_DIM;
use super::model::{forward, Model};
use crate::error::{LatticeError, Result};
use crate::geom::Vec3;

/// Draws `n_vertices` coordinates by iterative denoising from pure noise.
/// Fully seeded: the initial noise and the per-step perturbations come
/// from one ChaCha20 stream in a fixed order (no draw at t = 1).
pub(super) fn sample_coordinates(
    model: &Model,
    props_raw: &[f64; PROP_DIM],
    n_vertices: usize,
    seed: u64,
) -> Result<Array2<f64>> {
    if props_raw.iter().any(|p| !p.is_finite()) {
        return Err(LatticeError::NonFiniteProperty);
    }
    if n_vertices == 0 || n_vertices > model.config.n_max {
        return Err(LatticeError::VertexCountOutOfRange {
            n: n_vertices,
            max: model.config.n_max,
        });
    }
    let z = model.norm.apply(props_raw);
    let mask = vec![true; n_vertices];
    let schedule = &model.schedule;
    let t_max = schedule.t_steps;

    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let mut x = Array2::from_shape_fn((n_vertices, 3), |_| rng.sample::<f64, _>(StandardNormal));

    for t in (1..=t_max).rev() {
        let (xhat, _) = forward(&model.params, &model.config, &x, t, &z, &mask);
        if t == 1 {
            x = xhat;
            break;
        }
        let bar_t = schedule.alpha_bar(t);
        let bar_prev = schedule.alpha_bar(t - 1);
        let beta = schedule.beta(t);
        let alpha = schedule.alpha(t);
        let c0 = bar_prev.sqrt() * beta / (1.0 - bar_t);
        let ct = alpha.sqrt() * (1.0 - bar_prev) / (1.0 - bar_t);
        let sigma = ((1.0 - bar_prev) / (1.0 - bar_t) * beta).sqrt();
        for i in 0..n_vertices {
            for c in 0..3 {
                let noise: f64 = rng.sample(StandardNormal);
                x[(i, c)] = c0 * xhat[(i, c)] + ct * x[(i, c)] + sigma * noise;
            }
        }
    }
    Ok(x)
}

/// RMSD between a sampled point set and a reference set under greedy
/// globally-nearest assignment without replacement.
pub fn greedy_match_rmsd(sampled: &Array2<f64>, reference: &[Vec3]) -> f64 {
    let n = sampled.nrows().min(reference.len());
    if n == 0 {
        return 0.0;
    }
    let mut dists = Vec::new();
    for i in 0..sampled.nrows() {
        let p = Vec3::new(sampled[(i, 0)], sampled[(i, 1)], sampled[(i, 2)]);
        for (j, r) in reference.iter().enumerate() {
            dists.push((p.distance(r), i, j));
        }
    }
    dists.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
    let mut used_s = vec![false; sampled.nrows()];
    let mut used_r = vec![false; reference.len()];
    let mut sum_sq = 0.0;
    let mut matched = 0;
    for (d, i, j) in dists {
        if used_s[i] || used_r[j] {
            continue;
        }
        used_s[i] = true;
        used_r[j] = true;
        sum_sq += d * d;
        matched += 1;
        if matched == n {
            break;
        }
    }
    (sum_sq / n as f64).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gen::config::GenConfig;
    use crate::gen::model::PropNormalizer;
    use crate::gen::params::ModelParams;
    use crate::gen::schedule::NoiseSchedule;

    fn tiny_model() -> Model {
        let config = GenConfig {
            n_max: 6,
            token_dim: 16,
            heads: 2,
            blocks: 1,
            edge_hidden: 8,
            ..GenConfig::default()
        };
        let params = ModelParams::init(&config, 21);
        Model {
            config,
            schedule: NoiseSchedule::linear(10, 1e-4, 0.02).unwrap(),
            params,
            norm: PropNormalizer::identity(),
            examples: Vec::new(),
        }
    }

    #[test]
    fn sample_shape_and_determinism() {
        let model = tiny_model();
        let props = [0.1; PROP_DIM];
        let a = model.sample(&props, 5, 7).unwrap();
        let b = model.sample(&props, 5, 7).unwrap();
        let c = model.sample(&props, 5, 8).unwrap();
        assert_eq!(a.dim(), (5, 3));
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn sample_rejects_bad_vertex_count() {
        let model = tiny_model();
        let props = [0.1; PROP_DIM];
        assert!(matches!(
            model.sample(&props, 0, 1),
            Err(LatticeError::VertexCountOutOfRange { .. })
        ));
        assert!(matches!(
            model.sample(&props, 7, 1),
            Err(LatticeError::VertexCountOutOfRange { .. })
        ));
    }

    #[test]
    fn greedy_rmsd_of_identical_sets_is_zero() {
        let reference = vec![
            Vec3::new(0.0, 0.0, 0.0),
            Vec3::new(1.0, 0.0, 0.0),
            Vec3::new(0.0, 1.0, 0.0),
        ];
        let sampled = Array2::from_shape_fn((3, 3), |(i, j)| reference[2 - i].to_array()[j]);
        assert!(greedy_match_rmsd(&sampled, &reference) < 1e-15);
    }

    #[test]
    fn greedy_rmsd_measures_displacement() {
        let reference = vec![Vec3::new(0.0, 0.0, 0.0), Vec3::new(1.0, 0.0, 0.0)];
        let mut sampled = Array2::zeros((2, 3));
        sampled[(0, 0)] = 1.0;
        sampled[(1, 0)] = 0.1;
        // Greedy matches (1.0, ref1) exactly, then (0.1, ref0) at 0.1.
        let rmsd = greedy_match_rmsd(&sampled, &reference);
        assert!((rmsd - (0.01f64 / 2.0).sqrt()).abs() < 1e-12);
    }
}
