//! Named parameter tensors for the denoiser and the edge predictor.
//! Biases and normalization gains are stored as (1, d) rows so every
//! tensor is an `Array2<f64>` and can be traversed uniformly for the
//! optimizer, the finite-difference check and serialization.

use ndarray::Array2;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rand_distr::StandardNormal;

use super::config::{GenConfig, PROP_DIM};

#[derive(Debug, Clone, PartialEq)]
pub struct BlockParams {
    pub ln1_g: Array2<f64>,
    pub ln1_b: Array2<f64>,
    pub wq: Array2<f64>,
    pub bq: Array2<f64>,
    pub wk: Array2<f64>,
    pub bk: Array2<f64>,
    pub wv: Array2<f64>,
    pub bv: Array2<f64>,
    pub wo: Array2<f64>,
    pub bo: Array2<f64>,
    pub ln2_g: Array2<f64>,
    pub ln2_b: Array2<f64>,
    pub wp: Array2<f64>,
    pub bp: Array2<f64>,
    pub wco: Array2<f64>,
    pub bco: Array2<f64>,
    pub ln3_g: Array2<f64>,
    pub ln3_b: Array2<f64>,
    pub w1: Array2<f64>,
    pub b1: Array2<f64>,
    pub w2: Array2<f64>,
    pub b2: Array2<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub embed_w: Array2<f64>,
    pub embed_b: Array2<f64>,
    pub time_w: Array2<f64>,
    pub time_b: Array2<f64>,
    pub blocks: Vec<BlockParams>,
    pub head_w: Array2<f64>,
    pub head_b: Array2<f64>,
    pub edge_w1: Array2<f64>,
    pub edge_b1: Array2<f64>,
    pub edge_w2: Array2<f64>,
    pub edge_b2: Array2<f64>,
    pub edge_head_w: Array2<f64>,
    pub edge_head_b: Array2<f64>,
}

fn randn(rng: &mut ChaCha20Rng, rows: usize, cols: usize, scale: f64) -> Array2<f64> {
    Array2::from_shape_fn((rows, cols), |_| rng.sample::<f64, _>(StandardNormal) * scale)
}

impl ModelParams {
    /// Seeded initialization: weights ~ N(0, 1/fan_in), biases zero,
    /// normalization gains one. The output projection of each residual
    /// branch (attention out, conditioning out, feed-forward out) starts
    /// at zero so the initial network is the identity stream plus the
    /// coordinate embedding, which trains much faster than a deep random
    /// stack.
    pub fn init(config: &GenConfig, seed: u64) -> Self {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let d = config.token_dim;
        let de = config.edge_hidden;
        let ff = 4 * d;
        let w = |rng: &mut ChaCha20Rng, r: usize, c: usize| {
            let scale = 1.0 / (r as f64).sqrt();
            randn(rng, r, c, scale)
        };
        let blocks = (0..config.blocks)
            .map(|_| BlockParams {
                ln1_g: Array2::ones((1, d)),
                ln1_b: Array2::zeros((1, d)),
                wq: w(&mut rng, d, d),
                bq: Array2::zeros((1, d)),
                wk: w(&mut rng, d, d),
                bk: Array2::zeros((1, d)),
                wv: w(&mut rng, d, d),
                bv: Array2::zeros((1, d)),
                wo: Array2::zeros((d, d)),
                bo: Array2::zeros((1, d)),
                ln2_g: Array2::ones((1, d)),
                ln2_b: Array2::zeros((1, d)),
                wp: w(&mut rng, PROP_DIM, d),
                bp: Array2::zeros((1, d)),
                wco: Array2::zeros((d, d)),
                bco: Array2::zeros((1, d)),
                ln3_g: Array2::ones((1, d)),
                ln3_b: Array2::zeros((1, d)),
                w1: w(&mut rng, d, ff),
                b1: Array2::zeros((1, ff)),
                w2: Array2::zeros((ff, d)),
                b2: Array2::zeros((1, d)),
            })
            .collect();
        ModelParams {
            embed_w: w(&mut rng, 3, d),
            embed_b: Array2::zeros((1, d)),
            time_w: w(&mut rng, d, d),
            time_b: Array2::zeros((1, d)),
            blocks,
            head_w: w(&mut rng, d, 3),
            head_b: Array2::zeros((1, 3)),
            edge_w1: w(&mut rng, 3 + PROP_DIM, de),
            edge_b1: Array2::zeros((1, de)),
            edge_w2: w(&mut rng, de, de),
            edge_b2: Array2::zeros((1, de)),
            edge_head_w: w(&mut rng, 3 * de, 1),
            edge_head_b: Array2::zeros((1, 1)),
        }
    }

    /// Zero tensors with the shapes implied by a config.
    pub fn zeros(config: &GenConfig) -> Self {
        let d = config.token_dim;
        let de = config.edge_hidden;
        let ff = 4 * d;
        let blocks = (0..config.blocks)
            .map(|_| BlockParams {
                ln1_g: Array2::zeros((1, d)),
                ln1_b: Array2::zeros((1, d)),
                wq: Array2::zeros((d, d)),
                bq: Array2::zeros((1, d)),
                wk: Array2::zeros((d, d)),
                bk: Array2::zeros((1, d)),
                wv: Array2::zeros((d, d)),
                bv: Array2::zeros((1, d)),
                wo: Array2::zeros((d, d)),
                bo: Array2::zeros((1, d)),
                ln2_g: Array2::zeros((1, d)),
                ln2_b: Array2::zeros((1, d)),
                wp: Array2::zeros((PROP_DIM, d)),
                bp: Array2::zeros((1, d)),
                wco: Array2::zeros((d, d)),
                bco: Array2::zeros((1, d)),
                ln3_g: Array2::zeros((1, d)),
                ln3_b: Array2::zeros((1, d)),
                w1: Array2::zeros((d, ff)),
                b1: Array2::zeros((1, ff)),
                w2: Array2::zeros((ff, d)),
                b2: Array2::zeros((1, d)),
            })
            .collect();
        ModelParams {
            embed_w: Array2::zeros((3, d)),
            embed_b: Array2::zeros((1, d)),
            time_w: Array2::zeros((d, d)),
            time_b: Array2::zeros((1, d)),
            blocks,
            head_w: Array2::zeros((d, 3)),
            head_b: Array2::zeros((1, 3)),
            edge_w1: Array2::zeros((3 + PROP_DIM, de)),
            edge_b1: Array2::zeros((1, de)),
            edge_w2: Array2::zeros((de, de)),
            edge_b2: Array2::zeros((1, de)),
            edge_head_w: Array2::zeros((3 * de, 1)),
            edge_head_b: Array2::zeros((1, 1)),
        }
    }

    /// Zero tensors with the same shapes; the gradient/optimizer buffer.
    pub fn zeros_like(&self) -> Self {
        let zb = |b: &BlockParams| BlockParams {
            ln1_g: Array2::zeros(b.ln1_g.dim()),
            ln1_b: Array2::zeros(b.ln1_b.dim()),
            wq: Array2::zeros(b.wq.dim()),
            bq: Array2::zeros(b.bq.dim()),
            wk: Array2::zeros(b.wk.dim()),
            bk: Array2::zeros(b.bk.dim()),
            wv: Array2::zeros(b.wv.dim()),
            bv: Array2::zeros(b.bv.dim()),
            wo: Array2::zeros(b.wo.dim()),
            bo: Array2::zeros(b.bo.dim()),
            ln2_g: Array2::zeros(b.ln2_g.dim()),
            ln2_b: Array2::zeros(b.ln2_b.dim()),
            wp: Array2::zeros(b.wp.dim()),
            bp: Array2::zeros(b.bp.dim()),
            wco: Array2::zeros(b.wco.dim()),
            bco: Array2::zeros(b.bco.dim()),
            ln3_g: Array2::zeros(b.ln3_g.dim()),
            ln3_b: Array2::zeros(b.ln3_b.dim()),
            w1: Array2::zeros(b.w1.dim()),
            b1: Array2::zeros(b.b1.dim()),
            w2: Array2::zeros(b.w2.dim()),
            b2: Array2::zeros(b.b2.dim()),
        };
        ModelParams {
            embed_w: Array2::zeros(self.embed_w.dim()),
            embed_b: Array2::zeros(self.embed_b.dim()),
            time_w: Array2::zeros(self.time_w.dim()),
            time_b: Array2::zeros(self.time_b.dim()),
            blocks: self.blocks.iter().map(zb).collect(),
            head_w: Array2::zeros(self.head_w.dim()),
            head_b: Array2::zeros(self.head_b.dim()),
            edge_w1: Array2::zeros(self.edge_w1.dim()),
            edge_b1: Array2::zeros(self.edge_b1.dim()),
            edge_w2: Array2::zeros(self.edge_w2.dim()),
            edge_b2: Array2::zeros(self.edge_b2.dim()),
            edge_head_w: Array2::zeros(self.edge_head_w.dim()),
            edge_head_b: Array2::zeros(self.edge_head_b.dim()),
        }
    }

    /// Tensor names in serialization order.
    pub fn tensor_names(&self) -> Vec<String> {
        let mut names = vec![
            "embed.w".to_string(),
            "embed.b".to_string(),
            "time.w".to_string(),
            "time.b".to_string(),
        ];
        for i in 0..self.blocks.len() {
            for field in [
                "ln1.g", "ln1.b", "attn.wq", "attn.bq", "attn.wk", "attn.bk", "attn.wv",
                "attn.bv", "attn.wo", "attn.bo", "ln2.g", "ln2.b", "cond.wp", "cond.bp",
                "cond.wco", "cond.bco", "ln3.g", "ln3.b", "ff.w1", "ff.b1", "ff.w2", "ff.b2",
            ] {
                names.push(format!("block{i}.{field}"));
            }
        }
        names.extend(
            [
                "head.w",
                "head.b",
                "edge.w1",
                "edge.b1",
                "edge.w2",
                "edge.b2",
                "edge_head.w",
                "edge_head.b",
            ]
            .map(String::from),
        );
        names
    }

    pub fn tensor(&self, name: &str) -> Option<&Array2<f64>> {
        let direct = match name {
            "embed.w" => Some(&self.embed_w),
            "embed.b" => Some(&self.embed_b),
            "time.w" => Some(&self.time_w),
            "time.b" => Some(&self.time_b),
            "head.w" => Some(&self.head_w),
            "head.b" => Some(&self.head_b),
            "edge.w1" => Some(&self.edge_w1),
            "edge.b1" => Some(&self.edge_b1),
            "edge.w2" => Some(&self.edge_w2),
            "edge.b2" => Some(&self.edge_b2),
            "edge_head.w" => Some(&self.edge_head_w),
            "edge_head.b" => Some(&self.edge_head_b),
            _ => None,
        };
        if direct.is_some() {
            return direct;
        }
        let (idx, field) = Self::split_block_name(name)?;
        let block = self.blocks.get(idx)?;
        Some(match field {
            "ln1.g" => &block.ln1_g,
            "ln1.b" => &block.ln1_b,
            "attn.wq" => &block.wq,
            "attn.bq" => &block.bq,
            "attn.wk" => &block.wk,
            "attn.bk" => &block.bk,
            "attn.wv" => &block.wv,
            "attn.bv" => &block.bv,
            "attn.wo" => &block.wo,
            "attn.bo" => &block.bo,
            "ln2.g" => &block.ln2_g,
            "ln2.b" => &block.ln2_b,
            "cond.wp" => &block.wp,
            "cond.bp" => &block.bp,
            "cond.wco" => &block.wco,
            "cond.bco" => &block.bco,
            "ln3.g" => &block.ln3_g,
            "ln3.b" => &block.ln3_b,
            "ff.w1" => &block.w1,
            "ff.b1" => &block.b1,
            "ff.w2" => &block.w2,
            "ff.b2" => &block.b2,
            _ => return None,
        })
    }

    pub fn tensor_mut(&mut self, name: &str) -> Option<&mut Array2<f64>> {
        match name {
            "embed.w" => return Some(&mut self.embed_w),
            "embed.b" => return Some(&mut self.embed_b),
            "time.w" => return Some(&mut self.time_w),
            "time.b" => return Some(&mut self.time_b),
            "head.w" => return Some(&mut self.head_w),
            "head.b" => return Some(&mut self.head_b),
            "edge.w1" => return Some(&mut self.edge_w1),
            "edge.b1" => return Some(&mut self.edge_b1),
            "edge.w2" => return Some(&mut self.edge_w2),
            "edge.b2" => return Some(&mut self.edge_b2),
            "edge_head.w" => return Some(&mut self.edge_head_w),
            "edge_head.b" => return Some(&mut self.edge_head_b),
            _ => {}
        }
        let (idx, field) = Self::split_block_name(name)?;
        let block = self.blocks.get_mut(idx)?;
        Some(match field {
            "ln1.g" => &mut block.ln1_g,
            "ln1.b" => &mut block.ln1_b,
            "attn.wq" => &mut block.wq,
            "attn.bq" => &mut block.bq,
            "attn.wk" => &mut block.wk,
            "attn.bk" => &mut block.bk,
            "attn.wv" => &mut block.wv,
            "attn.bv" => &mut block.bv,
            "attn.wo" => &mut block.wo,
            "attn.bo" => &mut block.bo,
            "ln2.g" => &mut block.ln2_g,
            "ln2.b" => &mut block.ln2_b,
            "cond.wp" => &mut block.wp,
            "cond.bp" => &mut block.bp,
            "cond.wco" => &mut block.wco,
            "cond.bco" => &mut block.bco,
            "ln3.g" => &mut block.ln3_g,
            "ln3.b" => &mut block.ln3_b,
            "ff.w1" => &mut block.w1,
            "ff.b1" => &mut block.b1,
            "ff.w2" => &mut block.w2,
            "ff.b2" => &mut block.b2,
            _ => return None,
        })
    }

    fn split_block_name(name: &str) -> Option<(usize, &str)> {
        let rest = name.strip_prefix("block")?;
        let dot = rest.find('.')?;
        let idx: usize = rest[..dot].parse().ok()?;
        Some((idx, &rest[dot + 1..]))
    }

    /// Applies `f` over corresponding tensors of self and `other` (e.g.
    /// an optimizer update), in the fixed tensor order.
    pub fn zip_apply(&mut self, other: &ModelParams, mut f: impl FnMut(&mut f64, f64)) {
        for name in self.tensor_names() {
            let src = other.tensor(&name).expect("matching tensor").clone();
            let dst = self.tensor_mut(&name).expect("matching tensor");
            for (a, &b) in dst.iter_mut().zip(src.iter()) {
                f(a, b);
            }
        }
    }

    pub fn all_finite(&self) -> bool {
        self.tensor_names()
            .iter()
            .all(|n| self.tensor(n).unwrap().iter().all(|v| v.is_finite()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tensor_lookup_roundtrip() {
        let config = GenConfig {
            n_max: 8,
            token_dim: 16,
            heads: 2,
            blocks: 2,
            edge_hidden: 8,
            ..GenConfig::default()
        };
        let params = ModelParams::init(&config, 1);
        let names = params.tensor_names();
        assert_eq!(names.len(), 4 + 2 * 22 + 8);
        for name in &names {
            assert!(params.tensor(name).is_some(), "missing {name}");
        }
        assert!(params.tensor("block9.ff.w1").is_none());
        assert!(params.tensor("garbage").is_none());
    }

    #[test]
    fn init_is_seed_deterministic() {
        let config = GenConfig::default();
        let a = ModelParams::init(&config, 7);
        let b = ModelParams::init(&config, 7);
        let c = ModelParams::init(&config, 8);
        assert_eq!(a, b);
        assert_ne!(a, c);
        assert!(a.all_finite());
    }
}
