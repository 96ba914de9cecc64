//! The denoiser: token embedding plus timestep features, B transformer
//! sub-blocks (masked self-attention, property-query conditioning
//! attention whose single-slot output is broadcast back onto the tokens,
//! feed-forward; all pre-normalized with residuals), and a coordinate
//! head. Padding tokens are excluded as attention keys and zeroed at the
//! output, so they cannot influence real vertices.

use ndarray::{Array1, Array2, Axis};

use super::config::{GenConfig, PROP_DIM};
use super::nn;
use super::params::{BlockParams, ModelParams};
use super::sample::sample_coordinates;
use super::schedule::NoiseSchedule;
use crate::error::{LatticeError, Result};

/// z-score normalization for property vectors; statistics come from the
/// training set. Near-constant components fall back to unit scale.
#[derive(Debug, Clone, PartialEq)]
pub struct PropNormalizer {
    pub mean: [f64; PROP_DIM],
    pub std: [f64; PROP_DIM],
}

impl PropNormalizer {
    pub fn identity() -> Self {
        PropNormalizer { mean: [0.0; PROP_DIM], std: [1.0; PROP_DIM] }
    }

    pub fn fit(vectors: &[[f64; PROP_DIM]]) -> Self {
        let n = vectors.len().max(1) as f64;
        let mut mean = [0.0; PROP_DIM];
        for v in vectors {
            for (m, x) in mean.iter_mut().zip(v.iter()) {
                *m += x;
            }
        }
        for m in mean.iter_mut() {
            *m /= n;
        }
        let mut std = [0.0; PROP_DIM];
        for v in vectors {
            for ((s, x), m) in std.iter_mut().zip(v.iter()).zip(mean.iter()) {
                let c = x - m;
                *s += c * c;
            }
        }
        for s in std.iter_mut() {
            *s = (*s / n).sqrt();
            if *s < 1e-12 {
                *s = 1.0;
            }
        }
        PropNormalizer { mean, std }
    }

    pub fn apply(&self, raw: &[f64; PROP_DIM]) -> [f64; PROP_DIM] {
        let mut out = [0.0; PROP_DIM];
        for i in 0..PROP_DIM {
            out[i] = (raw[i] - self.mean[i]) / self.std[i];
        }
        out
    }
}

/// Sinusoidal timestep features of width d.
fn timestep_features(t: usize, d: usize) -> Array1<f64> {
    let half = d / 2;
    let mut out = Array1::zeros(d);
    for i in 0..half {
        let freq = (-(10_000f64.ln()) * i as f64 / half.max(1) as f64).exp();
        let angle = t as f64 * freq;
        out[2 * i] = angle.sin();
        out[2 * i + 1] = angle.cos();
    }
    out
}

pub(super) struct AttnCache {
    pub ln: nn::LayerNormCache,
    pub ln_out: Array2<f64>,
    pub q: Array2<f64>,
    pub k: Array2<f64>,
    pub v: Array2<f64>,
    /// Per-head attention probability matrices (query rows x key cols).
    pub probs: Vec<Array2<f64>>,
    pub concat: Array2<f64>,
}

pub(super) struct CondCache {
    pub ln: nn::LayerNormCache,
    pub ln_out: Array2<f64>,
    pub query: Array1<f64>,
    pub alpha: Array1<f64>,
    pub ctx: Array1<f64>,
}

pub(super) struct FfCache {
    pub ln: nn::LayerNormCache,
    pub ln_out: Array2<f64>,
    pub pre_act: Array2<f64>,
    pub hidden: Array2<f64>,
}

pub(super) struct BlockCache {
    pub attn: AttnCache,
    pub cond: CondCache,
    pub ff: FfCache,
}

pub(super) struct ForwardCache {
    pub x_t: Array2<f64>,
    pub t_features: Array1<f64>,
    pub tokens_final: Array2<f64>,
    pub blocks: Vec<BlockCache>,
    pub mask: Vec<bool>,
    pub props: [f64; PROP_DIM],
}

fn self_attention(
    block: &BlockParams,
    tokens: &Array2<f64>,
    mask: &[bool],
    config: &GenConfig,
) -> (Array2<f64>, AttnCache) {
    let (ln_out, ln) = nn::layer_norm(tokens, &block.ln1_g, &block.ln1_b);
    let q = nn::linear(&ln_out, &block.wq, &block.bq);
    let k = nn::linear(&ln_out, &block.wk, &block.bk);
    let v = nn::linear(&ln_out, &block.wv, &block.bv);
    let n = tokens.nrows();
    let heads = config.heads;
    let dk = config.head_dim();
    let scale = 1.0 / (dk as f64).sqrt();

    let mut concat = Array2::zeros((n, config.token_dim));
    let mut probs = Vec::with_capacity(heads);
    for h in 0..heads {
        let cols = h * dk..(h + 1) * dk;
        let mut p = Array2::zeros((n, n));
        for i in 0..n {
            let mut scores = vec![0.0; n];
            for j in 0..n {
                if !mask[j] {
                    continue;
                }
                let mut dot = 0.0;
                for c in cols.clone() {
                    dot += q[(i, c)] * k[(j, c)];
                }
                scores[j] = dot * scale;
            }
            nn::masked_softmax_row(&mut scores, mask);
            for j in 0..n {
                p[(i, j)] = scores[j];
            }
        }
        for i in 0..n {
            for (offset, c) in cols.clone().enumerate() {
                let mut acc = 0.0;
                for j in 0..n {
                    acc += p[(i, j)] * v[(j, cols.start + offset)];
                }
                concat[(i, c)] = acc;
            }
        }
        probs.push(p);
    }
    let out = nn::linear(&concat, &block.wo, &block.bo);
    (out, AttnCache { ln, ln_out, q, k, v, probs, concat })
}

fn cond_attention(
    block: &BlockParams,
    tokens: &Array2<f64>,
    props: &[f64; PROP_DIM],
    mask: &[bool],
    config: &GenConfig,
) -> (Array1<f64>, CondCache) {
    let (ln_out, ln) = nn::layer_norm(tokens, &block.ln2_g, &block.ln2_b);
    let d = config.token_dim;
    let scale = 1.0 / (d as f64).sqrt();
    // Single query slot projected from the property vector; keys and
    // values are the token stream itself.
    let mut query = Array1::zeros(d);
    for c in 0..d {
        let mut acc = block.bp[(0, c)];
        for (r, p) in props.iter().enumerate() {
            acc += p * block.wp[(r, c)];
        }
        query[c] = acc;
    }
    let n = tokens.nrows();
    let mut scores = vec![0.0; n];
    for j in 0..n {
        if !mask[j] {
            continue;
        }
        let mut dot = 0.0;
        for c in 0..d {
            dot += query[c] * ln_out[(j, c)];
        }
        scores[j] = dot * scale;
    }
    nn::masked_softmax_row(&mut scores, mask);
    let alpha = Array1::from_vec(scores);
    let mut ctx = Array1::zeros(d);
    for j in 0..n {
        if alpha[j] == 0.0 {
            continue;
        }
        for c in 0..d {
            ctx[c] += alpha[j] * ln_out[(j, c)];
        }
    }
    let mut out = Array1::zeros(d);
    for c in 0..d {
        let mut acc = block.bco[(0, c)];
        for r in 0..d {
            acc += ctx[r] * block.wco[(r, c)];
        }
        out[c] = acc;
    }
    (out, CondCache { ln, ln_out, query, alpha, ctx })
}

fn feed_forward(block: &BlockParams, tokens: &Array2<f64>) -> (Array2<f64>, FfCache) {
    let (ln_out, ln) = nn::layer_norm(tokens, &block.ln3_g, &block.ln3_b);
    let pre_act = nn::linear(&ln_out, &block.w1, &block.b1);
    let hidden = nn::silu(&pre_act);
    let out = nn::linear(&hidden, &block.w2, &block.b2);
    (out, FfCache { ln, ln_out, pre_act, hidden })
}

pub(super) fn forward(
    params: &ModelParams,
    config: &GenConfig,
    x_t: &Array2<f64>,
    t: usize,
    props: &[f64; PROP_DIM],
    mask: &[bool],
) -> (Array2<f64>, ForwardCache) {
    let n = x_t.nrows();
    assert_eq!(mask.len(), n);
    let t_features = timestep_features(t, config.token_dim);
    let t_row = t_features.clone().insert_axis(Axis(0));
    let t_emb = nn::linear(&t_row, &params.time_w, &params.time_b);

    let mut tokens = nn::linear(x_t, &params.embed_w, &params.embed_b);
    for mut row in tokens.rows_mut() {
        for (c, v) in row.iter_mut().enumerate() {
            *v += t_emb[(0, c)];
        }
    }

    let mut blocks = Vec::with_capacity(params.blocks.len());
    for block in &params.blocks {
        let (attn_out, attn_cache) = self_attention(block, &tokens, mask, config);
        tokens += &attn_out;
        let (cond_out, cond_cache) = cond_attention(block, &tokens, props, mask, config);
        for mut row in tokens.rows_mut() {
            for (c, v) in row.iter_mut().enumerate() {
                *v += cond_out[c];
            }
        }
        let (ff_out, ff_cache) = feed_forward(block, &tokens);
        tokens += &ff_out;
        blocks.push(BlockCache { attn: attn_cache, cond: cond_cache, ff: ff_cache });
    }

    let mut xhat = nn::linear(&tokens, &params.head_w, &params.head_b);
    for (row, &keep) in mask.iter().enumerate() {
        if !keep {
            for c in 0..3 {
                xhat[(row, c)] = 0.0;
            }
        }
    }
    let cache = ForwardCache {
        x_t: x_t.clone(),
        t_features,
        tokens_final: tokens,
        blocks,
        mask: mask.to_vec(),
        props: *props,
    };
    (xhat, cache)
}

/// Backward pass for the denoiser: accumulates parameter gradients into
/// `grads` given the loss gradient w.r.t. the predicted coordinates.
pub(super) fn backward(
    params: &ModelParams,
    config: &GenConfig,
    cache: &ForwardCache,
    mut dxhat: Array2<f64>,
    grads: &mut ModelParams,
) {
    let n = dxhat.nrows();
    for (row, &keep) in cache.mask.iter().enumerate() {
        if !keep {
            for c in 0..3 {
                dxhat[(row, c)] = 0.0;
            }
        }
    }

    // Head.
    let (mut dtokens, dw_head, db_head) =
        nn::linear_backward(&cache.tokens_final, &params.head_w, &dxhat);
    grads.head_w += &dw_head;
    grads.head_b += &db_head;

    let heads = config.heads;
    let dk = config.head_dim();
    let d = config.token_dim;

    for (bi, block) in params.blocks.iter().enumerate().rev() {
        let bc = &cache.blocks[bi];
        let gb = &mut grads.blocks[bi];

        // Feed-forward (residual): x_out = x_in + W2 silu(W1 ln3(x_in)+b1)+b2.
        let dff_out = dtokens.clone();
        let (dhidden, dw2, db2) = nn::linear_backward(&bc.ff.hidden, &block.w2, &dff_out);
        gb.w2 += &dw2;
        gb.b2 += &db2;
        let dpre = nn::silu_backward(&bc.ff.pre_act, &dhidden);
        let (dln3_out, dw1, db1) = nn::linear_backward(&bc.ff.ln_out, &block.w1, &dpre);
        gb.w1 += &dw1;
        gb.b1 += &db1;
        let (dx_ff, dg3, dbeta3) = nn::layer_norm_backward(&bc.ff.ln, &block.ln3_g, &dln3_out);
        gb.ln3_g += &dg3;
        gb.ln3_b += &dbeta3;
        dtokens += &dx_ff;

        // Conditioning attention (broadcast residual).
        let mut dcond_out = Array1::<f64>::zeros(d);
        for row in 0..n {
            for c in 0..d {
                dcond_out[c] += dtokens[(row, c)];
            }
        }
        // Through the conditioning out projection.
        let mut dctx = Array1::<f64>::zeros(d);
        for r in 0..d {
            let mut acc = 0.0;
            for c in 0..d {
                acc += block.wco[(r, c)] * dcond_out[c];
            }
            dctx[r] = acc;
        }
        for r in 0..d {
            for c in 0..d {
                gb.wco[(r, c)] += bc.cond.ctx[r] * dcond_out[c];
            }
        }
        for c in 0..d {
            gb.bco[(0, c)] += dcond_out[c];
        }
        // ctx = sum_j alpha_j c_j over unmasked tokens.
        let scale = 1.0 / (d as f64).sqrt();
        let mut dalpha = vec![0.0; n];
        let mut dln2_out = Array2::<f64>::zeros((n, d));
        for j in 0..n {
            if !cache.mask[j] {
                continue;
            }
            let mut acc = 0.0;
            for c in 0..d {
                acc += dctx[c] * bc.cond.ln_out[(j, c)];
                dln2_out[(j, c)] += bc.cond.alpha[j] * dctx[c];
            }
            dalpha[j] = acc;
        }
        let alpha: Vec<f64> = bc.cond.alpha.iter().copied().collect();
        let mut dscores = vec![0.0; n];
        nn::softmax_row_backward(&alpha, &dalpha, &mut dscores);
        let mut dquery = Array1::<f64>::zeros(d);
        for j in 0..n {
            if !cache.mask[j] || dscores[j] == 0.0 {
                continue;
            }
            let ds = dscores[j] * scale;
            for c in 0..d {
                dquery[c] += ds * bc.cond.ln_out[(j, c)];
                dln2_out[(j, c)] += ds * bc.cond.query[c];
            }
        }
        for (r, p) in cache.props.iter().enumerate() {
            for c in 0..d {
                gb.wp[(r, c)] += p * dquery[c];
            }
        }
        for c in 0..d {
            gb.bp[(0, c)] += dquery[c];
        }
        let (dx_cond, dg2, dbeta2) = nn::layer_norm_backward(&bc.cond.ln, &block.ln2_g, &dln2_out);
        gb.ln2_g += &dg2;
        gb.ln2_b += &dbeta2;
        dtokens += &dx_cond;

        // Masked self-attention (residual).
        let dattn_out = dtokens.clone();
        let (dconcat, dwo, dbo) = nn::linear_backward(&bc.attn.concat, &block.wo, &dattn_out);
        gb.wo += &dwo;
        gb.bo += &dbo;

        let mut dq = Array2::<f64>::zeros((n, d));
        let mut dkm = Array2::<f64>::zeros((n, d));
        let mut dv = Array2::<f64>::zeros((n, d));
        let attn_scale = 1.0 / (dk as f64).sqrt();
        for h in 0..heads {
            let cols = h * dk..(h + 1) * dk;
            let p = &bc.attn.probs[h];
            for i in 0..n {
                // dV and dP for this query row.
                let mut dp = vec![0.0; n];
                for j in 0..n {
                    if p[(i, j)] == 0.0 && !cache.mask[j] {
                        continue;
                    }
                    let mut acc = 0.0;
                    for (offset, c) in cols.clone().enumerate() {
                        let g = dconcat[(i, c)];
                        dv[(j, cols.start + offset)] += p[(i, j)] * g;
                        acc += g * bc.attn.v[(j, c)];
                    }
                    dp[j] = acc;
                }
                let probs_row: Vec<f64> = (0..n).map(|j| p[(i, j)]).collect();
                let mut ds = vec![0.0; n];
                nn::softmax_row_backward(&probs_row, &dp, &mut ds);
                for j in 0..n {
                    if ds[j] == 0.0 {
                        continue;
                    }
                    let s = ds[j] * attn_scale;
                    for c in cols.clone() {
                        dq[(i, c)] += s * bc.attn.k[(j, c)];
                        dkm[(j, c)] += s * bc.attn.q[(i, c)];
                    }
                }
            }
        }
        let (dln1_a, dwq, dbq) = nn::linear_backward(&bc.attn.ln_out, &block.wq, &dq);
        let (dln1_b, dwk, dbk) = nn::linear_backward(&bc.attn.ln_out, &block.wk, &dkm);
        let (dln1_c, dwv, dbv) = nn::linear_backward(&bc.attn.ln_out, &block.wv, &dv);
        gb.wq += &dwq;
        gb.bq += &dbq;
        gb.wk += &dwk;
        gb.bk += &dbk;
        gb.wv += &dwv;
        gb.bv += &dbv;
        let dln1_out = dln1_a + dln1_b + dln1_c;
        let (dx_attn, dg1, dbeta1) = nn::layer_norm_backward(&bc.attn.ln, &block.ln1_g, &dln1_out);
        gb.ln1_g += &dg1;
        gb.ln1_b += &dbeta1;
        dtokens += &dx_attn;
    }

    // Embedding and timestep projection.
    let (_, dw_embed, db_embed) = nn::linear_backward(&cache.x_t, &params.embed_w, &dtokens);
    grads.embed_w += &dw_embed;
    grads.embed_b += &db_embed;
    let dt_emb = dtokens.sum_axis(Axis(0)).insert_axis(Axis(0));
    let t_row = cache.t_features.clone().insert_axis(Axis(0));
    let (_, dw_time, db_time) = nn::linear_backward(&t_row, &params.time_w, &dt_emb);
    grads.time_w += &dw_time;
    grads.time_b += &db_time;
}

/// Predicts clean coordinates from a noisy input at step t, conditioned on
/// a z-scored property vector. Masked rows output zero.
pub fn predict_x0(
    params: &ModelParams,
    config: &GenConfig,
    x_t: &Array2<f64>,
    t: usize,
    props: &[f64; PROP_DIM],
    mask: &[bool],
) -> Result<Array2<f64>> {
    if props.iter().any(|p| !p.is_finite()) {
        return Err(LatticeError::NonFiniteProperty);
    }
    Ok(forward(params, config, x_t, t, props, mask).0)
}

/// Metadata of one training example kept in the model file: the raw
/// property vector and the vertex count, used to pick a default count at
/// sampling time.
#[derive(Debug, Clone, PartialEq)]
pub struct ExampleMeta {
    pub props: [f64; PROP_DIM],
    pub n_vertices: usize,
}

/// A trained generator: parameters, schedule, property normalization and
/// training-example metadata.
#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    pub config: GenConfig,
    pub schedule: NoiseSchedule,
    pub params: ModelParams,
    pub norm: PropNormalizer,
    pub examples: Vec<ExampleMeta>,
}

impl Model {
    /// Denoiser call on raw (unnormalized) properties.
    pub fn predict_x0_raw(
        &self,
        x_t: &Array2<f64>,
        t: usize,
        props_raw: &[f64; PROP_DIM],
        mask: &[bool],
    ) -> Result<Array2<f64>> {
        self.schedule.check_t(t)?;
        let z = self.norm.apply(props_raw);
        predict_x0(&self.params, &self.config, x_t, t, &z, mask)
    }

    /// Ancestral sampling of `n_vertices` coordinates.
    pub fn sample(
        &self,
        props_raw: &[f64; PROP_DIM],
        n_vertices: usize,
        seed: u64,
    ) -> Result<Array2<f64>> {
        sample_coordinates(self, props_raw, n_vertices, seed)
    }

    /// Symmetric edge probabilities for given coordinates.
    pub fn predict_edges(&self, coords: &Array2<f64>, props_raw: &[f64; PROP_DIM]) -> Array2<f64> {
        let z = self.norm.apply(props_raw);
        super::edges::predict_edge_probabilities(&self.params, coords, &z)
    }

    /// Hard adjacency at the 0.5 decision threshold, as an i < j edge list.
    pub fn predict_adjacency(
        &self,
        coords: &Array2<f64>,
        props_raw: &[f64; PROP_DIM],
    ) -> Vec<(usize, usize)> {
        let probs = self.predict_edges(coords, props_raw);
        let n = probs.nrows();
        let mut edges = Vec::new();
        for i in 0..n {
            for j in (i + 1)..n {
                if probs[(i, j)] > 0.5 {
                    edges.push((i, j));
                }
            }
        }
        edges
    }

    /// Vertex count of the training example whose normalized properties
    /// are nearest to the query (ties break to the earliest example).
    pub fn default_vertex_count(&self, props_raw: &[f64; PROP_DIM]) -> Option<usize> {
        let query = self.norm.apply(props_raw);
        let mut best: Option<(f64, usize)> = None;
        for ex in &self.examples {
            let z = self.norm.apply(&ex.props);
            let dist: f64 = query
                .iter()
                .zip(z.iter())
                .map(|(a, b)| (a - b) * (a - b))
                .sum();
            if best.map_or(true, |(bd, _)| dist < bd) {
                best = Some((dist, ex.n_vertices));
            }
        }
        best.map(|(_, n)| n)
    }

    pub fn save_to_vec(&self) -> Vec<u8> {
        super::model_io::save_to_vec(self)
    }

    pub fn save(&self, path: impl AsRef<std::path::Path>) -> Result<()> {
        std::fs::write(path, self.save_to_vec())?;
        Ok(())
    }

    pub fn load_from_slice(bytes: &[u8]) -> Result<Model> {
        super::model_io::load_from_slice(bytes)
    }

    pub fn load(path: impl AsRef<std::path::Path>) -> Result<Model> {
        let bytes = std::fs::read(path)?;
        Model::load_from_slice(&bytes)
    }
}
