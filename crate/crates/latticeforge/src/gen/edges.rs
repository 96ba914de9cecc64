//! Edge prediction: a per-vertex encoder MLP over (coordinates,
//! properties) and a pairwise scoring head over [h_i, h_j, |h_i - h_j|].
//! Logits are symmetrized, the diagonal forced to zero probability.

use ndarray::Array2;

use super::config::PROP_DIM;
use super::nn;
use super::params::ModelParams;

pub(super) struct EdgeCache {
    pub input: Array2<f64>,
    pub pre1: Array2<f64>,
    pub h1: Array2<f64>,
    pub h: Array2<f64>,
}

/// Per-vertex representations h_i = W2 silu(W1 [x_i, p] + b1) + b2.
pub(super) fn encode(
    params: &ModelParams,
    coords: &Array2<f64>,
    props: &[f64; PROP_DIM],
) -> EdgeCache {
    let n = coords.nrows();
    let mut input = Array2::zeros((n, 3 + PROP_DIM));
    for i in 0..n {
        for c in 0..3 {
            input[(i, c)] = coords[(i, c)];
        }
        for (c, p) in props.iter().enumerate() {
            input[(i, 3 + c)] = *p;
        }
    }
    let pre1 = nn::linear(&input, &params.edge_w1, &params.edge_b1);
    let h1 = nn::silu(&pre1);
    let h = nn::linear(&h1, &params.edge_w2, &params.edge_b2);
    EdgeCache { input, pre1, h1, h }
}

/// Raw (unsymmetrized) logit for the ordered pair (i, j).
fn pair_logit(params: &ModelParams, h: &Array2<f64>, i: usize, j: usize) -> f64 {
    let de = h.ncols();
    let w = &params.edge_head_w;
    let mut acc = params.edge_head_b[(0, 0)];
    for c in 0..de {
        let hi = h[(i, c)];
        let hj = h[(j, c)];
        acc += hi * w[(c, 0)];
        acc += hj * w[(de + c, 0)];
        acc += (hi - hj).abs() * w[(2 * de + c, 0)];
    }
    acc
}

/// Symmetrized logit: (raw(i,j) + raw(j,i)) / 2.
pub(super) fn symmetric_logit(params: &ModelParams, h: &Array2<f64>, i: usize, j: usize) -> f64 {
    0.5 * (pair_logit(params, h, i, j) + pair_logit(params, h, j, i))
}

/// Accumulates gradients of `dlogit * symmetric_logit(i, j)` into `grads`
/// and the per-vertex representation gradient `dh`.
pub(super) fn symmetric_logit_backward(
    params: &ModelParams,
    h: &Array2<f64>,
    i: usize,
    j: usize,
    dlogit: f64,
    grads: &mut ModelParams,
    dh: &mut Array2<f64>,
) {
    let de = h.ncols();
    let w = &params.edge_head_w;
    // Each ordered direction contributes half.
    for (a, b) in [(i, j), (j, i)] {
        let half = 0.5 * dlogit;
        grads.edge_head_b[(0, 0)] += half;
        for c in 0..de {
            let ha = h[(a, c)];
            let hb = h[(b, c)];
            let diff = ha - hb;
            let sign = if diff > 0.0 {
                1.0
            } else if diff < 0.0 {
                -1.0
            } else {
                0.0
            };
            grads.edge_head_w[(c, 0)] += half * ha;
            grads.edge_head_w[(de + c, 0)] += half * hb;
            grads.edge_head_w[(2 * de + c, 0)] += half * diff.abs();
            dh[(a, c)] += half * (w[(c, 0)] + sign * w[(2 * de + c, 0)]);
            dh[(b, c)] += half * (w[(de + c, 0)] - sign * w[(2 * de + c, 0)]);
        }
    }
}

/// Backward through the encoder given dL/dh.
pub(super) fn encode_backward(
    params: &ModelParams,
    cache: &EdgeCache,
    dh: &Array2<f64>,
    grads: &mut ModelParams,
) {
    let (dh1, dw2, db2) = nn::linear_backward(&cache.h1, &params.edge_w2, dh);
    grads.edge_w2 += &dw2;
    grads.edge_b2 += &db2;
    let dpre1 = nn::silu_backward(&cache.pre1, &dh1);
    let (_, dw1, db1) = nn::linear_backward(&cache.input, &params.edge_w1, &dpre1);
    grads.edge_w1 += &dw1;
    grads.edge_b1 += &db1;
}

/// Full symmetric probability matrix with a zero diagonal.
pub fn predict_edge_probabilities(
    params: &ModelParams,
    coords: &Array2<f64>,
    props: &[f64; PROP_DIM],
) -> Array2<f64> {
    let n = coords.nrows();
    let cache = encode(params, coords, props);
    let mut probs = Array2::zeros((n, n));
    for i in 0..n {
        for j in (i + 1)..n {
            let p = nn::sigmoid(symmetric_logit(params, &cache.h, i, j));
            probs[(i, j)] = p;
            probs[(j, i)] = p;
        }
    }
    probs
}
