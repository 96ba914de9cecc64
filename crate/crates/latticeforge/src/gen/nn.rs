//! Dense-layer primitives with explicit backward passes. Everything is
//! f64 and single-threaded; determinism comes from fixed evaluation order.

use ndarray::{Array1, Array2, Axis};

/// y = x W + b, with b stored as a (1, dout) row.
pub fn linear(x: &Array2<f64>, w: &Array2<f64>, b: &Array2<f64>) -> Array2<f64> {
    let mut y = x.dot(w);
    y += &b.row(0);
    y
}

/// Returns (dx, dw, db) for y = x W + b.
pub fn linear_backward(
    x: &Array2<f64>,
    w: &Array2<f64>,
    dy: &Array2<f64>,
) -> (Array2<f64>, Array2<f64>, Array2<f64>) {
    let dx = dy.dot(&w.t());
    let dw = x.t().dot(dy);
    let db = dy.sum_axis(Axis(0)).insert_axis(Axis(0));
    (dx, dw, db)
}

pub const LN_EPS: f64 = 1e-5;

pub struct LayerNormCache {
    pub x_hat: Array2<f64>,
    pub inv_std: Array1<f64>,
}

/// Row-wise layer normalization with gain/bias rows (1, d).
pub fn layer_norm(
    x: &Array2<f64>,
    gamma: &Array2<f64>,
    beta: &Array2<f64>,
) -> (Array2<f64>, LayerNormCache) {
    let d = x.ncols() as f64;
    let mut x_hat = x.clone();
    let mut inv_std = Array1::zeros(x.nrows());
    for (row, mut out) in x_hat.rows_mut().into_iter().enumerate() {
        let mean = out.sum() / d;
        let mut var = 0.0;
        for v in out.iter() {
            let c = v - mean;
            var += c * c;
        }
        var /= d;
        let s = 1.0 / (var + LN_EPS).sqrt();
        inv_std[row] = s;
        for v in out.iter_mut() {
            *v = (*v - mean) * s;
        }
    }
    let mut y = x_hat.clone();
    for mut row in y.rows_mut() {
        for (col, v) in row.iter_mut().enumerate() {
            *v = *v * gamma[(0, col)] + beta[(0, col)];
        }
    }
    (y, LayerNormCache { x_hat, inv_std })
}

/// Returns (dx, dgamma, dbeta).
pub fn layer_norm_backward(
    cache: &LayerNormCache,
    gamma: &Array2<f64>,
    dy: &Array2<f64>,
) -> (Array2<f64>, Array2<f64>, Array2<f64>) {
    let (n, d) = dy.dim();
    let df = d as f64;
    let mut dx = Array2::zeros((n, d));
    let mut dgamma = Array2::zeros((1, d));
    let mut dbeta = Array2::zeros((1, d));
    for row in 0..n {
        let mut mean_g = 0.0;
        let mut mean_gx = 0.0;
        for col in 0..d {
            let g = dy[(row, col)] * gamma[(0, col)];
            let xh = cache.x_hat[(row, col)];
            mean_g += g;
            mean_gx += g * xh;
            dgamma[(0, col)] += dy[(row, col)] * xh;
            dbeta[(0, col)] += dy[(row, col)];
        }
        mean_g /= df;
        mean_gx /= df;
        let s = cache.inv_std[row];
        for col in 0..d {
            let g = dy[(row, col)] * gamma[(0, col)];
            let xh = cache.x_hat[(row, col)];
            dx[(row, col)] = s * (g - mean_g - xh * mean_gx);
        }
    }
    (dx, dgamma, dbeta)
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// SiLU activation x * sigmoid(x), elementwise.
pub fn silu(x: &Array2<f64>) -> Array2<f64> {
    x.mapv(|v| v * sigmoid(v))
}

/// dx for y = silu(x), given the pre-activation x.
pub fn silu_backward(x: &Array2<f64>, dy: &Array2<f64>) -> Array2<f64> {
    let mut dx = dy.clone();
    for (d, &v) in dx.iter_mut().zip(x.iter()) {
        let s = sigmoid(v);
        *d *= s * (1.0 + v * (1.0 - s));
    }
    dx
}

/// In-place masked softmax over one score row: masked positions get
/// probability zero; at least one position must be allowed.
pub fn masked_softmax_row(scores: &mut [f64], allowed: &[bool]) {
    let mut max = f64::NEG_INFINITY;
    for (s, &a) in scores.iter().zip(allowed.iter()) {
        if a && *s > max {
            max = *s;
        }
    }
    let mut sum = 0.0;
    for (s, &a) in scores.iter_mut().zip(allowed.iter()) {
        if a {
            *s = (*s - max).exp();
            sum += *s;
        } else {
            *s = 0.0;
        }
    }
    for s in scores.iter_mut() {
        *s /= sum;
    }
}

/// Backward through a softmax row: ds = p .* (dp - sum(p .* dp)).
pub fn softmax_row_backward(probs: &[f64], dprobs: &[f64], dscores: &mut [f64]) {
    let inner: f64 = probs.iter().zip(dprobs.iter()).map(|(p, d)| p * d).sum();
    for ((ds, &p), &dp) in dscores.iter_mut().zip(probs.iter()).zip(dprobs.iter()) {
        *ds = p * (dp - inner);
    }
}
