//! Differentiable building blocks for the cross-modal stack: affine maps,
//! layer normalization, scaled dot-product attention and a tanh feed-forward
//! sublayer. Each forward returns what its backward needs.

use serde::{Deserialize, Serialize};

use crate::alignment::row_softmax;
use crate::error::{Error, Result};
use crate::numkernel::{Matrix, Rng};

pub const LAYER_NORM_EPS: f64 = 1e-5;

/// Row-wise affine map `Y = X W + b`, `W` stored `in × out`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Linear {
    pub weight: Matrix,
    pub bias: Vec<f64>,
}

impl Linear {
    pub fn init(input: usize, output: usize, rng: &mut Rng) -> Self {
        let bound = 1.0 / (input as f64).sqrt();
        Self {
            weight: Matrix::from_fn(input, output, |_, _| rng.uniform_range(-bound, bound)),
            bias: vec![0.0; output],
        }
    }

    pub fn zeros(input: usize, output: usize) -> Self {
        Self {
            weight: Matrix::zeros(input, output),
            bias: vec![0.0; output],
        }
    }

    pub fn forward(&self, x: &Matrix) -> Result<Matrix> {
        x.matmul(&self.weight)?.add_row_broadcast(&self.bias)
    }

    /// Returns `dX` and accumulates parameter gradients into `grad`.
    pub fn backward(&self, x: &Matrix, dy: &Matrix, grad: &mut Linear) -> Result<Matrix> {
        grad.weight.add_assign(&x.t_matmul(dy)?)?;
        for (g, s) in grad.bias.iter_mut().zip(dy.col_sums()) {
            *g += s;
        }
        dy.matmul_t(&self.weight)
    }

    pub(crate) fn params_mut(&mut self) -> [&mut [f64]; 2] {
        [self.weight.as_mut_slice(), &mut self.bias]
    }

    pub(crate) fn params(&self) -> [&[f64]; 2] {
        [self.weight.as_slice(), &self.bias]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerNorm {
    pub gamma: Vec<f64>,
    pub beta: Vec<f64>,
}

pub struct LayerNormCache {
    x_hat: Matrix,
    inv_std: Vec<f64>,
}

impl LayerNorm {
    pub fn new(d: usize) -> Self {
        Self {
            gamma: vec![1.0; d],
            beta: vec![0.0; d],
        }
    }

    pub fn zeros(d: usize) -> Self {
        Self {
            gamma: vec![0.0; d],
            beta: vec![0.0; d],
        }
    }

    pub fn forward(&self, x: &Matrix) -> Result<(Matrix, LayerNormCache)> {
        let d = x.cols();
        if d != self.gamma.len() {
            return Err(Error::shape(
                "layer_norm",
                format!("input width {d} vs normalized width {}", self.gamma.len()),
            ));
        }
        let mut x_hat = x.clone();
        let mut inv_std = Vec::with_capacity(x.rows());
        for i in 0..x.rows() {
            let row = x_hat.row_mut(i);
            let mean = row.iter().sum::<f64>() / d as f64;
            let var = row.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / d as f64;
            let s = 1.0 / (var + LAYER_NORM_EPS).sqrt();
            row.iter_mut().for_each(|v| *v = (*v - mean) * s);
            inv_std.push(s);
        }
        let mut y = x_hat.clone();
        for i in 0..y.rows() {
            for ((v, g), b) in y.row_mut(i).iter_mut().zip(&self.gamma).zip(&self.beta) {
                *v = *v * g + b;
            }
        }
        Ok((y, LayerNormCache { x_hat, inv_std }))
    }

    pub fn backward(&self, cache: &LayerNormCache, dy: &Matrix, grad: &mut LayerNorm) -> Matrix {
        let d = dy.cols() as f64;
        let mut dx = Matrix::zeros(dy.rows(), dy.cols());
        for i in 0..dy.rows() {
            let xh = cache.x_hat.row(i);
            let g = dy.row(i);
            for k in 0..g.len() {
                grad.gamma[k] += g[k] * xh[k];
                grad.beta[k] += g[k];
            }
            let dxh: Vec<f64> = g.iter().zip(&self.gamma).map(|(a, b)| a * b).collect();
            let mean_dxh = dxh.iter().sum::<f64>() / d;
            let mean_dxh_xh = dxh.iter().zip(xh).map(|(a, b)| a * b).sum::<f64>() / d;
            let s = cache.inv_std[i];
            for (k, out) in dx.row_mut(i).iter_mut().enumerate() {
                *out = s * (dxh[k] - mean_dxh - xh[k] * mean_dxh_xh);
            }
        }
        dx
    }
}

/// Backward of a row softmax given its output `p`.
pub fn softmax_backward(p: &Matrix, dp: &Matrix) -> Matrix {
    let mut ds = Matrix::zeros(p.rows(), p.cols());
    for i in 0..p.rows() {
        let pr = p.row(i);
        let gr = dp.row(i);
        let inner: f64 = pr.iter().zip(gr).map(|(a, b)| a * b).sum();
        for (k, out) in ds.row_mut(i).iter_mut().enumerate() {
            *out = pr[k] * (gr[k] - inner);
        }
    }
    ds
}

/// Multi-head attention with separate query and key/value streams:
/// `softmax(Q_h K_hᵀ / √d_h) V_h` per head, heads concatenated, then an
/// output projection.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MultiHeadAttention {
    pub heads: usize,
    pub query: Linear,
    pub key: Linear,
    pub value: Linear,
    pub output: Linear,
}

pub struct AttentionCache {
    q: Matrix,
    k: Matrix,
    v: Matrix,
    weights: Vec<Matrix>,
    concat: Matrix,
}

impl AttentionCache {
    /// Softmax weights per head, `L_q × L_kv`.
    pub fn weights(&self) -> &[Matrix] {
        &self.weights
    }
}

impl MultiHeadAttention {
    pub fn init(d: usize, heads: usize, rng: &mut Rng) -> Result<Self> {
        if heads == 0 || !d.is_multiple_of(heads) {
            return Err(Error::invalid(format!("{heads} heads do not divide model dim {d}")));
        }
        Ok(Self {
            heads,
            query: Linear::init(d, d, rng),
            key: Linear::init(d, d, rng),
            value: Linear::init(d, d, rng),
            output: Linear::init(d, d, rng),
        })
    }

    fn head_dim(&self) -> usize {
        self.query.weight.cols() / self.heads
    }

    pub fn forward(&self, queries: &Matrix, memory: &Matrix) -> Result<(Matrix, AttentionCache)> {
        let q = self.query.forward(queries)?;
        let k = self.key.forward(memory)?;
        let v = self.value.forward(memory)?;
        let dh = self.head_dim();
        let scale = 1.0 / (dh as f64).sqrt();
        let mut concat = Matrix::zeros(q.rows(), q.cols());
        let mut weights = Vec::with_capacity(self.heads);
        for h in 0..self.heads {
            let qh = q.col_slice(h * dh, dh);
            let kh = k.col_slice(h * dh, dh);
            let vh = v.col_slice(h * dh, dh);
            let p = row_softmax(&qh.matmul_t(&kh)?.scale(scale));
            concat.set_col_slice(h * dh, &p.matmul(&vh)?);
            weights.push(p);
        }
        let out = self.output.forward(&concat)?;
        Ok((
            out,
            AttentionCache {
                q,
                k,
                v,
                weights,
                concat,
            },
        ))
    }

    /// Returns `(dQueries, dMemory)`.
    pub fn backward(
        &self,
        queries: &Matrix,
        memory: &Matrix,
        cache: &AttentionCache,
        dy: &Matrix,
        grad: &mut MultiHeadAttention,
    ) -> Result<(Matrix, Matrix)> {
        let d_concat = self.output.backward(&cache.concat, dy, &mut grad.output)?;
        let dh = self.head_dim();
        let scale = 1.0 / (dh as f64).sqrt();
        let mut dq = Matrix::zeros(cache.q.rows(), cache.q.cols());
        let mut dk = Matrix::zeros(cache.k.rows(), cache.k.cols());
        let mut dv = Matrix::zeros(cache.v.rows(), cache.v.cols());
        for h in 0..self.heads {
            let p = &cache.weights[h];
            let qh = cache.q.col_slice(h * dh, dh);
            let kh = cache.k.col_slice(h * dh, dh);
            let vh = cache.v.col_slice(h * dh, dh);
            let d_out = d_concat.col_slice(h * dh, dh);
            let dp = d_out.matmul_t(&vh)?;
            dv.set_col_slice(h * dh, &p.t_matmul(&d_out)?);
            let ds = softmax_backward(p, &dp).scale(scale);
            dq.set_col_slice(h * dh, &ds.matmul(&kh)?);
            dk.set_col_slice(h * dh, &ds.t_matmul(&qh)?);
        }
        let d_queries = self.query.backward(queries, &dq, &mut grad.query)?;
        let mut d_memory = self.key.backward(memory, &dk, &mut grad.key)?;
        d_memory.add_assign(&self.value.backward(memory, &dv, &mut grad.value)?)?;
        Ok((d_queries, d_memory))
    }
}

/// Position-wise `W2 · tanh(W1 x + b1) + b2`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeedForward {
    pub inner: Linear,
    pub outer: Linear,
}

pub struct FeedForwardCache {
    hidden: Matrix,
}

impl FeedForward {
    pub fn init(d: usize, hidden: usize, rng: &mut Rng) -> Self {
        Self {
            inner: Linear::init(d, hidden, rng),
            outer: Linear::init(hidden, d, rng),
        }
    }

    pub fn forward(&self, x: &Matrix) -> Result<(Matrix, FeedForwardCache)> {
        let hidden = self.inner.forward(x)?.map(f64::tanh);
        let y = self.outer.forward(&hidden)?;
        Ok((y, FeedForwardCache { hidden }))
    }

    pub fn backward(
        &self,
        x: &Matrix,
        cache: &FeedForwardCache,
        dy: &Matrix,
        grad: &mut FeedForward,
    ) -> Result<Matrix> {
        let d_hidden = self.outer.backward(&cache.hidden, dy, &mut grad.outer)?;
        let d_pre = d_hidden.zip_map(&cache.hidden, |g, h| g * (1.0 - h * h))?;
        self.inner.backward(x, &d_pre, &mut grad.inner)
    }
}
