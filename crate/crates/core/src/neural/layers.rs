//! Parameterized layers. `forward` returns what `backward` needs; `backward`
//! accumulates parameter gradients and returns the input gradient.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::init::{normal, xavier_uniform};
use super::ops::{self, matmul, matmul_at_acc, matmul_bt};
use super::{cast, Float, Param, Parameterized, Tensor};

#[derive(Debug, Clone, PartialEq)]
pub struct Linear<F> {
    /// `in × out`.
    pub weight: Param<F>,
    pub bias: Param<F>,
}

impl<F: Float> Linear<F> {
    pub fn xavier<R: Rng + ?Sized>(name: &str, fan_in: usize, fan_out: usize, rng: &mut R) -> Self {
        Linear {
            weight: Param::new(format!("{name}.weight"), xavier_uniform(rng, fan_in, fan_out)),
            bias: Param::new(format!("{name}.bias"), Tensor::zeros(&[fan_out])),
        }
    }

    pub fn zeros(name: &str, fan_in: usize, fan_out: usize) -> Self {
        Linear {
            weight: Param::new(format!("{name}.weight"), Tensor::zeros(&[fan_in, fan_out])),
            bias: Param::new(format!("{name}.bias"), Tensor::zeros(&[fan_out])),
        }
    }

    pub fn in_dim(&self) -> usize {
        self.weight.value.shape[0]
    }

    pub fn out_dim(&self) -> usize {
        self.weight.value.shape[1]
    }

    /// `x` is `n × in`.
    pub fn forward(&self, x: &[F], n: usize) -> Vec<F> {
        let (din, dout) = (self.in_dim(), self.out_dim());
        let mut y = matmul(x, &self.weight.value.data, n, din, dout);
        for row in y.chunks_mut(dout) {
            for (o, &b) in row.iter_mut().zip(&self.bias.value.data) {
                *o = *o + b;
            }
        }
        y
    }

    pub fn backward(&mut self, x: &[F], dy: &[F], n: usize) -> Vec<F> {
        self.backward_params(x, dy, n);
        matmul_bt(dy, &self.weight.value.data, n, self.out_dim(), self.in_dim())
    }

    pub fn backward_params(&mut self, x: &[F], dy: &[F], n: usize) {
        let (din, dout) = (self.in_dim(), self.out_dim());
        matmul_at_acc(x, dy, n, din, dout, &mut self.weight.grad.data);
        for row in dy.chunks(dout) {
            for (g, &d) in self.bias.grad.data.iter_mut().zip(row) {
                *g = *g + d;
            }
        }
    }
}

impl<F: Float> Parameterized<F> for Linear<F> {
    fn visit_params<'a>(&'a self, f: &mut dyn FnMut(&'a Param<F>)) {
        f(&self.weight);
        f(&self.bias);
    }

    fn visit_params_mut<'a>(&'a mut self, f: &mut dyn FnMut(&'a mut Param<F>)) {
        f(&mut self.weight);
        f(&mut self.bias);
    }
}

pub const LAYER_NORM_EPS: f64 = 1e-5;

#[derive(Debug, Clone, PartialEq)]
pub struct LayerNorm<F> {
    pub gamma: Param<F>,
    pub beta: Param<F>,
}

pub struct LayerNormCache<F> {
    xhat: Vec<F>,
    rstd: Vec<F>,
}

impl<F: Float> LayerNorm<F> {
    pub fn new(name: &str, dim: usize) -> Self {
        LayerNorm {
            gamma: Param::new(
                format!("{name}.gamma"),
                Tensor::from_vec(&[dim], vec![F::one(); dim]).unwrap(),
            ),
            beta: Param::new(format!("{name}.beta"), Tensor::zeros(&[dim])),
        }
    }

    pub fn dim(&self) -> usize {
        self.gamma.value.len()
    }

    pub fn forward(&self, x: &[F], n: usize) -> (Vec<F>, LayerNormCache<F>) {
        let d = self.dim();
        let eps: F = cast(LAYER_NORM_EPS);
        let inv_d: F = cast(1.0 / d as f64);
        let mut y = vec![F::zero(); n * d];
        let mut xhat = vec![F::zero(); n * d];
        let mut rstd = vec![F::zero(); n];
        for r in 0..n {
            let row = &x[r * d..(r + 1) * d];
            // Mean taken relative to the first entry: a constant row gives an
            // exactly zero centered vector.
            let pivot = row[0];
            let shift = row.iter().fold(F::zero(), |acc, &v| acc + (v - pivot)) * inv_d;
            let mean = pivot + shift;
            let var = row.iter().fold(F::zero(), |acc, &v| {
                let c = v - mean;
                acc + c * c
            }) * inv_d;
            let rs = F::one() / (var + eps).sqrt();
            rstd[r] = rs;
            for c in 0..d {
                let h = (row[c] - mean) * rs;
                xhat[r * d + c] = h;
                y[r * d + c] = h * self.gamma.value.data[c] + self.beta.value.data[c];
            }
        }
        (y, LayerNormCache { xhat, rstd })
    }

    pub fn backward(&mut self, cache: &LayerNormCache<F>, dy: &[F]) -> Vec<F> {
        let d = self.dim();
        let n = cache.rstd.len();
        let inv_d: F = cast(1.0 / d as f64);
        let mut dx = vec![F::zero(); n * d];
        let mut dxhat = vec![F::zero(); d];
        for r in 0..n {
            let xh = &cache.xhat[r * d..(r + 1) * d];
            let g = &dy[r * d..(r + 1) * d];
            let mut mean_dxhat = F::zero();
            let mut mean_dxhat_xhat = F::zero();
            for c in 0..d {
                self.gamma.grad.data[c] = self.gamma.grad.data[c] + g[c] * xh[c];
                self.beta.grad.data[c] = self.beta.grad.data[c] + g[c];
                dxhat[c] = g[c] * self.gamma.value.data[c];
                mean_dxhat = mean_dxhat + dxhat[c];
                mean_dxhat_xhat = mean_dxhat_xhat + dxhat[c] * xh[c];
            }
            mean_dxhat = mean_dxhat * inv_d;
            mean_dxhat_xhat = mean_dxhat_xhat * inv_d;
            for c in 0..d {
                dx[r * d + c] = cache.rstd[r] * (dxhat[c] - mean_dxhat - xh[c] * mean_dxhat_xhat);
            }
        }
        dx
    }
}

impl<F: Float> Parameterized<F> for LayerNorm<F> {
    fn visit_params<'a>(&'a self, f: &mut dyn FnMut(&'a Param<F>)) {
        f(&self.gamma);
        f(&self.beta);
    }

    fn visit_params_mut<'a>(&'a mut self, f: &mut dyn FnMut(&'a mut Param<F>)) {
        f(&mut self.gamma);
        f(&mut self.beta);
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Embedding<F> {
    /// `rows × dim`.
    pub table: Param<F>,
}

impl<F: Float> Embedding<F> {
    pub fn normal<R: Rng + ?Sized>(name: &str, rows: usize, dim: usize, std: f64, rng: &mut R) -> Self {
        Embedding {
            table: Param::new(name.to_string(), normal(rng, &[rows, dim], std)),
        }
    }

    pub fn rows(&self) -> usize {
        self.table.value.shape[0]
    }

    pub fn dim(&self) -> usize {
        self.table.value.shape[1]
    }

    /// Ids must be in range; callers validate.
    pub fn forward(&self, ids: &[usize]) -> Vec<F> {
        ids.iter()
            .flat_map(|&id| self.table.value.row(id).iter().copied())
            .collect()
    }

    pub fn backward(&mut self, ids: &[usize], dy: &[F]) {
        let d = self.dim();
        for (r, &id) in ids.iter().enumerate() {
            let g = self.table.grad.row_mut(id);
            for (gi, &di) in g.iter_mut().zip(&dy[r * d..(r + 1) * d]) {
                *gi = *gi + di;
            }
        }
    }
}

impl<F: Float> Parameterized<F> for Embedding<F> {
    fn visit_params<'a>(&'a self, f: &mut dyn FnMut(&'a Param<F>)) {
        f(&self.table);
    }

    fn visit_params_mut<'a>(&'a mut self, f: &mut dyn FnMut(&'a mut Param<F>)) {
        f(&mut self.table);
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    #[default]
    Gelu,
    Relu,
}

impl Activation {
    pub fn apply<F: Float>(self, x: F) -> F {
        match self {
            Activation::Gelu => ops::gelu(x),
            Activation::Relu => ops::relu(x),
        }
    }

    pub fn grad<F: Float>(self, x: F) -> F {
        match self {
            Activation::Gelu => ops::gelu_grad(x),
            Activation::Relu => ops::relu_grad(x),
        }
    }
}

impl std::str::FromStr for Activation {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "gelu" => Ok(Activation::Gelu),
            "relu" => Ok(Activation::Relu),
            _ => Err(format!("unknown activation {s:?}")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeedForward<F> {
    pub up: Linear<F>,
    pub down: Linear<F>,
    pub activation: Activation,
}

pub struct FeedForwardCache<F> {
    pre: Vec<F>,
    hidden: Vec<F>,
}

impl<F: Float> FeedForward<F> {
    pub fn new<R: Rng + ?Sized>(name: &str, dim: usize, inner: usize, activation: Activation, rng: &mut R) -> Self {
        FeedForward {
            up: Linear::xavier(&format!("{name}.up"), dim, inner, rng),
            down: Linear::xavier(&format!("{name}.down"), inner, dim, rng),
            activation,
        }
    }

    pub fn forward(&self, x: &[F], n: usize) -> (Vec<F>, FeedForwardCache<F>) {
        let pre = self.up.forward(x, n);
        let hidden: Vec<F> = pre.iter().map(|&v| self.activation.apply(v)).collect();
        let y = self.down.forward(&hidden, n);
        (y, FeedForwardCache { pre, hidden })
    }

    pub fn backward(&mut self, x: &[F], cache: &FeedForwardCache<F>, dy: &[F], n: usize) -> Vec<F> {
        let dh = self.down.backward(&cache.hidden, dy, n);
        let dpre: Vec<F> = dh
            .iter()
            .zip(&cache.pre)
            .map(|(&g, &p)| g * self.activation.grad(p))
            .collect();
        self.up.backward(x, &dpre, n)
    }
}

impl<F: Float> Parameterized<F> for FeedForward<F> {
    fn visit_params<'a>(&'a self, f: &mut dyn FnMut(&'a Param<F>)) {
        self.up.visit_params(f);
        self.down.visit_params(f);
    }

    fn visit_params_mut<'a>(&'a mut self, f: &mut dyn FnMut(&'a mut Param<F>)) {
        self.up.visit_params_mut(f);
        self.down.visit_params_mut(f);
    }
}

/// Scaled dot-product self-attention with `heads` heads over one sequence.
#[derive(Debug, Clone, PartialEq)]
pub struct MultiHeadAttention<F> {
    pub query: Linear<F>,
    pub key: Linear<F>,
    pub value: Linear<F>,
    pub output: Linear<F>,
    pub heads: usize,
}

pub struct AttentionCache<F> {
    q: Vec<F>,
    k: Vec<F>,
    v: Vec<F>,
    /// `heads × n × n`, row-stochastic per query.
    pub probs: Vec<F>,
    ctx: Vec<F>,
}

impl<F: Float> MultiHeadAttention<F> {
    pub fn new<R: Rng + ?Sized>(name: &str, dim: usize, heads: usize, rng: &mut R) -> Self {
        assert!(heads > 0 && dim % heads == 0, "dim must be divisible by heads");
        MultiHeadAttention {
            query: Linear::xavier(&format!("{name}.query"), dim, dim, rng),
            key: Linear::xavier(&format!("{name}.key"), dim, dim, rng),
            value: Linear::xavier(&format!("{name}.value"), dim, dim, rng),
            output: Linear::xavier(&format!("{name}.output"), dim, dim, rng),
            heads,
        }
    }

    pub fn dim(&self) -> usize {
        self.query.in_dim()
    }

    pub fn forward(&self, x: &[F], n: usize) -> (Vec<F>, AttentionCache<F>) {
        let d = self.dim();
        let dh = d / self.heads;
        let scale: F = cast(1.0 / (dh as f64).sqrt());
        let q = self.query.forward(x, n);
        let k = self.key.forward(x, n);
        let v = self.value.forward(x, n);
        let mut probs = vec![F::zero(); self.heads * n * n];
        let mut ctx = vec![F::zero(); n * d];
        for h in 0..self.heads {
            let off = h * dh;
            for i in 0..n {
                let qi = &q[i * d + off..i * d + off + dh];
                let row = &mut probs[(h * n + i) * n..(h * n + i + 1) * n];
                for (j, s) in row.iter_mut().enumerate() {
                    *s = ops::dot(qi, &k[j * d + off..j * d + off + dh]) * scale;
                }
                ops::softmax_in_place(row);
                let out = &mut ctx[i * d + off..i * d + off + dh];
                for (j, &p) in row.iter().enumerate() {
                    for (o, &vj) in out.iter_mut().zip(&v[j * d + off..j * d + off + dh]) {
                        *o = *o + p * vj;
                    }
                }
            }
        }
        let y = self.output.forward(&ctx, n);
        (y, AttentionCache { q, k, v, probs, ctx })
    }

    pub fn backward(&mut self, x: &[F], cache: &AttentionCache<F>, dy: &[F], n: usize) -> Vec<F> {
        let d = self.dim();
        let dh = d / self.heads;
        let scale: F = cast(1.0 / (dh as f64).sqrt());
        let dctx = self.output.backward(&cache.ctx, dy, n);
        let mut dq = vec![F::zero(); n * d];
        let mut dk = vec![F::zero(); n * d];
        let mut dv = vec![F::zero(); n * d];
        let mut dp = vec![F::zero(); n];
        for h in 0..self.heads {
            let off = h * dh;
            for i in 0..n {
                let p = &cache.probs[(h * n + i) * n..(h * n + i + 1) * n];
                let dci = &dctx[i * d + off..i * d + off + dh];
                for j in 0..n {
                    let vj = &cache.v[j * d + off..j * d + off + dh];
                    dp[j] = ops::dot(dci, vj);
                    for (g, &c) in dv[j * d + off..j * d + off + dh].iter_mut().zip(dci) {
                        *g = *g + p[j] * c;
                    }
                }
                let ds = ops::softmax_backward(p, &dp);
                for (j, &s) in ds.iter().enumerate() {
                    let s = s * scale;
                    if s == F::zero() {
                        continue;
                    }
                    for c in 0..dh {
                        dq[i * d + off + c] = dq[i * d + off + c] + s * cache.k[j * d + off + c];
                        dk[j * d + off + c] = dk[j * d + off + c] + s * cache.q[i * d + off + c];
                    }
                }
            }
        }
        let mut dx = self.query.backward(x, &dq, n);
        for (a, b) in dx.iter_mut().zip(self.key.backward(x, &dk, n)) {
            *a = *a + b;
        }
        for (a, b) in dx.iter_mut().zip(self.value.backward(x, &dv, n)) {
            *a = *a + b;
        }
        dx
    }
}

impl<F: Float> Parameterized<F> for MultiHeadAttention<F> {
    fn visit_params<'a>(&'a self, f: &mut dyn FnMut(&'a Param<F>)) {
        self.query.visit_params(f);
        self.key.visit_params(f);
        self.value.visit_params(f);
        self.output.visit_params(f);
    }

    fn visit_params_mut<'a>(&'a mut self, f: &mut dyn FnMut(&'a mut Param<F>)) {
        self.query.visit_params_mut(f);
        self.key.visit_params_mut(f);
        self.value.visit_params_mut(f);
        self.output.visit_params_mut(f);
    }
}
