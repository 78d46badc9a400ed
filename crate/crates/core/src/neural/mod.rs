//! Differentiable primitives with hand-written backward passes, parameter
//! containers and the Adam optimizer.
//!
//! Everything is generic over [`Float`] so the same code runs in `f32` for
//! training and in `f64` for finite-difference gradient oracles.

pub mod adam;
pub mod gradcheck;
pub mod init;
pub mod layers;
pub mod ops;

use std::fmt::{Debug, Display};
use std::iter::Sum;

use crate::error::{Error, Result};

pub use adam::{AdamConfig, AdamState};
pub use gradcheck::{grad_check, max_relative_error, numeric_gradient};
pub use init::{stream_rng, StreamRng};
pub use layers::{Activation, Embedding, FeedForward, LayerNorm, Linear, MultiHeadAttention};

pub trait Float:
    num_traits::Float + num_traits::FromPrimitive + Sum + Default + Debug + Display + Send + Sync + 'static
{
}

impl Float for f32 {}
impl Float for f64 {}

#[inline]
pub fn cast<F: Float>(x: f64) -> F {
    F::from_f64(x).expect("finite constant")
}

/// Dense row-major tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor<F> {
    pub shape: Vec<usize>,
    pub data: Vec<F>,
}

impl<F: Float> Tensor<F> {
    pub fn zeros(shape: &[usize]) -> Self {
        Tensor {
            shape: shape.to_vec(),
            data: vec![F::zero(); shape.iter().product()],
        }
    }

    pub fn from_vec(shape: &[usize], data: Vec<F>) -> Result<Self> {
        let n: usize = shape.iter().product();
        if n != data.len() {
            return Err(Error::Shape(format!(
                "shape {shape:?} needs {n} values, got {}",
                data.len()
            )));
        }
        Ok(Tensor {
            shape: shape.to_vec(),
            data,
        })
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn rows(&self) -> usize {
        self.shape.first().copied().unwrap_or(1)
    }

    pub fn cols(&self) -> usize {
        self.shape.get(1).copied().unwrap_or(1)
    }

    pub fn row(&self, i: usize) -> &[F] {
        let c = self.cols();
        &self.data[i * c..(i + 1) * c]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [F] {
        let c = self.cols();
        &mut self.data[i * c..(i + 1) * c]
    }

    pub fn fill_zero(&mut self) {
        self.data.iter_mut().for_each(|x| *x = F::zero());
    }

    pub fn cast<G: Float>(&self) -> Tensor<G> {
        Tensor {
            shape: self.shape.clone(),
            data: self
                .data
                .iter()
                .map(|x| G::from_f64(x.to_f64().unwrap()).unwrap())
                .collect(),
        }
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }
}

/// A named trainable tensor and its accumulated gradient.
#[derive(Debug, Clone, PartialEq)]
pub struct Param<F> {
    pub name: String,
    pub value: Tensor<F>,
    pub grad: Tensor<F>,
}

impl<F: Float> Param<F> {
    pub fn new(name: impl Into<String>, value: Tensor<F>) -> Self {
        let grad = Tensor::zeros(&value.shape);
        Param {
            name: name.into(),
            value,
            grad,
        }
    }

    pub fn zero_grad(&mut self) {
        self.grad.fill_zero();
    }

    pub fn cast<G: Float>(&self) -> Param<G> {
        Param {
            name: self.name.clone(),
            value: self.value.cast(),
            grad: self.grad.cast(),
        }
    }
}

/// Anything holding parameters, visited in a fixed order.
pub trait Parameterized<F: Float> {
    fn visit_params<'a>(&'a self, f: &mut dyn FnMut(&'a Param<F>));
    fn visit_params_mut<'a>(&'a mut self, f: &mut dyn FnMut(&'a mut Param<F>));

    fn params(&self) -> Vec<&Param<F>> {
        let mut out = Vec::new();
        self.visit_params(&mut |p| out.push(p));
        out
    }

    fn params_mut(&mut self) -> Vec<&mut Param<F>> {
        let mut out = Vec::new();
        self.visit_params_mut(&mut |p| out.push(p));
        out
    }

    fn zero_grad(&mut self) {
        self.visit_params_mut(&mut |p| p.zero_grad());
    }

    fn num_params(&self) -> usize {
        self.params().iter().map(|p| p.value.len()).sum()
    }
}

/// Scales all gradients so their global L2 norm is at most `max_norm`.
/// Returns the norm before clipping.
pub fn clip_grad_norm<F: Float>(params: &mut [&mut Param<F>], max_norm: F) -> F {
    let mut sq = F::zero();
    for p in params.iter() {
        for &g in &p.grad.data {
            sq = sq + g * g;
        }
    }
    let norm = sq.sqrt();
    if norm > max_norm {
        let scale = max_norm / norm;
        for p in params.iter_mut() {
            p.grad.data.iter_mut().for_each(|g| *g = *g * scale);
        }
    }
    norm
}
