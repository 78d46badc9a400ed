//! Parameter-free primitives and their gradients.

use rand::Rng;

use super::{cast, Float};
use crate::error::{Error, Result};

/// `a` is n×k, `b` is k×m, result n×m.
pub fn matmul<F: Float>(a: &[F], b: &[F], n: usize, k: usize, m: usize) -> Vec<F> {
    debug_assert_eq!(a.len(), n * k);
    debug_assert_eq!(b.len(), k * m);
    let mut out = vec![F::zero(); n * m];
    for i in 0..n {
        let row = &mut out[i * m..(i + 1) * m];
        for (p, &aip) in a[i * k..(i + 1) * k].iter().enumerate() {
            if aip == F::zero() {
                continue;
            }
            for (o, &bpj) in row.iter_mut().zip(&b[p * m..(p + 1) * m]) {
                *o = *o + aip * bpj;
            }
        }
    }
    out
}

/// `a` is n×k, `b` is m×k, result n×m = a·bᵀ.
pub fn matmul_bt<F: Float>(a: &[F], b: &[F], n: usize, k: usize, m: usize) -> Vec<F> {
    let mut out = vec![F::zero(); n * m];
    for i in 0..n {
        let ai = &a[i * k..(i + 1) * k];
        for j in 0..m {
            out[i * m + j] = dot(ai, &b[j * k..(j + 1) * k]);
        }
    }
    out
}

/// Accumulates aᵀ·b into `out` (k×m), with `a` n×k and `b` n×m.
pub fn matmul_at_acc<F: Float>(a: &[F], b: &[F], n: usize, k: usize, m: usize, out: &mut [F]) {
    for i in 0..n {
        let bi = &b[i * m..(i + 1) * m];
        for (p, &aip) in a[i * k..(i + 1) * k].iter().enumerate() {
            if aip == F::zero() {
                continue;
            }
            for (o, &bij) in out[p * m..(p + 1) * m].iter_mut().zip(bi) {
                *o = *o + aip * bij;
            }
        }
    }
}

#[inline]
pub fn dot<F: Float>(a: &[F], b: &[F]) -> F {
    a.iter().zip(b).fold(F::zero(), |acc, (&x, &y)| acc + x * y)
}

/// Numerically stable softmax (max-shifted).
pub fn softmax<F: Float>(logits: &[F]) -> Vec<F> {
    let mut out = logits.to_vec();
    softmax_in_place(&mut out);
    out
}

pub fn softmax_in_place<F: Float>(x: &mut [F]) {
    let max = x.iter().copied().fold(F::neg_infinity(), F::max);
    let mut sum = F::zero();
    for v in x.iter_mut() {
        *v = (*v - max).exp();
        sum = sum + *v;
    }
    for v in x.iter_mut() {
        *v = *v / sum;
    }
}

pub fn log_softmax<F: Float>(logits: &[F]) -> Vec<F> {
    let max = logits.iter().copied().fold(F::neg_infinity(), F::max);
    let lse = logits.iter().fold(F::zero(), |acc, &v| acc + (v - max).exp()).ln() + max;
    logits.iter().map(|&v| v - lse).collect()
}

/// Gradient through softmax: given p = softmax(z) and dL/dp, returns dL/dz.
pub fn softmax_backward<F: Float>(p: &[F], dp: &[F]) -> Vec<F> {
    let inner = dot(p, dp);
    p.iter().zip(dp).map(|(&pi, &di)| pi * (di - inner)).collect()
}

/// `-ln probs[target]`.
pub fn cross_entropy<F: Float>(probs: &[F], target: usize) -> Result<F> {
    let p = *probs.get(target).ok_or(Error::TargetOutOfRange {
        target,
        classes: probs.len(),
    })?;
    Ok(-p.ln())
}

/// Gradient of cross-entropy w.r.t. the logits that produced `probs`.
pub fn cross_entropy_grad<F: Float>(probs: &[F], target: usize) -> Result<Vec<F>> {
    if target >= probs.len() {
        return Err(Error::TargetOutOfRange {
            target,
            classes: probs.len(),
        });
    }
    let mut g = probs.to_vec();
    g[target] = g[target] - F::one();
    Ok(g)
}

/// Cross-entropy from logits via log-softmax, avoiding `ln(0)` when a
/// probability underflows.
pub fn cross_entropy_logits<F: Float>(logits: &[F], target: usize) -> Result<F> {
    if target >= logits.len() {
        return Err(Error::TargetOutOfRange {
            target,
            classes: logits.len(),
        });
    }
    Ok(-log_softmax(logits)[target])
}

const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2/pi)
const GELU_A: f64 = 0.044_715;

/// tanh approximation of GELU.
pub fn gelu<F: Float>(x: F) -> F {
    let c: F = cast(GELU_C);
    let a: F = cast(GELU_A);
    let half: F = cast(0.5);
    half * x * (F::one() + (c * (x + a * x * x * x)).tanh())
}

pub fn gelu_grad<F: Float>(x: F) -> F {
    let c: F = cast(GELU_C);
    let a: F = cast(GELU_A);
    let half: F = cast(0.5);
    let three: F = cast(3.0);
    let t = (c * (x + a * x * x * x)).tanh();
    half * (F::one() + t) + half * x * (F::one() - t * t) * c * (F::one() + three * a * x * x)
}

pub fn relu<F: Float>(x: F) -> F {
    x.max(F::zero())
}

pub fn relu_grad<F: Float>(x: F) -> F {
    if x > F::zero() {
        F::one()
    } else {
        F::zero()
    }
}

/// Inverted-dropout mask: each entry is 0 with probability `p`, otherwise
/// `1/(1-p)`.
pub fn dropout_mask<F: Float, R: Rng + ?Sized>(rng: &mut R, len: usize, p: f64) -> Vec<F> {
    let keep: F = cast(1.0 / (1.0 - p));
    (0..len)
        .map(|_| if rng.random::<f64>() < p { F::zero() } else { keep })
        .collect()
}

pub fn concat<F: Float>(parts: &[&[F]]) -> Vec<F> {
    parts.iter().flat_map(|p| p.iter().copied()).collect()
}

pub fn sub<F: Float>(a: &[F], b: &[F]) -> Vec<F> {
    a.iter().zip(b).map(|(&x, &y)| x - y).collect()
}
