//! Deterministic weight initialization: fan-in uniform for dense/conv
//! kernels, orthogonal for GRU recurrent matrices, zero biases.

use super::tensor::{Scalar, Tensor};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub type InitRng = ChaCha8Rng;

/// Uniform in [-1/sqrt(fan_in), 1/sqrt(fan_in)].
pub fn fan_in_uniform<F: Scalar>(shape: &[usize], fan_in: usize, rng: &mut InitRng) -> Tensor<F> {
    let bound = 1.0 / (fan_in as f64).sqrt();
    let n: usize = shape.iter().product();
    let data = (0..n)
        .map(|_| F::from_f64(rng.gen_range(-bound..bound)))
        .collect();
    Tensor::from_vec(shape, data)
}

/// Standard normal draws via Box-Muller (keeps the RNG stream identical
/// across float widths).
pub fn normal(rng: &mut InitRng) -> f64 {
    let u1: f64 = rng.gen_range(f64::EPSILON..1.0);
    let u2: f64 = rng.gen_range(0.0..1.0);
    (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
}

/// Square orthogonal matrix via Gram-Schmidt on a Gaussian draw.
pub fn orthogonal<F: Scalar>(dim: usize, rng: &mut InitRng) -> Tensor<F> {
    let mut rows: Vec<Vec<f64>> = (0..dim)
        .map(|_| (0..dim).map(|_| normal(rng)).collect())
        .collect();
    for i in 0..dim {
        for j in 0..i {
            let dot: f64 = rows[i].iter().zip(&rows[j]).map(|(a, b)| a * b).sum();
            for k in 0..dim {
                rows[i][k] -= dot * rows[j][k];
            }
        }
        let norm: f64 = rows[i].iter().map(|x| x * x).sum::<f64>().sqrt();
        // a degenerate draw is vanishingly unlikely; re-normalize defensively
        let inv = if norm > 0.0 { 1.0 / norm } else { 0.0 };
        for x in rows[i].iter_mut() {
            *x *= inv;
        }
    }
    let data = rows
        .into_iter()
        .flatten()
        .map(F::from_f64)
        .collect::<Vec<_>>();
    Tensor::from_vec(&[dim, dim], data)
}
