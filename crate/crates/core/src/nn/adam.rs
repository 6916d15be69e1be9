//! Adam with bias correction. Each network keeps its own step counter so
//! re-initialization restarts the schedule.

use super::layers::Param;
use super::tensor::Scalar;

#[derive(Debug, Clone, Copy)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            lr: 2.5e-5,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// One Adam update over a parameter set. `t` is the 1-based step count
/// after this update (the caller increments its counter first).
pub fn adam_step<F: Scalar>(params: &mut [&mut Param<F>], cfg: &AdamConfig, t: u64) {
    assert!(t >= 1, "Adam step counter must be incremented before stepping");
    let b1 = F::from_f64(cfg.beta1);
    let b2 = F::from_f64(cfg.beta2);
    let one_m_b1 = F::from_f64(1.0 - cfg.beta1);
    let one_m_b2 = F::from_f64(1.0 - cfg.beta2);
    let bc1 = 1.0 - cfg.beta1.powi(t as i32);
    let bc2 = 1.0 - cfg.beta2.powi(t as i32);
    let alpha = F::from_f64(cfg.lr / bc1);
    let bc2_sqrt = F::from_f64(bc2.sqrt());
    let eps = F::from_f64(cfg.eps);
    for p in params.iter_mut() {
        for i in 0..p.value.len() {
            let g = p.grad.data[i];
            let m = b1 * p.m.data[i] + one_m_b1 * g;
            let v = b2 * p.v.data[i] + one_m_b2 * g * g;
            p.m.data[i] = m;
            p.v.data[i] = v;
            p.value.data[i] -= alpha * m / (v.sqrt() / bc2_sqrt + eps);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::tensor::Tensor;

    fn one_param(value: f64, grad: f64) -> Param<f64> {
        let mut p = Param::new("p", Tensor::from_vec(&[1], vec![value]));
        p.grad.data[0] = grad;
        p
    }

    #[test]
    fn first_step_closed_form() {
        // with bias correction, the first step moves by lr * g/(|g| + eps')
        let cfg = AdamConfig {
            lr: 1e-3,
            ..AdamConfig::default()
        };
        let g = 0.5f64;
        let mut p = one_param(1.0, g);
        adam_step(&mut [&mut p], &cfg, 1);
        let m = (1.0 - cfg.beta1) * g;
        let v = (1.0 - cfg.beta2) * g * g;
        let m_hat = m / (1.0 - cfg.beta1);
        let v_hat = v / (1.0 - cfg.beta2);
        let expect = 1.0 - cfg.lr * m_hat / (v_hat.sqrt() + cfg.eps);
        assert!(
            (p.value.data[0] - expect).abs() < 1e-10,
            "{} vs {expect}",
            p.value.data[0]
        );
    }

    #[test]
    fn zero_grad_zero_move_initially() {
        let cfg = AdamConfig::default();
        let mut p = one_param(3.0, 0.0);
        adam_step(&mut [&mut p], &cfg, 1);
        assert_eq!(p.value.data[0], 3.0);
    }

    #[test]
    fn moments_persist_across_steps() {
        let cfg = AdamConfig {
            lr: 1e-2,
            ..AdamConfig::default()
        };
        let mut p = one_param(0.0, 1.0);
        adam_step(&mut [&mut p], &cfg, 1);
        let after_one = p.value.data[0];
        // second step with zero grad still moves because momentum persists
        p.grad.data[0] = 0.0;
        adam_step(&mut [&mut p], &cfg, 2);
        assert!(p.value.data[0] < after_one);
        // resetting moments freezes the zero-grad update
        p.reset_moments();
        let frozen = p.value.data[0];
        adam_step(&mut [&mut p], &cfg, 3);
        assert_eq!(p.value.data[0], frozen);
    }

    #[test]
    fn descends_a_quadratic() {
        let cfg = AdamConfig {
            lr: 5e-2,
            ..AdamConfig::default()
        };
        let mut p = one_param(2.0, 0.0);
        for t in 1..=500u64 {
            p.grad.data[0] = 2.0 * p.value.data[0]; // d/dx x^2
            adam_step(&mut [&mut p], &cfg, t);
        }
        assert!(p.value.data[0].abs() < 0.05, "{}", p.value.data[0]);
    }
}
