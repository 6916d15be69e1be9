//! Distributional losses and targets: quantile Huber regression against
//! n-step soft targets, plus the random-shift image augmentation.

use crate::nn::Scalar;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub const NUM_QUANTILES: usize = 32;
pub const HUBER_KAPPA: f64 = 1.0;

/// Quantile midpoints tau-hat_i = (2i - 1) / (2N), i = 1..N.
pub fn quantile_midpoints(n: usize) -> Vec<f64> {
    (1..=n).map(|i| (2 * i - 1) as f64 / (2 * n) as f64).collect()
}

fn huber(x: f64, kappa: f64) -> f64 {
    let a = x.abs();
    if a <= kappa {
        0.5 * x * x
    } else {
        kappa * (a - 0.5 * kappa)
    }
}

/// d/dx Huber_kappa(x) = clamp(x, -kappa, kappa).
fn huber_grad(x: f64, kappa: f64) -> f64 {
    x.clamp(-kappa, kappa)
}

/// Quantile Huber loss of one predicted N-quantile vector against M target
/// samples, and its gradient w.r.t. the predictions.
/// loss = (1/M) sum_i sum_j |tau_i - 1{t_j < q_i}| * Huber(t_j - q_i) / kappa
pub fn quantile_huber_loss<F: Scalar>(pred: &[F], targets: &[F], kappa: f64) -> (f64, Vec<F>) {
    let n = pred.len();
    let m = targets.len();
    assert!(n >= 1 && m >= 1);
    let taus = quantile_midpoints(n);
    let mut loss = 0.0;
    let mut grad = vec![F::ZERO; n];
    for (i, &q) in pred.iter().enumerate() {
        let q = q.to_f64();
        let mut g = 0.0;
        for &t in targets {
            let t = t.to_f64();
            let resid = t - q;
            let weight = (taus[i] - if resid < 0.0 { 1.0 } else { 0.0 }).abs();
            loss += weight * huber(resid, kappa) / kappa;
            // d resid / d q = -1
            g -= weight * huber_grad(resid, kappa) / kappa;
        }
        grad[i] = F::from_f64(g / m as f64);
    }
    (loss / m as f64, grad)
}

/// n-step soft target samples for one training step.
/// `rewards` holds r_t .. r_{t+k-1} with k = min(n, steps to episode end);
/// `bootstrap` is the element-wise min over target critics' quantiles at
/// s_{t+n} plus log pi of the sampled bootstrap action, absent when the
/// episode terminates inside the window.
pub fn n_step_target<F: Scalar>(
    rewards: &[F],
    gamma: f64,
    bootstrap: Option<(&[F], f64)>,
    alpha: f64,
) -> Vec<F> {
    assert!(!rewards.is_empty());
    let mut base = 0.0f64;
    let mut g = 1.0f64;
    for &r in rewards {
        base += g * r.to_f64();
        g *= gamma;
    }
    match bootstrap {
        Some((quantiles, log_pi)) => quantiles
            .iter()
            .map(|&q| F::from_f64(base + g * (q.to_f64() - alpha * log_pi)))
            .collect(),
        None => vec![F::from_f64(base); NUM_QUANTILES],
    }
}

/// Per-image random integer shift in [-max_shift, max_shift]^2 with mirrored
/// padding. Images are HWC u8; the batch shares one rng stream but each
/// image draws its own offsets.
pub fn random_shift(
    images: &mut [u8],
    h: usize,
    w: usize,
    c: usize,
    max_shift: i64,
    rng: &mut ChaCha8Rng,
) {
    assert!(max_shift >= 0);
    if max_shift == 0 {
        return;
    }
    let img_len = h * w * c;
    assert_eq!(images.len() % img_len, 0);
    let reflect = |i: i64, n: i64| -> usize {
        let r = if i < 0 {
            -i
        } else if i >= n {
            2 * n - 2 - i
        } else {
            i
        };
        r.clamp(0, n - 1) as usize
    };
    let mut scratch = vec![0u8; img_len];
    for img in images.chunks_mut(img_len) {
        let dx = rng.gen_range(-max_shift..=max_shift);
        let dy = rng.gen_range(-max_shift..=max_shift);
        for row in 0..h {
            let src_r = reflect(row as i64 - dy, h as i64);
            for col in 0..w {
                let src_c = reflect(col as i64 - dx, w as i64);
                let src = (src_r * w + src_c) * c;
                let dst = (row * w + col) * c;
                scratch[dst..dst + c].copy_from_slice(&img[src..src + c]);
            }
        }
        img.copy_from_slice(&scratch);
    }
}
