//! Integrated-gradients attribution for the policy: per-pixel importance
//! against a 7x7 mean-blurred baseline, top-percentile masks, and temporal
//! attribution of earlier frames to the final action via backpropagation
//! through the recurrent chain. Gradients are exact (the network's own
//! backward pass), never finite differences.

use crate::nn::nets::{ActorNet, ACTION_DIM, IMG_C, IMG_H, IMG_LEN, IMG_W, PROPRIO_DIM};
use serde::Serialize;
use std::io::Write;
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum AttribError {
    #[error("non-finite gradient at interpolation step {0}")]
    NaNGradient(usize),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

/// Scalar network output the attribution explains.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum AttribTarget {
    /// Deterministic steering output (bounded mean, component 0).
    Steer,
    /// Bounded mean, component 1.
    ThrottleBrake,
    /// L2 norm of the bounded-mean 2-vector.
    CombinedNorm,
}

/// Channel-summed 64x64 attribution of one frame.
#[derive(Debug, Clone, Serialize)]
pub struct AttributionMap {
    /// Row-major [IMG_H * IMG_W], summed over channels.
    pub values: Vec<f64>,
    pub target: AttribTarget,
    pub steps: usize,
    pub baseline: String,
    /// Sum of attributions minus (target(x) - target(baseline)) along this
    /// map's interpolation path.
    pub completeness_residual: f64,
}

const BASELINE_DESC: &str = "box7-mirrored";

fn mirror(i: i64, n: i64) -> usize {
    let mut i = i;
    loop {
        if i < 0 {
            i = -i - 1;
        } else if i >= n {
            i = 2 * n - 1 - i;
        } else {
            return i as usize;
        }
    }
}

/// 7x7 per-channel box filter with mirrored border padding.
pub fn blur_baseline(image: &[f32]) -> Vec<f32> {
    assert_eq!(image.len(), IMG_LEN);
    let mut out = vec![0.0f32; IMG_LEN];
    for y in 0..IMG_H as i64 {
        for x in 0..IMG_W as i64 {
            for c in 0..IMG_C {
                let mut acc = 0.0f32;
                for dy in -3..=3i64 {
                    for dx in -3..=3i64 {
                        let yy = mirror(y + dy, IMG_H as i64);
                        let xx = mirror(x + dx, IMG_W as i64);
                        acc += image[(yy * IMG_W + xx) * IMG_C + c];
                    }
                }
                out[(y as usize * IMG_W + x as usize) * IMG_C + c] = acc / 49.0;
            }
        }
    }
    out
}

fn target_value(mean: &[f32], target: AttribTarget) -> f64 {
    match target {
        AttribTarget::Steer => mean[0] as f64,
        AttribTarget::ThrottleBrake => mean[1] as f64,
        AttribTarget::CombinedNorm => {
            ((mean[0] as f64).powi(2) + (mean[1] as f64).powi(2)).sqrt()
        }
    }
}

fn target_grad(mean: &[f32], target: AttribTarget) -> [f32; ACTION_DIM] {
    match target {
        AttribTarget::Steer => [1.0, 0.0],
        AttribTarget::ThrottleBrake => [0.0, 1.0],
        AttribTarget::CombinedNorm => {
            let norm = (mean[0] * mean[0] + mean[1] * mean[1]).sqrt();
            if norm == 0.0 {
                [0.0, 0.0]
            } else {
                [mean[0] / norm, mean[1] / norm]
            }
        }
    }
}

fn lerp(x0: &[f32], x: &[f32], t: f32) -> Vec<f32> {
    x0.iter().zip(x).map(|(&a, &b)| a + t * (b - a)).collect()
}

fn channel_sum(full: &[f64]) -> Vec<f64> {
    let mut values = vec![0.0f64; IMG_H * IMG_W];
    for (i, v) in full.iter().enumerate() {
        values[i / IMG_C] += v;
    }
    values
}

/// Integrated gradients of `target` over one frame, holding proprio and the
/// incoming hidden state fixed: (x - x0) times the mean of the input
/// gradient over `steps` interpolation points between the blurred baseline
/// x0 and the input x.
pub fn integrated_gradients(
    actor: &mut ActorNet<f32>,
    image: &[f32],
    proprio: &[f32],
    hidden: &[f32],
    target: AttribTarget,
    steps: usize,
) -> Result<AttributionMap, AttribError> {
    assert!(steps >= 1);
    assert_eq!(image.len(), IMG_LEN);
    assert_eq!(proprio.len(), PROPRIO_DIM);
    let x0 = blur_baseline(image);
    let mut grad_sum = vec![0.0f64; IMG_LEN];
    let d_log_std = vec![0.0f32; ACTION_DIM];
    for k in 1..=steps {
        let xk = lerp(&x0, image, k as f32 / steps as f32);
        let (out, cache) = actor.step(&xk, proprio, hidden, 1);
        let d_mean = target_grad(&out.mean, target);
        let (d_img, _) = actor.step_backward(&cache, &d_mean, &d_log_std, None);
        for (acc, g) in grad_sum.iter_mut().zip(&d_img) {
            if !g.is_finite() {
                return Err(AttribError::NaNGradient(k));
            }
            *acc += *g as f64;
        }
    }
    let full: Vec<f64> = grad_sum
        .iter()
        .zip(image.iter().zip(&x0))
        .map(|(&g, (&x, &b))| (x - b) as f64 * g / steps as f64)
        .collect();
    let f_x = target_value(&actor.step_nograd(image, proprio, hidden, 1).mean, target);
    let f_x0 = target_value(&actor.step_nograd(&x0, proprio, hidden, 1).mean, target);
    let total: f64 = full.iter().sum();
    Ok(AttributionMap {
        values: channel_sum(&full),
        target,
        steps,
        baseline: BASELINE_DESC.to_string(),
        completeness_residual: total - (f_x - f_x0),
    })
}

/// Smallest pixel set, by descending |value| with row-major tie order, whose
/// cumulative |value| reaches `fraction` of the total. All-zero maps yield
/// an empty mask.
pub fn top_percent_mask(values: &[f64], fraction: f64) -> Vec<bool> {
    assert!(fraction > 0.0 && fraction <= 1.0);
    let mut order: Vec<usize> = (0..values.len()).collect();
    // stable sort keeps row-major order among ties
    order.sort_by(|&a, &b| {
        values[b]
            .abs()
            .partial_cmp(&values[a].abs())
            .expect("finite attribution values")
    });
    // total accumulated in the same order, so fraction 1.0 terminates
    // exactly at the last nonzero pixel
    let total: f64 = order.iter().map(|&i| values[i].abs()).sum();
    let mut mask = vec![false; values.len()];
    if total == 0.0 {
        return mask;
    }
    let mut cum = 0.0;
    for &i in &order {
        if values[i] == 0.0 {
            break;
        }
        mask[i] = true;
        cum += values[i].abs();
        if cum >= fraction * total {
            break;
        }
    }
    mask
}

/// One input frame for temporal attribution.
#[derive(Debug, Clone)]
pub struct Frame {
    pub image: Vec<f32>,
    pub proprio: Vec<f32>,
}

/// For each frame t of a T-frame sequence, integrated gradients of frame t's
/// image against the action target at the final frame, with gradients
/// flowing through the recurrent chain from t to T. Frames other than t stay
/// at their true values; under the no-RNN ablation every map with t < T is
/// identically zero because no temporal path exists.
pub fn temporal_attribution(
    actor: &mut ActorNet<f32>,
    frames: &[Frame],
    hidden0: &[f32],
    target: AttribTarget,
    steps: usize,
) -> Result<Vec<AttributionMap>, AttribError> {
    assert!(!frames.is_empty());
    let t_last = frames.len() - 1;
    // hidden state entering each frame under the true inputs
    let mut hiddens: Vec<Vec<f32>> = Vec::with_capacity(frames.len());
    let mut h = hidden0.to_vec();
    for f in frames {
        hiddens.push(h.clone());
        h = actor.step_nograd(&f.image, &f.proprio, &h, 1).next_hidden;
    }

    // target at the final frame given frame `t_sub`'s image replaced
    let chain_value = |actor: &mut ActorNet<f32>, t_sub: usize, img: &[f32]| -> f64 {
        let mut h = hiddens[t_sub].clone();
        let mut mean = Vec::new();
        for (t, f) in frames.iter().enumerate().skip(t_sub) {
            let image = if t == t_sub { img } else { &f.image };
            let out = actor.step_nograd(image, &f.proprio, &h, 1);
            h = out.next_hidden;
            mean = out.mean;
        }
        target_value(&mean, target)
    };

    let d_log_std = vec![0.0f32; ACTION_DIM];
    let zero_mean = [0.0f32; ACTION_DIM];
    let mut maps = Vec::with_capacity(frames.len());
    for t in 0..frames.len() {
        if actor.cfg.no_rnn && t < t_last {
            // no temporal path: exactly zero by construction
            maps.push(AttributionMap {
                values: vec![0.0; IMG_H * IMG_W],
                target,
                steps,
                baseline: BASELINE_DESC.to_string(),
                completeness_residual: 0.0,
            });
            continue;
        }
        let x = &frames[t].image;
        let x0 = blur_baseline(x);
        let mut grad_sum = vec![0.0f64; IMG_LEN];
        for k in 1..=steps {
            let xk = lerp(&x0, x, k as f32 / steps as f32);
            // forward t..=T with caches
            let mut h = hiddens[t].clone();
            let mut caches = Vec::with_capacity(frames.len() - t);
            for (s, f) in frames.iter().enumerate().skip(t) {
                let image = if s == t { &xk } else { &f.image };
                let (out, cache) = actor.step(image, &f.proprio, &h, 1);
                h = out.next_hidden.clone();
                caches.push((out, cache));
            }
            // backward T..=t through the recurrent chain
            let mut d_hidden: Option<Vec<f32>> = None;
            let mut d_img_t: Option<Vec<f32>> = None;
            for (s, (out, cache)) in caches.iter().enumerate().rev() {
                let d_mean = if s == caches.len() - 1 {
                    target_grad(&out.mean, target)
                } else {
                    zero_mean
                };
                let (d_img, d_h_prev) =
                    actor.step_backward(cache, &d_mean, &d_log_std, d_hidden.as_deref());
                if s == 0 {
                    d_img_t = Some(d_img);
                }
                if d_h_prev.is_empty() && s > 0 {
                    // no recurrent path further back; frame t gets no grad
                    break;
                }
                d_hidden = Some(d_h_prev);
            }
            if let Some(d_img) = d_img_t {
                for (acc, g) in grad_sum.iter_mut().zip(&d_img) {
                    if !g.is_finite() {
                        return Err(AttribError::NaNGradient(k));
                    }
                    *acc += *g as f64;
                }
            }
        }
        let full: Vec<f64> = grad_sum
            .iter()
            .zip(x.iter().zip(&x0))
            .map(|(&g, (&xv, &bv))| (xv - bv) as f64 * g / steps as f64)
            .collect();
        let f_x = chain_value(actor, t, x);
        let f_x0 = chain_value(actor, t, &x0);
        let total: f64 = full.iter().sum();
        maps.push(AttributionMap {
            values: channel_sum(&full),
            target,
            steps,
            baseline: BASELINE_DESC.to_string(),
            completeness_residual: total - (f_x - f_x0),
        });
    }
    Ok(maps)
}

/// Write a map as a binary PGM (max-normalized |value|) plus a JSON sidecar
/// with the metadata and completeness residual.
pub fn export_attribution(map: &AttributionMap, base: &Path) -> Result<(), AttribError> {
    let peak = map.values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let mut pgm = Vec::with_capacity(IMG_H * IMG_W + 32);
    write!(pgm, "P5\n{IMG_W} {IMG_H}\n255\n")?;
    for v in &map.values {
        let byte = if peak == 0.0 {
            0u8
        } else {
            ((v.abs() / peak) * 255.0).round() as u8
        };
        pgm.push(byte);
    }
    std::fs::write(base.with_extension("pgm"), pgm)?;
    let sidecar = serde_json::json!({
        "target": map.target,
        "steps": map.steps,
        "baseline": map.baseline,
        "completeness_residual": map.completeness_residual,
        "peak_abs_value": peak,
    });
    std::fs::write(
        base.with_extension("json"),
        serde_json::to_string_pretty(&sidecar).expect("serializable"),
    )?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::nets::ArchConfig;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn tiny_actor(no_rnn: bool) -> ActorNet<f32> {
        ActorNet::new(
            ArchConfig {
                hidden_size: 4,
                trunk_width: 6,
                no_rnn,
                symmetric_critic: false,
            },
            12,
        )
    }

    fn random_image(seed: u64) -> Vec<f32> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..IMG_LEN).map(|_| rng.gen_range(0.0..1.0)).collect()
    }

    fn zero_proprio() -> Vec<f32> {
        vec![0.0; PROPRIO_DIM]
    }

    #[test]
    fn blur_of_constant_is_unchanged() {
        let img = vec![0.37f32; IMG_LEN];
        let out = blur_baseline(&img);
        for v in out {
            assert!((v - 0.37).abs() < 1e-6);
        }
    }

    #[test]
    fn blur_spreads_a_bright_pixel_over_49() {
        let mut img = vec![0.0f32; IMG_LEN];
        img[(30 * IMG_W + 30) * IMG_C] = 1.0; // interior pixel, channel 0
        let out = blur_baseline(&img);
        let mut nonzero = 0;
        for y in 0..IMG_H {
            for x in 0..IMG_W {
                let v = out[(y * IMG_W + x) * IMG_C];
                if v != 0.0 {
                    nonzero += 1;
                    assert!((v - 1.0 / 49.0).abs() < 1e-7);
                    assert!((27..=33).contains(&y) && (27..=33).contains(&x));
                }
            }
        }
        assert_eq!(nonzero, 49);
        // other channels untouched
        assert!(out.iter().skip(1).step_by(3).all(|&v| v == 0.0));
    }

    #[test]
    fn blur_output_stays_in_input_range() {
        let img = random_image(5);
        let lo = img.iter().cloned().fold(f32::INFINITY, f32::min);
        let hi = img.iter().cloned().fold(f32::NEG_INFINITY, f32::max);
        for v in blur_baseline(&img) {
            assert!(v >= lo - 1e-6 && v <= hi + 1e-6);
        }
    }

    #[test]
    fn ig_is_zero_when_input_equals_baseline() {
        // a constant image is a fixed point of the box filter
        let mut actor = tiny_actor(false);
        let img = vec![0.5f32; IMG_LEN];
        let h = actor.zero_hidden(1);
        let map =
            integrated_gradients(&mut actor, &img, &zero_proprio(), &h, AttribTarget::Steer, 4)
                .unwrap();
        assert!(map.values.iter().all(|&v| v == 0.0));
        assert!(map.completeness_residual.abs() < 1e-6);
    }

    #[test]
    fn ig_satisfies_completeness_at_200_steps() {
        let mut actor = tiny_actor(false);
        let img = random_image(9);
        let h = actor.zero_hidden(1);
        let map = integrated_gradients(
            &mut actor,
            &img,
            &zero_proprio(),
            &h,
            AttribTarget::Steer,
            200,
        )
        .unwrap();
        let total: f64 = map.values.iter().sum();
        let delta = total - map.completeness_residual; // = f(x) - f(x0)
        assert!(
            map.completeness_residual.abs() <= 0.02 * delta.abs().max(1e-6),
            "residual {} vs delta {}",
            map.completeness_residual,
            delta
        );
    }

    #[test]
    fn ig_converges_with_more_steps() {
        let mut actor = tiny_actor(false);
        let img = random_image(11);
        let h = actor.zero_hidden(1);
        let residual = |actor: &mut ActorNet<f32>, steps| {
            integrated_gradients(actor, &img, &zero_proprio(), &h, AttribTarget::Steer, steps)
                .unwrap()
                .completeness_residual
                .abs()
        };
        let coarse = (residual(&mut actor, 20) - residual(&mut actor, 40)).abs();
        let fine = (residual(&mut actor, 200) - residual(&mut actor, 400)).abs();
        assert!(fine <= coarse + 1e-12, "fine {fine} vs coarse {coarse}");
    }

    #[test]
    fn attribution_is_zero_outside_the_changed_region() {
        // input equals its own baseline except where we plant structure:
        // attributions outside that region must be exactly zero
        let mut actor = tiny_actor(false);
        let base = vec![0.5f32; IMG_LEN];
        let mut img = base.clone();
        for y in 10..14 {
            for x in 20..24 {
                for c in 0..IMG_C {
                    img[(y * IMG_W + x) * IMG_C + c] = 1.0;
                }
            }
        }
        let h = actor.zero_hidden(1);
        let map =
            integrated_gradients(&mut actor, &img, &zero_proprio(), &h, AttribTarget::Steer, 8)
                .unwrap();
        for y in 0..IMG_H {
            for x in 0..IMG_W {
                let v = map.values[y * IMG_W + x];
                // the blur smears the planted square by the 3-pixel radius
                let near = (7..=16).contains(&y) && (17..=26).contains(&x);
                if !near {
                    assert_eq!(v, 0.0, "leak at ({y},{x})");
                }
            }
        }
    }

    #[test]
    fn mask_rules() {
        let n = IMG_H * IMG_W;
        // single nonzero pixel
        let mut vals = vec![0.0f64; n];
        vals[123] = -0.7;
        let mask = top_percent_mask(&vals, 0.9);
        assert_eq!(mask.iter().filter(|&&b| b).count(), 1);
        assert!(mask[123]);
        // uniform map at fraction 0.5: exactly half the pixels, row-major
        let vals = vec![1.0f64; n];
        let mask = top_percent_mask(&vals, 0.5);
        assert_eq!(mask.iter().filter(|&&b| b).count(), n / 2);
        assert!(mask[..n / 2].iter().all(|&b| b));
        // fraction 1.0: all nonzero pixels, zeros excluded
        let mut vals = vec![1.0f64; n];
        vals[7] = 0.0;
        let mask = top_percent_mask(&vals, 1.0);
        assert_eq!(mask.iter().filter(|&&b| b).count(), n - 1);
        assert!(!mask[7]);
        // all-zero map: empty mask
        assert!(top_percent_mask(&vec![0.0; n], 0.9).iter().all(|&b| !b));
    }

    #[test]
    fn mask_is_monotone_in_fraction() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let vals: Vec<f64> = (0..IMG_H * IMG_W).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let small = top_percent_mask(&vals, 0.3);
        let large = top_percent_mask(&vals, 0.8);
        for (s, l) in small.iter().zip(&large) {
            assert!(!s || *l, "mask(0.3) must be a subset of mask(0.8)");
        }
    }

    #[test]
    fn temporal_with_one_frame_equals_plain_ig() {
        let mut actor = tiny_actor(false);
        let img = random_image(21);
        let h = actor.zero_hidden(1);
        let frames = vec![Frame {
            image: img.clone(),
            proprio: zero_proprio(),
        }];
        let maps =
            temporal_attribution(&mut actor, &frames, &h, AttribTarget::CombinedNorm, 6).unwrap();
        let single = integrated_gradients(
            &mut actor,
            &img,
            &zero_proprio(),
            &h,
            AttribTarget::CombinedNorm,
            6,
        )
        .unwrap();
        assert_eq!(maps.len(), 1);
        for (a, b) in maps[0].values.iter().zip(&single.values) {
            assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn temporal_past_frames_carry_gradient_only_with_recurrence() {
        let frames: Vec<Frame> = (0..3)
            .map(|i| Frame {
                image: random_image(30 + i),
                proprio: zero_proprio(),
            })
            .collect();

        let mut rnn = tiny_actor(false);
        let h = rnn.zero_hidden(1);
        let maps = temporal_attribution(&mut rnn, &frames, &h, AttribTarget::Steer, 4).unwrap();
        assert_eq!(maps.len(), 3);
        let past_mass: f64 = maps[..2]
            .iter()
            .flat_map(|m| m.values.iter())
            .map(|v| v.abs())
            .sum();
        assert!(past_mass > 0.0, "recurrent chain passed no gradient");

        let mut ff = tiny_actor(true);
        let maps = temporal_attribution(&mut ff, &frames, &[], AttribTarget::Steer, 4).unwrap();
        for m in &maps[..2] {
            assert!(m.values.iter().all(|&v| v == 0.0));
        }
        let last_mass: f64 = maps[2].values.iter().map(|v| v.abs()).sum();
        assert!(last_mass > 0.0);
    }

    #[test]
    fn export_writes_pgm_and_sidecar() {
        let dir = tempfile::tempdir().unwrap();
        let base = dir.path().join("frame_000");
        let mut vals = vec![0.0f64; IMG_H * IMG_W];
        vals[0] = 1.0;
        vals[1] = -0.5;
        let map = AttributionMap {
            values: vals,
            target: AttribTarget::Steer,
            steps: 20,
            baseline: BASELINE_DESC.to_string(),
            completeness_residual: 0.001,
        };
        export_attribution(&map, &base).unwrap();
        let pgm = std::fs::read(base.with_extension("pgm")).unwrap();
        assert!(pgm.starts_with(b"P5\n64 64\n255\n"));
        assert_eq!(pgm.len(), 13 + IMG_H * IMG_W);
        assert_eq!(pgm[13], 255); // peak pixel
        assert_eq!(pgm[14], 128); // half of peak, rounded
        let sidecar: serde_json::Value =
            serde_json::from_str(&std::fs::read_to_string(base.with_extension("json")).unwrap())
                .unwrap();
        assert_eq!(sidecar["steps"], 20);
        assert_eq!(sidecar["target"], "steer");
    }
}
