//! The QR-SAC gradient-step engine: marshals sampled sequences into
//! time-major batches, warms recurrent state with an inference-only burn-in,
//! regresses twin quantile critics against n-step soft targets built from
//! stored replay hidden states, updates the actor by backpropagation through
//! time over the training window, and Polyak-averages the target critics.
//!
//! The batch routines are free functions, generic over the scalar type, so
//! the whole update can be finite-difference checked in f64.

use super::buffer::{BufferError, ReplayBuffer, SequenceSample, GLOBAL_LEN};
use super::loss::{n_step_target, quantile_huber_loss, random_shift};
use crate::nn::adam::{adam_step, AdamConfig};
use crate::nn::checkpoint::{
    load_checkpoint, named_tensors, save_checkpoint, CheckpointError, CheckpointHeader,
};
use crate::nn::init::normal;
use crate::nn::nets::{
    sample_squashed, sample_squashed_backward, ActorNet, ActorStepCache, ArchConfig, CriticCache,
    CriticInput, CriticNet, ACTION_DIM, GLOBAL_DIM, IMG_LEN, NUM_QUANTILES, PROPRIO_DIM,
};
use crate::nn::{Param, Scalar};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

const _: () = assert!(GLOBAL_LEN == GLOBAL_DIM);

/// Hyperparameters of the learner. Defaults are the paper-scale values; the
/// desk profile shrinks the batch shape and epoch length, not the math.
#[derive(Debug, Clone, Copy)]
pub struct LearnerConfig {
    pub arch: ArchConfig,
    /// Discount factor.
    pub gamma: f64,
    /// n-step return horizon.
    pub n_step: usize,
    /// Fixed entropy temperature.
    pub alpha: f64,
    /// Quantile Huber threshold.
    pub kappa: f64,
    /// Polyak averaging rate for the target critics.
    pub polyak_tau: f64,
    pub adam: AdamConfig,
    pub grad_steps_per_epoch: usize,
    /// Trajectory segments per batch.
    pub segments_per_batch: usize,
    /// Inference-only warm-up steps before each training window.
    pub burn_in: usize,
    /// Training window length (BPTT horizon).
    pub seq_len: usize,
    /// Random-shift augmentation amplitude in pixels (0 disables).
    pub shift_pixels: i64,
    /// Ablation: ignore stored hidden states and warm up from zeros.
    pub zero_hidden_init: bool,
    /// Re-draw all network weights once, the first time the replay buffer
    /// reaches capacity.
    pub reinit_on_full: bool,
    /// Force the one-time re-draw at a fixed epoch instead.
    pub reinit_epoch: Option<u64>,
    pub seed: u64,
}

impl Default for LearnerConfig {
    fn default() -> Self {
        LearnerConfig {
            arch: ArchConfig::default(),
            gamma: 0.9896,
            n_step: 7,
            alpha: 0.01,
            kappa: 1.0,
            polyak_tau: 0.005,
            adam: AdamConfig::default(),
            grad_steps_per_epoch: 25,
            segments_per_batch: 16,
            burn_in: 16,
            seq_len: 32,
            shift_pixels: 4,
            zero_hidden_init: false,
            reinit_on_full: true,
            reinit_epoch: None,
            seed: 0,
        }
    }
}

/// One sampled segment, unpacked into scalar-typed, augmentation-applied,
/// chain-contiguous arrays. Chain layout: burn-in prefix, training window,
/// bootstrap tail.
pub struct PreparedSegment<F: Scalar> {
    pub burn_len: usize,
    pub train_len: usize,
    pub chain_len: usize,
    /// [chain_len * IMG_LEN], already shifted.
    pub images: Vec<F>,
    /// [chain_len * PROPRIO_DIM]
    pub proprio: Vec<F>,
    /// [chain_len * GLOBAL_DIM]
    pub global: Vec<F>,
    /// Behavior actions, [chain_len * ACTION_DIM].
    pub actions: Vec<F>,
    /// [chain_len]
    pub rewards: Vec<F>,
    /// Stored recurrent states, [chain_len * hidden_dim].
    pub hidden: Vec<F>,
    /// Stored state at the chain start.
    pub init_hidden: Vec<F>,
}

/// Unpack a buffer sample, applying the random-shift augmentation across
/// each segment's whole chain (one offset pair per image).
pub fn prepare_segments<F: Scalar>(
    sample: &SequenceSample,
    hidden_dim: usize,
    shift_pixels: i64,
    rng: &mut ChaCha8Rng,
) -> Vec<PreparedSegment<F>> {
    let inv = 1.0 / 255.0;
    sample
        .segments
        .iter()
        .map(|seg| {
            let chain: Vec<_> = seg.burn.iter().chain(&seg.train).chain(&seg.tail).collect();
            let chain_len = chain.len();
            let mut raw = Vec::with_capacity(chain_len * IMG_LEN);
            for s in &chain {
                assert_eq!(s.image.len(), IMG_LEN);
                raw.extend_from_slice(&s.image);
            }
            random_shift(&mut raw, 64, 64, 3, shift_pixels, rng);
            let images = raw.iter().map(|&v| F::from_f64(v as f64 * inv)).collect();
            let mut proprio = Vec::with_capacity(chain_len * PROPRIO_DIM);
            let mut global = Vec::with_capacity(chain_len * GLOBAL_DIM);
            let mut actions = Vec::with_capacity(chain_len * ACTION_DIM);
            let mut rewards = Vec::with_capacity(chain_len);
            let mut hidden = Vec::with_capacity(chain_len * hidden_dim);
            for s in &chain {
                proprio.extend(s.proprio.iter().map(|&v| F::from_f64(v as f64)));
                assert_eq!(s.global.len(), GLOBAL_DIM);
                global.extend(s.global.iter().map(|&v| F::from_f64(v as f64)));
                actions.extend(s.action.iter().map(|&v| F::from_f64(v as f64)));
                rewards.push(F::from_f64(s.reward as f64));
                assert_eq!(s.hidden.len(), hidden_dim);
                hidden.extend(s.hidden.iter().map(|&v| F::from_f64(v as f64)));
            }
            let init_hidden = seg
                .init_hidden
                .iter()
                .map(|&v| F::from_f64(v as f64))
                .collect();
            PreparedSegment {
                burn_len: seg.burn.len(),
                train_len: seg.train.len(),
                chain_len,
                images,
                proprio,
                global,
                actions,
                rewards,
                hidden,
                init_hidden,
            }
        })
        .collect()
}

/// Inference-only unroll over each segment's burn-in prefix; returns the
/// recurrent state at the start of the training window, [n_segs * hidden].
/// Empty under no_rnn.
pub fn burn_in_unroll<F: Scalar>(
    actor: &ActorNet<F>,
    segs: &[PreparedSegment<F>],
    zero_hidden_init: bool,
) -> Vec<F> {
    let hd = actor.cfg.hidden_dim();
    if hd == 0 {
        return Vec::new();
    }
    let mut out = Vec::with_capacity(segs.len() * hd);
    for seg in segs {
        let mut h = if zero_hidden_init {
            vec![F::ZERO; hd]
        } else {
            seg.init_hidden.clone()
        };
        for t in 0..seg.burn_len {
            let o = actor.step_nograd(
                &seg.images[t * IMG_LEN..(t + 1) * IMG_LEN],
                &seg.proprio[t * PROPRIO_DIM..(t + 1) * PROPRIO_DIM],
                &h,
                1,
            );
            h = o.next_hidden;
        }
        out.extend_from_slice(&h);
    }
    out
}

fn gather_rows<F: Scalar>(
    segs: &[PreparedSegment<F>],
    positions: &[(usize, usize)], // (segment index, chain position)
    field: impl Fn(&PreparedSegment<F>) -> &[F],
    dim: usize,
) -> Vec<F> {
    let mut out = Vec::with_capacity(positions.len() * dim);
    for &(s, p) in positions {
        out.extend_from_slice(&field(&segs[s])[p * dim..(p + 1) * dim]);
    }
    out
}

/// n-step soft target distributions for every training row, row order
/// (t, segment). The bootstrap value at s_{t+n} is computed entirely without
/// gradients: the current actor samples an action there (using the *stored*
/// replay hidden state at that step), and the element-wise minimum of the
/// two target critics' quantiles supplies the distribution.
#[allow(clippy::too_many_arguments)]
pub fn compute_targets<F: Scalar>(
    actor: &ActorNet<F>,
    target1: &CriticNet<F>,
    target2: &CriticNet<F>,
    segs: &[PreparedSegment<F>],
    gamma: f64,
    n_step: usize,
    alpha: f64,
    rng: &mut ChaCha8Rng,
) -> Vec<F> {
    let n_segs = segs.len();
    let seq_len = segs[0].train_len;
    assert!(segs.iter().all(|s| s.train_len == seq_len));
    let hd = actor.cfg.hidden_dim();

    // rows that bootstrap, in (t, seg) order
    let mut boot: Vec<(usize, usize)> = Vec::new();
    for t in 0..seq_len {
        for (s, seg) in segs.iter().enumerate() {
            let p0 = seg.burn_len + t;
            if p0 + n_step < seg.chain_len {
                boot.push((s, p0 + n_step));
            }
        }
    }
    let (zmin, logp) = if boot.is_empty() {
        (Vec::new(), Vec::new())
    } else {
        let nb = boot.len();
        let images = gather_rows(segs, &boot, |s| &s.images, IMG_LEN);
        let proprio = gather_rows(segs, &boot, |s| &s.proprio, PROPRIO_DIM);
        let global = gather_rows(segs, &boot, |s| &s.global, GLOBAL_DIM);
        let hidden = gather_rows(segs, &boot, |s| &s.hidden, hd);
        let out = actor.step_nograd(&images, &proprio, &hidden, nb);
        let eps: Vec<F> = (0..nb * ACTION_DIM)
            .map(|_| F::from_f64(normal(rng)))
            .collect();
        let (acts, logp) = sample_squashed(&out.mean, &out.log_std, &eps);
        let symmetric = target1.cfg.symmetric_critic;
        let input = CriticInput {
            proprio: &proprio,
            global: (!symmetric).then_some(global.as_slice()),
            image: symmetric.then_some(images.as_slice()),
            action: &acts,
        };
        let q1 = target1.forward_nograd(&input, nb);
        let q2 = target2.forward_nograd(&input, nb);
        let zmin: Vec<F> = q1.iter().zip(&q2).map(|(&a, &b)| a.min(b)).collect();
        (zmin, logp)
    };

    let mut targets = Vec::with_capacity(n_segs * seq_len * NUM_QUANTILES);
    let mut j = 0usize;
    for t in 0..seq_len {
        for seg in segs {
            let p0 = seg.burn_len + t;
            let row = if p0 + n_step < seg.chain_len {
                let b = (
                    &zmin[j * NUM_QUANTILES..(j + 1) * NUM_QUANTILES],
                    logp[j].to_f64(),
                );
                j += 1;
                n_step_target(&seg.rewards[p0..p0 + n_step], gamma, Some(b), alpha)
            } else {
                // the episode terminates inside the window: truncated return
                n_step_target(&seg.rewards[p0..seg.chain_len], gamma, None, alpha)
            };
            targets.extend_from_slice(&row);
        }
    }
    targets
}

/// Quantile Huber regression of one critic against precomputed targets over
/// every training row. Accumulates parameter gradients; returns the loss.
pub fn critic_loss_grad<F: Scalar>(
    critic: &mut CriticNet<F>,
    segs: &[PreparedSegment<F>],
    targets: &[F],
    kappa: f64,
) -> f64 {
    let seq_len = segs[0].train_len;
    let rows: Vec<(usize, usize)> = (0..seq_len)
        .flat_map(|t| (0..segs.len()).map(move |s| (s, segs[s].burn_len + t)))
        .collect();
    let m = rows.len();
    assert_eq!(targets.len(), m * NUM_QUANTILES);
    let proprio = gather_rows(segs, &rows, |s| &s.proprio, PROPRIO_DIM);
    let action = gather_rows(segs, &rows, |s| &s.actions, ACTION_DIM);
    let symmetric = critic.cfg.symmetric_critic;
    let global = (!symmetric).then(|| gather_rows(segs, &rows, |s| &s.global, GLOBAL_DIM));
    let images = symmetric.then(|| gather_rows(segs, &rows, |s| &s.images, IMG_LEN));
    let input = CriticInput {
        proprio: &proprio,
        global: global.as_deref(),
        image: images.as_deref(),
        action: &action,
    };
    let (pred, cache) = critic.forward(&input, m);
    let mut loss = 0.0;
    let mut gq = vec![F::ZERO; m * NUM_QUANTILES];
    let inv_m = F::from_f64(1.0 / m as f64);
    for r in 0..m {
        let (l, g) = quantile_huber_loss(
            &pred[r * NUM_QUANTILES..(r + 1) * NUM_QUANTILES],
            &targets[r * NUM_QUANTILES..(r + 1) * NUM_QUANTILES],
            kappa,
        );
        loss += l / m as f64;
        for i in 0..NUM_QUANTILES {
            gq[r * NUM_QUANTILES + i] = g[i] * inv_m;
        }
    }
    critic.backward(&cache, &gq);
    loss
}

struct ActorStepState<F: Scalar> {
    cache: ActorStepCache<F>,
    mean: Vec<F>,
    log_std: Vec<F>,
    q1_cache: CriticCache<F>,
    q2_cache: CriticCache<F>,
    q1_mean: Vec<f64>,
    q2_mean: Vec<f64>,
}

fn row_q_mean<F: Scalar>(q: &[F], rows: usize) -> Vec<f64> {
    (0..rows)
        .map(|r| {
            q[r * NUM_QUANTILES..(r + 1) * NUM_QUANTILES]
                .iter()
                .map(|v| v.to_f64())
                .sum::<f64>()
                / NUM_QUANTILES as f64
        })
        .collect()
}

/// Actor objective over the training window with fixed exploration noise:
/// mean over rows of alpha * log pi - min_j E[Q_j]. Forward-only; used by
/// finite-difference checks against `actor_loss_grad`.
pub fn actor_loss_value<F: Scalar>(
    actor: &ActorNet<F>,
    critic1: &CriticNet<F>,
    critic2: &CriticNet<F>,
    segs: &[PreparedSegment<F>],
    h0: &[F],
    eps: &[Vec<F>],
    alpha: f64,
) -> f64 {
    let n_segs = segs.len();
    let seq_len = segs[0].train_len;
    let m = (n_segs * seq_len) as f64;
    let symmetric = critic1.cfg.symmetric_critic;
    let mut h = h0.to_vec();
    let mut loss = 0.0;
    for t in 0..seq_len {
        let rows: Vec<(usize, usize)> =
            (0..n_segs).map(|s| (s, segs[s].burn_len + t)).collect();
        let images = gather_rows(segs, &rows, |s| &s.images, IMG_LEN);
        let proprio = gather_rows(segs, &rows, |s| &s.proprio, PROPRIO_DIM);
        let global = (!symmetric).then(|| gather_rows(segs, &rows, |s| &s.global, GLOBAL_DIM));
        let out = actor.step_nograd(&images, &proprio, &h, n_segs);
        h = out.next_hidden;
        let (acts, logp) = sample_squashed(&out.mean, &out.log_std, &eps[t]);
        let input = CriticInput {
            proprio: &proprio,
            global: global.as_deref(),
            image: symmetric.then_some(images.as_slice()),
            action: &acts,
        };
        let q1m = row_q_mean(&critic1.forward_nograd(&input, n_segs), n_segs);
        let q2m = row_q_mean(&critic2.forward_nograd(&input, n_segs), n_segs);
        for s in 0..n_segs {
            loss += (alpha * logp[s].to_f64() - q1m[s].min(q2m[s])) / m;
        }
    }
    loss
}

/// Same objective with full backpropagation through time. Accumulates actor
/// parameter gradients (and, incidentally, gradients in whichever critic the
/// min selected; callers zero critic gradients before the critic update).
/// Returns (loss, mean entropy estimate -log pi).
pub fn actor_loss_grad<F: Scalar>(
    actor: &mut ActorNet<F>,
    critic1: &mut CriticNet<F>,
    critic2: &mut CriticNet<F>,
    segs: &[PreparedSegment<F>],
    h0: &[F],
    eps: &[Vec<F>],
    alpha: f64,
) -> (f64, f64) {
    let n_segs = segs.len();
    let seq_len = segs[0].train_len;
    assert!(segs.iter().all(|s| s.train_len == seq_len));
    assert_eq!(eps.len(), seq_len);
    let m = (n_segs * seq_len) as f64;
    let symmetric = critic1.cfg.symmetric_critic;

    // forward, keeping every cache for the reverse sweep
    let mut states: Vec<ActorStepState<F>> = Vec::with_capacity(seq_len);
    let mut h = h0.to_vec();
    let mut loss = 0.0;
    let mut entropy = 0.0;
    for t in 0..seq_len {
        let rows: Vec<(usize, usize)> =
            (0..n_segs).map(|s| (s, segs[s].burn_len + t)).collect();
        let images = gather_rows(segs, &rows, |s| &s.images, IMG_LEN);
        let proprio = gather_rows(segs, &rows, |s| &s.proprio, PROPRIO_DIM);
        let global = (!symmetric).then(|| gather_rows(segs, &rows, |s| &s.global, GLOBAL_DIM));
        let (out, cache) = actor.step(&images, &proprio, &h, n_segs);
        h = out.next_hidden.clone();
        let (acts, logp) = sample_squashed(&out.mean, &out.log_std, &eps[t]);
        let input = CriticInput {
            proprio: &proprio,
            global: global.as_deref(),
            image: symmetric.then_some(images.as_slice()),
            action: &acts,
        };
        let (q1, q1_cache) = critic1.forward(&input, n_segs);
        let (q2, q2_cache) = critic2.forward(&input, n_segs);
        let q1_mean = row_q_mean(&q1, n_segs);
        let q2_mean = row_q_mean(&q2, n_segs);
        for s in 0..n_segs {
            loss += (alpha * logp[s].to_f64() - q1_mean[s].min(q2_mean[s])) / m;
            entropy += -logp[s].to_f64() / m;
        }
        states.push(ActorStepState {
            cache,
            mean: out.mean,
            log_std: out.log_std,
            q1_cache,
            q2_cache,
            q1_mean,
            q2_mean,
        });
    }

    // reverse sweep: critic -> action -> policy head -> BPTT into the past
    let gq_unit = F::from_f64(-1.0 / (m * NUM_QUANTILES as f64));
    let d_logp_unit = F::from_f64(alpha / m);
    let mut d_hidden: Option<Vec<F>> = None;
    for t in (0..seq_len).rev() {
        let st = &states[t];
        let mut gq1 = vec![F::ZERO; n_segs * NUM_QUANTILES];
        let mut gq2 = vec![F::ZERO; n_segs * NUM_QUANTILES];
        for s in 0..n_segs {
            let g = if st.q1_mean[s] <= st.q2_mean[s] {
                &mut gq1
            } else {
                &mut gq2
            };
            for i in 0..NUM_QUANTILES {
                g[s * NUM_QUANTILES + i] = gq_unit;
            }
        }
        let da1 = critic1.backward(&st.q1_cache, &gq1);
        let da2 = critic2.backward(&st.q2_cache, &gq2);
        let d_action: Vec<F> = da1.iter().zip(&da2).map(|(&a, &b)| a + b).collect();
        let d_logp = vec![d_logp_unit; n_segs];
        let (d_mean, d_log_std) =
            sample_squashed_backward(&st.mean, &st.log_std, &eps[t], &d_action, &d_logp);
        let (_d_images, d_h_prev) = actor.step_backward(
            &st.cache,
            &d_mean,
            &d_log_std,
            d_hidden.as_deref(),
        );
        d_hidden = (!d_h_prev.is_empty()).then_some(d_h_prev);
    }
    (loss, entropy)
}

/// In-place Polyak average: target <- tau * online + (1 - tau) * target.
/// Only the values move; optimizer moments stay put.
pub fn polyak_update<F: Scalar>(online: &mut CriticNet<F>, target: &mut CriticNet<F>, tau: f64) {
    let t = F::from_f64(tau);
    let keep = F::from_f64(1.0 - tau);
    let mut src = online.params_mut();
    let mut dst = target.params_mut();
    assert_eq!(src.len(), dst.len());
    for (o, tgt) in src.iter_mut().zip(dst.iter_mut()) {
        assert_eq!(o.value.shape, tgt.value.shape);
        for (tv, ov) in tgt.value.data.iter_mut().zip(&o.value.data) {
            *tv = keep * *tv + t * *ov;
        }
    }
}

fn copy_net_state<F: Scalar>(dst: &mut CriticNet<F>, src: &mut CriticNet<F>) {
    let mut s = src.params_mut();
    let d = dst.params_mut();
    for (dp, sp) in d.into_iter().zip(s.iter_mut()) {
        dp.value.data.copy_from_slice(&sp.value.data);
        dp.m.data.copy_from_slice(&sp.m.data);
        dp.v.data.copy_from_slice(&sp.v.data);
    }
    dst.adam_t = src.adam_t;
}

/// Per-epoch training metrics, one JSON line each.
#[derive(Debug, Clone, Serialize)]
pub struct EpochMetrics {
    pub epoch: u64,
    pub critic_loss: f64,
    pub actor_loss: f64,
    pub entropy: f64,
    pub buffer_fill: f64,
    pub reinit_fired: bool,
    pub wallclock_s: f64,
}

impl EpochMetrics {
    pub fn to_json_line(&self) -> String {
        serde_json::to_string(self).expect("metrics serialize")
    }
}

/// Losses of one gradient step.
#[derive(Debug, Clone, Copy)]
pub struct StepStats {
    pub critic_loss: f64,
    pub actor_loss: f64,
    pub entropy: f64,
}

/// Actor, twin critics, their targets, and the update loop.
pub struct Learner<F: Scalar> {
    pub cfg: LearnerConfig,
    pub actor: ActorNet<F>,
    pub critic1: CriticNet<F>,
    pub critic2: CriticNet<F>,
    pub target1: CriticNet<F>,
    pub target2: CriticNet<F>,
    rng: ChaCha8Rng,
    pub epoch: u64,
    /// Epoch at which the one-time re-initialization fired, if it has.
    pub reinit_fired: Option<u64>,
}

impl<F: Scalar> Learner<F> {
    pub fn new(cfg: LearnerConfig) -> Learner<F> {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let (actor, critic1, critic2, target1, target2) = Self::fresh_nets(cfg.arch, &mut rng);
        Learner {
            cfg,
            actor,
            critic1,
            critic2,
            target1,
            target2,
            rng,
            epoch: 0,
            reinit_fired: None,
        }
    }

    fn fresh_nets(
        arch: ArchConfig,
        rng: &mut ChaCha8Rng,
    ) -> (
        ActorNet<F>,
        CriticNet<F>,
        CriticNet<F>,
        CriticNet<F>,
        CriticNet<F>,
    ) {
        let actor = ActorNet::new(arch, rng.gen());
        let mut critic1 = CriticNet::new("q1", arch, rng.gen());
        let mut critic2 = CriticNet::new("q2", arch, rng.gen());
        // targets start as exact copies, under their own tensor names so
        // checkpoints stay collision-free
        let mut target1 = CriticNet::new("t1", arch, 0);
        let mut target2 = CriticNet::new("t2", arch, 0);
        copy_net_state(&mut target1, &mut critic1);
        copy_net_state(&mut target2, &mut critic2);
        (actor, critic1, critic2, target1, target2)
    }

    /// Draw entirely fresh weights (the one-time mid-training re-draw) and
    /// restart the optimizer schedules.
    pub fn reinitialize(&mut self) {
        let (a, c1, c2, t1, t2) = Self::fresh_nets(self.cfg.arch, &mut self.rng);
        self.actor = a;
        self.critic1 = c1;
        self.critic2 = c2;
        self.target1 = t1;
        self.target2 = t2;
    }

    /// One gradient step over a fresh sample from the buffer.
    pub fn grad_step(&mut self, buffer: &ReplayBuffer) -> Result<StepStats, BufferError> {
        let cfg = self.cfg;
        let sample = buffer.sample(
            &mut self.rng,
            cfg.segments_per_batch,
            cfg.burn_in,
            cfg.seq_len,
            cfg.n_step,
        )?;
        let segs: Vec<PreparedSegment<F>> = prepare_segments(
            &sample,
            cfg.arch.hidden_dim(),
            cfg.shift_pixels,
            &mut self.rng,
        );
        let h0 = burn_in_unroll(&self.actor, &segs, cfg.zero_hidden_init);
        let targets = compute_targets(
            &self.actor,
            &self.target1,
            &self.target2,
            &segs,
            cfg.gamma,
            cfg.n_step,
            cfg.alpha,
            &mut self.rng,
        );

        let n_segs = segs.len();
        let eps: Vec<Vec<F>> = (0..cfg.seq_len)
            .map(|_| {
                (0..n_segs * ACTION_DIM)
                    .map(|_| F::from_f64(normal(&mut self.rng)))
                    .collect()
            })
            .collect();

        for p in self.critic1.params_mut() {
            p.zero_grad();
        }
        let l1 = critic_loss_grad(&mut self.critic1, &segs, &targets, cfg.kappa);
        self.critic1.adam_t += 1;
        let t = self.critic1.adam_t;
        adam_step(&mut self.critic1.params_mut(), &cfg.adam, t);

        for p in self.critic2.params_mut() {
            p.zero_grad();
        }
        let l2 = critic_loss_grad(&mut self.critic2, &segs, &targets, cfg.kappa);
        self.critic2.adam_t += 1;
        let t = self.critic2.adam_t;
        adam_step(&mut self.critic2.params_mut(), &cfg.adam, t);

        for p in self.actor.params_mut() {
            p.zero_grad();
        }
        let (actor_loss, entropy) = actor_loss_grad(
            &mut self.actor,
            &mut self.critic1,
            &mut self.critic2,
            &segs,
            &h0,
            &eps,
            cfg.alpha,
        );
        self.actor.adam_t += 1;
        let t = self.actor.adam_t;
        adam_step(&mut self.actor.params_mut(), &cfg.adam, t);

        polyak_update(&mut self.critic1, &mut self.target1, cfg.polyak_tau);
        polyak_update(&mut self.critic2, &mut self.target2, cfg.polyak_tau);

        Ok(StepStats {
            critic_loss: 0.5 * (l1 + l2),
            actor_loss,
            entropy,
        })
    }

    /// One epoch: the configured number of gradient steps, preceded by the
    /// one-time weight re-draw when its trigger condition first holds.
    pub fn train_epoch(&mut self, buffer: &ReplayBuffer) -> Result<EpochMetrics, BufferError> {
        let start = std::time::Instant::now();
        self.epoch += 1;
        let mut fired = false;
        if self.reinit_fired.is_none() {
            let due = self.cfg.reinit_epoch.map_or(false, |e| self.epoch >= e)
                || (self.cfg.reinit_on_full
                    && self.cfg.reinit_epoch.is_none()
                    && buffer.ever_full());
            if due {
                self.reinitialize();
                self.reinit_fired = Some(self.epoch);
                fired = true;
            }
        }
        let mut critic_loss = 0.0;
        let mut actor_loss = 0.0;
        let mut entropy = 0.0;
        let k = self.cfg.grad_steps_per_epoch.max(1);
        for _ in 0..k {
            let s = self.grad_step(buffer)?;
            critic_loss += s.critic_loss / k as f64;
            actor_loss += s.actor_loss / k as f64;
            entropy += s.entropy / k as f64;
        }
        Ok(EpochMetrics {
            epoch: self.epoch,
            critic_loss,
            actor_loss,
            entropy,
            buffer_fill: buffer.fill_fraction(),
            reinit_fired: fired,
            wallclock_s: start.elapsed().as_secs_f64(),
        })
    }
}

impl Learner<f32> {
    fn all_params(&mut self) -> Vec<&mut Param<f32>> {
        let mut p = self.actor.params_mut();
        p.extend(self.critic1.params_mut());
        p.extend(self.critic2.params_mut());
        p.extend(self.target1.params_mut());
        p.extend(self.target2.params_mut());
        p
    }

    fn header(&self) -> CheckpointHeader {
        CheckpointHeader {
            epoch: self.epoch,
            hidden_size: self.cfg.arch.hidden_size as u32,
            trunk_width: self.cfg.arch.trunk_width as u32,
            no_rnn: self.cfg.arch.no_rnn,
            symmetric_critic: self.cfg.arch.symmetric_critic,
            zero_hidden_init: self.cfg.zero_hidden_init,
        }
    }

    pub fn save(&mut self, path: &std::path::Path) -> Result<(), CheckpointError> {
        let header = self.header();
        let params = self.all_params();
        let frozen: Vec<&Param<f32>> = params.into_iter().map(|p| &*p).collect();
        let tensors = named_tensors(&frozen);
        save_checkpoint(path, &header, &tensors)
    }

    /// Restore a learner from a checkpoint; the architecture in `cfg` must
    /// match the one recorded in the file.
    pub fn load(path: &std::path::Path, cfg: LearnerConfig) -> Result<Learner<f32>, CheckpointError> {
        let (header, tensors) = load_checkpoint(path)?;
        if header.arch() != cfg.arch {
            return Err(CheckpointError::Mismatch(format!(
                "checkpoint architecture {:?} != configured {:?}",
                header.arch(),
                cfg.arch
            )));
        }
        let mut learner = Learner::<f32>::new(cfg);
        crate::nn::checkpoint::load_into(&mut learner.all_params(), &tensors)?;
        learner.epoch = header.epoch;
        Ok(learner)
    }
}
