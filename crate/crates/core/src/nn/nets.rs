//! The fixed actor and critic architectures, the tanh-Gaussian policy head,
//! and the quantile critic head.

use super::init::InitRng;
use super::layers::{relu_backward, relu_inplace, Conv2d, ConvCache, Dense, DenseCache, Gru, GruCache, Param};
use super::tensor::Scalar;
use rand::SeedableRng;

pub const IMG_H: usize = 64;
pub const IMG_W: usize = 64;
pub const IMG_C: usize = 3;
pub const IMG_LEN: usize = IMG_H * IMG_W * IMG_C;
pub const PROPRIO_DIM: usize = 18;
pub const TRACK_POINTS_DIM: usize = 531;
pub const OPP_GRID_DIM: usize = 84;
pub const GLOBAL_DIM: usize = TRACK_POINTS_DIM + OPP_GRID_DIM;
pub const ACTION_DIM: usize = 2;
pub const EMBED_DIM: usize = 512;
pub const NUM_QUANTILES: usize = 32;

/// Documented parameter count of the default (hidden 512, trunk 2048,
/// recurrent) actor; asserted at construction.
pub const ACTOR_PARAM_COUNT_DEFAULT: usize = 15_850_660;
/// Documented parameter count of the default asymmetric critic.
pub const CRITIC_PARAM_COUNT_DEFAULT: usize = 13_957_152;

pub const LOG_STD_MIN: f64 = -10.0;
pub const LOG_STD_MAX: f64 = 2.0;
const SQUASH_EPS: f64 = 1e-6;

/// Architecture knobs, including the ablation switches.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ArchConfig {
    /// GRU hidden state size (512 default, 128 ablation).
    pub hidden_size: usize,
    /// Width of the four fully connected trunk layers.
    pub trunk_width: usize,
    /// Remove the recurrent module entirely.
    pub no_rnn: bool,
    /// Critic sees (image, proprio) instead of (proprio, global).
    pub symmetric_critic: bool,
}

impl Default for ArchConfig {
    fn default() -> Self {
        ArchConfig {
            hidden_size: 512,
            trunk_width: 2048,
            no_rnn: false,
            symmetric_critic: false,
        }
    }
}

impl ArchConfig {
    /// Dimension of the actor's recurrent state as stored in replay.
    pub fn hidden_dim(&self) -> usize {
        if self.no_rnn {
            0
        } else {
            self.hidden_size
        }
    }
}

/// Conv tower + embedding: 64x64x3 -> 512.
#[derive(Clone, Debug)]
pub struct ConvEncoder<F: Scalar> {
    pub c1: Conv2d<F>,
    pub c2: Conv2d<F>,
    pub c3: Conv2d<F>,
    pub fc: Dense<F>,
}

pub struct EncoderCache<F: Scalar> {
    k1: ConvCache<F>,
    k2: ConvCache<F>,
    k3: ConvCache<F>,
    kf: DenseCache<F>,
    a1: Vec<F>,
    a2: Vec<F>,
    a3: Vec<F>,
    out: Vec<F>,
}

impl<F: Scalar> ConvEncoder<F> {
    pub fn new(name: &str, rng: &mut InitRng) -> ConvEncoder<F> {
        let c1 = Conv2d::new(&format!("{name}.c1"), IMG_H, IMG_W, IMG_C, 32, 8, 4, rng);
        let c2 = Conv2d::new(&format!("{name}.c2"), c1.out_h, c1.out_w, 32, 64, 4, 2, rng);
        let c3 = Conv2d::new(&format!("{name}.c3"), c2.out_h, c2.out_w, 64, 64, 3, 1, rng);
        let flat = c3.out_h * c3.out_w * 64;
        let fc = Dense::new(&format!("{name}.fc"), flat, EMBED_DIM, rng);
        ConvEncoder { c1, c2, c3, fc }
    }

    pub fn forward(&self, images: &[F], batch: usize) -> (Vec<F>, EncoderCache<F>) {
        let (mut a1, k1) = self.c1.forward(images, batch);
        relu_inplace(&mut a1);
        let (mut a2, k2) = self.c2.forward(&a1, batch);
        relu_inplace(&mut a2);
        let (mut a3, k3) = self.c3.forward(&a2, batch);
        relu_inplace(&mut a3);
        let (mut out, kf) = self.fc.forward(&a3, batch);
        relu_inplace(&mut out);
        let cache = EncoderCache {
            k1,
            k2,
            k3,
            kf,
            a1,
            a2,
            a3,
            out: out.clone(),
        };
        (out, cache)
    }

    pub fn forward_nograd(&self, images: &[F], batch: usize) -> Vec<F> {
        let mut a = self.c1.forward_nograd(images, batch);
        relu_inplace(&mut a);
        let mut a = self.c2.forward_nograd(&a, batch);
        relu_inplace(&mut a);
        let mut a = self.c3.forward_nograd(&a, batch);
        relu_inplace(&mut a);
        let mut out = self.fc.forward_nograd(&a, batch);
        relu_inplace(&mut out);
        out
    }

    /// Returns the gradient w.r.t. the input images.
    pub fn backward(&mut self, cache: &EncoderCache<F>, gy: &[F]) -> Vec<F> {
        let mut g = gy.to_vec();
        relu_backward(&cache.out, &mut g);
        let mut g = self.fc.backward(&cache.kf, &g);
        relu_backward(&cache.a3, &mut g);
        let mut g = self.c3.backward(&cache.k3, &g);
        relu_backward(&cache.a2, &mut g);
        let mut g = self.c2.backward(&cache.k2, &g);
        relu_backward(&cache.a1, &mut g);
        self.c1.backward(&cache.k1, &g)
    }

    pub fn params_mut(&mut self) -> Vec<&mut Param<F>> {
        let mut p = self.c1.params_mut();
        p.extend(self.c2.params_mut());
        p.extend(self.c3.params_mut());
        p.extend(self.fc.params_mut());
        p
    }
}

/// Per-step actor output over a batch.
#[derive(Clone, Debug)]
pub struct ActorOutput<F: Scalar> {
    /// Pre-squash Gaussian mean, already tanh-bounded; [batch, 2].
    pub mean: Vec<F>,
    /// Clamped log standard deviation; [batch, 2].
    pub log_std: Vec<F>,
    /// Next recurrent state; empty under no_rnn.
    pub next_hidden: Vec<F>,
}

pub struct ActorStepCache<F: Scalar> {
    pub enc: EncoderCache<F>,
    pub gru: Option<GruCache<F>>,
    trunk: Vec<(DenseCache<F>, Vec<F>)>,
    head: DenseCache<F>,
    head_raw: Vec<F>,
    batch: usize,
}

/// Recurrent vision actor: conv encoder -> (concat proprio) -> GRU ->
/// 4-layer trunk -> tanh-Gaussian head.
#[derive(Clone, Debug)]
pub struct ActorNet<F: Scalar> {
    pub enc: ConvEncoder<F>,
    pub gru: Option<Gru<F>>,
    pub trunk: Vec<Dense<F>>,
    pub head: Dense<F>,
    pub cfg: ArchConfig,
    pub adam_t: u64,
}

impl<F: Scalar> ActorNet<F> {
    pub fn new(cfg: ArchConfig, seed: u64) -> ActorNet<F> {
        let mut rng = InitRng::seed_from_u64(seed);
        let enc = ConvEncoder::new("actor.enc", &mut rng);
        let feat = EMBED_DIM + PROPRIO_DIM;
        let (gru, trunk_in) = if cfg.no_rnn {
            (None, feat)
        } else {
            (
                Some(Gru::new("actor.gru", feat, cfg.hidden_size, &mut rng)),
                cfg.hidden_size,
            )
        };
        let mut trunk = Vec::new();
        let mut d_in = trunk_in;
        for i in 0..4 {
            trunk.push(Dense::new(&format!("actor.fc{i}"), d_in, cfg.trunk_width, &mut rng));
            d_in = cfg.trunk_width;
        }
        let mut head = Dense::new("actor.head", cfg.trunk_width, 2 * ACTION_DIM, &mut rng);
        // small head so initial actions sit near zero, with the log-std
        // biases pulled down so early exploration stays drivable
        head.w.value.scale(F::from_f64(0.01));
        for i in ACTION_DIM..2 * ACTION_DIM {
            head.b.value.data[i] = F::from_f64(-1.0);
        }
        let mut net = ActorNet {
            enc,
            gru,
            trunk,
            head,
            cfg,
            adam_t: 0,
        };
        if cfg == ArchConfig::default() {
            assert_eq!(
                net.param_count(),
                ACTOR_PARAM_COUNT_DEFAULT,
                "default actor parameter count drifted"
            );
        }
        net
    }

    /// One time step with full caches for backward.
    pub fn step(
        &self,
        images: &[F],
        proprio: &[F],
        hidden: &[F],
        batch: usize,
    ) -> (ActorOutput<F>, ActorStepCache<F>) {
        assert_eq!(images.len(), batch * IMG_LEN);
        assert_eq!(proprio.len(), batch * PROPRIO_DIM);
        let (embed, enc_cache) = self.enc.forward(images, batch);
        let feat = concat_rows(&embed, EMBED_DIM, proprio, PROPRIO_DIM, batch);
        let (mut x, gru_cache, next_hidden) = match &self.gru {
            Some(gru) => {
                assert_eq!(hidden.len(), batch * self.cfg.hidden_size);
                let (h2, cache) = gru.step(&feat, hidden, batch);
                (h2.clone(), Some(cache), h2)
            }
            None => (feat, None, Vec::new()),
        };
        let mut trunk_caches = Vec::new();
        for layer in &self.trunk {
            let (mut y, cache) = layer.forward(&x, batch);
            relu_inplace(&mut y);
            trunk_caches.push((cache, y.clone()));
            x = y;
        }
        let (raw, head_cache) = self.head.forward(&x, batch);
        let mut mean = vec![F::ZERO; batch * ACTION_DIM];
        let mut log_std = vec![F::ZERO; batch * ACTION_DIM];
        for b in 0..batch {
            for i in 0..ACTION_DIM {
                mean[b * ACTION_DIM + i] = raw[b * 2 * ACTION_DIM + i].tanh();
                log_std[b * ACTION_DIM + i] = clamp_f(
                    raw[b * 2 * ACTION_DIM + ACTION_DIM + i],
                    F::from_f64(LOG_STD_MIN),
                    F::from_f64(LOG_STD_MAX),
                );
            }
        }
        (
            ActorOutput {
                mean,
                log_std,
                next_hidden,
            },
            ActorStepCache {
                enc: enc_cache,
                gru: gru_cache,
                trunk: trunk_caches,
                head: head_cache,
                head_raw: raw,
                batch,
            },
        )
    }

    /// Inference-only step.
    pub fn step_nograd(
        &self,
        images: &[F],
        proprio: &[F],
        hidden: &[F],
        batch: usize,
    ) -> ActorOutput<F> {
        let embed = self.enc.forward_nograd(images, batch);
        let feat = concat_rows(&embed, EMBED_DIM, proprio, PROPRIO_DIM, batch);
        let (mut x, next_hidden) = match &self.gru {
            Some(gru) => {
                let h2 = gru.step_nograd(&feat, hidden, batch);
                (h2.clone(), h2)
            }
            None => (feat, Vec::new()),
        };
        for layer in &self.trunk {
            let mut y = layer.forward_nograd(&x, batch);
            relu_inplace(&mut y);
            x = y;
        }
        let raw = self.head.forward_nograd(&x, batch);
        let mut mean = vec![F::ZERO; batch * ACTION_DIM];
        let mut log_std = vec![F::ZERO; batch * ACTION_DIM];
        for b in 0..batch {
            for i in 0..ACTION_DIM {
                mean[b * ACTION_DIM + i] = raw[b * 2 * ACTION_DIM + i].tanh();
                log_std[b * ACTION_DIM + i] = clamp_f(
                    raw[b * 2 * ACTION_DIM + ACTION_DIM + i],
                    F::from_f64(LOG_STD_MIN),
                    F::from_f64(LOG_STD_MAX),
                );
            }
        }
        ActorOutput {
            mean,
            log_std,
            next_hidden,
        }
    }

    /// Backward through one step given gradients w.r.t. mean and log_std.
    /// Accumulates parameter grads; returns (d_images, d_hidden_prev).
    pub fn step_backward(
        &mut self,
        cache: &ActorStepCache<F>,
        d_mean: &[F],
        d_log_std: &[F],
        d_hidden_next: Option<&[F]>,
    ) -> (Vec<F>, Vec<F>) {
        let batch = cache.batch;
        let mut d_raw = vec![F::ZERO; batch * 2 * ACTION_DIM];
        for b in 0..batch {
            for i in 0..ACTION_DIM {
                let raw = cache.head_raw[b * 2 * ACTION_DIM + i];
                let t = raw.tanh();
                d_raw[b * 2 * ACTION_DIM + i] = d_mean[b * ACTION_DIM + i] * (F::ONE - t * t);
                let ls_raw = cache.head_raw[b * 2 * ACTION_DIM + ACTION_DIM + i];
                let inside = ls_raw.to_f64() > LOG_STD_MIN && ls_raw.to_f64() < LOG_STD_MAX;
                d_raw[b * 2 * ACTION_DIM + ACTION_DIM + i] = if inside {
                    d_log_std[b * ACTION_DIM + i]
                } else {
                    F::ZERO
                };
            }
        }
        let mut g = self.head.backward(&cache.head, &d_raw);
        for (layer, (lcache, act)) in self.trunk.iter_mut().zip(&cache.trunk).rev() {
            relu_backward(act, &mut g);
            g = layer.backward(lcache, &g);
        }
        let (d_feat, d_hidden_prev) = match (&mut self.gru, &cache.gru) {
            (Some(gru), Some(gcache)) => {
                if let Some(dh) = d_hidden_next {
                    for (a, b) in g.iter_mut().zip(dh) {
                        *a += *b;
                    }
                }
                gru.step_backward(gcache, &g)
            }
            _ => (g, Vec::new()),
        };
        let (d_embed, _d_proprio) = split_rows(&d_feat, EMBED_DIM, PROPRIO_DIM, batch);
        let d_images = self.enc.backward(&cache.enc, &d_embed);
        (d_images, d_hidden_prev)
    }

    pub fn params_mut(&mut self) -> Vec<&mut Param<F>> {
        let mut p = self.enc.params_mut();
        if let Some(gru) = &mut self.gru {
            p.extend(gru.params_mut());
        }
        for l in &mut self.trunk {
            p.extend(l.params_mut());
        }
        p.extend(self.head.params_mut());
        p
    }

    pub fn param_count(&mut self) -> usize {
        self.params_mut().iter().map(|p| p.value.len()).sum()
    }

    pub fn zero_hidden(&self, batch: usize) -> Vec<F> {
        vec![F::ZERO; batch * self.cfg.hidden_dim()]
    }
}

/// Quantile critic. The asymmetric default consumes (proprio, global,
/// action); the symmetric ablation consumes (conv-encoded image, proprio,
/// action) and never touches global features.
#[derive(Clone, Debug)]
pub struct CriticNet<F: Scalar> {
    pub enc: Option<ConvEncoder<F>>,
    pub layers: Vec<Dense<F>>,
    pub head: Dense<F>,
    pub cfg: ArchConfig,
    pub adam_t: u64,
}

pub struct CriticCache<F: Scalar> {
    enc: Option<EncoderCache<F>>,
    layers: Vec<(DenseCache<F>, Vec<F>)>,
    head: DenseCache<F>,
    batch: usize,
    in_dim: usize,
}

/// Inputs to a critic forward pass. `global` must be None when the critic
/// is symmetric and Some otherwise; `image` is the reverse.
pub struct CriticInput<'a, F: Scalar> {
    pub proprio: &'a [F],
    pub global: Option<&'a [F]>,
    pub image: Option<&'a [F]>,
    pub action: &'a [F],
}

impl<F: Scalar> CriticNet<F> {
    pub fn new(name: &str, cfg: ArchConfig, seed: u64) -> CriticNet<F> {
        let mut rng = InitRng::seed_from_u64(seed);
        let (enc, in_dim) = if cfg.symmetric_critic {
            (
                Some(ConvEncoder::new(&format!("{name}.enc"), &mut rng)),
                EMBED_DIM + PROPRIO_DIM + ACTION_DIM,
            )
        } else {
            (None, PROPRIO_DIM + GLOBAL_DIM + ACTION_DIM)
        };
        let mut layers = Vec::new();
        let mut d_in = in_dim;
        for i in 0..4 {
            layers.push(Dense::new(&format!("{name}.fc{i}"), d_in, cfg.trunk_width, &mut rng));
            d_in = cfg.trunk_width;
        }
        let head = Dense::new(&format!("{name}.head"), cfg.trunk_width, NUM_QUANTILES, &mut rng);
        let mut net = CriticNet {
            enc,
            layers,
            head,
            cfg,
            adam_t: 0,
        };
        if cfg == ArchConfig::default() {
            assert_eq!(
                net.param_count(),
                CRITIC_PARAM_COUNT_DEFAULT,
                "default critic parameter count drifted"
            );
        }
        net
    }

    fn assemble(&self, input: &CriticInput<F>, batch: usize) -> (Vec<F>, Option<EncoderCache<F>>) {
        match &self.enc {
            Some(enc) => {
                let image = input
                    .image
                    .expect("symmetric critic requires the image input");
                assert!(input.global.is_none(), "symmetric critic must not see global features");
                let (embed, cache) = enc.forward(image, batch);
                let ep = concat_rows(&embed, EMBED_DIM, input.proprio, PROPRIO_DIM, batch);
                (
                    concat_rows(&ep, EMBED_DIM + PROPRIO_DIM, input.action, ACTION_DIM, batch),
                    Some(cache),
                )
            }
            None => {
                let global = input.global.expect("asymmetric critic requires global features");
                let pg = concat_rows(input.proprio, PROPRIO_DIM, global, GLOBAL_DIM, batch);
                (
                    concat_rows(&pg, PROPRIO_DIM + GLOBAL_DIM, input.action, ACTION_DIM, batch),
                    None,
                )
            }
        }
    }

    /// Forward to the 32 quantile values, with cache.
    pub fn forward(&self, input: &CriticInput<F>, batch: usize) -> (Vec<F>, CriticCache<F>) {
        let (mut x, enc_cache) = self.assemble(input, batch);
        let in_dim = x.len() / batch;
        let mut layer_caches = Vec::new();
        for layer in &self.layers {
            let (mut y, cache) = layer.forward(&x, batch);
            relu_inplace(&mut y);
            layer_caches.push((cache, y.clone()));
            x = y;
        }
        let (q, head_cache) = self.head.forward(&x, batch);
        (
            q,
            CriticCache {
                enc: enc_cache,
                layers: layer_caches,
                head: head_cache,
                batch,
                in_dim,
            },
        )
    }

    pub fn forward_nograd(&self, input: &CriticInput<F>, batch: usize) -> Vec<F> {
        let (x, _) = self.assemble(input, batch);
        let mut x = x;
        for layer in &self.layers {
            let mut y = layer.forward_nograd(&x, batch);
            relu_inplace(&mut y);
            x = y;
        }
        self.head.forward_nograd(&x, batch)
    }

    /// Backward from quantile gradients; accumulates parameter grads and
    /// returns the gradient w.r.t. the action slice of the input.
    pub fn backward(&mut self, cache: &CriticCache<F>, gq: &[F]) -> Vec<F> {
        let mut g = self.head.backward(&cache.head, gq);
        for (layer, (lcache, act)) in self.layers.iter_mut().zip(&cache.layers).rev() {
            relu_backward(act, &mut g);
            g = layer.backward(lcache, &g);
        }
        // g is now the gradient w.r.t. the assembled input
        let batch = cache.batch;
        let action_off = cache.in_dim - ACTION_DIM;
        let mut d_action = vec![F::ZERO; batch * ACTION_DIM];
        for b in 0..batch {
            for i in 0..ACTION_DIM {
                d_action[b * ACTION_DIM + i] = g[b * cache.in_dim + action_off + i];
            }
        }
        if let (Some(enc), Some(enc_cache)) = (&mut self.enc, &cache.enc) {
            let mut d_embed = vec![F::ZERO; batch * EMBED_DIM];
            for b in 0..batch {
                d_embed[b * EMBED_DIM..(b + 1) * EMBED_DIM]
                    .copy_from_slice(&g[b * cache.in_dim..b * cache.in_dim + EMBED_DIM]);
            }
            enc.backward(enc_cache, &d_embed);
        }
        d_action
    }

    pub fn params_mut(&mut self) -> Vec<&mut Param<F>> {
        let mut p = Vec::new();
        if let Some(enc) = &mut self.enc {
            p.extend(enc.params_mut());
        }
        for l in &mut self.layers {
            p.extend(l.params_mut());
        }
        p.extend(self.head.params_mut());
        p
    }

    pub fn param_count(&mut self) -> usize {
        self.params_mut().iter().map(|p| p.value.len()).sum()
    }
}

/// Sample squashed actions with fixed noise; returns (actions, log_probs).
/// `eps` is standard-normal noise of the same shape as the mean.
pub fn sample_squashed<F: Scalar>(
    mean: &[F],
    log_std: &[F],
    eps: &[F],
) -> (Vec<F>, Vec<F>) {
    let n = mean.len();
    assert_eq!(log_std.len(), n);
    assert_eq!(eps.len(), n);
    let batch = n / ACTION_DIM;
    let mut actions = vec![F::ZERO; n];
    let mut log_probs = vec![F::ZERO; batch];
    let half_ln_2pi = F::from_f64(0.5 * (2.0 * std::f64::consts::PI).ln());
    for b in 0..batch {
        let mut lp = F::ZERO;
        for i in 0..ACTION_DIM {
            let idx = b * ACTION_DIM + i;
            let std = log_std[idx].exp();
            let u = mean[idx] + std * eps[idx];
            let a = u.tanh();
            actions[idx] = a;
            lp += -F::from_f64(0.5) * eps[idx] * eps[idx] - log_std[idx] - half_ln_2pi
                - (F::ONE - a * a + F::from_f64(SQUASH_EPS)).ln();
        }
        log_probs[b] = lp;
    }
    (actions, log_probs)
}

/// Gradients of (sum over batch of w_b * log_prob_b) and of the action path:
/// given upstream d_action (w.r.t. squashed actions) and d_logp (per sample),
/// produce d_mean and d_log_std with the reparameterization trick.
pub fn sample_squashed_backward<F: Scalar>(
    mean: &[F],
    log_std: &[F],
    eps: &[F],
    d_action: &[F],
    d_logp: &[F],
) -> (Vec<F>, Vec<F>) {
    let n = mean.len();
    let batch = n / ACTION_DIM;
    let mut d_mean = vec![F::ZERO; n];
    let mut d_log_std = vec![F::ZERO; n];
    for b in 0..batch {
        for i in 0..ACTION_DIM {
            let idx = b * ACTION_DIM + i;
            let std = log_std[idx].exp();
            let u = mean[idx] + std * eps[idx];
            let a = u.tanh();
            let sech2 = F::ONE - a * a;
            // d logp / d u, from the squash correction term
            let dlp_du = F::from_f64(2.0) * a * sech2 / (sech2 + F::from_f64(SQUASH_EPS));
            let du_dls = std * eps[idx];
            let da_du = sech2;
            let ga = d_action[idx];
            let gl = d_logp[b];
            d_mean[idx] = ga * da_du + gl * dlp_du;
            d_log_std[idx] = ga * da_du * du_dls + gl * (dlp_du * du_dls - F::ONE);
        }
    }
    (d_mean, d_log_std)
}

/// Deterministic (evaluation) action: tanh of the bounded mean.
pub fn deterministic_action<F: Scalar>(mean: &[F]) -> Vec<F> {
    mean.iter().map(|m| m.tanh()).collect()
}

#[inline]
fn clamp_f<F: Scalar>(x: F, lo: F, hi: F) -> F {
    x.max(lo).min(hi)
}

/// Row-wise concat of [batch, a] and [batch, b] into [batch, a+b].
pub fn concat_rows<F: Scalar>(x: &[F], a: usize, y: &[F], b: usize, batch: usize) -> Vec<F> {
    assert_eq!(x.len(), batch * a);
    assert_eq!(y.len(), batch * b);
    let mut out = vec![F::ZERO; batch * (a + b)];
    for r in 0..batch {
        out[r * (a + b)..r * (a + b) + a].copy_from_slice(&x[r * a..(r + 1) * a]);
        out[r * (a + b) + a..(r + 1) * (a + b)].copy_from_slice(&y[r * b..(r + 1) * b]);
    }
    out
}

/// Inverse of `concat_rows`.
pub fn split_rows<F: Scalar>(xy: &[F], a: usize, b: usize, batch: usize) -> (Vec<F>, Vec<F>) {
    assert_eq!(xy.len(), batch * (a + b));
    let mut x = vec![F::ZERO; batch * a];
    let mut y = vec![F::ZERO; batch * b];
    for r in 0..batch {
        x[r * a..(r + 1) * a].copy_from_slice(&xy[r * (a + b)..r * (a + b) + a]);
        y[r * b..(r + 1) * b].copy_from_slice(&xy[r * (a + b) + a..(r + 1) * (a + b)]);
    }
    (x, y)
}
