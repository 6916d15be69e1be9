//! Episode-structured sequence replay with stored recurrent states:
//! transitions are kept whole-episode so sampled training windows never
//! cross an episode boundary, and burn-in prefixes shrink (never wrap) at
//! episode starts.

use crate::env::{Observation, OPP_GRID_LEN, PROPRIO_LEN};
use crate::reward::RewardBreakdown;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use std::collections::VecDeque;
use thiserror::Error;

/// Paper-scale default is 5,000,000; this is the desk default.
pub const DESK_CAPACITY_STEPS: usize = 100_000;

pub const GLOBAL_LEN: usize = 531 + OPP_GRID_LEN;

#[derive(Debug, Error)]
pub enum BufferError {
    #[error("replay buffer holds no sequence of the requested length")]
    NoSequence,
    #[error("episode rejected: {0}")]
    BadEpisode(String),
}

/// One stored environment transition, as collected by a worker.
#[derive(Debug, Clone, PartialEq)]
pub struct TransitionStep {
    /// 64x64x3 u8 raster; the f32 view is value / 255.
    pub image: Vec<u8>,
    pub proprio: [f32; PROPRIO_LEN],
    /// Track points (531) followed by the opponent grid (84).
    pub global: Vec<f32>,
    pub action: [f32; 2],
    pub reward: f32,
    pub breakdown: RewardBreakdown,
    pub done: bool,
    /// Actor recurrent state at the *start* of this step; empty under
    /// no_rnn. Zero vector at episode starts.
    pub hidden: Vec<f32>,
}

impl TransitionStep {
    pub fn from_observation(
        obs: &Observation,
        action: [f32; 2],
        reward: f32,
        breakdown: RewardBreakdown,
        done: bool,
        hidden: Vec<f32>,
    ) -> TransitionStep {
        let mut global = Vec::with_capacity(GLOBAL_LEN);
        global.extend(obs.track_points.iter().map(|&v| v as f32));
        global.extend(obs.opp_grid.iter().map(|&v| v as f32));
        TransitionStep {
            image: obs.image.clone(),
            proprio: obs.proprio.map(|v| v as f32),
            global,
            action,
            reward,
            breakdown,
            done,
            hidden,
        }
    }
}

/// One sampled trajectory segment: a (possibly short) burn-in prefix, a
/// full-length training window, and up to `n` tail steps for n-step
/// bootstrapping. A short tail means the episode terminates at the end of
/// the stored chain (episodes always end with a done flag).
#[derive(Debug, Clone)]
pub struct Segment {
    pub burn: Vec<TransitionStep>,
    pub train: Vec<TransitionStep>,
    pub tail: Vec<TransitionStep>,
    /// Stored hidden at the first burn-in step (or first training step when
    /// the burn-in prefix is empty).
    pub init_hidden: Vec<f32>,
}

#[derive(Debug, Clone)]
pub struct SequenceSample {
    pub segments: Vec<Segment>,
}

impl SequenceSample {
    pub fn training_steps(&self) -> usize {
        self.segments.iter().map(|s| s.train.len()).sum()
    }
}

#[derive(Debug, Clone)]
struct Episode {
    steps: Vec<TransitionStep>,
}

/// Ring buffer over whole episodes, bounded by a step budget.
pub struct ReplayBuffer {
    capacity_steps: usize,
    episodes: VecDeque<Episode>,
    total_steps: usize,
    ever_full: bool,
}

impl ReplayBuffer {
    pub fn new(capacity_steps: usize) -> ReplayBuffer {
        assert!(capacity_steps > 0);
        ReplayBuffer {
            capacity_steps,
            episodes: VecDeque::new(),
            total_steps: 0,
            ever_full: false,
        }
    }

    pub fn len_steps(&self) -> usize {
        self.total_steps
    }

    pub fn capacity_steps(&self) -> usize {
        self.capacity_steps
    }

    pub fn fill_fraction(&self) -> f64 {
        self.total_steps as f64 / self.capacity_steps as f64
    }

    pub fn is_full(&self) -> bool {
        self.total_steps >= self.capacity_steps
    }

    /// True once the buffer has ever reached capacity (the reinitialization
    /// trigger at desk scale).
    pub fn ever_full(&self) -> bool {
        self.ever_full
    }

    pub fn n_episodes(&self) -> usize {
        self.episodes.len()
    }

    /// Stored episodes, oldest first (for audits and equivalence checks).
    pub fn episodes(&self) -> impl Iterator<Item = &[TransitionStep]> {
        self.episodes.iter().map(|e| e.steps.as_slice())
    }

    /// Commit a finished episode; oldest episodes are evicted once the step
    /// budget is exceeded. Sequences become samplable only here, never
    /// mid-episode.
    pub fn push_episode(&mut self, steps: Vec<TransitionStep>) -> Result<(), BufferError> {
        if steps.is_empty() {
            return Err(BufferError::BadEpisode("empty episode".into()));
        }
        if steps[..steps.len() - 1].iter().any(|s| s.done) {
            return Err(BufferError::BadEpisode(
                "done flag set before the final step".into(),
            ));
        }
        if !steps.last().unwrap().done {
            return Err(BufferError::BadEpisode(
                "episode does not end with a done flag".into(),
            ));
        }
        self.total_steps += steps.len();
        self.episodes.push_back(Episode { steps });
        if self.total_steps >= self.capacity_steps {
            self.ever_full = true;
        }
        while self.total_steps > self.capacity_steps && self.episodes.len() > 1 {
            if let Some(old) = self.episodes.pop_front() {
                self.total_steps -= old.steps.len();
            }
        }
        Ok(())
    }

    fn valid_starts(&self, seq_len: usize) -> Vec<(usize, usize)> {
        // (episode index, count of valid start offsets)
        self.episodes
            .iter()
            .enumerate()
            .filter_map(|(i, ep)| {
                let n = ep.steps.len();
                (n >= seq_len).then(|| (i, n - seq_len + 1))
            })
            .collect()
    }

    /// Sample `n_segments` windows of exactly `seq_len` training steps each,
    /// with up to `burn_in` prefix steps and up to `n_tail` suffix steps.
    pub fn sample(
        &self,
        rng: &mut ChaCha8Rng,
        n_segments: usize,
        burn_in: usize,
        seq_len: usize,
        n_tail: usize,
    ) -> Result<SequenceSample, BufferError> {
        let starts = self.valid_starts(seq_len);
        let total: usize = starts.iter().map(|(_, c)| c).sum();
        if total == 0 {
            return Err(BufferError::NoSequence);
        }
        let mut segments = Vec::with_capacity(n_segments);
        for _ in 0..n_segments {
            let mut pick = rng.gen_range(0..total);
            let (ep_idx, offset) = starts
                .iter()
                .find_map(|&(i, c)| {
                    if pick < c {
                        Some((i, pick))
                    } else {
                        pick -= c;
                        None
                    }
                })
                .expect("pick within total");
            let ep = &self.episodes[ep_idx];
            let t0 = offset;
            let burn_start = t0.saturating_sub(burn_in);
            let tail_end = (t0 + seq_len + n_tail).min(ep.steps.len());
            let burn: Vec<_> = ep.steps[burn_start..t0].to_vec();
            let train: Vec<_> = ep.steps[t0..t0 + seq_len].to_vec();
            let tail: Vec<_> = ep.steps[t0 + seq_len..tail_end].to_vec();
            let init_hidden = burn
                .first()
                .map(|s| s.hidden.clone())
                .unwrap_or_else(|| train[0].hidden.clone());
            segments.push(Segment {
                burn,
                train,
                tail,
                init_hidden,
            });
        }
        Ok(SequenceSample { segments })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    fn step(tag: f32, done: bool) -> TransitionStep {
        TransitionStep {
            image: vec![0; 4],
            proprio: [tag; PROPRIO_LEN],
            global: vec![tag],
            action: [0.0, 0.0],
            reward: tag,
            breakdown: RewardBreakdown::default(),
            done,
            hidden: vec![tag],
        }
    }

    fn episode(len: usize, base: f32) -> Vec<TransitionStep> {
        (0..len)
            .map(|i| step(base + i as f32, i == len - 1))
            .collect()
    }

    #[test]
    fn rejects_malformed_episodes() {
        let mut buf = ReplayBuffer::new(100);
        assert!(buf.push_episode(vec![]).is_err());
        let mut bad = episode(5, 0.0);
        bad[2].done = true;
        assert!(buf.push_episode(bad).is_err());
    }

    #[test]
    fn eviction_keeps_step_budget() {
        let mut buf = ReplayBuffer::new(25);
        for i in 0..10 {
            buf.push_episode(episode(10, i as f32 * 100.0)).unwrap();
        }
        assert!(buf.len_steps() <= 25);
        assert!(buf.ever_full());
        assert!(buf.n_episodes() >= 2);
    }

    #[test]
    fn ever_full_latches() {
        let mut buf = ReplayBuffer::new(10);
        buf.push_episode(episode(10, 0.0)).unwrap();
        assert!(buf.ever_full());
        // evict down by pushing a small episode; the latch stays set
        buf.push_episode(episode(2, 50.0)).unwrap();
        assert!(buf.ever_full());
    }

    #[test]
    fn sample_never_crosses_episode_boundary() {
        let mut buf = ReplayBuffer::new(10_000);
        buf.push_episode(episode(40, 0.0)).unwrap();
        buf.push_episode(episode(40, 1000.0)).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..200 {
            let s = buf.sample(&mut rng, 4, 16, 32, 7).unwrap();
            assert_eq!(s.training_steps(), 4 * 32);
            for seg in &s.segments {
                // all steps of one segment come from one episode: rewards
                // are either all < 1000 or all >= 1000
                let all: Vec<f32> = seg
                    .burn
                    .iter()
                    .chain(&seg.train)
                    .chain(&seg.tail)
                    .map(|t| t.reward)
                    .collect();
                let first_ep = all[0] >= 1000.0;
                assert!(all.iter().all(|&r| (r >= 1000.0) == first_ep));
                // contiguity: consecutive rewards differ by exactly 1
                for w in all.windows(2) {
                    assert_eq!(w[1] - w[0], 1.0);
                }
                // done only allowed at the very end of the chain
                let chain: Vec<&TransitionStep> =
                    seg.burn.iter().chain(&seg.train).chain(&seg.tail).collect();
                for s in &chain[..chain.len() - 1] {
                    assert!(!s.done);
                }
            }
        }
    }

    #[test]
    fn burn_in_shrinks_at_episode_start() {
        let mut buf = ReplayBuffer::new(10_000);
        buf.push_episode(episode(32, 0.0)).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let s = buf.sample(&mut rng, 8, 16, 32, 7).unwrap();
        for seg in &s.segments {
            // the only valid start is t0 = 0, so burn-in must be empty
            assert!(seg.burn.is_empty());
            assert_eq!(seg.train.len(), 32);
            assert_eq!(seg.init_hidden, seg.train[0].hidden);
        }
    }

    #[test]
    fn no_sequence_when_episodes_too_short() {
        let mut buf = ReplayBuffer::new(1000);
        buf.push_episode(episode(10, 0.0)).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert!(matches!(
            buf.sample(&mut rng, 1, 16, 32, 7),
            Err(BufferError::NoSequence)
        ));
    }

    #[test]
    fn init_hidden_comes_from_burn_start() {
        let mut buf = ReplayBuffer::new(10_000);
        buf.push_episode(episode(60, 0.0)).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let s = buf.sample(&mut rng, 16, 16, 32, 0).unwrap();
        for seg in &s.segments {
            if let Some(first_burn) = seg.burn.first() {
                assert_eq!(seg.init_hidden, first_burn.hidden);
            } else {
                assert_eq!(seg.init_hidden, seg.train[0].hidden);
            }
        }
    }
}
