//! Run configuration: one TOML file drives training, evaluation, and
//! attribution. Every field has a documented default so an empty file is a
//! valid config; unknown keys are hard errors so typos cannot silently fall
//! back to defaults. The canonical serialized form feeds a stable 64-bit
//! hash used by the trainer/worker handshake.

use crate::env::{RaceConfig, StartMode};
use crate::nn::adam::AdamConfig;
use crate::nn::nets::ArchConfig;
use crate::qrsac::LearnerConfig;
use crate::track::{make_oval_track, TrackDef, TrackError};
use crate::vehicle::{VehicleError, VehicleSpec};
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("config parse error: {0}")]
    Parse(#[from] toml::de::Error),
    #[error(transparent)]
    Track(#[from] TrackError),
    #[error(transparent)]
    Vehicle(#[from] VehicleError),
    #[error("invalid config: {0}")]
    Invalid(String),
}

/// `[run]` — run identity and output location.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunSection {
    /// Master seed; learner and worker streams are derived from it.
    pub seed: u64,
    /// Output directory for checkpoints, metrics, results, and replays.
    pub out_dir: PathBuf,
}

impl Default for RunSection {
    fn default() -> Self {
        RunSection {
            seed: 0,
            out_dir: PathBuf::from("runs/latest"),
        }
    }
}

/// `[track]` — circuit and car. With no files given, a generated oval and
/// the built-in car spec are used, so the binary runs with zero assets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrackSection {
    /// Path to a `track v1` file; absent = generate the oval below.
    pub file: Option<PathBuf>,
    /// Path to a `car v1` file; absent = the built-in spec.
    pub car: Option<PathBuf>,
    /// Generated oval: straight length (m).
    pub oval_straight_m: f64,
    /// Generated oval: turn radius (m).
    pub oval_radius_m: f64,
    /// Generated oval: half-width (m).
    pub oval_half_width_m: f64,
    /// Generated oval: centerline sample spacing (m).
    pub oval_spacing_m: f64,
}

impl Default for TrackSection {
    fn default() -> Self {
        TrackSection {
            file: None,
            car: None,
            oval_straight_m: 20.0,
            oval_radius_m: 14.0,
            oval_half_width_m: 6.0,
            oval_spacing_m: 2.0,
        }
    }
}

/// `[scenario]` — the training race setup.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScenarioSection {
    /// Fixed opponent count, used when `opponent_counts` is empty.
    pub n_opponents: usize,
    /// Curriculum: per episode the count is drawn uniformly from this list.
    pub opponent_counts: Vec<usize>,
    pub laps: u32,
    pub start_mode: StartMode,
    /// Balance-of-performance range for opponents in scatter starts.
    pub bop_range: f64,
    /// Uniform scale on opponent engine force and scripted speed cap.
    pub opponent_derate: f64,
}

impl Default for ScenarioSection {
    fn default() -> Self {
        ScenarioSection {
            n_opponents: 0,
            opponent_counts: Vec::new(),
            laps: 1,
            start_mode: StartMode::RandomScatter,
            bop_range: 0.25,
            opponent_derate: 1.0,
        }
    }
}

/// `[learner]` — architecture and QR-SAC hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LearnerSection {
    /// GRU hidden size (512 default, 128 ablation).
    pub hidden_size: usize,
    /// Width of the fully connected trunk layers.
    pub trunk_width: usize,
    /// Ablation: remove the recurrent module.
    pub no_rnn: bool,
    /// Ablation: critic sees (image, proprio) instead of privileged state.
    pub symmetric_critic: bool,
    /// Ablation: ignore stored hidden states, warm up from zeros.
    pub zero_hidden_init: bool,
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
    /// Adam learning rate (shared by actor and critics).
    pub lr: f64,
    pub grad_steps_per_epoch: usize,
    /// Trajectory segments per batch.
    pub segments_per_batch: usize,
    /// Inference-only warm-up steps before each training window.
    pub burn_in: usize,
    /// Training window length (BPTT horizon).
    pub seq_len: usize,
    /// Random-shift augmentation amplitude in pixels (0 disables).
    pub shift_pixels: i64,
    /// Replay buffer capacity in steps.
    pub replay_capacity: usize,
    /// Re-draw all weights once, the first time the buffer fills.
    pub reinit_on_full: bool,
    /// Force the one-time re-draw at a fixed epoch instead.
    pub reinit_epoch: Option<u64>,
}

impl Default for LearnerSection {
    /// Desk-scale profile: the full-scale hyperparameters (512-hidden GRU,
    /// 2048-wide trunk, 16x(16+32) batches, lr 2.5e-5) are reachable through
    /// this section, but the defaults are sized for a single desktop core.
    fn default() -> Self {
        let l = LearnerConfig::default();
        LearnerSection {
            hidden_size: 128,
            trunk_width: 256,
            no_rnn: false,
            symmetric_critic: false,
            zero_hidden_init: l.zero_hidden_init,
            gamma: l.gamma,
            n_step: l.n_step,
            alpha: l.alpha,
            kappa: l.kappa,
            polyak_tau: l.polyak_tau,
            lr: 3e-4,
            grad_steps_per_epoch: 2,
            segments_per_batch: 4,
            burn_in: 8,
            seq_len: 16,
            shift_pixels: l.shift_pixels,
            replay_capacity: 30_000,
            reinit_on_full: l.reinit_on_full,
            reinit_epoch: l.reinit_epoch,
        }
    }
}

/// `[harness]` — trainer/worker schedule.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct HarnessSection {
    pub workers: usize,
    pub epochs: u64,
    /// Episodes ingested from every worker each epoch.
    pub episodes_per_worker_per_epoch: usize,
    /// Checkpoint cadence in epochs (0 = final only).
    pub checkpoint_every: u64,
    /// Worker-side trajectory chunk size in steps.
    pub flush_every: usize,
}

impl Default for HarnessSection {
    fn default() -> Self {
        HarnessSection {
            workers: 2,
            epochs: 500,
            episodes_per_worker_per_epoch: 2,
            checkpoint_every: 50,
            flush_every: 64,
        }
    }
}

/// `[eval]` — evaluation race setup, independent of the training scenario.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalSection {
    /// Episodes per checkpoint.
    pub episodes: usize,
    /// First evaluation seed; episode i uses `seed_base + i`.
    pub seed_base: u64,
    pub n_opponents: usize,
    pub laps: u32,
    pub start_mode: StartMode,
    pub bop_range: f64,
    pub opponent_derate: f64,
    /// Checkpoint-selection collision-time ceiling (seconds).
    pub collision_ceiling_s: f64,
}

impl Default for EvalSection {
    fn default() -> Self {
        EvalSection {
            episodes: 10,
            seed_base: 1_000,
            n_opponents: 0,
            laps: 1,
            start_mode: StartMode::BackOfGrid,
            bop_range: 0.25,
            opponent_derate: 1.0,
            collision_ceiling_s: 5.0,
        }
    }
}

/// The full run configuration tree.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub run: RunSection,
    pub track: TrackSection,
    pub scenario: ScenarioSection,
    pub learner: LearnerSection,
    pub harness: HarnessSection,
    pub eval: EvalSection,
}

/// Built-in car: a 1200 kg spec with realistic road-car limits, used when
/// `[track] car` is absent.
pub fn builtin_car() -> VehicleSpec {
    VehicleSpec {
        mass: 1200.0,
        max_engine_force: 4000.0,
        max_brake_force: 8000.0,
        drag_coeff: 4.0,
        rolling_resist: 200.0,
        wheelbase: 2.6,
        footprint_length: 4.2,
        footprint_width: 1.8,
        max_steer: 0.5,
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<RunConfig, ConfigError> {
        let text = std::fs::read_to_string(path)?;
        Self::from_toml(&text)
    }

    pub fn from_toml(text: &str) -> Result<RunConfig, ConfigError> {
        let cfg: RunConfig = toml::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Canonical serialized form: every field, in declaration order. This is
    /// what gets hashed and what `train` snapshots next to its outputs.
    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serialize")
    }

    /// FNV-1a over the canonical serialization. Stable across processes (no
    /// pointer or hasher randomization), so trainer and workers built from
    /// the same config always agree.
    pub fn config_hash(&self) -> u64 {
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        for b in self.to_toml().bytes() {
            h ^= b as u64;
            h = h.wrapping_mul(0x0000_0100_0000_01b3);
        }
        h
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        self.train_race_config().validate().map_err(|e| {
            ConfigError::Invalid(format!("[scenario] {e}"))
        })?;
        self.eval_race_config().validate().map_err(|e| {
            ConfigError::Invalid(format!("[eval] {e}"))
        })?;
        for &n in &self.scenario.opponent_counts {
            RaceConfig {
                n_opponents: n,
                ..self.train_race_config()
            }
            .validate()
            .map_err(|e| ConfigError::Invalid(format!("[scenario] opponent_counts: {e}")))?;
        }
        let l = &self.learner;
        for (name, v) in [
            ("hidden_size", l.hidden_size),
            ("trunk_width", l.trunk_width),
            ("n_step", l.n_step),
            ("grad_steps_per_epoch", l.grad_steps_per_epoch),
            ("segments_per_batch", l.segments_per_batch),
            ("seq_len", l.seq_len),
            ("replay_capacity", l.replay_capacity),
        ] {
            if v == 0 {
                return Err(ConfigError::Invalid(format!(
                    "[learner] {name} must be positive"
                )));
            }
        }
        if !(0.0..1.0).contains(&l.gamma) {
            return Err(ConfigError::Invalid(format!(
                "[learner] gamma must be in [0, 1), got {}",
                l.gamma
            )));
        }
        if self.harness.workers == 0 {
            return Err(ConfigError::Invalid(
                "[harness] workers must be positive".into(),
            ));
        }
        if self.harness.episodes_per_worker_per_epoch == 0 {
            return Err(ConfigError::Invalid(
                "[harness] episodes_per_worker_per_epoch must be positive".into(),
            ));
        }
        if self.harness.flush_every == 0 {
            return Err(ConfigError::Invalid(
                "[harness] flush_every must be positive".into(),
            ));
        }
        if self.eval.episodes == 0 {
            return Err(ConfigError::Invalid(
                "[eval] episodes must be positive".into(),
            ));
        }
        if self.track.oval_spacing_m <= 0.0 || self.track.oval_radius_m <= 0.0 {
            return Err(ConfigError::Invalid(
                "[track] oval dimensions must be positive".into(),
            ));
        }
        Ok(())
    }

    /// Named ablation switches for the `--ablation` flag.
    pub fn apply_ablation(&mut self, name: &str) -> Result<(), ConfigError> {
        match name {
            "no_rnn" => self.learner.no_rnn = true,
            "symmetric_critic" => self.learner.symmetric_critic = true,
            "zero_hidden_init" => self.learner.zero_hidden_init = true,
            "hidden_128" => self.learner.hidden_size = 128,
            other => {
                return Err(ConfigError::Invalid(format!(
                    "unknown ablation '{other}' (expected one of: no_rnn, \
                     symmetric_critic, zero_hidden_init, hidden_128)"
                )))
            }
        }
        Ok(())
    }

    pub fn arch(&self) -> ArchConfig {
        ArchConfig {
            hidden_size: self.learner.hidden_size,
            trunk_width: self.learner.trunk_width,
            no_rnn: self.learner.no_rnn,
            symmetric_critic: self.learner.symmetric_critic,
        }
    }

    pub fn learner_config(&self) -> LearnerConfig {
        let l = &self.learner;
        LearnerConfig {
            arch: self.arch(),
            gamma: l.gamma,
            n_step: l.n_step,
            alpha: l.alpha,
            kappa: l.kappa,
            polyak_tau: l.polyak_tau,
            adam: AdamConfig {
                lr: l.lr,
                ..AdamConfig::default()
            },
            grad_steps_per_epoch: l.grad_steps_per_epoch,
            segments_per_batch: l.segments_per_batch,
            burn_in: l.burn_in,
            seq_len: l.seq_len,
            shift_pixels: l.shift_pixels,
            zero_hidden_init: l.zero_hidden_init,
            reinit_on_full: l.reinit_on_full,
            reinit_epoch: l.reinit_epoch,
            seed: self.run.seed,
        }
    }

    pub fn train_race_config(&self) -> RaceConfig {
        RaceConfig {
            n_opponents: self.scenario.n_opponents,
            laps: self.scenario.laps,
            start_mode: self.scenario.start_mode,
            bop_range: self.scenario.bop_range,
            opponent_derate: self.scenario.opponent_derate,
            seed: self.run.seed,
        }
    }

    pub fn eval_race_config(&self) -> RaceConfig {
        RaceConfig {
            n_opponents: self.eval.n_opponents,
            laps: self.eval.laps,
            start_mode: self.eval.start_mode,
            bop_range: self.eval.bop_range,
            opponent_derate: self.eval.opponent_derate,
            seed: self.run.seed,
        }
    }

    /// Per-worker rollout seed, derived from the master seed with a
    /// splitmix-style odd multiplier so streams never collide. The
    /// monolithic reference driver must use the same derivation.
    pub fn worker_seed(&self, worker_id: u32) -> u64 {
        self.run
            .seed
            .wrapping_add(0x9e37_79b9_7f4a_7c15u64.wrapping_mul(worker_id as u64 + 1))
    }

    pub fn load_track(&self) -> Result<TrackDef, ConfigError> {
        match &self.track.file {
            Some(path) => TrackDef::load(path).map_err(|e| match e {
                TrackError::Io(io) => ConfigError::Invalid(format!(
                    "track file {}: {io}",
                    path.display()
                )),
                other => ConfigError::Track(other),
            }),
            None => Ok(make_oval_track(
                self.track.oval_straight_m,
                self.track.oval_radius_m,
                self.track.oval_half_width_m,
                self.track.oval_spacing_m,
            )?),
        }
    }

    pub fn load_car(&self) -> Result<VehicleSpec, ConfigError> {
        match &self.track.car {
            Some(path) => VehicleSpec::load(path).map_err(|e| match e {
                VehicleError::Io(io) => ConfigError::Invalid(format!(
                    "car file {}: {io}",
                    path.display()
                )),
                other => ConfigError::Vehicle(other),
            }),
            None => Ok(builtin_car()),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_toml_is_the_default_config() {
        let cfg = RunConfig::from_toml("").unwrap();
        assert_eq!(cfg, RunConfig::default());
        assert_eq!(cfg.learner.hidden_size, 128);
        assert_eq!(cfg.learner.gamma, 0.9896);
        assert_eq!(cfg.harness.workers, 2);
    }

    #[test]
    fn canonical_form_round_trips() {
        let cfg = RunConfig::default();
        let text = cfg.to_toml();
        let back = RunConfig::from_toml(&text).unwrap();
        assert_eq!(cfg, back);
        assert_eq!(cfg.config_hash(), back.config_hash());
    }

    #[test]
    fn unknown_keys_are_hard_errors() {
        let err = RunConfig::from_toml("[learner]\nhiden_size = 128\n").unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("hiden_size"), "error should name the key: {msg}");
        // unknown section too
        assert!(RunConfig::from_toml("[lerner]\n").is_err());
    }

    #[test]
    fn hash_tracks_any_field_change() {
        let base = RunConfig::default();
        let mut changed = base.clone();
        changed.run.seed = 1;
        assert_ne!(base.config_hash(), changed.config_hash());
        let mut changed = base.clone();
        changed.learner.no_rnn = true;
        assert_ne!(base.config_hash(), changed.config_hash());
    }

    #[test]
    fn ablations_apply_and_reject_unknown_names() {
        let mut cfg = RunConfig::default();
        cfg.apply_ablation("hidden_128").unwrap();
        assert_eq!(cfg.learner.hidden_size, 128);
        cfg.apply_ablation("no_rnn").unwrap();
        assert!(cfg.arch().no_rnn);
        let err = cfg.apply_ablation("nope").unwrap_err();
        assert!(err.to_string().contains("nope"));
    }

    #[test]
    fn validation_rejects_bad_values() {
        let mut cfg = RunConfig::default();
        cfg.scenario.n_opponents = 5; // not an allowed field size
        assert!(cfg.validate().is_err());
        let mut cfg = RunConfig::default();
        cfg.learner.gamma = 1.0;
        assert!(cfg.validate().is_err());
        let mut cfg = RunConfig::default();
        cfg.harness.workers = 0;
        assert!(cfg.validate().is_err());
        let mut cfg = RunConfig::default();
        cfg.scenario.opponent_counts = vec![0, 6];
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn worker_seeds_are_distinct_per_worker() {
        let cfg = RunConfig::default();
        let seeds: Vec<u64> = (0..8).map(|i| cfg.worker_seed(i)).collect();
        let mut dedup = seeds.clone();
        dedup.sort_unstable();
        dedup.dedup();
        assert_eq!(dedup.len(), seeds.len());
    }

    #[test]
    fn builtin_track_and_car_resolve() {
        let cfg = RunConfig::default();
        let track = cfg.load_track().unwrap();
        assert!(track.total_length > 100.0);
        let car = cfg.load_car().unwrap();
        assert_eq!(car.mass, 1200.0);
        // missing file errors name the path
        let mut cfg = RunConfig::default();
        cfg.track.file = Some(PathBuf::from("/no/such/track.track"));
        let err = cfg.load_track().unwrap_err();
        assert!(err.to_string().contains("/no/such/track.track"));
    }
}
