//! Standardized evaluation: deterministic-policy races, the winning-margin /
//! collision-time / final-place metrics, the checkpoint-selection rule, and
//! CSV export. "Distance" in the winning margin is along-track unwrapped
//! progress in meters, never Euclidean distance.

use crate::env::{image_to_f32, EnvError, RaceConfig, RaceEnv};
use crate::nn::nets::{deterministic_action, ActorNet};
use crate::track::TrackDef;
use crate::vehicle::{ContactKind, VehicleSpec, CONTROL_DT};
use serde::Serialize;
use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;
use std::sync::Arc;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("no evaluation results to select from")]
    Empty,
}

/// Metrics of one evaluation episode.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EpisodeResult {
    pub checkpoint: String,
    pub seed: u64,
    /// Agent progress minus best opponent progress (meters) at the instant
    /// the agent finishes; positive iff the agent leads. 0 in solo races.
    pub winning_margin_m: f64,
    /// Cumulative seconds of car-car contact by the agent.
    pub collision_time_s: f64,
    /// 1-based place by progress ordering at the agent's finish.
    pub final_place: usize,
    pub lap_times_s: Vec<f64>,
    /// False when the agent hit the step ceiling before completing its laps;
    /// the margin is then measured at the ceiling.
    pub finished: bool,
}

/// Stand-in for the human-baseline collision budget: among checkpoints whose
/// mean collision time fits under the ceiling, pick the best mean margin.
#[derive(Debug, Clone, Copy)]
pub struct SelectionRule {
    pub collision_time_ceiling_s: f64,
}

impl Default for SelectionRule {
    fn default() -> Self {
        SelectionRule {
            collision_time_ceiling_s: 5.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Selection {
    pub checkpoint: String,
    pub mean_winning_margin_m: f64,
    pub mean_collision_time_s: f64,
    /// Set when no checkpoint met the ceiling and the minimum-collision one
    /// was returned instead.
    pub fallback: bool,
}

/// One deterministic policy step: tanh of the bounded mean, no sampling.
pub fn eval_action(
    actor: &ActorNet<f32>,
    obs: &crate::env::Observation,
    hidden: &[f32],
) -> ([f32; 2], Vec<f32>) {
    let img = image_to_f32(&obs.image);
    let proprio: Vec<f32> = obs.proprio.iter().map(|&v| v as f32).collect();
    let out = actor.step_nograd(&img, &proprio, hidden, 1);
    let a = deterministic_action(&out.mean);
    ([a[0], a[1]], out.next_hidden)
}

/// Run one evaluation episode from `seed`. The race ends when the agent
/// completes its laps or hits the step ceiling; metrics are read at that
/// instant.
pub fn run_eval_episode(
    actor: &ActorNet<f32>,
    track: Arc<TrackDef>,
    spec: &VehicleSpec,
    race: &RaceConfig,
    seed: u64,
    checkpoint: &str,
) -> Result<EpisodeResult, EvalError> {
    run_eval_episode_observed(actor, track, spec, race, seed, checkpoint, &mut |_, _, _| {})
}

/// `run_eval_episode` with a per-step observer (post-step env state, the
/// applied action, and the reward breakdown), so callers can record replays
/// without forking the episode loop.
#[allow(clippy::too_many_arguments)]
pub fn run_eval_episode_observed(
    actor: &ActorNet<f32>,
    track: Arc<TrackDef>,
    spec: &VehicleSpec,
    race: &RaceConfig,
    seed: u64,
    checkpoint: &str,
    observe: &mut dyn FnMut(&RaceEnv, crate::vehicle::Action, &crate::reward::RewardBreakdown),
) -> Result<EpisodeResult, EvalError> {
    let mut env = RaceEnv::new(track, spec.clone(), race.clone())?;
    let mut obs = env.reset_with_seed(seed)?;
    let mut hidden = actor.zero_hidden(1);
    let mut collision_time = 0.0;
    let mut lap_times = Vec::new();
    let mut last_lap = 0u32;
    loop {
        let (a, next_hidden) = eval_action(actor, &obs, &hidden);
        let action = crate::dist::to_env_action(a);
        let (next_obs, breakdown, done, info) = env.step(action)?;
        observe(&env, action, &breakdown);
        hidden = next_hidden;
        obs = next_obs;
        collision_time += info
            .contacts
            .iter()
            .filter(|c| c.kind == ContactKind::CarCar)
            .map(|c| c.duration_this_step)
            .sum::<f64>();
        if info.lap > last_lap {
            let t = env.step_count() as f64 * CONTROL_DT;
            for _ in last_lap..info.lap {
                lap_times.push(t);
            }
            last_lap = info.lap;
        }
        if done {
            break;
        }
    }
    let ego = env.progress(0);
    let best_opp = (1..env.n_cars())
        .map(|i| env.progress(i))
        .fold(f64::NEG_INFINITY, f64::max);
    let winning_margin_m = if env.n_cars() > 1 { ego - best_opp } else { 0.0 };
    let final_place = 1 + (1..env.n_cars()).filter(|&i| env.progress(i) > ego).count();
    Ok(EpisodeResult {
        checkpoint: checkpoint.to_string(),
        seed,
        winning_margin_m,
        collision_time_s: collision_time,
        final_place,
        lap_times_s: lap_times,
        finished: env.laps_completed() >= env.config().laps,
    })
}

/// Apply the selection rule over per-checkpoint means. Checkpoint groups are
/// visited in lexicographic order, so ties resolve deterministically.
pub fn select_checkpoint(
    results: &[EpisodeResult],
    rule: &SelectionRule,
) -> Result<Selection, EvalError> {
    let mut groups: BTreeMap<&str, (f64, f64, usize)> = BTreeMap::new();
    for r in results {
        let g = groups.entry(&r.checkpoint).or_insert((0.0, 0.0, 0));
        g.0 += r.winning_margin_m;
        g.1 += r.collision_time_s;
        g.2 += 1;
    }
    if groups.is_empty() {
        return Err(EvalError::Empty);
    }
    let means: Vec<(&str, f64, f64)> = groups
        .iter()
        .map(|(ckpt, &(m, c, n))| (*ckpt, m / n as f64, c / n as f64))
        .collect();
    let qualifying = means
        .iter()
        .filter(|&&(_, _, coll)| coll <= rule.collision_time_ceiling_s)
        .fold(None::<&(&str, f64, f64)>, |best, cand| match best {
            Some(b) if b.1 >= cand.1 => Some(b),
            _ => Some(cand),
        });
    let (pick, fallback) = match qualifying {
        Some(q) => (q, false),
        None => {
            let min_coll = means
                .iter()
                .fold(None::<&(&str, f64, f64)>, |best, cand| match best {
                    Some(b) if b.2 <= cand.2 => Some(b),
                    _ => Some(cand),
                })
                .expect("non-empty groups");
            (min_coll, true)
        }
    };
    Ok(Selection {
        checkpoint: pick.0.to_string(),
        mean_winning_margin_m: pick.1,
        mean_collision_time_s: pick.2,
        fallback,
    })
}

/// Render with 6 significant digits.
fn fmt_sig6(v: f64) -> String {
    if v == 0.0 {
        return "0.00000".to_string();
    }
    if !v.is_finite() {
        return format!("{v}");
    }
    let mag = v.abs().log10().floor() as i32;
    let prec = (5 - mag).max(0) as usize;
    format!("{v:.prec$}")
}

pub const CSV_HEADER: &str =
    "checkpoint,seed,winning_margin_m,collision_time_s,final_place,lap1_s,lap2_s,lap3_s,lap4_s";

/// Write one CSV row per episode; missing laps (timeouts) render as empty
/// cells.
pub fn export_results(results: &[EpisodeResult], path: &Path) -> Result<(), EvalError> {
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(out, "{CSV_HEADER}")?;
    for r in results {
        let laps: Vec<String> = (0..4)
            .map(|i| r.lap_times_s.get(i).map(|&t| fmt_sig6(t)).unwrap_or_default())
            .collect();
        writeln!(
            out,
            "{},{},{},{},{},{}",
            r.checkpoint,
            r.seed,
            fmt_sig6(r.winning_margin_m),
            fmt_sig6(r.collision_time_s),
            r.final_place,
            laps.join(","),
        )?;
    }
    out.flush()?;
    Ok(())
}
