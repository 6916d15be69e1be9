//! Lockstep multi-car race episodes: scenario spawning, balance-of-
//! performance sampling, 10 Hz agent control bridged over 6 physics
//! substeps, contact and clock bookkeeping, reward wiring, and observation
//! assembly. The environment never advances without an action.

use super::biai::{biai_policy, sample_bop, BiaiNeighbor, BiaiParams};
use super::obs::{build_opponent_grid, build_proprio, OppRef, OPP_GRID_LEN, PROPRIO_LEN};
use super::render::render_ego_view;
use crate::geom::{self, obb_overlap};
use crate::reward::{
    combine, r_clock_penalty, r_collision_terms, r_overtake, r_progress, r_steering,
    RewardBreakdown, RewardConstants, RewardWeights,
};
use crate::track::TrackDef;
use crate::vehicle::{
    bridge_action, detect_contacts, resolve_car_contacts, step_physics, Action, ContactEvent,
    ContactKind, VehicleSpec, VehicleState, PHYSICS_DT, SUBSTEPS,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::sync::Arc;
use thiserror::Error;

/// Opponent-count curriculum from which training scenarios sample.
pub const OPPONENT_COUNTS: [usize; 8] = [0, 1, 2, 3, 4, 7, 12, 19];
const MAX_CARS: usize = 20;
/// Speed damping applied per substep while scraping a barrier.
const BARRIER_DRAG: f64 = 0.98;
const GRID_SPACING_M: f64 = 8.0;
const GRID_LATERAL_M: f64 = 2.0;
/// Every race is a rolling start: cars spawn already moving along their
/// heading. Standing starts make the do-nothing policy a reward plateau
/// (rolling resistance swallows small throttle), which stalls learning.
pub const ROLLING_START_SPEED_MPS: f64 = 8.0;

#[derive(Debug, Error)]
pub enum EnvError {
    #[error("invalid race config: {0}")]
    InvalidConfig(String),
    #[error("could not place cars without overlap")]
    SpawnFailed,
    #[error("step called after the episode finished")]
    EpisodeOver,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StartMode {
    RandomScatter,
    BackOfGrid,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RaceConfig {
    pub n_opponents: usize,
    pub laps: u32,
    pub start_mode: StartMode,
    /// Balance-of-performance perturbation range for opponent specs
    /// (applied in random_scatter starts only).
    pub bop_range: f64,
    /// Uniform scale on opponent engine force and scripted speed cap
    /// (1.0 = stock; < 1.0 down-rates the field). Applied in every start
    /// mode, opponents only.
    pub opponent_derate: f64,
    pub seed: u64,
}

impl Default for RaceConfig {
    fn default() -> Self {
        RaceConfig {
            n_opponents: 0,
            laps: 1,
            start_mode: StartMode::RandomScatter,
            bop_range: 0.25,
            opponent_derate: 1.0,
            seed: 0,
        }
    }
}

impl RaceConfig {
    pub fn validate(&self) -> Result<(), EnvError> {
        if !OPPONENT_COUNTS.contains(&self.n_opponents) {
            return Err(EnvError::InvalidConfig(format!(
                "n_opponents must be one of {OPPONENT_COUNTS:?}, got {}",
                self.n_opponents
            )));
        }
        if self.n_opponents + 1 > MAX_CARS {
            return Err(EnvError::InvalidConfig("more than 20 cars".into()));
        }
        if self.laps < 1 {
            return Err(EnvError::InvalidConfig("laps must be >= 1".into()));
        }
        if !(0.0..=0.5).contains(&self.bop_range) {
            return Err(EnvError::InvalidConfig("bop_range outside [0, 0.5]".into()));
        }
        if !(self.opponent_derate > 0.0 && self.opponent_derate <= 1.5) {
            return Err(EnvError::InvalidConfig(
                "opponent_derate outside (0, 1.5]".into(),
            ));
        }
        Ok(())
    }
}

/// Composite per-step observation.
#[derive(Debug, Clone, PartialEq)]
pub struct Observation {
    /// 64x64x3 raster, u8; exact f32 view is value / 255.
    pub image: Vec<u8>,
    pub proprio: [f64; PROPRIO_LEN],
    /// 177 track points as a flat [177][3] array.
    pub track_points: Vec<f64>,
    pub opp_grid: [f64; OPP_GRID_LEN],
}

#[derive(Debug, Clone)]
pub struct StepInfo {
    /// Ego unwrapped progress in meters since its spawn reference.
    pub progress: f64,
    pub off_track_clock: f64,
    pub barrier_clock: f64,
    /// Aggregated ego contacts this control step (duration summed over
    /// substeps).
    pub contacts: Vec<ContactEvent>,
    pub lap: u32,
    pub race_done: bool,
    /// Per-opponent unwrapped progress, aligned with opponent ids.
    pub opp_progress: Vec<f64>,
    /// Scalar reward (weighted combination of the breakdown).
    pub reward: f64,
}

#[derive(Debug, Clone)]
struct Car {
    state: VehicleState,
    spec: VehicleSpec,
    biai: BiaiParams,
    /// Raw track progress in [0, L).
    raw_progress: f64,
    /// Lateral offset from the centerline (positive = left).
    lateral: f64,
    /// Cumulative progress; never wraps.
    unwrapped: f64,
    start_unwrapped: f64,
}

pub struct RaceEnv {
    pub track: Arc<TrackDef>,
    base_spec: VehicleSpec,
    cfg: RaceConfig,
    weights: RewardWeights,
    consts: RewardConstants,
    cars: Vec<Car>,
    rng: ChaCha8Rng,
    step_count: u64,
    ceiling: u64,
    done: bool,
    /// Which opponents the ego was touching at the end of the last step.
    ego_contact_prev: Vec<bool>,
}

impl RaceEnv {
    pub fn new(
        track: Arc<TrackDef>,
        base_spec: VehicleSpec,
        cfg: RaceConfig,
    ) -> Result<RaceEnv, EnvError> {
        cfg.validate()?;
        let ceiling = (3.0 * cfg.laps as f64 * track.total_length).ceil() as u64;
        let mut env = RaceEnv {
            track,
            base_spec,
            cfg,
            weights: RewardWeights::default(),
            consts: RewardConstants::default(),
            cars: Vec::new(),
            rng: ChaCha8Rng::seed_from_u64(0),
            step_count: 0,
            ceiling,
            done: false,
            ego_contact_prev: Vec::new(),
        };
        env.spawn()?;
        Ok(env)
    }

    pub fn config(&self) -> &RaceConfig {
        &self.cfg
    }

    pub fn n_cars(&self) -> usize {
        self.cars.len()
    }

    pub fn is_done(&self) -> bool {
        self.done
    }

    pub fn step_count(&self) -> u64 {
        self.step_count
    }

    pub fn step_ceiling(&self) -> u64 {
        self.ceiling
    }

    /// Unwrapped progress of car `idx` (0 = ego) relative to a common
    /// origin, so places can be compared directly.
    pub fn progress(&self, idx: usize) -> f64 {
        self.cars[idx].unwrapped
    }

    pub fn car_state(&self, idx: usize) -> &VehicleState {
        &self.cars[idx].state
    }

    pub fn car_spec(&self, idx: usize) -> &VehicleSpec {
        &self.cars[idx].spec
    }

    pub fn laps_completed(&self) -> u32 {
        let ego = &self.cars[0];
        (((ego.unwrapped - ego.start_unwrapped) / self.track.total_length).floor()).max(0.0) as u32
    }

    /// Restart the episode from the configured seed.
    pub fn reset(&mut self) -> Result<Observation, EnvError> {
        self.spawn()?;
        Ok(self.observe())
    }

    /// Restart with a different seed (workers advance the seed per episode).
    pub fn reset_with_seed(&mut self, seed: u64) -> Result<Observation, EnvError> {
        self.cfg.seed = seed;
        self.reset()
    }

    fn spawn(&mut self) -> Result<(), EnvError> {
        self.rng = ChaCha8Rng::seed_from_u64(self.cfg.seed);
        let n = self.cfg.n_opponents + 1;
        self.cars.clear();
        self.step_count = 0;
        self.done = false;
        self.ego_contact_prev = vec![false; n];

        match self.cfg.start_mode {
            StartMode::RandomScatter => self.spawn_scatter(n)?,
            StartMode::BackOfGrid => self.spawn_grid(n),
        }

        // opponent character: BoP spec perturbation (scatter starts only)
        // and per-opponent pace variation
        for i in 1..n {
            if self.cfg.start_mode == StartMode::RandomScatter {
                self.cars[i].spec = sample_bop(&self.base_spec, &mut self.rng, self.cfg.bop_range);
            }
            let pace: f64 = self.rng.gen_range(0.78..0.98);
            self.cars[i].biai.v_cap *= pace * self.cfg.opponent_derate;
            self.cars[i].spec.max_engine_force *= self.cfg.opponent_derate;
        }
        Ok(())
    }

    fn make_car(&self, raw_progress: f64, lateral: f64, unwrapped: f64) -> Car {
        let center = self.track.centerline_point(raw_progress);
        let heading = self.track.heading_at(raw_progress);
        let left = geom::perp_left([heading.cos(), heading.sin()]);
        let mut state =
            VehicleState::at_rest(geom::add(center, geom::scale(left, lateral)), heading);
        state.velocity = geom::scale([heading.cos(), heading.sin()], ROLLING_START_SPEED_MPS);
        Car {
            state,
            spec: self.base_spec.clone(),
            biai: BiaiParams::default(),
            raw_progress,
            lateral,
            unwrapped,
            start_unwrapped: unwrapped,
        }
    }

    fn spawn_scatter(&mut self, n: usize) -> Result<(), EnvError> {
        let len = self.track.total_length;
        for _ in 0..n {
            let mut placed = false;
            for _attempt in 0..200 {
                let p = self.rng.gen_range(0.0..len);
                let margin = (self.track.half_width_at(p) - 1.5).max(0.2);
                let lat = self.rng.gen_range(-margin..margin);
                let car = self.make_car(p, lat, p);
                let corners = car.state.corners(&car.spec);
                let overlaps = self.cars.iter().any(|c| {
                    obb_overlap(&corners, &c.state.corners(&c.spec)).is_some()
                });
                if !overlaps {
                    self.cars.push(car);
                    placed = true;
                    break;
                }
            }
            if !placed {
                return Err(EnvError::SpawnFailed);
            }
        }
        Ok(())
    }

    fn spawn_grid(&mut self, n: usize) {
        let len = self.track.total_length;
        // slot 0 is the front row; the ego takes the last slot
        let slot_car = |slot: usize| -> (f64, f64, f64) {
            let behind = GRID_SPACING_M * (slot + 1) as f64;
            let raw = (len - behind).rem_euclid(len);
            let lat = if slot % 2 == 0 {
                GRID_LATERAL_M
            } else {
                -GRID_LATERAL_M
            };
            (raw, lat, -behind)
        };
        let (raw, lat, unw) = slot_car(n - 1);
        self.cars.push(self.make_car(raw, lat, unw));
        for slot in 0..n - 1 {
            let (raw, lat, unw) = slot_car(slot);
            self.cars.push(self.make_car(raw, lat, unw));
        }
    }

    /// The action the scripted driver would take for the ego car. Used by
    /// opponents internally and by tests/evaluation baselines.
    pub fn scripted_action(&self, idx: usize) -> Action {
        let me = &self.cars[idx];
        let neighbors: Vec<BiaiNeighbor> = self
            .cars
            .iter()
            .enumerate()
            .filter(|(j, _)| *j != idx)
            .map(|(_, c)| BiaiNeighbor {
                gap: self.track.progress_delta(me.raw_progress, c.raw_progress),
                lateral: c.lateral,
                speed: c.state.speed(),
            })
            .collect();
        biai_policy(
            &me.state,
            me.lateral,
            me.raw_progress,
            &neighbors,
            &self.track,
            &me.spec,
            &me.biai,
        )
    }

    pub fn step(
        &mut self,
        action: Action,
    ) -> Result<(Observation, RewardBreakdown, bool, StepInfo), EnvError> {
        if self.done {
            return Err(EnvError::EpisodeOver);
        }
        let n = self.cars.len();

        // previous-step quantities the reward needs
        let ego_unw_prev = self.cars[0].unwrapped;
        let opp_unw_prev: Vec<f64> = self.cars[1..].iter().map(|c| c.unwrapped).collect();
        let off_clock_prev = self.cars[0].state.off_track_clock;
        let bar_clock_prev = self.cars[0].state.barrier_clock;

        // all cars commit to their control-step plans simultaneously
        let mut plans = Vec::with_capacity(n);
        for i in 0..n {
            let act = if i == 0 { action } else { self.scripted_action(i) };
            plans.push(bridge_action(
                self.cars[i].state.steer_angle,
                act,
                self.cars[i].spec.max_steer,
            ));
        }

        // aggregated ego contacts: per other car and barrier
        let mut car_contact_speed = vec![0.0f64; n];
        let mut car_contact_substeps = vec![0u32; n];
        let mut barrier_substeps = 0u32;
        let mut barrier_speed = 0.0f64;

        for k in 0..SUBSTEPS {
            for i in 0..n {
                self.cars[i].state =
                    step_physics(&self.cars[i].state, &self.cars[i].spec, plans[i][k], PHYSICS_DT);
            }
            let states: Vec<VehicleState> = self.cars.iter().map(|c| c.state.clone()).collect();
            let specs: Vec<VehicleSpec> = self.cars.iter().map(|c| c.spec.clone()).collect();
            let contacts = detect_contacts(&states, &specs, &self.track, PHYSICS_DT);

            // clocks and flags
            for i in 0..n {
                let in_barrier = contacts[i]
                    .iter()
                    .any(|c| c.kind == ContactKind::CarBarrier);
                let in_car = contacts[i].iter().any(|c| c.kind == ContactKind::CarCar);
                let car = &mut self.cars[i];
                car.state.in_barrier_contact = in_barrier;
                car.state.in_car_contact = in_car;
                if in_barrier {
                    car.state.barrier_clock += PHYSICS_DT;
                    car.state.velocity = geom::scale(car.state.velocity, BARRIER_DRAG);
                }
                if self.track.off_track_tire_count(&car.state, &car.spec) >= 3 {
                    car.state.off_track_clock += PHYSICS_DT;
                }
            }

            // ego contact aggregation for the reward terms
            for c in &contacts[0] {
                match c.kind {
                    ContactKind::CarCar => {
                        let j = c.other_index.expect("car contact carries the other id");
                        car_contact_substeps[j] += 1;
                        car_contact_speed[j] = car_contact_speed[j].max(c.rel_speed);
                    }
                    ContactKind::CarBarrier => {
                        barrier_substeps += 1;
                        barrier_speed = barrier_speed.max(c.rel_speed);
                    }
                }
            }

            // positional de-overlap + inelastic damping
            let mut states: Vec<VehicleState> =
                self.cars.iter().map(|c| c.state.clone()).collect();
            resolve_car_contacts(&mut states, &specs);
            for (car, s) in self.cars.iter_mut().zip(states) {
                car.state = s;
            }
        }

        // control-rate bookkeeping: steering history, progress unwrapping
        for car in &mut self.cars {
            let steer = car.state.steer_angle;
            car.state.push_steer_history(steer);
            let proj = self.track.project(car.state.position);
            let delta = self.track.progress_delta(car.raw_progress, proj.progress);
            car.raw_progress = proj.progress;
            car.lateral = proj.lateral;
            car.unwrapped += delta;
        }
        self.step_count += 1;

        // reward
        let ego = &self.cars[0];
        let mut contacts_step: Vec<ContactEvent> = Vec::new();
        let mut onsets: Vec<ContactEvent> = Vec::new();
        let mut active_now = vec![false; n];
        for j in 1..n {
            if car_contact_substeps[j] > 0 {
                active_now[j] = true;
                let ev = ContactEvent {
                    kind: ContactKind::CarCar,
                    other_index: Some(j),
                    rel_speed: car_contact_speed[j],
                    duration_this_step: car_contact_substeps[j] as f64 * PHYSICS_DT,
                };
                if !self.ego_contact_prev[j] {
                    onsets.push(ev.clone());
                }
                contacts_step.push(ev);
            }
        }
        if barrier_substeps > 0 {
            contacts_step.push(ContactEvent {
                kind: ContactKind::CarBarrier,
                other_index: None,
                rel_speed: barrier_speed,
                duration_this_step: barrier_substeps as f64 * PHYSICS_DT,
            });
        }
        self.ego_contact_prev = active_now;

        let speed = ego.state.speed();
        let (r_v, _) = r_collision_terms(&onsets, &self.consts);
        let (_, r_c) = r_collision_terms(&contacts_step, &self.consts);
        let opp_unw_now: Vec<f64> = self.cars[1..].iter().map(|c| c.unwrapped).collect();
        let (r_s, r_h) = r_steering(
            ego.state.steer_history[0],
            ego.state.steer_history[1],
            ego.state.steer_history[2],
            &self.consts,
        );
        let breakdown = RewardBreakdown {
            r_p: r_progress(ego.unwrapped, ego_unw_prev),
            r_o: r_clock_penalty(ego.state.off_track_clock, off_clock_prev, speed),
            r_b: r_clock_penalty(ego.state.barrier_clock, bar_clock_prev, speed),
            r_v,
            r_c,
            r_t: r_overtake(
                ego.unwrapped,
                ego_unw_prev,
                &opp_unw_now,
                &opp_unw_prev,
                &self.consts,
            ),
            r_s,
            r_h,
        };
        let reward = combine(&breakdown, &self.weights);

        // termination
        let lap = self.laps_completed();
        if lap >= self.cfg.laps || self.step_count >= self.ceiling {
            self.done = true;
        }

        let info = StepInfo {
            progress: self.cars[0].unwrapped,
            off_track_clock: self.cars[0].state.off_track_clock,
            barrier_clock: self.cars[0].state.barrier_clock,
            contacts: contacts_step,
            lap,
            race_done: self.done,
            opp_progress: opp_unw_now,
            reward,
        };
        Ok((self.observe(), breakdown, self.done, info))
    }

    /// Assemble the ego observation from the current world state.
    pub fn observe(&self) -> Observation {
        let ego = &self.cars[0];
        let opp_refs: Vec<(&VehicleState, &VehicleSpec)> = self.cars[1..]
            .iter()
            .map(|c| (&c.state, &c.spec))
            .collect();
        let image = render_ego_view(&self.track, &ego.state, &opp_refs);
        let proprio = build_proprio(&ego.state);
        let tp = self
            .track
            .sample_track_points(ego.raw_progress, ego.state.speed());
        let grid_refs: Vec<OppRef> = self.cars[1..]
            .iter()
            .map(|c| OppRef {
                state: &c.state,
                gap: self.track.progress_delta(ego.raw_progress, c.raw_progress),
            })
            .collect();
        let opp_grid = build_opponent_grid(&ego.state, &grid_refs);
        Observation {
            image,
            proprio,
            track_points: tp.points,
            opp_grid,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::track::make_oval_track;

    fn base_spec() -> VehicleSpec {
        VehicleSpec {
            mass: 1200.0,
            max_engine_force: 4000.0,
            max_brake_force: 8000.0,
            drag_coeff: 5.0,
            rolling_resist: 200.0,
            wheelbase: 2.6,
            footprint_length: 4.2,
            footprint_width: 1.8,
            max_steer: 0.5,
        }
    }

    fn make_env(n_opp: usize, mode: StartMode, seed: u64) -> RaceEnv {
        let track = Arc::new(make_oval_track(100.0, 50.0, 8.0, 2.0).unwrap());
        let cfg = RaceConfig {
            n_opponents: n_opp,
            laps: 1,
            start_mode: mode,
            bop_range: 0.25,
            seed,
            ..RaceConfig::default()
        };
        RaceEnv::new(track, base_spec(), cfg).unwrap()
    }

    #[test]
    fn invalid_configs_rejected() {
        let track = Arc::new(make_oval_track(100.0, 50.0, 8.0, 2.0).unwrap());
        for bad in [5usize, 6, 20] {
            let cfg = RaceConfig {
                n_opponents: bad,
                ..RaceConfig::default()
            };
            assert!(RaceEnv::new(track.clone(), base_spec(), cfg).is_err());
        }
        let cfg = RaceConfig {
            laps: 0,
            ..RaceConfig::default()
        };
        assert!(RaceEnv::new(track, base_spec(), cfg).is_err());
    }

    #[test]
    fn solo_scatter_empty_grid() {
        let env = make_env(0, StartMode::RandomScatter, 3);
        let obs = env.observe();
        assert_eq!(obs.opp_grid, [0.0; OPP_GRID_LEN]);
        assert_eq!(obs.track_points.len(), 531);
        assert_eq!(obs.image.len(), 64 * 64 * 3);
        assert!(obs.proprio.iter().all(|v| v.is_finite()));
    }

    #[test]
    fn back_of_grid_ego_is_last() {
        let env = make_env(19, StartMode::BackOfGrid, 9);
        assert_eq!(env.n_cars(), 20);
        let ego = env.progress(0);
        for i in 1..20 {
            assert!(env.progress(i) > ego, "car {i} not ahead of ego");
        }
    }

    #[test]
    fn same_seed_bit_exact_reset() {
        let mut a = make_env(4, StartMode::RandomScatter, 1234);
        let mut b = make_env(4, StartMode::RandomScatter, 1234);
        let oa = a.reset().unwrap();
        let ob = b.reset().unwrap();
        assert_eq!(oa, ob);
    }

    #[test]
    fn deterministic_trajectory() {
        let run = || {
            let mut env = make_env(2, StartMode::RandomScatter, 77);
            let mut out = Vec::new();
            for t in 0..40 {
                let act = Action {
                    delta_steer_deg: ((t as f64) * 0.37).sin(),
                    throttle_brake: 0.8,
                };
                let (obs, bd, done, info) = env.step(act).unwrap();
                out.push((obs, bd, done, info.progress.to_bits(), info.reward.to_bits()));
                if done {
                    break;
                }
            }
            out
        };
        let a = run();
        let b = run();
        assert_eq!(a.len(), b.len());
        for (x, y) in a.iter().zip(&b) {
            assert_eq!(x.0, y.0);
            assert_eq!(x.1, y.1);
            assert_eq!(x.3, y.3);
            assert_eq!(x.4, y.4);
        }
    }

    #[test]
    fn stationary_zero_action_zero_reward() {
        // brake the rolling start down to a standstill first
        let mut env = make_env(0, StartMode::RandomScatter, 5);
        for _ in 0..60 {
            env.step(Action {
                delta_steer_deg: 0.0,
                throttle_brake: -1.0,
            })
            .unwrap();
            if env.car_state(0).speed() == 0.0 {
                break;
            }
        }
        assert_eq!(env.car_state(0).speed(), 0.0, "car failed to stop");
        let (_, bd, _, info) = env
            .step(Action {
                delta_steer_deg: 0.0,
                throttle_brake: 0.0,
            })
            .unwrap();
        assert_eq!(bd.r_p, 0.0);
        assert_eq!(bd.r_o, 0.0);
        assert_eq!(bd.r_b, 0.0);
        assert_eq!(bd.r_v, 0.0);
        assert_eq!(bd.r_c, 0.0);
        assert_eq!(bd.r_s, 0.0);
        assert_eq!(bd.r_h, 0.0);
        assert_eq!(info.reward, 0.0);
    }

    #[test]
    fn full_throttle_positive_progress_reward() {
        let mut env = make_env(0, StartMode::RandomScatter, 5);
        let mut last_p = 0.0;
        for _ in 0..5 {
            let (_, bd, _, _) = env
                .step(Action {
                    delta_steer_deg: 0.0,
                    throttle_brake: 1.0,
                })
                .unwrap();
            last_p = bd.r_p;
        }
        assert!(last_p > 0.0, "r_p {last_p}");
    }

    #[test]
    fn step_after_done_is_error() {
        let mut env = make_env(0, StartMode::RandomScatter, 8);
        loop {
            let act = env.scripted_action(0);
            let (_, _, done, _) = env.step(act).unwrap();
            if done {
                break;
            }
        }
        assert!(matches!(
            env.step(Action {
                delta_steer_deg: 0.0,
                throttle_brake: 0.0
            }),
            Err(EnvError::EpisodeOver)
        ));
    }

    #[test]
    fn scripted_solo_lap_progress_sums_to_track_length() {
        let mut env = make_env(0, StartMode::RandomScatter, 21);
        let len = env.track.total_length;
        let start = env.progress(0);
        let mut sum_rp = 0.0;
        let mut steps = 0u64;
        let final_progress = loop {
            let act = env.scripted_action(0);
            let (_, bd, done, info) = env.step(act).unwrap();
            sum_rp += bd.r_p;
            steps += 1;
            if done {
                assert!(info.lap >= 1, "hit the step ceiling instead of finishing");
                break info.progress;
            }
            assert!(steps < 10_000);
        };
        // progress deltas telescope exactly to the distance made good
        let travelled = final_progress - start;
        assert!(
            (sum_rp - travelled).abs() < 1e-9,
            "sum r_p {sum_rp} vs travelled {travelled}"
        );
        // the lap finishes within one control step of the line
        assert!(travelled >= len && travelled < len + 5.0, "travelled {travelled} vs lap {len}");
    }

    #[test]
    fn opponents_complete_laps_unassisted() {
        // park the ego off to the side; every scripted opponent must get
        // around within the ceiling
        let track = Arc::new(make_oval_track(60.0, 30.0, 8.0, 2.0).unwrap());
        let cfg = RaceConfig {
            n_opponents: 3,
            laps: 2,
            start_mode: StartMode::BackOfGrid,
            bop_range: 0.0,
            seed: 4,
            ..RaceConfig::default()
        };
        let mut env = RaceEnv::new(track.clone(), base_spec(), cfg).unwrap();
        let len = track.total_length;
        let mut done = false;
        while !done {
            let (_, _, d, _) = env
                .step(Action {
                    delta_steer_deg: 0.0,
                    throttle_brake: 0.0,
                })
                .unwrap();
            done = d;
        }
        for i in 1..env.n_cars() {
            let travelled = env.progress(i) - (-(GRID_SPACING_M * i as f64));
            assert!(
                travelled > len,
                "opponent {i} only covered {travelled:.1} m of a {len:.1} m lap"
            );
        }
    }

    #[test]
    fn observation_invariants_along_episode() {
        let mut env = make_env(4, StartMode::RandomScatter, 31);
        for _ in 0..60 {
            let act = env.scripted_action(0);
            let (obs, _, done, _) = env.step(act).unwrap();
            assert_eq!(obs.track_points.len(), 531);
            assert!(obs.track_points.iter().all(|v| v.is_finite()));
            assert!(obs.proprio.iter().all(|v| v.is_finite()));
            assert!(obs.opp_grid.iter().all(|v| v.is_finite()));
            if done {
                break;
            }
        }
    }

    #[test]
    fn step_ceiling_terminates_stuck_episode() {
        let track = Arc::new(make_oval_track(40.0, 20.0, 8.0, 2.0).unwrap());
        let cfg = RaceConfig {
            n_opponents: 0,
            laps: 1,
            start_mode: StartMode::RandomScatter,
            bop_range: 0.0,
            seed: 1,
            ..RaceConfig::default()
        };
        let mut env = RaceEnv::new(track, base_spec(), cfg).unwrap();
        let ceiling = env.step_ceiling();
        let mut steps = 0;
        loop {
            let (_, _, done, _) = env
                .step(Action {
                    delta_steer_deg: 0.0,
                    throttle_brake: 0.0,
                })
                .unwrap();
            steps += 1;
            if done {
                break;
            }
            assert!(steps <= ceiling);
        }
        assert_eq!(steps, ceiling);
    }
}
