//! Vehicle dynamics: kinematic bicycle stepping at 60 Hz, the 10 Hz -> 60 Hz
//! action bridge, and car-car / car-barrier contact detection.

use crate::geom::{self, Vec2};
use crate::track::TrackDef;
use std::fs;
use std::path::Path;
use thiserror::Error;

pub const PHYSICS_HZ: u32 = 60;
pub const CONTROL_HZ: u32 = 10;
pub const SUBSTEPS: usize = (PHYSICS_HZ / CONTROL_HZ) as usize;
pub const PHYSICS_DT: f64 = 1.0 / PHYSICS_HZ as f64;
pub const CONTROL_DT: f64 = 1.0 / CONTROL_HZ as f64;

/// Speed at which steering authority is halved relative to standstill.
const STEER_AUTHORITY_VREF: f64 = 40.0;

/// Delta steering command bound in degrees.
pub const MAX_DELTA_STEER_DEG: f64 = 3.0;

#[derive(Debug, Error)]
pub enum VehicleError {
    #[error("io error reading car file: {0}")]
    Io(#[from] std::io::Error),
    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("car validation failed: {0}")]
    Validation(String),
}

/// Static vehicle parameters in SI units.
#[derive(Debug, Clone, PartialEq)]
pub struct VehicleSpec {
    pub mass: f64,
    pub max_engine_force: f64,
    pub max_brake_force: f64,
    pub drag_coeff: f64,
    pub rolling_resist: f64,
    pub wheelbase: f64,
    pub footprint_length: f64,
    pub footprint_width: f64,
    pub max_steer: f64,
}

impl VehicleSpec {
    pub fn validate(&self) -> Result<(), VehicleError> {
        let fields = [
            ("mass", self.mass),
            ("max_engine_force", self.max_engine_force),
            ("max_brake_force", self.max_brake_force),
            ("drag_coeff", self.drag_coeff),
            ("rolling_resist", self.rolling_resist),
            ("wheelbase", self.wheelbase),
            ("length", self.footprint_length),
            ("width", self.footprint_width),
            ("max_steer", self.max_steer),
        ];
        for (name, v) in fields {
            if v <= 0.0 || !v.is_finite() {
                return Err(VehicleError::Validation(format!(
                    "{name} must be strictly positive, got {v}"
                )));
            }
        }
        if self.max_steer > 0.6 {
            return Err(VehicleError::Validation(format!(
                "max_steer {} exceeds 0.6 rad",
                self.max_steer
            )));
        }
        Ok(())
    }

    pub fn load(path: &Path) -> Result<VehicleSpec, VehicleError> {
        let text = fs::read_to_string(path)?;
        Self::parse(&text)
    }

    /// Parse the `car v1` line-oriented key-value format.
    pub fn parse(text: &str) -> Result<VehicleSpec, VehicleError> {
        let mut lines = text
            .lines()
            .enumerate()
            .map(|(i, l)| (i + 1, l.split('#').next().unwrap_or("").trim()))
            .filter(|(_, l)| !l.is_empty());
        let (hline, header) = lines.next().ok_or(VehicleError::Parse {
            line: 1,
            msg: "empty file".into(),
        })?;
        if header != "car v1" {
            return Err(VehicleError::Parse {
                line: hline,
                msg: format!("expected header 'car v1', got '{header}'"),
            });
        }
        let mut spec = VehicleSpec {
            mass: 0.0,
            max_engine_force: 0.0,
            max_brake_force: 0.0,
            drag_coeff: 0.0,
            rolling_resist: 0.0,
            wheelbase: 0.0,
            footprint_length: 0.0,
            footprint_width: 0.0,
            max_steer: 0.0,
        };
        for (lineno, line) in lines {
            let mut it = line.split_whitespace();
            let key = it.next().unwrap();
            let val: f64 = it
                .next()
                .ok_or_else(|| VehicleError::Parse {
                    line: lineno,
                    msg: format!("missing value for '{key}'"),
                })?
                .parse()
                .map_err(|e| VehicleError::Parse {
                    line: lineno,
                    msg: format!("bad value for '{key}': {e}"),
                })?;
            match key {
                "mass" => spec.mass = val,
                "max_engine_force" => spec.max_engine_force = val,
                "max_brake_force" => spec.max_brake_force = val,
                "drag_coeff" => spec.drag_coeff = val,
                "rolling_resist" => spec.rolling_resist = val,
                "wheelbase" => spec.wheelbase = val,
                "length" => spec.footprint_length = val,
                "width" => spec.footprint_width = val,
                "max_steer" => spec.max_steer = val,
                other => {
                    return Err(VehicleError::Parse {
                        line: lineno,
                        msg: format!("unknown key '{other}'"),
                    })
                }
            }
        }
        spec.validate()?;
        Ok(spec)
    }
}

/// Agent-level action: delta steering in degrees, combined throttle/brake.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Action {
    pub delta_steer_deg: f64,
    pub throttle_brake: f64,
}

impl Action {
    pub fn clamped(self) -> Action {
        Action {
            delta_steer_deg: self
                .delta_steer_deg
                .clamp(-MAX_DELTA_STEER_DEG, MAX_DELTA_STEER_DEG),
            throttle_brake: self.throttle_brake.clamp(-1.0, 1.0),
        }
    }
}

/// Full kinodynamic state of one car.
#[derive(Debug, Clone, PartialEq)]
pub struct VehicleState {
    pub position: Vec2,
    pub heading: f64,
    /// World-frame velocity; always aligned with heading (no slip model).
    pub velocity: Vec2,
    pub yaw_rate: f64,
    pub steer_angle: f64,
    pub throttle_brake: f64,
    /// Last 3 steering angles at control rate, most recent first.
    pub steer_history: [f64; 3],
    /// Last 3 steering deltas at control rate, most recent first.
    pub delta_history: [f64; 3],
    /// World-frame acceleration over the last physics substep.
    pub accel: Vec2,
    /// Cumulative seconds with >= 3 tires off track this episode.
    pub off_track_clock: f64,
    /// Cumulative seconds of barrier contact this episode.
    pub barrier_clock: f64,
    /// Contact flags for the most recent substep.
    pub in_car_contact: bool,
    pub in_barrier_contact: bool,
}

impl VehicleState {
    pub fn at_rest(position: Vec2, heading: f64) -> VehicleState {
        VehicleState {
            position,
            heading,
            velocity: [0.0, 0.0],
            yaw_rate: 0.0,
            steer_angle: 0.0,
            throttle_brake: 0.0,
            steer_history: [0.0; 3],
            delta_history: [0.0; 3],
            accel: [0.0, 0.0],
            off_track_clock: 0.0,
            barrier_clock: 0.0,
            in_car_contact: false,
            in_barrier_contact: false,
        }
    }

    pub fn speed(&self) -> f64 {
        geom::norm(self.velocity)
    }

    pub fn corners(&self, spec: &VehicleSpec) -> [Vec2; 4] {
        geom::rect_corners(
            self.position,
            self.heading,
            spec.footprint_length,
            spec.footprint_width,
        )
    }

    /// Push the current steering angle into the control-rate history buffers.
    pub fn push_steer_history(&mut self, steer: f64) {
        let delta = steer - self.steer_history[0];
        self.steer_history = [steer, self.steer_history[0], self.steer_history[1]];
        self.delta_history = [delta, self.delta_history[0], self.delta_history[1]];
    }
}

/// Per-substep control after bridging.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SubstepControl {
    pub steer: f64,
    pub throttle_brake: f64,
}

/// Bridge one 10 Hz action into 6 per-substep controls: zero-order hold for
/// throttle, linear interpolation from the previous steering angle to the
/// clamped target.
pub fn bridge_action(prev_steer: f64, action: Action, max_steer: f64) -> [SubstepControl; 6] {
    let action = action.clamped();
    let target = (prev_steer + action.delta_steer_deg.to_radians()).clamp(-max_steer, max_steer);
    let mut out = [SubstepControl {
        steer: 0.0,
        throttle_brake: action.throttle_brake,
    }; SUBSTEPS];
    for (k, c) in out.iter_mut().enumerate() {
        let t = (k + 1) as f64 / SUBSTEPS as f64;
        c.steer = prev_steer + (target - prev_steer) * t;
    }
    out
}

/// One 60 Hz kinematic bicycle step. Deterministic; does not touch the
/// control-rate history buffers or contact clocks.
pub fn step_physics(
    state: &VehicleState,
    spec: &VehicleSpec,
    control: SubstepControl,
    dt: f64,
) -> VehicleState {
    let mut next = state.clone();
    let throttle = control.throttle_brake.max(0.0);
    let brake = (-control.throttle_brake).max(0.0);
    let u = state.speed();
    let drive = throttle * spec.max_engine_force;
    let resist = if u > 0.0 {
        brake * spec.max_brake_force + spec.drag_coeff * u * u + spec.rolling_resist
    } else {
        0.0
    };
    let u_new = (u + (drive - resist) / spec.mass * dt).max(0.0);

    let steer = control.steer.clamp(-spec.max_steer, spec.max_steer);
    // steering authority falls off with speed so cornering stays bounded
    let steer_eff = steer / (1.0 + (u_new / STEER_AUTHORITY_VREF).powi(2));
    let yaw_rate = u_new * steer_eff.tan() / spec.wheelbase;
    let heading = state.heading + yaw_rate * dt;
    let dir = [heading.cos(), heading.sin()];
    let velocity = geom::scale(dir, u_new);
    next.position = geom::add(state.position, geom::scale(velocity, dt));
    next.heading = heading;
    next.accel = geom::scale(geom::sub(velocity, state.velocity), 1.0 / dt);
    next.velocity = velocity;
    next.yaw_rate = yaw_rate;
    next.steer_angle = steer;
    next.throttle_brake = control.throttle_brake;
    next
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ContactKind {
    CarCar,
    CarBarrier,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ContactEvent {
    pub kind: ContactKind,
    pub other_index: Option<usize>,
    /// Relative speed |v_ego - v_other| (m/s); 0 for barrier contacts.
    pub rel_speed: f64,
    pub duration_this_step: f64,
}

/// Detect car-car and car-barrier contacts for every car. Detection only;
/// resolution is a separate step.
pub fn detect_contacts(
    states: &[VehicleState],
    specs: &[VehicleSpec],
    track: &TrackDef,
    dt: f64,
) -> Vec<Vec<ContactEvent>> {
    let n = states.len();
    let corners: Vec<[Vec2; 4]> = states
        .iter()
        .zip(specs)
        .map(|(s, sp)| s.corners(sp))
        .collect();
    let mut events: Vec<Vec<ContactEvent>> = vec![Vec::new(); n];
    for i in 0..n {
        for j in (i + 1)..n {
            if geom::obb_overlap(&corners[i], &corners[j]).is_some() {
                let rel = geom::norm(geom::sub(states[i].velocity, states[j].velocity));
                events[i].push(ContactEvent {
                    kind: ContactKind::CarCar,
                    other_index: Some(j),
                    rel_speed: rel,
                    duration_this_step: dt,
                });
                events[j].push(ContactEvent {
                    kind: ContactKind::CarCar,
                    other_index: Some(i),
                    rel_speed: rel,
                    duration_this_step: dt,
                });
            }
        }
        if barrier_contact(&corners[i], states[i].position, track) {
            events[i].push(ContactEvent {
                kind: ContactKind::CarBarrier,
                other_index: None,
                rel_speed: 0.0,
                duration_this_step: dt,
            });
        }
    }
    events
}

/// A car contacts a barrier when its footprint straddles an edge polyline.
fn barrier_contact(rect: &[Vec2; 4], position: Vec2, track: &TrackDef) -> bool {
    let proj = track.project(position);
    let n = track.centerline.len();
    // footprint spans only a handful of centerline segments
    let reach = 8usize;
    for edge in [&track.left_edge, &track.right_edge] {
        for k in 0..(2 * reach) {
            let idx = (proj.segment + n + k - reach) % n;
            let a = edge[idx];
            let b = edge[(idx + 1) % n];
            for e in 0..4 {
                if geom::segments_intersect(rect[e], rect[(e + 1) % 4], a, b) {
                    return true;
                }
            }
        }
    }
    false
}

/// Resolve car-car interpenetration: positional de-overlap along the contact
/// normal plus inelastic damping of the closing relative speed (restitution
/// 0, no spin impulse).
pub fn resolve_car_contacts(states: &mut [VehicleState], specs: &[VehicleSpec]) {
    let n = states.len();
    for i in 0..n {
        for j in (i + 1)..n {
            let ci = states[i].corners(&specs[i]);
            let cj = states[j].corners(&specs[j]);
            if let Some(mtv) = geom::obb_overlap(&ci, &cj) {
                let mi = specs[i].mass;
                let mj = specs[j].mass;
                let wi = mj / (mi + mj);
                let wj = mi / (mi + mj);
                states[i].position = geom::add(states[i].position, geom::scale(mtv, wi));
                states[j].position = geom::sub(states[j].position, geom::scale(mtv, wj));
                // kill the closing component of the relative velocity
                let normal = geom::normalize(mtv);
                let rel = geom::sub(states[i].velocity, states[j].velocity);
                let closing = geom::dot(rel, normal);
                if closing < 0.0 {
                    let impulse = geom::scale(normal, -closing);
                    damp_along_heading(&mut states[i], geom::scale(impulse, wi));
                    damp_along_heading(&mut states[j], geom::scale(impulse, -wj));
                }
            }
        }
    }
}

/// Apply a velocity change, then re-project onto the car's heading so the
/// no-slip invariant (velocity parallel to heading, speed >= 0) holds.
fn damp_along_heading(state: &mut VehicleState, dv: Vec2) {
    let v = geom::add(state.velocity, dv);
    let dir = [state.heading.cos(), state.heading.sin()];
    let u = geom::dot(v, dir).max(0.0);
    state.velocity = geom::scale(dir, u);
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec() -> VehicleSpec {
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

    #[test]
    fn bridge_linear_interpolation() {
        // prev 0 deg, delta +3 deg -> [0.5, 1.0, 1.5, 2.0, 2.5, 3.0] deg
        let controls = bridge_action(
            0.0,
            Action {
                delta_steer_deg: 3.0,
                throttle_brake: 0.7,
            },
            0.5,
        );
        for (k, c) in controls.iter().enumerate() {
            let expect = (0.5 * (k + 1) as f64).to_radians();
            assert!((c.steer - expect).abs() < 1e-12, "substep {k}");
            assert_eq!(c.throttle_brake, 0.7);
        }
    }

    #[test]
    fn bridge_zero_delta_identity() {
        let prev = 0.1;
        let controls = bridge_action(
            prev,
            Action {
                delta_steer_deg: 0.0,
                throttle_brake: 0.0,
            },
            0.5,
        );
        assert!(controls.iter().all(|c| c.steer == prev));
    }

    #[test]
    fn bridge_clamps_at_max_steer() {
        let s = spec();
        let controls = bridge_action(
            s.max_steer,
            Action {
                delta_steer_deg: 3.0,
                throttle_brake: 0.0,
            },
            s.max_steer,
        );
        assert!(controls.iter().all(|c| c.steer <= s.max_steer + 1e-12));
        assert_eq!(controls[5].steer, s.max_steer);
    }

    #[test]
    fn equilibrium_at_rest() {
        let s = spec();
        let state = VehicleState::at_rest([3.0, 4.0], 0.5);
        let next = step_physics(
            &state,
            &s,
            SubstepControl {
                steer: 0.0,
                throttle_brake: 0.0,
            },
            PHYSICS_DT,
        );
        assert_eq!(next.position, state.position);
        assert_eq!(next.velocity, [0.0, 0.0]);
    }

    #[test]
    fn full_throttle_first_substep_closed_form() {
        let s = spec();
        let state = VehicleState::at_rest([0.0, 0.0], 0.0);
        let next = step_physics(
            &state,
            &s,
            SubstepControl {
                steer: 0.0,
                throttle_brake: 1.0,
            },
            PHYSICS_DT,
        );
        // from rest, resistances are inactive until the car moves
        let expect = s.max_engine_force / s.mass * PHYSICS_DT;
        assert!((next.speed() - expect).abs() < 1e-9);
    }

    #[test]
    fn constant_steer_traces_bicycle_circle() {
        let s = spec();
        let mut state = VehicleState::at_rest([0.0, 0.0], 0.0);
        let u = 8.0;
        state.velocity = [u, 0.0];
        let steer = 0.2;
        let steer_eff = steer / (1.0 + (u / STEER_AUTHORITY_VREF).powi(2));
        let radius = s.wheelbase / steer_eff.tan();
        // drive a full circle at constant speed; throttle chosen to balance
        // resistances exactly
        let hold = (s.drag_coeff * u * u + s.rolling_resist) / s.max_engine_force;
        let period = 2.0 * std::f64::consts::PI * radius / u;
        let steps = (period / PHYSICS_DT).round() as usize;
        let start = state.position;
        for _ in 0..steps {
            state = step_physics(
                &state,
                &s,
                SubstepControl {
                    steer,
                    throttle_brake: hold,
                },
                PHYSICS_DT,
            );
        }
        let err = geom::norm(geom::sub(state.position, start));
        assert!(
            err < 0.02 * 2.0 * std::f64::consts::PI * radius,
            "closure error {err} for radius {radius}"
        );
    }

    #[test]
    fn zero_throttle_speed_non_increasing() {
        let s = spec();
        let mut state = VehicleState::at_rest([0.0, 0.0], 0.0);
        state.velocity = [25.0, 0.0];
        let mut last = state.speed();
        for _ in 0..600 {
            state = step_physics(
                &state,
                &s,
                SubstepControl {
                    steer: 0.0,
                    throttle_brake: 0.0,
                },
                PHYSICS_DT,
            );
            assert!(state.speed() <= last + 1e-12);
            last = state.speed();
        }
    }

    #[test]
    fn determinism_bit_exact() {
        let s = spec();
        let mut state = VehicleState::at_rest([1.0, 2.0], 0.3);
        state.velocity = [5.0 * 0.3f64.cos(), 5.0 * 0.3f64.sin()];
        let c = SubstepControl {
            steer: 0.1,
            throttle_brake: 0.5,
        };
        let a = step_physics(&state, &s, c, PHYSICS_DT);
        let b = step_physics(&state, &s, c, PHYSICS_DT);
        assert_eq!(a, b);
    }

    #[test]
    fn steer_history_buffer_rule() {
        let mut state = VehicleState::at_rest([0.0, 0.0], 0.0);
        state.push_steer_history(1.0f64.to_radians());
        state.push_steer_history(2.0f64.to_radians());
        state.push_steer_history(3.0f64.to_radians());
        let deg = |r: f64| r.to_degrees();
        assert!((deg(state.steer_history[0]) - 3.0).abs() < 1e-12);
        assert!((deg(state.steer_history[2]) - 1.0).abs() < 1e-12);
        assert!((deg(state.delta_history[0]) - 1.0).abs() < 1e-12);
        assert!((deg(state.delta_history[1]) - 1.0).abs() < 1e-12);
        assert!((deg(state.delta_history[2]) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn car_file_round_trip() {
        let text = "car v1\nmass 1200\nmax_engine_force 4000\nmax_brake_force 8000\n\
                    drag_coeff 4.0\nrolling_resist 200\nwheelbase 2.6\nlength 4.2\n\
                    width 1.8\nmax_steer 0.5\n";
        let s = VehicleSpec::parse(text).unwrap();
        assert_eq!(s, spec());
    }

    #[test]
    fn car_file_rejects_bad_steer() {
        let text = "car v1\nmass 1200\nmax_engine_force 4000\nmax_brake_force 8000\n\
                    drag_coeff 4.0\nrolling_resist 200\nwheelbase 2.6\nlength 4.2\n\
                    width 1.8\nmax_steer 0.9\n";
        assert!(matches!(
            VehicleSpec::parse(text),
            Err(VehicleError::Validation(_))
        ));
    }

    #[test]
    fn contact_symmetry_and_rel_speed() {
        let s = spec();
        let track = crate::track::TrackDef::from_points(
            crate::track::make_oval(100.0, 40.0, 8.0, 4.0).0,
            crate::track::make_oval(100.0, 40.0, 8.0, 4.0).1,
        )
        .unwrap();
        let mut a = VehicleState::at_rest([0.0, -40.0], 0.0);
        a.velocity = [20.0, 0.0];
        let b = VehicleState::at_rest([3.0, -40.0], 0.0);
        let events = detect_contacts(&[a, b], &[s.clone(), s], &track, PHYSICS_DT);
        assert_eq!(events[0].len(), 1);
        assert_eq!(events[1].len(), 1);
        assert_eq!(events[0][0].kind, ContactKind::CarCar);
        assert!((events[0][0].rel_speed - 20.0).abs() < 1e-12);
        assert!((events[1][0].rel_speed - 20.0).abs() < 1e-12);
    }

    #[test]
    fn distant_cars_no_contact() {
        let s = spec();
        let (pts, ws) = crate::track::make_oval(100.0, 40.0, 8.0, 4.0);
        let track = crate::track::TrackDef::from_points(pts, ws).unwrap();
        let a = VehicleState::at_rest([0.0, -40.0], 0.0);
        let b = VehicleState::at_rest([10.0, -40.0], 0.0);
        let events = detect_contacts(&[a, b], &[s.clone(), s], &track, PHYSICS_DT);
        assert!(events[0].is_empty() && events[1].is_empty());
    }
}
