//! Built-in AI for opponent cars: pure-pursuit steering, curvature-limited
//! target speed, and a simple lane-offset avoidance rule. Also the
//! balance-of-performance spec perturbation used during training.

use crate::geom::{self, Vec2};
use crate::track::TrackDef;
use crate::vehicle::{Action, VehicleSpec, VehicleState, MAX_DELTA_STEER_DEG};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone, Copy)]
pub struct BiaiParams {
    /// Lookahead distance = clamp(gain * speed, min, max).
    pub lookahead_gain: f64,
    pub lookahead_min: f64,
    pub lookahead_max: f64,
    /// Lateral acceleration budget for corner speed.
    pub a_lat_max: f64,
    /// Straight-line speed cap.
    pub v_cap: f64,
    /// Proportional throttle gain on the speed error.
    pub speed_gain: f64,
    /// Avoidance triggers for slower cars within this range ahead.
    pub avoid_range: f64,
    /// Lateral offset applied to the pursuit target while avoiding.
    pub avoid_offset: f64,
}

impl Default for BiaiParams {
    fn default() -> Self {
        BiaiParams {
            lookahead_gain: 0.8,
            lookahead_min: 5.0,
            lookahead_max: 60.0,
            a_lat_max: 8.0,
            v_cap: 30.0,
            speed_gain: 0.4,
            avoid_range: 15.0,
            avoid_offset: 2.5,
        }
    }
}

/// A nearby car as seen by the avoidance rule: signed along-track gap
/// (positive = ahead of me), lateral offset from the centerline, speed.
#[derive(Debug, Clone, Copy)]
pub struct BiaiNeighbor {
    pub gap: f64,
    pub lateral: f64,
    pub speed: f64,
}

/// Curvature-limited target speed.
pub fn target_speed(kappa: f64, params: &BiaiParams) -> f64 {
    let k = kappa.abs();
    if k < 1e-6 {
        params.v_cap
    } else {
        params.v_cap.min((params.a_lat_max / k).sqrt())
    }
}

/// Deterministic scripted-driver action for one car.
pub fn biai_policy(
    me: &VehicleState,
    my_lateral: f64,
    my_progress: f64,
    neighbors: &[BiaiNeighbor],
    track: &TrackDef,
    spec: &VehicleSpec,
    params: &BiaiParams,
) -> Action {
    let speed = me.speed();
    let lookahead = (params.lookahead_gain * speed)
        .clamp(params.lookahead_min, params.lookahead_max);

    // lane-offset avoidance: slower car shortly ahead in my lane
    let mut offset = 0.0;
    let mut speed_cap = f64::INFINITY;
    for n in neighbors {
        if n.gap > 0.0 && n.gap <= params.avoid_range && (n.lateral - my_lateral).abs() < 2.0 {
            if n.speed < speed {
                // pass on the side with more room
                offset = if n.lateral > 0.0 {
                    -params.avoid_offset
                } else {
                    params.avoid_offset
                };
            }
            if n.gap < params.avoid_range / 2.0 {
                speed_cap = speed_cap.min(n.speed.max(2.0));
            }
        }
    }

    let target_progress = my_progress + lookahead;
    let center = track.centerline_point(target_progress);
    let th = track.heading_at(target_progress);
    let left = geom::perp_left([th.cos(), th.sin()]);
    let target: Vec2 = geom::add(center, geom::scale(left, offset));

    // pure pursuit
    let rel = geom::rotate(geom::sub(target, me.position), -me.heading);
    let dist = geom::norm(rel).max(1e-6);
    let alpha = rel[1].atan2(rel[0]);
    let steer_target = (2.0 * spec.wheelbase * alpha.sin())
        .atan2(dist)
        .clamp(-spec.max_steer, spec.max_steer);
    let delta_deg = (steer_target - me.steer_angle)
        .to_degrees()
        .clamp(-MAX_DELTA_STEER_DEG, MAX_DELTA_STEER_DEG);

    // corner speed from the worst curvature over the braking horizon
    let horizon = lookahead.max(speed * speed / (2.0 * 4.0)).max(10.0);
    let mut v_target = params.v_cap;
    let mut s = 0.0;
    while s <= horizon {
        let k = track.curvature_at(my_progress + s);
        // far-away corners only matter if we could not brake down in time
        let vt = target_speed(k, params);
        let reachable = (vt * vt + 2.0 * 4.0 * s).sqrt();
        v_target = v_target.min(reachable.max(vt));
        s += 5.0;
    }
    v_target = v_target.min(speed_cap);
    let throttle_brake = (params.speed_gain * (v_target - speed)).clamp(-1.0, 1.0);

    Action {
        delta_steer_deg: delta_deg,
        throttle_brake,
    }
}

/// Balance of performance: engine force and mass independently scaled by
/// uniform factors in [1 - range, 1 + range].
pub fn sample_bop(spec: &VehicleSpec, rng: &mut ChaCha8Rng, range: f64) -> VehicleSpec {
    assert!((0.0..=0.5).contains(&range), "bop range out of bounds");
    let mut out = spec.clone();
    if range > 0.0 {
        out.max_engine_force *= rng.gen_range(1.0 - range..1.0 + range);
        out.mass *= rng.gen_range(1.0 - range..1.0 + range);
    }
    out
}
