//! The eight-term racing reward: progress, shortcut and barrier penalties,
//! collision terms, overtaking progress, and the two steering penalties.
//! All functions are pure; the environment supplies unwrapped (cumulative)
//! progress so no term ever sees the lap seam.

use crate::vehicle::{ContactEvent, ContactKind};
use serde::{Deserialize, Serialize};

/// Weights for the reward combination.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RewardWeights {
    pub progress: f64,
    pub off_track: f64,
    pub barrier: f64,
    pub collision_speed: f64,
    pub collision_fixed: f64,
    pub steer_change: f64,
    pub overtake: f64,
    pub steer_history: f64,
}

impl Default for RewardWeights {
    fn default() -> Self {
        RewardWeights {
            progress: 1.0,
            off_track: 10.0,
            barrier: 20.0,
            collision_speed: 0.5,
            collision_fixed: 6.0,
            steer_change: 0.5,
            overtake: 3.0,
            steer_history: 5.0,
        }
    }
}

/// Constants used by the overtaking window and steering-history penalty.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RewardConstants {
    /// Rear edge of the overtaking window (meters, negative).
    pub window_rear: f64,
    /// Front edge of the overtaking window (meters).
    pub window_front: f64,
    /// Steepness of the steering-history sigmoid.
    pub hist_steepness: f64,
    /// Offset inside the steering-history sigmoid.
    pub hist_offset: f64,
    /// Dead-band threshold on steering deltas for the history gate.
    pub hist_deadband: f64,
    /// Base magnitude of the fixed car-contact penalty per contact step.
    pub fixed_contact_penalty: f64,
}

impl Default for RewardConstants {
    fn default() -> Self {
        RewardConstants {
            window_rear: -20.0,
            window_front: 40.0,
            hist_steepness: 182.883569,
            hist_offset: 0.034,
            hist_deadband: 0.014,
            fixed_contact_penalty: 1.0,
        }
    }
}

/// Per-term breakdown, logged with stable field names in replay exports.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct RewardBreakdown {
    pub r_p: f64,
    pub r_o: f64,
    pub r_b: f64,
    pub r_v: f64,
    pub r_c: f64,
    pub r_t: f64,
    pub r_s: f64,
    pub r_h: f64,
}

/// One-step change in unwrapped track position.
pub fn r_progress(p_t: f64, p_prev: f64) -> f64 {
    p_t - p_prev
}

/// Penalty clock term, shared by the shortcut (off-track) and barrier
/// penalties: -(delta clock) * |v|.
pub fn r_clock_penalty(clock_t: f64, clock_prev: f64, speed: f64) -> f64 {
    -(clock_t - clock_prev) * speed
}

/// Car-collision terms: the speed-squared penalty over new car-car contacts
/// this step, and the fixed penalty applied while any car-car contact is
/// active.
pub fn r_collision_terms(contacts: &[ContactEvent], consts: &RewardConstants) -> (f64, f64) {
    let mut r_v = 0.0;
    let mut any = false;
    for c in contacts {
        if c.kind == ContactKind::CarCar {
            r_v -= c.rel_speed * c.rel_speed;
            any = true;
        }
    }
    let r_c = if any { -consts.fixed_contact_penalty } else { 0.0 };
    (r_v, r_c)
}

/// Overtaking progress: summed relative-gap change over opponents inside the
/// window c_r < (p_i - p_ego) < c_f.
pub fn r_overtake(
    p_t: f64,
    p_prev: f64,
    opp_p_t: &[f64],
    opp_p_prev: &[f64],
    consts: &RewardConstants,
) -> f64 {
    assert_eq!(opp_p_t.len(), opp_p_prev.len());
    let mut sum = 0.0;
    for (pi_t, pi_prev) in opp_p_t.iter().zip(opp_p_prev) {
        let gap = pi_t - p_t;
        if gap > consts.window_rear && gap < consts.window_front {
            sum += (p_t - pi_t) - (p_prev - pi_prev);
        }
    }
    sum
}

/// Steering penalties from the last three control-rate steering angles
/// (radians): the change penalty r_s and the gated history penalty r_h.
pub fn r_steering(
    theta_t: f64,
    theta_prev: f64,
    theta_prev2: f64,
    consts: &RewardConstants,
) -> (f64, f64) {
    let delta_t = theta_t - theta_prev;
    let delta_prev = theta_prev - theta_prev2;
    let r_s = -delta_t.abs();
    let gate = delta_t.abs() > consts.hist_deadband
        && delta_prev.abs() > consts.hist_deadband
        && delta_t.signum() != delta_prev.signum();
    let r_h = if gate {
        let spread = delta_t.abs() + delta_prev.abs();
        -(1.0 + (-consts.hist_steepness * (spread - consts.hist_offset)).exp())
    } else {
        0.0
    };
    (r_s, r_h)
}

/// Weighted combination of the eight terms.
pub fn combine(b: &RewardBreakdown, w: &RewardWeights) -> f64 {
    w.progress * b.r_p
        + w.off_track * b.r_o
        + w.barrier * b.r_b
        + w.collision_speed * b.r_v
        + w.collision_fixed * b.r_c
        + w.steer_change * b.r_s
        + w.overtake * b.r_t
        + w.steer_history * b.r_h
}
