//! Proprioceptive vector and opponent-grid assembly, both in the ego body
//! frame (x forward, y left).

use crate::geom::{self, Vec2};
use crate::vehicle::VehicleState;

pub const PROPRIO_LEN: usize = 18;

/// 14 slots of 6 features each: slots 0..7 ahead (nearest first),
/// slots 7..14 behind (nearest first).
pub const OPP_GRID_SLOTS: usize = 14;
pub const OPP_GRID_FEATURES: usize = 6;
pub const OPP_GRID_LEN: usize = OPP_GRID_SLOTS * OPP_GRID_FEATURES;

pub const OPP_AHEAD_M: f64 = 75.0;
pub const OPP_BEHIND_M: f64 = 20.0;
const SLOTS_PER_SIDE: usize = 7;

/// World vector expressed in the body frame of a car with the given heading.
fn to_body(v: Vec2, heading: f64) -> Vec2 {
    geom::rotate(v, -heading)
}

/// The 18-entry proprioceptive vector
/// [v (3), v-dot (3), rotational v (3), controls (3), steer history (3),
/// steer-delta history (3)]; planar quantities are embedded with z = 0.
pub fn build_proprio(state: &VehicleState) -> [f64; PROPRIO_LEN] {
    let v = to_body(state.velocity, state.heading);
    let a = to_body(state.accel, state.heading);
    let throttle = state.throttle_brake.max(0.0);
    let brake = (-state.throttle_brake).max(0.0);
    [
        v[0],
        v[1],
        0.0,
        a[0],
        a[1],
        0.0,
        0.0,
        0.0,
        state.yaw_rate,
        state.steer_angle,
        throttle,
        brake,
        state.steer_history[0],
        state.steer_history[1],
        state.steer_history[2],
        state.delta_history[0],
        state.delta_history[1],
        state.delta_history[2],
    ]
}

/// An opponent as the grid builder sees it: its state plus the signed
/// along-track gap (positive = ahead of the ego) in meters.
pub struct OppRef<'a> {
    pub state: &'a VehicleState,
    pub gap: f64,
}

/// Slot features: relative position (2), relative velocity (2), relative
/// acceleration (2), all in the ego body frame. Empty slots stay zero.
pub fn build_opponent_grid(ego: &VehicleState, opponents: &[OppRef<'_>]) -> [f64; OPP_GRID_LEN] {
    let mut grid = [0.0; OPP_GRID_LEN];
    let mut ahead: Vec<&OppRef> = opponents
        .iter()
        .filter(|o| o.gap > 0.0 && o.gap <= OPP_AHEAD_M)
        .collect();
    let mut behind: Vec<&OppRef> = opponents
        .iter()
        .filter(|o| o.gap < 0.0 && -o.gap <= OPP_BEHIND_M)
        .collect();
    ahead.sort_by(|a, b| a.gap.partial_cmp(&b.gap).unwrap());
    behind.sort_by(|a, b| b.gap.partial_cmp(&a.gap).unwrap());
    for (slot, opp) in ahead.iter().take(SLOTS_PER_SIDE).enumerate() {
        fill_slot(&mut grid, slot, ego, opp.state);
    }
    for (slot, opp) in behind.iter().take(SLOTS_PER_SIDE).enumerate() {
        fill_slot(&mut grid, SLOTS_PER_SIDE + slot, ego, opp.state);
    }
    grid
}

fn fill_slot(grid: &mut [f64; OPP_GRID_LEN], slot: usize, ego: &VehicleState, opp: &VehicleState) {
    let rel_pos = to_body(geom::sub(opp.position, ego.position), ego.heading);
    let rel_vel = to_body(geom::sub(opp.velocity, ego.velocity), ego.heading);
    let rel_acc = to_body(geom::sub(opp.accel, ego.accel), ego.heading);
    let base = slot * OPP_GRID_FEATURES;
    grid[base] = rel_pos[0];
    grid[base + 1] = rel_pos[1];
    grid[base + 2] = rel_vel[0];
    grid[base + 3] = rel_vel[1];
    grid[base + 4] = rel_acc[0];
    grid[base + 5] = rel_acc[1];
}

#[cfg(test)]
mod tests {
    use super::*;

    fn car_at(pos: Vec2, heading: f64) -> VehicleState {
        VehicleState::at_rest(pos, heading)
    }

    #[test]
    fn rest_state_is_all_zero() {
        let s = car_at([10.0, -4.0], 1.2);
        assert_eq!(build_proprio(&s), [0.0; PROPRIO_LEN]);
    }

    #[test]
    fn forward_speed_maps_to_body_x() {
        let mut s = car_at([0.0, 0.0], std::f64::consts::FRAC_PI_2);
        s.velocity = [0.0, 15.0]; // due +y, same as heading
        let p = build_proprio(&s);
        assert!((p[0] - 15.0).abs() < 1e-12);
        assert!(p[1].abs() < 1e-12);
    }

    #[test]
    fn control_split_and_histories() {
        let mut s = car_at([0.0, 0.0], 0.0);
        s.throttle_brake = -0.6;
        s.steer_angle = 0.1;
        s.push_steer_history(0.02);
        s.push_steer_history(0.05);
        let p = build_proprio(&s);
        assert_eq!(p[10], 0.0); // throttle
        assert!((p[11] - 0.6).abs() < 1e-12); // brake
        assert_eq!(&p[12..15], &[0.05, 0.02, 0.0]);
        assert!((p[15] - 0.03).abs() < 1e-12);
        assert!((p[16] - 0.02).abs() < 1e-12);
        assert_eq!(p[17], 0.0);
    }

    #[test]
    fn grid_empty_without_opponents() {
        let ego = car_at([0.0, 0.0], 0.0);
        assert_eq!(build_opponent_grid(&ego, &[]), [0.0; OPP_GRID_LEN]);
    }

    #[test]
    fn grid_window_limits() {
        let ego = car_at([0.0, 0.0], 0.0);
        let far_ahead = car_at([80.0, 0.0], 0.0);
        let near_ahead = car_at([10.0, 0.0], 0.0);
        let far_behind = car_at([-25.0, 0.0], 0.0);
        let opps = vec![
            OppRef { state: &far_ahead, gap: 80.0 },
            OppRef { state: &near_ahead, gap: 10.0 },
            OppRef { state: &far_behind, gap: -25.0 },
        ];
        let g = build_opponent_grid(&ego, &opps);
        // only the 10 m car appears, in ahead slot 0
        assert!((g[0] - 10.0).abs() < 1e-12);
        assert!(g[6..].iter().all(|&x| x == 0.0));
    }

    #[test]
    fn grid_same_velocity_zero_rel() {
        let mut ego = car_at([0.0, 0.0], 0.0);
        ego.velocity = [20.0, 0.0];
        let mut opp = car_at([10.0, 2.0], 0.0);
        opp.velocity = [20.0, 0.0];
        let opps = vec![OppRef { state: &opp, gap: 10.0 }];
        let g = build_opponent_grid(&ego, &opps);
        assert!((g[0] - 10.0).abs() < 1e-12);
        assert!((g[1] - 2.0).abs() < 1e-12);
        assert!(g[2..6].iter().all(|&x| x.abs() < 1e-12));
    }

    #[test]
    fn grid_capacity_is_seven_nearest() {
        let ego = car_at([0.0, 0.0], 0.0);
        let states: Vec<VehicleState> = (0..10)
            .map(|i| car_at([5.0 + 5.0 * i as f64, 0.0], 0.0))
            .collect();
        let opps: Vec<OppRef> = states
            .iter()
            .map(|s| OppRef { state: s, gap: s.position[0] })
            .collect();
        let g = build_opponent_grid(&ego, &opps);
        // slots 0..7 hold gaps 5,10,...,35; behind slots empty
        for slot in 0..7 {
            assert!((g[slot * 6] - (5.0 + 5.0 * slot as f64)).abs() < 1e-12);
        }
        assert!(g[42..].iter().all(|&x| x == 0.0));
    }

    #[test]
    fn grid_rotation_invariance_of_gap_direction() {
        // opponent dead ahead stays at +x in the body frame for any heading
        for heading in [0.0, 0.7, -2.1] {
            let ego = car_at([3.0, 4.0], heading);
            let opp = car_at(
                geom::add([3.0, 4.0], geom::rotate([12.0, 0.0], heading)),
                heading,
            );
            let opps = vec![OppRef { state: &opp, gap: 12.0 }];
            let g = build_opponent_grid(&ego, &opps);
            assert!((g[0] - 12.0).abs() < 1e-9, "heading {heading}");
            assert!(g[1].abs() < 1e-9);
        }
    }
}
