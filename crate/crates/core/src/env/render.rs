//! Synthetic forward-facing ego raster: a 64x64 three-channel perspective
//! view with drivable surface (channel 0), track edge lines (channel 1), and
//! opponent bodies (channel 2). Flat world, pinhole camera at the ego
//! centroid; opponents are billboards composited far-to-near so nearer cars
//! occlude farther ones and the track behind them.

use crate::geom;
use crate::track::TrackDef;
use crate::vehicle::{VehicleSpec, VehicleState};

pub const IMG_H: usize = 64;
pub const IMG_W: usize = 64;
pub const IMG_C: usize = 3;
pub const IMG_LEN: usize = IMG_H * IMG_W * IMG_C;

/// 90 degree horizontal field of view over 64 columns.
pub const FOCAL_PX: f64 = 32.0;
/// Fixed horizon row (flat world, level camera).
pub const HORIZON_ROW: usize = 20;
pub const CAMERA_HEIGHT_M: f64 = 1.2;
pub const FAR_CLIP_M: f64 = 200.0;
const NEAR_CLIP_M: f64 = 1.0;
/// Rendered height of opponent bodies.
const CAR_HEIGHT_M: f64 = 1.4;
/// Half-width of the painted edge lines.
const EDGE_LINE_HALF_M: f64 = 0.5;

#[inline]
fn px(img: &mut [u8], row: usize, col: usize, ch: usize) -> &mut u8 {
    &mut img[(row * IMG_W + col) * IMG_C + ch]
}

/// Render the ego view. `opponents` carries every other car with its spec.
pub fn render_ego_view(
    track: &TrackDef,
    ego: &VehicleState,
    opponents: &[(&VehicleState, &VehicleSpec)],
) -> Vec<u8> {
    let mut img = vec![0u8; IMG_LEN];
    let fwd = [ego.heading.cos(), ego.heading.sin()];
    let left = geom::perp_left(fwd);

    // ground plane: rows below the horizon map to world points
    for row in HORIZON_ROW..IMG_H {
        let dy = (row as f64 + 0.5) - HORIZON_ROW as f64;
        let z = FOCAL_PX * CAMERA_HEIGHT_M / dy;
        if z > FAR_CLIP_M {
            continue;
        }
        for col in 0..IMG_W {
            let x_right = ((col as f64 + 0.5) - IMG_W as f64 / 2.0) * z / FOCAL_PX;
            let world = geom::add(
                ego.position,
                geom::add(geom::scale(fwd, z), geom::scale(left, -x_right)),
            );
            let proj = track.project(world);
            let hw = track.half_width_at(proj.progress);
            if proj.lateral.abs() <= hw {
                *px(&mut img, row, col, 0) = 255;
            }
            if (proj.lateral.abs() - hw).abs() <= EDGE_LINE_HALF_M {
                *px(&mut img, row, col, 1) = 255;
            }
        }
    }

    // opponents as billboards, far to near
    let mut blobs: Vec<(f64, f64, f64)> = Vec::new(); // (depth, x_right, half_width_m)
    for (state, spec) in opponents {
        let rel = geom::sub(state.position, ego.position);
        let z = geom::dot(rel, fwd);
        if z < NEAR_CLIP_M || z > FAR_CLIP_M {
            continue;
        }
        let x_right = -geom::dot(rel, left);
        let yaw = state.heading - ego.heading;
        let w_eff = spec
            .footprint_width
            .max(spec.footprint_length * yaw.sin().abs());
        blobs.push((z, x_right, w_eff / 2.0));
    }
    blobs.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap());
    for (z, x_right, half_w) in blobs {
        let c_center = IMG_W as f64 / 2.0 + FOCAL_PX * x_right / z;
        let hw_px = FOCAL_PX * half_w / z;
        let r_bottom = HORIZON_ROW as f64 + FOCAL_PX * CAMERA_HEIGHT_M / z;
        let r_top = HORIZON_ROW as f64 + FOCAL_PX * (CAMERA_HEIGHT_M - CAR_HEIGHT_M) / z;
        let c0 = (c_center - hw_px).floor().max(0.0) as isize;
        let c1 = (c_center + hw_px).ceil().min(IMG_W as f64) as isize;
        let r0 = r_top.floor().max(0.0) as isize;
        let r1 = r_bottom.ceil().min(IMG_H as f64) as isize;
        let intensity = (255.0 * (1.0 - z / FAR_CLIP_M)).round().max(1.0) as u8;
        for row in r0..r1 {
            for col in c0..c1 {
                let (row, col) = (row as usize, col as usize);
                *px(&mut img, row, col, 0) = 0;
                *px(&mut img, row, col, 1) = 0;
                *px(&mut img, row, col, 2) = intensity;
            }
        }
    }
    img
}

/// Exact u8 -> [0,1] f32 view used by the networks and replay.
pub fn image_to_f32(img: &[u8]) -> Vec<f32> {
    img.iter().map(|&v| v as f32 / 255.0).collect()
}
