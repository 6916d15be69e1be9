//! Track geometry: closed-loop track definitions, arc-length progress
//! projection, the dynamically spaced track-point feature, and off-track /
//! curvature queries.
//!
//! A track is a closed centerline polyline with a per-point lateral
//! half-width. The left/right edges (which double as barriers) are derived
//! by offsetting along the centerline normals. All operations are pure and
//! `TrackDef` is immutable after load, so it can be shared freely across
//! workers.

use crate::geom::{self, Vec2};
use crate::vehicle::{VehicleSpec, VehicleState};
use std::fs;
use std::path::Path;
use thiserror::Error;

/// Number of stations sampled along the lookahead window. Each station
/// contributes a left-edge, centerline, and right-edge point: 59 * 3 = 177.
pub const TRACK_POINT_STATIONS: usize = 59;
/// Total number of 3D points in the track-point feature.
pub const TRACK_POINT_COUNT: usize = TRACK_POINT_STATIONS * 3;

/// Lookahead window is 6 seconds of travel, clamped to this range (meters).
pub const LOOKAHEAD_SECONDS: f64 = 6.0;
pub const LOOKAHEAD_MIN_M: f64 = 30.0;
pub const LOOKAHEAD_MAX_M: f64 = 400.0;

const MAX_POINT_SPACING_M: f64 = 5.0;

#[derive(Debug, Error)]
pub enum TrackError {
    #[error("io error reading track: {0}")]
    Io(#[from] std::io::Error),
    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("track validation failed: {0}")]
    Validation(String),
}

/// Closed-loop track geometry with arc-length parameterization.
#[derive(Debug, Clone)]
pub struct TrackDef {
    /// Centerline points in loop order (the closing duplicate is stripped).
    pub centerline: Vec<Vec2>,
    /// Per-point lateral half-width in meters.
    pub half_width: Vec<f64>,
    /// Cumulative arc length at each centerline point; cum[0] = 0.
    pub cum_length: Vec<f64>,
    /// Total arc length of the closed loop.
    pub total_length: f64,
    /// Left/right edge polylines, coincident with the barriers.
    pub left_edge: Vec<Vec2>,
    pub right_edge: Vec<Vec2>,
    grid: ProjectionGrid,
}

/// The 177-point lookahead feature: 59 stations of (left, center, right),
/// each a 3D point with z fixed to 0.
#[derive(Debug, Clone)]
pub struct TrackPoints {
    /// Flat row-major [177][3] array.
    pub points: Vec<f64>,
}

impl TrackPoints {
    pub fn count(&self) -> usize {
        self.points.len() / 3
    }
}

impl TrackDef {
    /// Build and validate a track from centerline points and half-widths.
    /// `points` must NOT include the closing duplicate.
    pub fn from_points(points: Vec<Vec2>, half_width: Vec<f64>) -> Result<TrackDef, TrackError> {
        if points.len() < 3 {
            return Err(TrackError::Validation(format!(
                "need at least 3 centerline points, got {}",
                points.len()
            )));
        }
        if points.len() != half_width.len() {
            return Err(TrackError::Validation(
                "half_width count does not match point count".into(),
            ));
        }
        let n = points.len();
        let mut cum = Vec::with_capacity(n);
        let mut acc = 0.0;
        for i in 0..n {
            cum.push(acc);
            let next = points[(i + 1) % n];
            let d = geom::norm(geom::sub(next, points[i]));
            if d <= 0.0 || d > MAX_POINT_SPACING_M {
                return Err(TrackError::Validation(format!(
                    "point spacing at index {i} is {d:.3} m, must be in (0, {MAX_POINT_SPACING_M}]"
                )));
            }
            acc += d;
        }
        for (i, w) in half_width.iter().enumerate() {
            if *w <= 0.0 {
                return Err(TrackError::Validation(format!(
                    "half_width at index {i} is {w}, must be positive"
                )));
            }
        }
        let total = acc;
        let mut left = Vec::with_capacity(n);
        let mut right = Vec::with_capacity(n);
        for i in 0..n {
            let prev = points[(i + n - 1) % n];
            let next = points[(i + 1) % n];
            let tangent = geom::normalize(geom::sub(next, prev));
            let nl = geom::perp_left(tangent);
            left.push(geom::add(points[i], geom::scale(nl, half_width[i])));
            right.push(geom::add(points[i], geom::scale(nl, -half_width[i])));
        }
        let grid = ProjectionGrid::build(&points);
        Ok(TrackDef {
            centerline: points,
            half_width,
            cum_length: cum,
            total_length: total,
            left_edge: left,
            right_edge: right,
            grid,
        })
    }

    pub fn load(path: &Path) -> Result<TrackDef, TrackError> {
        let text = fs::read_to_string(path)?;
        Self::parse(&text)
    }

    /// Parse the line-oriented `track v1` format:
    /// header line `track v1`, then `point x y half_width` lines in loop
    /// order, ending with a repeat of the first point to close the loop.
    /// `#` starts a comment.
    pub fn parse(text: &str) -> Result<TrackDef, TrackError> {
        let mut lines = text
            .lines()
            .enumerate()
            .map(|(i, l)| (i + 1, l.split('#').next().unwrap_or("").trim()))
            .filter(|(_, l)| !l.is_empty());
        let (hline, header) = lines.next().ok_or(TrackError::Parse {
            line: 1,
            msg: "empty file".into(),
        })?;
        if header != "track v1" {
            return Err(TrackError::Parse {
                line: hline,
                msg: format!("expected header 'track v1', got '{header}'"),
            });
        }
        let mut points: Vec<Vec2> = Vec::new();
        let mut widths: Vec<f64> = Vec::new();
        for (lineno, line) in lines {
            let mut it = line.split_whitespace();
            match it.next() {
                Some("point") => {
                    let mut num = |what: &str| -> Result<f64, TrackError> {
                        it.next()
                            .ok_or_else(|| TrackError::Parse {
                                line: lineno,
                                msg: format!("missing {what}"),
                            })?
                            .parse::<f64>()
                            .map_err(|e| TrackError::Parse {
                                line: lineno,
                                msg: format!("bad {what}: {e}"),
                            })
                    };
                    let x = num("x")?;
                    let y = num("y")?;
                    let w = num("half_width")?;
                    points.push([x, y]);
                    widths.push(w);
                }
                Some(other) => {
                    return Err(TrackError::Parse {
                        line: lineno,
                        msg: format!("unknown directive '{other}'"),
                    })
                }
                None => {}
            }
        }
        if points.len() < 4 {
            return Err(TrackError::Validation("too few points".into()));
        }
        // closure check: last point must repeat the first
        let first = points[0];
        let last = *points.last().unwrap();
        if geom::norm(geom::sub(first, last)) > 1e-9 {
            return Err(TrackError::Validation(
                "open loop: last point does not repeat the first".into(),
            ));
        }
        points.pop();
        widths.pop();
        Self::from_points(points, widths)
    }

    /// Arc length of the nearest centerline point, with linear interpolation
    /// between polyline samples. Defined for all positions.
    pub fn project_progress(&self, position: Vec2) -> f64 {
        self.project(position).progress
    }

    /// Full projection result: progress, signed lateral offset (positive
    /// toward the left edge), and the segment tangent heading.
    pub fn project(&self, position: Vec2) -> Projection {
        let candidates = self.grid.candidates(position);
        let best = if let Some(c) = candidates {
            let p = self.project_over(position, c.iter().map(|&i| i as usize));
            // A candidate list from the grid is only trustworthy while the
            // query is within the grid's inflation radius of the track.
            if p.distance <= ProjectionGrid::INFLATE_M - ProjectionGrid::CELL_M {
                Some(p)
            } else {
                None
            }
        } else {
            None
        };
        best.unwrap_or_else(|| self.project_over(position, 0..self.centerline.len()))
    }

    /// Like `project`, but only reliable near the track; used by the
    /// renderer where far-away points never matter.
    pub fn project_near(&self, position: Vec2) -> Option<Projection> {
        let c = self.grid.candidates(position)?;
        if c.is_empty() {
            return None;
        }
        Some(self.project_over(position, c.iter().map(|&i| i as usize)))
    }

    fn project_over(&self, position: Vec2, segs: impl Iterator<Item = usize>) -> Projection {
        let n = self.centerline.len();
        let mut best = Projection {
            progress: 0.0,
            lateral: 0.0,
            heading: 0.0,
            distance: f64::INFINITY,
            segment: 0,
        };
        for i in segs {
            let a = self.centerline[i];
            let b = self.centerline[(i + 1) % n];
            let ab = geom::sub(b, a);
            let len2 = geom::dot(ab, ab);
            let t = if len2 > 0.0 {
                (geom::dot(geom::sub(position, a), ab) / len2).clamp(0.0, 1.0)
            } else {
                0.0
            };
            let proj = geom::add(a, geom::scale(ab, t));
            let d = geom::norm(geom::sub(position, proj));
            if d < best.distance {
                let seg_len = len2.sqrt();
                let tangent = geom::normalize(ab);
                best = Projection {
                    progress: (self.cum_length[i] + t * seg_len) % self.total_length,
                    lateral: geom::cross(tangent, geom::sub(position, proj)),
                    heading: tangent[1].atan2(tangent[0]),
                    distance: d,
                    segment: i,
                };
            }
        }
        best
    }

    /// Centerline point at arc length `progress` (wrapped).
    pub fn centerline_point(&self, progress: f64) -> Vec2 {
        let (i, t) = self.locate(progress);
        let n = self.centerline.len();
        let a = self.centerline[i];
        let b = self.centerline[(i + 1) % n];
        geom::add(a, geom::scale(geom::sub(b, a), t))
    }

    /// Tangent heading (radians) at arc length `progress`.
    pub fn heading_at(&self, progress: f64) -> f64 {
        let (i, _) = self.locate(progress);
        let n = self.centerline.len();
        let d = geom::sub(self.centerline[(i + 1) % n], self.centerline[i]);
        d[1].atan2(d[0])
    }

    /// Interpolated half-width at arc length `progress`.
    pub fn half_width_at(&self, progress: f64) -> f64 {
        let (i, t) = self.locate(progress);
        let n = self.centerline.len();
        self.half_width[i] * (1.0 - t) + self.half_width[(i + 1) % n] * t
    }

    /// (segment index, fraction along segment) for a wrapped arc length.
    fn locate(&self, progress: f64) -> (usize, f64) {
        let g = progress.rem_euclid(self.total_length);
        // binary search over cum_length
        let n = self.centerline.len();
        let i = match self
            .cum_length
            .binary_search_by(|c| c.partial_cmp(&g).unwrap())
        {
            Ok(i) => i,
            Err(i) => i.saturating_sub(1),
        };
        let seg_len = if i + 1 < n {
            self.cum_length[i + 1] - self.cum_length[i]
        } else {
            self.total_length - self.cum_length[i]
        };
        let t = if seg_len > 0.0 {
            ((g - self.cum_length[i]) / seg_len).clamp(0.0, 1.0)
        } else {
            0.0
        };
        (i, t)
    }

    /// 177-point lookahead feature starting at `progress`: 59 stations
    /// uniformly spaced over L = clamp(6 * speed, 30 m, 400 m), each
    /// contributing (left, center, right) 3D points with z = 0.
    pub fn sample_track_points(&self, progress: f64, speed: f64) -> TrackPoints {
        let lookahead =
            (LOOKAHEAD_SECONDS * speed.max(0.0)).clamp(LOOKAHEAD_MIN_M, LOOKAHEAD_MAX_M);
        let step = lookahead / (TRACK_POINT_STATIONS - 1) as f64;
        let mut points = Vec::with_capacity(TRACK_POINT_COUNT * 3);
        for s in 0..TRACK_POINT_STATIONS {
            let g = progress + s as f64 * step;
            let center = self.centerline_point(g);
            let heading = self.heading_at(g);
            let nl = geom::perp_left([heading.cos(), heading.sin()]);
            let hw = self.half_width_at(g);
            let left = geom::add(center, geom::scale(nl, hw));
            let right = geom::add(center, geom::scale(nl, -hw));
            for p in [left, center, right] {
                points.push(p[0]);
                points.push(p[1]);
                points.push(0.0);
            }
        }
        TrackPoints { points }
    }

    /// Number of footprint corners (tires) whose lateral offset from the
    /// centerline exceeds the local half-width.
    pub fn off_track_tire_count(&self, state: &VehicleState, spec: &VehicleSpec) -> u32 {
        let corners = geom::rect_corners(
            state.position,
            state.heading,
            spec.footprint_length,
            spec.footprint_width,
        );
        self.off_track_corner_count(&corners)
    }

    pub fn off_track_corner_count(&self, corners: &[Vec2; 4]) -> u32 {
        corners
            .iter()
            .filter(|&&c| {
                let p = self.project(c);
                p.lateral.abs() > self.half_width_at(p.progress)
            })
            .count() as u32
    }

    /// Signed discrete curvature (1/m) from three neighboring centerline
    /// samples; positive for left turns, 0 on straights.
    pub fn curvature_at(&self, progress: f64) -> f64 {
        let (i, _) = self.locate(progress);
        let n = self.centerline.len();
        let a = self.centerline[(i + n - 1) % n];
        let b = self.centerline[i];
        let c = self.centerline[(i + 1) % n];
        let ab = geom::sub(b, a);
        let bc = geom::sub(c, b);
        let ac = geom::sub(c, a);
        let denom = geom::norm(ab) * geom::norm(bc) * geom::norm(ac);
        if denom == 0.0 {
            return 0.0;
        }
        2.0 * geom::cross(ab, ac) / denom
    }

    /// Signed shortest distance from progress `from` to `to` along the loop,
    /// in (-total_length/2, total_length/2].
    pub fn progress_delta(&self, from: f64, to: f64) -> f64 {
        let mut d = (to - from).rem_euclid(self.total_length);
        if d > self.total_length / 2.0 {
            d -= self.total_length;
        }
        d
    }
}

/// Result of projecting a position onto the centerline.
#[derive(Debug, Clone, Copy)]
pub struct Projection {
    pub progress: f64,
    /// Signed lateral offset; positive toward the left edge.
    pub lateral: f64,
    /// Tangent heading of the matched segment.
    pub heading: f64,
    pub distance: f64,
    pub segment: usize,
}

/// Uniform spatial hash over centerline segments to accelerate projection.
#[derive(Debug, Clone)]
struct ProjectionGrid {
    min: Vec2,
    cols: usize,
    rows: usize,
    cells: Vec<Vec<u32>>,
}

impl ProjectionGrid {
    const CELL_M: f64 = 8.0;
    const INFLATE_M: f64 = 48.0;

    fn build(points: &[Vec2]) -> ProjectionGrid {
        let mut min = [f64::INFINITY, f64::INFINITY];
        let mut max = [f64::NEG_INFINITY, f64::NEG_INFINITY];
        for p in points {
            min[0] = min[0].min(p[0]);
            min[1] = min[1].min(p[1]);
            max[0] = max[0].max(p[0]);
            max[1] = max[1].max(p[1]);
        }
        min[0] -= Self::INFLATE_M;
        min[1] -= Self::INFLATE_M;
        max[0] += Self::INFLATE_M;
        max[1] += Self::INFLATE_M;
        let cols = ((max[0] - min[0]) / Self::CELL_M).ceil() as usize + 1;
        let rows = ((max[1] - min[1]) / Self::CELL_M).ceil() as usize + 1;
        let mut cells = vec![Vec::new(); cols * rows];
        let n = points.len();
        for i in 0..n {
            let a = points[i];
            let b = points[(i + 1) % n];
            let lo = [
                a[0].min(b[0]) - Self::INFLATE_M,
                a[1].min(b[1]) - Self::INFLATE_M,
            ];
            let hi = [
                a[0].max(b[0]) + Self::INFLATE_M,
                a[1].max(b[1]) + Self::INFLATE_M,
            ];
            let c0 = (((lo[0] - min[0]) / Self::CELL_M).floor().max(0.0)) as usize;
            let r0 = (((lo[1] - min[1]) / Self::CELL_M).floor().max(0.0)) as usize;
            let c1 = ((((hi[0] - min[0]) / Self::CELL_M).ceil()) as usize).min(cols - 1);
            let r1 = ((((hi[1] - min[1]) / Self::CELL_M).ceil()) as usize).min(rows - 1);
            for r in r0..=r1 {
                for c in c0..=c1 {
                    cells[r * cols + c].push(i as u32);
                }
            }
        }
        ProjectionGrid {
            min,
            cols,
            rows,
            cells,
        }
    }

    fn candidates(&self, p: Vec2) -> Option<&Vec<u32>> {
        let c = ((p[0] - self.min[0]) / Self::CELL_M).floor();
        let r = ((p[1] - self.min[1]) / Self::CELL_M).floor();
        if c < 0.0 || r < 0.0 {
            return None;
        }
        let (c, r) = (c as usize, r as usize);
        if c >= self.cols || r >= self.rows {
            return None;
        }
        Some(&self.cells[r * self.cols + c])
    }
}

/// Test/asset helper: generate a stadium oval (two straights joined by
/// semicircles) with uniform half-width. `spacing` controls point density.
pub fn make_oval(
    straight_len: f64,
    radius: f64,
    half_width: f64,
    spacing: f64,
) -> (Vec<Vec2>, Vec<f64>) {
    let mut pts: Vec<Vec2> = Vec::new();
    let n_straight = (straight_len / spacing).ceil() as usize;
    let n_arc = (std::f64::consts::PI * radius / spacing).ceil() as usize;
    // bottom straight, left to right, centered on origin
    for i in 0..n_straight {
        let x = -straight_len / 2.0 + straight_len * i as f64 / n_straight as f64;
        pts.push([x, -radius]);
    }
    // right semicircle
    for i in 0..n_arc {
        let a = -std::f64::consts::FRAC_PI_2 + std::f64::consts::PI * i as f64 / n_arc as f64;
        pts.push([
            straight_len / 2.0 + radius * a.cos(),
            radius * a.sin(),
        ]);
    }
    // top straight, right to left
    for i in 0..n_straight {
        let x = straight_len / 2.0 - straight_len * i as f64 / n_straight as f64;
        pts.push([x, radius]);
    }
    // left semicircle
    for i in 0..n_arc {
        let a = std::f64::consts::FRAC_PI_2 + std::f64::consts::PI * i as f64 / n_arc as f64;
        pts.push([
            -straight_len / 2.0 + radius * a.cos(),
            radius * a.sin(),
        ]);
    }
    let widths = vec![half_width; pts.len()];
    (pts, widths)
}

/// `make_oval` composed with `TrackDef::from_points`.
pub fn make_oval_track(
    straight_len: f64,
    radius: f64,
    half_width: f64,
    spacing: f64,
) -> Result<TrackDef, TrackError> {
    let (pts, widths) = make_oval(straight_len, radius, half_width, spacing);
    TrackDef::from_points(pts, widths)
}

/// Serialize a centerline + widths to the `track v1` text format.
pub fn to_track_file(points: &[Vec2], widths: &[f64]) -> String {
    let mut s = String::from("track v1\n");
    for (p, w) in points.iter().zip(widths) {
        s.push_str(&format!("point {:.6} {:.6} {:.6}\n", p[0], p[1], w));
    }
    let (p, w) = (points[0], widths[0]);
    s.push_str(&format!("point {:.6} {:.6} {:.6}\n", p[0], p[1], w));
    s
}
