//! Small 2D geometry helpers shared by the track and vehicle modules.

pub type Vec2 = [f64; 2];

#[inline]
pub fn add(a: Vec2, b: Vec2) -> Vec2 {
    [a[0] + b[0], a[1] + b[1]]
}

#[inline]
pub fn sub(a: Vec2, b: Vec2) -> Vec2 {
    [a[0] - b[0], a[1] - b[1]]
}

#[inline]
pub fn scale(a: Vec2, s: f64) -> Vec2 {
    [a[0] * s, a[1] * s]
}

#[inline]
pub fn dot(a: Vec2, b: Vec2) -> f64 {
    a[0] * b[0] + a[1] * b[1]
}

#[inline]
pub fn cross(a: Vec2, b: Vec2) -> f64 {
    a[0] * b[1] - a[1] * b[0]
}

#[inline]
pub fn norm(a: Vec2) -> f64 {
    dot(a, a).sqrt()
}

#[inline]
pub fn normalize(a: Vec2) -> Vec2 {
    let n = norm(a);
    if n > 0.0 {
        scale(a, 1.0 / n)
    } else {
        [0.0, 0.0]
    }
}

/// Left-hand normal (rotate +90 degrees).
#[inline]
pub fn perp_left(a: Vec2) -> Vec2 {
    [-a[1], a[0]]
}

#[inline]
pub fn rotate(a: Vec2, angle: f64) -> Vec2 {
    let (s, c) = angle.sin_cos();
    [c * a[0] - s * a[1], s * a[0] + c * a[1]]
}

/// Corners of an oriented rectangle centered at `center`, long axis along
/// `heading`, in counter-clockwise order starting front-left.
pub fn rect_corners(center: Vec2, heading: f64, length: f64, width: f64) -> [Vec2; 4] {
    let fwd = [heading.cos(), heading.sin()];
    let left = perp_left(fwd);
    let hl = length / 2.0;
    let hw = width / 2.0;
    [
        add(center, add(scale(fwd, hl), scale(left, hw))),
        add(center, add(scale(fwd, -hl), scale(left, hw))),
        add(center, add(scale(fwd, -hl), scale(left, -hw))),
        add(center, add(scale(fwd, hl), scale(left, -hw))),
    ]
}

/// Separating-axis overlap test for two oriented rectangles. Returns the
/// minimum translation vector pushing `a` out of `b` when they overlap.
pub fn obb_overlap(a: &[Vec2; 4], b: &[Vec2; 4]) -> Option<Vec2> {
    let mut min_depth = f64::INFINITY;
    let mut mtv = [0.0, 0.0];
    for (rect, other) in [(a, b), (b, a)] {
        for i in [0usize, 1] {
            let edge = sub(rect[i + 1], rect[i]);
            let axis = normalize(perp_left(edge));
            let (min_a, max_a) = project_onto(a, axis);
            let (min_b, max_b) = project_onto(b, axis);
            let overlap = max_a.min(max_b) - min_a.max(min_b);
            if overlap <= 0.0 {
                return None;
            }
            if overlap < min_depth {
                min_depth = overlap;
                // orient MTV so it pushes a away from b
                let center_a = centroid(a);
                let center_b = centroid(b);
                let dir = if dot(sub(center_a, center_b), axis) >= 0.0 {
                    axis
                } else {
                    scale(axis, -1.0)
                };
                mtv = scale(dir, overlap);
                let _ = other;
            }
        }
    }
    Some(mtv)
}

fn project_onto(rect: &[Vec2; 4], axis: Vec2) -> (f64, f64) {
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for p in rect {
        let d = dot(*p, axis);
        lo = lo.min(d);
        hi = hi.max(d);
    }
    (lo, hi)
}

pub fn centroid(rect: &[Vec2; 4]) -> Vec2 {
    let mut c = [0.0, 0.0];
    for p in rect {
        c = add(c, *p);
    }
    scale(c, 0.25)
}

/// Proper segment-segment intersection test (touching endpoints count).
pub fn segments_intersect(p1: Vec2, p2: Vec2, q1: Vec2, q2: Vec2) -> bool {
    let d1 = cross(sub(p2, p1), sub(q1, p1));
    let d2 = cross(sub(p2, p1), sub(q2, p1));
    let d3 = cross(sub(q2, q1), sub(p1, q1));
    let d4 = cross(sub(q2, q1), sub(p2, q1));
    if ((d1 > 0.0 && d2 < 0.0) || (d1 < 0.0 && d2 > 0.0))
        && ((d3 > 0.0 && d4 < 0.0) || (d3 < 0.0 && d4 > 0.0))
    {
        return true;
    }
    let on = |a: Vec2, b: Vec2, p: Vec2, d: f64| -> bool {
        d == 0.0
            && p[0] >= a[0].min(b[0])
            && p[0] <= a[0].max(b[0])
            && p[1] >= a[1].min(b[1])
            && p[1] <= a[1].max(b[1])
    };
    on(p1, p2, q1, d1) || on(p1, p2, q2, d2) || on(q1, q2, p1, d3) || on(q1, q2, p2, d4)
}
