//! Small vector helpers shared by the tracing and linking code.

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[inline]
pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

#[inline]
pub fn sub(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

#[inline]
pub fn axpy(a: &[f64], c: f64, b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x + c * y).collect()
}

pub fn cross(a: &[f64], b: &[f64]) -> [f64; 3] {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

pub fn normalized(a: &[f64]) -> Vec<f64> {
    let n = norm(a);
    a.iter().map(|x| x / n).collect()
}

/// Euclidean distance from `p` to the segment `[a, b]`.
pub fn point_segment_dist(p: &[f64], a: &[f64], b: &[f64]) -> f64 {
    let ab = sub(b, a);
    let ap = sub(p, a);
    let len2 = dot(&ab, &ab);
    let t = if len2 > 0.0 {
        (dot(&ap, &ab) / len2).clamp(0.0, 1.0)
    } else {
        0.0
    };
    norm(&sub(&ap, &ab.iter().map(|x| t * x).collect::<Vec<_>>()))
}

/// Distance from `p` to a polyline; `closed` adds the last-to-first segment.
pub fn point_polyline_dist(p: &[f64], pts: &[Vec<f64>], closed: bool) -> f64 {
    match pts.len() {
        0 => f64::INFINITY,
        1 => norm(&sub(p, &pts[0])),
        _ => {
            let mut best = pts
                .windows(2)
                .map(|w| point_segment_dist(p, &w[0], &w[1]))
                .fold(f64::INFINITY, f64::min);
            if closed {
                best = best.min(point_segment_dist(p, &pts[pts.len() - 1], &pts[0]));
            }
            best
        }
    }
}

/// Symmetric Hausdorff distance between two polylines, measured from the
/// vertices of each to the segments of the other.
pub fn hausdorff(a: &[Vec<f64>], a_closed: bool, b: &[Vec<f64>], b_closed: bool) -> f64 {
    let one = |x: &[Vec<f64>], y: &[Vec<f64>], y_closed: bool| {
        x.iter()
            .map(|p| point_polyline_dist(p, y, y_closed))
            .fold(0.0, f64::max)
    };
    one(a, b, b_closed).max(one(b, a, a_closed))
}
