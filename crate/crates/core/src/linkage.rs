//! Mod-2 linking numbers of disjoint polygonal cycles in ℝ³.
//!
//! Boundary-relative curves (arcs with both ends on the boundary sphere of a
//! ball) are first closed by an arc on that sphere. The parity is the
//! number of crossings where the first curve passes over the second in a
//! random planar projection; projections with a degenerate crossing are
//! rejected and another direction is drawn.

use std::hash::{DefaultHasher, Hash, Hasher};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::{cross, dot, norm, sub};
use crate::strata::DegeneracyCurve;
use crate::symspec::ParamDomain;

pub const MAX_DIRECTIONS: usize = 50;
const REL_TOL: f64 = 1e-9;
const MIN_SEPARATION: f64 = 1e-7;

type P3 = [f64; 3];

/// Two closed polylines (first point repeated at the end) in ℝ³.
#[derive(Clone, Debug)]
pub struct PolyLink {
    curve_a: Vec<P3>,
    curve_b: Vec<P3>,
    min_separation: f64,
    scale: f64,
}

impl PolyLink {
    /// Closes both polylines if needed and checks that they are disjoint.
    pub fn new(a: &[Vec<f64>], b: &[Vec<f64>]) -> Result<Self> {
        let curve_a = closed_p3(a)?;
        let curve_b = closed_p3(b)?;
        let scale = bbox_scale(curve_a.iter().chain(&curve_b));
        let min_separation = min_separation(&curve_a, &curve_b);
        if min_separation < MIN_SEPARATION * scale {
            return Err(Error::CurvesTooClose {
                separation: min_separation,
            });
        }
        Ok(Self {
            curve_a,
            curve_b,
            min_separation,
            scale,
        })
    }

    /// Builds the link of two traced curves, closing relative ones on the
    /// boundary of `ball`. At most one of the curves may be relative.
    pub fn from_curves(
        a: &DegeneracyCurve,
        b: &DegeneracyCurve,
        ball: &ParamDomain,
        arc: &ArcChoice,
    ) -> Result<Self> {
        if !a.closed && !b.closed {
            return Err(Error::InvalidArgument(
                "cannot link two boundary-relative curves".into(),
            ));
        }
        let a = close_relative_curve_with(a, ball, arc)?;
        let b = close_relative_curve_with(b, ball, arc)?;
        Self::new(&a, &b)
    }

    pub fn curve_a(&self) -> &[P3] {
        &self.curve_a
    }

    pub fn curve_b(&self) -> &[P3] {
        &self.curve_b
    }

    pub fn min_separation(&self) -> f64 {
        self.min_separation
    }

    /// Bounding-box diagonal of both curves.
    pub fn scale(&self) -> f64 {
        self.scale
    }

    pub fn swapped(&self) -> PolyLink {
        PolyLink {
            curve_a: self.curve_b.clone(),
            curve_b: self.curve_a.clone(),
            ..*self
        }
    }

    /// Default RNG seed: a hash of all coordinates.
    pub fn content_seed(&self) -> u64 {
        let mut h = DefaultHasher::new();
        for p in self.curve_a.iter().chain(&self.curve_b) {
            for x in p {
                x.to_bits().hash(&mut h);
            }
        }
        self.curve_a.len().hash(&mut h);
        h.finish()
    }
}

fn closed_p3(pts: &[Vec<f64>]) -> Result<Vec<P3>> {
    let mut out = Vec::with_capacity(pts.len() + 1);
    for p in pts {
        if p.len() != 3 {
            return Err(Error::DimensionMismatch(format!(
                "linking needs points in R^3, got {}",
                p.len()
            )));
        }
        out.push([p[0], p[1], p[2]]);
    }
    if out.len() < 3 {
        return Err(Error::InvalidArgument(
            "a closed polyline needs at least three points".into(),
        ));
    }
    if out.first() != out.last() {
        out.push(out[0]);
    }
    Ok(out)
}

fn bbox_scale<'a>(pts: impl Iterator<Item = &'a P3>) -> f64 {
    let mut lo = [f64::INFINITY; 3];
    let mut hi = [f64::NEG_INFINITY; 3];
    for p in pts {
        for k in 0..3 {
            lo[k] = lo[k].min(p[k]);
            hi[k] = hi[k].max(p[k]);
        }
    }
    norm(&sub(&hi, &lo)).max(f64::MIN_POSITIVE)
}

/// Distance between segments `[p1,q1]` and `[p2,q2]`.
pub fn segment_distance(p1: &[f64], q1: &[f64], p2: &[f64], q2: &[f64]) -> f64 {
    let d1 = sub(q1, p1);
    let d2 = sub(q2, p2);
    let r = sub(p1, p2);
    let a = dot(&d1, &d1);
    let e = dot(&d2, &d2);
    let f = dot(&d2, &r);
    let (s, t);
    if a <= f64::MIN_POSITIVE && e <= f64::MIN_POSITIVE {
        return norm(&r);
    }
    if a <= f64::MIN_POSITIVE {
        s = 0.0;
        t = (f / e).clamp(0.0, 1.0);
    } else {
        let c = dot(&d1, &r);
        if e <= f64::MIN_POSITIVE {
            t = 0.0;
            s = (-c / a).clamp(0.0, 1.0);
        } else {
            let b = dot(&d1, &d2);
            let denom = a * e - b * b;
            let mut s0 = if denom > 0.0 {
                ((b * f - c * e) / denom).clamp(0.0, 1.0)
            } else {
                0.0
            };
            let mut t0 = (b * s0 + f) / e;
            if t0 < 0.0 {
                t0 = 0.0;
                s0 = (-c / a).clamp(0.0, 1.0);
            } else if t0 > 1.0 {
                t0 = 1.0;
                s0 = ((b - c) / a).clamp(0.0, 1.0);
            }
            s = s0;
            t = t0;
        }
    }
    let c1: Vec<f64> = (0..p1.len()).map(|k| p1[k] + s * d1[k]).collect();
    let c2: Vec<f64> = (0..p2.len()).map(|k| p2[k] + t * d2[k]).collect();
    norm(&sub(&c1, &c2))
}

fn min_separation(a: &[P3], b: &[P3]) -> f64 {
    a.par_windows(2)
        .map(|sa| {
            b.windows(2)
                .map(|sb| segment_distance(&sa[0], &sa[1], &sb[0], &sb[1]))
                .fold(f64::INFINITY, f64::min)
        })
        .reduce(|| f64::INFINITY, f64::min)
}

/// How to close a boundary-relative arc on the boundary sphere.
#[derive(Clone, Debug, Default, PartialEq)]
pub enum ArcChoice {
    /// shorter great-circle arc between the endpoints
    #[default]
    Shortest,
    /// the other arc of the same great circle
    Complement,
    /// two great-circle arcs through the given direction
    Through(Vec<f64>),
}

/// Closes a boundary-relative curve by the shorter great-circle arc.
pub fn close_relative_curve(c: &DegeneracyCurve, ball: &ParamDomain) -> Result<Vec<Vec<f64>>> {
    close_relative_curve_with(c, ball, &ArcChoice::Shortest)
}

/// Closes a boundary-relative curve on the sphere bounding `ball`; closed
/// curves come back unchanged. The result repeats its first point at the
/// end.
pub fn close_relative_curve_with(
    c: &DegeneracyCurve,
    ball: &ParamDomain,
    arc: &ArcChoice,
) -> Result<Vec<Vec<f64>>> {
    let mut pts = c.points.clone();
    if c.closed {
        if pts.first() != pts.last() && !pts.is_empty() {
            pts.push(pts[0].clone());
        }
        return Ok(pts);
    }
    let ParamDomain::Ball { center, radius } = ball else {
        return Err(Error::InvalidDomain("closing arcs need a ball domain".into()));
    };
    if pts.len() < 2 {
        return Err(Error::InvalidArgument("relative curve has fewer than two points".into()));
    }
    let r = *radius;
    let tol = 1e-6 * r;
    let unit = |p: &[f64]| -> Result<Vec<f64>> {
        let v = sub(p, center);
        let n = norm(&v);
        if (n - r).abs() > tol {
            return Err(Error::EndpointNotOnBoundary {
                distance: (n - r).abs(),
            });
        }
        Ok(v.iter().map(|x| x / n).collect())
    };
    let u_end = unit(&pts[pts.len() - 1])?;
    let u_start = unit(&pts[0])?;
    let spacing = c.max_spacing().max(1e-3 * r);

    let legs: Vec<(Vec<f64>, Vec<f64>, bool)> = match arc {
        ArcChoice::Shortest => vec![(u_end, u_start, false)],
        ArcChoice::Complement => vec![(u_end, u_start, true)],
        ArcChoice::Through(m) => {
            let n = norm(m);
            if m.len() != 3 || n == 0.0 {
                return Err(Error::InvalidArgument("arc direction must be a nonzero 3-vector".into()));
            }
            let m: Vec<f64> = m.iter().map(|x| x / n).collect();
            vec![(u_end, m.clone(), false), (m, u_start, false)]
        }
    };
    for (k, (u, w, long)) in legs.iter().enumerate() {
        let arc_pts = great_circle(u, w, *long, r, spacing);
        // interior points of each leg plus the joint between legs
        let last_leg = k + 1 == legs.len();
        let take = if last_leg { arc_pts.len() - 1 } else { arc_pts.len() };
        for p in &arc_pts[1..take] {
            pts.push(p.iter().zip(center).map(|(x, c)| c + x).collect());
        }
    }
    pts.push(pts[0].clone());
    Ok(pts)
}

/// Points (relative to the center) on the great circle from `u` to `w` at
/// radius `r`, endpoints included.
fn great_circle(u: &[f64], w: &[f64], long: bool, r: f64, spacing: f64) -> Vec<Vec<f64>> {
    let cos = dot(u, w).clamp(-1.0, 1.0);
    let mut theta = cos.acos();
    // unit vector orthogonal to u in the plane of the arc
    let mut perp = sub(w, &u.iter().map(|x| x * cos).collect::<Vec<_>>());
    if norm(&perp) < 1e-9 {
        // coincident or antipodal endpoints: any plane through u will do
        let axis = if u[0].abs() < 0.9 { [1.0, 0.0, 0.0] } else { [0.0, 1.0, 0.0] };
        perp = cross(u, &axis).to_vec();
    }
    let pn = norm(&perp);
    let perp: Vec<f64> = perp.iter().map(|x| x / pn).collect();
    if long {
        theta -= 2.0 * std::f64::consts::PI;
    }
    let steps = ((theta.abs() * r / spacing).ceil() as usize).max(8);
    (0..=steps)
        .map(|k| {
            let a = theta * k as f64 / steps as f64;
            u.iter()
                .zip(&perp)
                .map(|(x, y)| r * (a.cos() * x + a.sin() * y))
                .collect()
        })
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LinkReport {
    pub lk_mod2: u8,
    pub directions_tested: usize,
}

/// Over-crossing parity of `curve_a` over `curve_b` seen from `+dir`, or
/// `None` if some crossing is degenerate in this projection.
pub fn parity_along(link: &PolyLink, dir: &[f64]) -> Option<u8> {
    let n = norm(dir);
    let z: P3 = [dir[0] / n, dir[1] / n, dir[2] / n];
    let helper = if z[0].abs() < 0.9 { [1.0, 0.0, 0.0] } else { [0.0, 1.0, 0.0] };
    let x = cross(&z, &helper);
    let xn = norm(&x);
    let x = [x[0] / xn, x[1] / xn, x[2] / xn];
    let y = cross(&z, &x);
    let proj = |p: &P3| [dot(p, &x), dot(p, &y), dot(p, &z)];
    let pa: Vec<P3> = link.curve_a.iter().map(proj).collect();
    let pb: Vec<P3> = link.curve_b.iter().map(proj).collect();
    let tol = REL_TOL * link.scale;

    let counts: Option<usize> = pa
        .par_windows(2)
        .map(|sa| {
            let mut count = 0;
            for sb in pb.windows(2) {
                match crossing(&sa[0], &sa[1], &sb[0], &sb[1], tol) {
                    Crossing::None => {}
                    Crossing::Degenerate => return None,
                    Crossing::Over => count += 1,
                    Crossing::Under => {}
                }
            }
            Some(count)
        })
        .try_reduce(|| 0, |a, b| Some(a + b));
    counts.map(|c| (c % 2) as u8)
}

enum Crossing {
    None,
    Over,
    Under,
    Degenerate,
}

fn crossing(a0: &P3, a1: &P3, b0: &P3, b1: &P3, tol: f64) -> Crossing {
    // bounding-box rejection in the projection plane
    for k in 0..2 {
        let (alo, ahi) = (a0[k].min(a1[k]), a0[k].max(a1[k]));
        let (blo, bhi) = (b0[k].min(b1[k]), b0[k].max(b1[k]));
        if ahi + tol < blo || bhi + tol < alo {
            return Crossing::None;
        }
    }
    let da = [a1[0] - a0[0], a1[1] - a0[1]];
    let db = [b1[0] - b0[0], b1[1] - b0[1]];
    let r = [b0[0] - a0[0], b0[1] - a0[1]];
    let cr = |u: [f64; 2], v: [f64; 2]| u[0] * v[1] - u[1] * v[0];
    let la = da[0].hypot(da[1]);
    let lb = db[0].hypot(db[1]);
    let denom = cr(da, db);
    if denom.abs() <= REL_TOL * la * lb || la <= tol || lb <= tol {
        // (near-)parallel or foreshortened segments with overlapping boxes
        let off = if la > tol { cr(da, r).abs() / la } else { r[0].hypot(r[1]) };
        return if off <= tol.max(REL_TOL * la.max(lb)) {
            Crossing::Degenerate
        } else {
            Crossing::None
        };
    }
    let s = cr(r, db) / denom;
    let t = cr(r, da) / denom;
    let es = tol / la;
    let et = tol / lb;
    if s < -es || s > 1.0 + es || t < -et || t > 1.0 + et {
        return Crossing::None;
    }
    if s <= es || s >= 1.0 - es || t <= et || t >= 1.0 - et {
        return Crossing::Degenerate;
    }
    let za = a0[2] + s * (a1[2] - a0[2]);
    let zb = b0[2] + t * (b1[2] - b0[2]);
    if (za - zb).abs() <= tol {
        Crossing::Degenerate
    } else if za > zb {
        Crossing::Over
    } else {
        Crossing::Under
    }
}

/// Random unit vector.
pub(crate) fn random_direction(rng: &mut ChaCha8Rng) -> [f64; 3] {
    loop {
        let v: [f64; 3] = [
            StandardNormal.sample(rng),
            StandardNormal.sample(rng),
            StandardNormal.sample(rng),
        ];
        let n = norm(&v);
        if n > 1e-6 {
            return [v[0] / n, v[1] / n, v[2] / n];
        }
    }
}

/// Mod-2 linking number with the content-derived seed.
pub fn mod2_linking(link: &PolyLink) -> Result<LinkReport> {
    mod2_linking_seeded(link, link.content_seed())
}

pub fn mod2_linking_seeded(link: &PolyLink, seed: u64) -> Result<LinkReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for k in 1..=MAX_DIRECTIONS {
        let dir = random_direction(&mut rng);
        if let Some(p) = parity_along(link, &dir) {
            return Ok(LinkReport {
                lk_mod2: p,
                directions_tested: k,
            });
        }
    }
    Err(Error::NoGenericProjection {
        tries: MAX_DIRECTIONS,
    })
}

/// Parities seen along the first `count` accepted random directions.
pub fn parities_over_directions(link: &PolyLink, seed: u64, count: usize) -> Result<Vec<u8>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(count);
    let mut tries = 0;
    while out.len() < count {
        tries += 1;
        if tries > MAX_DIRECTIONS * count {
            return Err(Error::NoGenericProjection { tries });
        }
        if let Some(p) = parity_along(link, &random_direction(&mut rng)) {
            out.push(p);
        }
    }
    Ok(out)
}

/// Total mod-2 linking of two families of traced curves: the sum over all
/// pairs, relative curves closed by the shorter arc on `ball`.
pub fn total_mod2_linking(
    a: &[DegeneracyCurve],
    b: &[DegeneracyCurve],
    ball: &ParamDomain,
    seed: Option<u64>,
) -> Result<u8> {
    let mut parity = 0;
    for x in a {
        for y in b {
            let link = PolyLink::from_curves(x, y, ball, &ArcChoice::Shortest)?;
            let report = match seed {
                Some(s) => mod2_linking_seeded(&link, s)?,
                None => mod2_linking(&link)?,
            };
            parity ^= report.lk_mod2;
        }
    }
    Ok(parity)
}
