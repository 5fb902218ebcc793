//! Eigenvalue-coincidence strata: detection at a single matrix, continuation
//! of the codimension-2 loci `λ_j = λ_{j+1}` in 3-parameter families, and the
//! mod-2 intersection count of a 2-cell with such a locus.
//!
//! The local defining system near a coincidence of `λ_j` and `λ_{j+1}` uses an
//! orthonormal frame `(u_a, u_b)` of the invariant plane of these two
//! eigenvalues. With `M = [u_a u_b]ᵀ f_v [u_a u_b]` the system is
//! `h(v) = (M_ab, (M_aa − M_bb)/2)`; on an exactly invariant plane
//! `|h| = (λ_j − λ_{j+1})/2`, so `h = 0` is the coincidence locus itself.
//! The frame is carried from point to point by projecting the previous one
//! onto the new plane, which keeps `h` continuous across the degeneracy.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::{axpy, cross, dot, norm, point_polyline_dist, point_segment_dist, sub};
use crate::symspec::{eigen_sorted, QuadraticFamily, SymMatrix};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct StratumTag {
    /// leading (1-based) index of the repeated eigenvalue
    pub j: usize,
    pub m: usize,
    pub zero_crossing: bool,
}

/// Reports every maximal run of eigenvalues whose consecutive differences are
/// at most `tol` as a stratum tag `(j, m)`, `m ≥ 2`.
pub fn detect_stratum(s: &SymMatrix, tol: f64) -> Result<Vec<StratumTag>> {
    if !(tol > 0.0) {
        return Err(Error::InvalidArgument(format!("tolerance {tol} must be > 0")));
    }
    let vals = eigen_sorted(s)?.values;
    let mut tags = Vec::new();
    let mut start = 0;
    for k in 1..=vals.len() {
        if k == vals.len() || vals[k - 1] - vals[k] > tol {
            let m = k - start;
            if m >= 2 {
                tags.push(StratumTag {
                    j: start + 1,
                    m,
                    zero_crossing: vals[start].abs() <= tol,
                });
            }
            start = k;
        }
    }
    Ok(tags)
}

/// A traced component of `f⁻¹(Λ_{j,2})`. Closed components do not repeat
/// their first vertex; open ones end on the domain boundary at both ends.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DegeneracyCurve {
    pub j: usize,
    pub closed: bool,
    pub points: Vec<Vec<f64>>,
}

impl DegeneracyCurve {
    pub fn endpoints_on_boundary(&self) -> bool {
        !self.closed
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Polyline length, including the closing segment of closed curves.
    pub fn length(&self) -> f64 {
        let mut l: f64 = self.points.windows(2).map(|w| norm(&sub(&w[1], &w[0]))).sum();
        if self.closed && self.points.len() > 1 {
            l += norm(&sub(&self.points[0], &self.points[self.points.len() - 1]));
        }
        l
    }

    pub fn distance_to(&self, p: &[f64]) -> f64 {
        point_polyline_dist(p, &self.points, self.closed)
    }

    /// Largest distance between consecutive vertices.
    pub fn max_spacing(&self) -> f64 {
        let mut m = self
            .points
            .windows(2)
            .map(|w| norm(&sub(&w[1], &w[0])))
            .fold(0.0, f64::max);
        if self.closed && self.points.len() > 1 {
            m = m.max(norm(&sub(&self.points[0], &self.points[self.points.len() - 1])));
        }
        m
    }
}

#[derive(Clone, Debug)]
pub struct TraceOptions {
    /// Largest vertex spacing; `None` means 1/200 of the domain diameter.
    pub step: Option<f64>,
    pub gap_tol: f64,
    pub max_vertices: usize,
    pub max_corrector_iters: usize,
    /// Step floor as a fraction of the domain diameter.
    pub min_step_fraction: f64,
}

impl Default for TraceOptions {
    fn default() -> Self {
        Self {
            step: None,
            gap_tol: 1e-8,
            max_vertices: 200_000,
            max_corrector_iters: 20,
            min_step_fraction: 1e-5,
        }
    }
}

impl TraceOptions {
    pub fn max_step(&self, f: &QuadraticFamily) -> f64 {
        self.step.unwrap_or(f.domain().diameter() / 200.0)
    }

    /// Neighbor separation below which the coincidence is treated as a
    /// triple (or worse) point.
    fn separation_tol(&self) -> f64 {
        100.0 * self.gap_tol
    }
}

#[derive(Clone, Debug)]
pub(crate) struct Frame {
    a: Vec<f64>,
    b: Vec<f64>,
}

#[derive(Clone, Debug)]
pub(crate) struct LocalEval {
    frame: Frame,
    h: [f64; 2],
    /// `∂h/∂v_i` for each parameter direction
    jac: Vec<[f64; 2]>,
    /// distance from the pair to the neighboring eigenvalues
    separation: f64,
}

impl LocalEval {
    fn h_norm(&self) -> f64 {
        self.h[0].hypot(self.h[1])
    }

    fn row(&self, r: usize) -> Vec<f64> {
        self.jac.iter().map(|c| c[r]).collect()
    }
}

fn project_frame(prev: &Frame, e1: &[f64], e2: &[f64]) -> Option<Frame> {
    let proj = |x: &[f64]| {
        let c1 = dot(x, e1);
        let c2 = dot(x, e2);
        e1.iter().zip(e2).map(|(p, q)| c1 * p + c2 * q).collect::<Vec<_>>()
    };
    let a = proj(&prev.a);
    let na = norm(&a);
    if na < 0.5 {
        return None;
    }
    let a: Vec<f64> = a.iter().map(|x| x / na).collect();
    let b = proj(&prev.b);
    let b = axpy(&b, -dot(&b, &a), &a);
    let nb = norm(&b);
    if nb < 0.5 {
        return None;
    }
    Some(Frame {
        a,
        b: b.iter().map(|x| x / nb).collect(),
    })
}

/// Evaluates the local system at `v` for the pair `(λ_j, λ_{j+1})`.
pub(crate) fn local_eval(
    f: &QuadraticFamily,
    v: &[f64],
    j: usize,
    prev: Option<&Frame>,
) -> Option<LocalEval> {
    let s = f.eval_unchecked(v);
    let e = eigen_sorted(&s).ok()?;
    let n = s.n();
    let e1 = e.vector(j - 1);
    let e2 = e.vector(j);
    let frame = match prev {
        Some(p) => project_frame(p, &e1, &e2)?,
        None => Frame { a: e1, b: e2 },
    };
    let compress = |m: &SymMatrix| {
        let ab = m.bilinear(&frame.a, &frame.b);
        let aa = m.quad_form(&frame.a);
        let bb = m.quad_form(&frame.b);
        [ab, 0.5 * (aa - bb)]
    };
    let h = compress(&s);
    let jac = f.directions().iter().map(compress).collect();
    let upper = if j >= 2 {
        e.values[j - 2] - e.values[j - 1]
    } else {
        f64::INFINITY
    };
    let lower = if j + 1 < n {
        e.values[j] - e.values[j + 1]
    } else {
        f64::INFINITY
    };
    Some(LocalEval {
        frame,
        h,
        jac,
        separation: upper.min(lower),
    })
}

/// Minimum-norm Gauss–Newton correction onto `h = 0`.
fn correct(
    f: &QuadraticFamily,
    j: usize,
    start: &[f64],
    frame: Option<&Frame>,
    opts: &TraceOptions,
) -> Option<(Vec<f64>, LocalEval)> {
    let mut v = start.to_vec();
    let mut frame = frame.cloned();
    let limit = 10.0 * f.domain().diameter();
    for it in 0..=opts.max_corrector_iters {
        let ev = local_eval(f, &v, j, frame.as_ref())?;
        if ev.h_norm() <= opts.gap_tol / 10.0 {
            return Some((v, ev));
        }
        if it == opts.max_corrector_iters {
            return None;
        }
        let r0 = ev.row(0);
        let r1 = ev.row(1);
        let (m00, m01, m11) = (dot(&r0, &r0), dot(&r0, &r1), dot(&r1, &r1));
        let det = m00 * m11 - m01 * m01;
        if !(det > 1e-20 * m00 * m11) {
            return None;
        }
        let y0 = (m11 * ev.h[0] - m01 * ev.h[1]) / det;
        let y1 = (m00 * ev.h[1] - m01 * ev.h[0]) / det;
        for k in 0..v.len() {
            v[k] -= r0[k] * y0 + r1[k] * y1;
        }
        if !(norm(&sub(&v, start)) <= limit) {
            return None;
        }
        frame = Some(ev.frame);
    }
    None
}

fn tangent(ev: &LocalEval) -> Option<Vec<f64>> {
    let r0 = ev.row(0);
    let r1 = ev.row(1);
    let t = cross(&r0, &r1);
    let nt = norm(&t);
    if !(nt > 1e-10 * norm(&r0) * norm(&r1)) {
        return None;
    }
    Some(t.iter().map(|x| x / nt).collect())
}

fn check_trace_args(f: &QuadraticFamily, j: usize) -> Result<()> {
    if f.d() != 3 {
        return Err(Error::DimensionMismatch(format!(
            "curve tracing needs a 3-parameter family, got d = {}",
            f.d()
        )));
    }
    if j == 0 || j >= f.n() {
        return Err(Error::IndexOutOfRange { index: j, n: f.n() });
    }
    Ok(())
}

enum MarchEnd {
    Closed,
    Boundary,
}

enum MarchError {
    /// the curve returned to its start in fewer than ten steps
    TooCoarse,
    Fatal(Error),
}

impl From<Error> for MarchError {
    fn from(e: Error) -> Self {
        MarchError::Fatal(e)
    }
}

struct Marcher<'a> {
    f: &'a QuadraticFamily,
    j: usize,
    opts: &'a TraceOptions,
    max_step: f64,
    min_step: f64,
}

impl Marcher<'_> {
    fn run(
        &self,
        start: (&[f64], &LocalEval, &[f64]),
        check_closure: bool,
        out: &mut Vec<Vec<f64>>,
    ) -> Result<MarchEnd, MarchError> {
        let (start_v, start_ev, start_t) = start;
        let nominal = 0.9 * self.max_step;
        let mut step = nominal;
        let mut v = start_v.to_vec();
        let mut frame = start_ev.frame.clone();
        let mut t = start_t.to_vec();
        let mut steps = 0usize;
        let mut streak = 0usize;
        loop {
            if out.len() > self.opts.max_vertices {
                return Err(Error::MaxVertices(self.opts.max_vertices).into());
            }
            let pred = axpy(&v, step, &t);
            let accepted = correct(self.f, self.j, &pred, Some(&frame), self.opts).and_then(|(vn, ev)| {
                let d = sub(&vn, &v);
                let len = norm(&d);
                let tn = tangent(&ev)?;
                let tn = if dot(&tn, &t) < 0.0 {
                    tn.iter().map(|x| -x).collect()
                } else {
                    tn
                };
                let ok = len <= self.max_step
                    && len >= 0.25 * step
                    && dot(&d, &t) > 0.5 * len
                    && dot(&tn, &t) > 0.7
                    && ev.separation > self.opts.separation_tol();
                ok.then_some((vn, ev, tn))
            });
            let Some((vn, ev, tn)) = accepted else {
                step *= 0.5;
                streak = 0;
                if step < self.min_step {
                    return Err(Error::CorrectorDivergence { at: v }.into());
                }
                continue;
            };

            if !self.f.domain().contains(&vn, 0.0) {
                match self.land_on_boundary(&v, &vn, &frame) {
                    Some(p) => {
                        out.push(p);
                        return Ok(MarchEnd::Boundary);
                    }
                    None => {
                        step *= 0.5;
                        streak = 0;
                        if step < self.min_step {
                            return Err(Error::CorrectorDivergence { at: v }.into());
                        }
                        continue;
                    }
                }
            }

            if check_closure
                && point_segment_dist(start_v, &v, &vn) <= 0.5 * self.max_step
                && dot(&tn, start_t) > 0.0
            {
                if steps >= 10 {
                    return Ok(MarchEnd::Closed);
                }
                if steps >= 2 {
                    return Err(MarchError::TooCoarse);
                }
            }

            out.push(vn.clone());
            v = vn;
            frame = ev.frame;
            t = tn;
            steps += 1;
            streak += 1;
            if streak >= 3 && step < nominal {
                step = (2.0 * step).min(nominal);
                streak = 0;
            }
        }
    }

    /// Solves `h = 0, g = 0` for the boundary constraint `g` between an
    /// interior vertex and an exterior corrected point.
    fn land_on_boundary(&self, inside: &[f64], outside: &[f64], frame: &Frame) -> Option<Vec<f64>> {
        let dom = self.f.domain();
        let g = dom.exit_constraint(outside);
        let (mut lo, mut hi) = (0.0f64, 1.0f64);
        for _ in 0..60 {
            let mid = 0.5 * (lo + hi);
            let p: Vec<f64> = inside.iter().zip(outside).map(|(a, b)| a + mid * (b - a)).collect();
            if g(&p).0 > 0.0 {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        let mut v: Vec<f64> = inside.iter().zip(outside).map(|(a, b)| a + lo * (b - a)).collect();
        let mut frame = frame.clone();
        let scale = dom.diameter().max(1.0);
        for _ in 0..30 {
            let ev = local_eval(self.f, &v, self.j, Some(&frame))?;
            let (gv, gg) = g(&v);
            if ev.h_norm() <= self.opts.gap_tol / 10.0 && gv.abs() <= 1e-12 * scale {
                if norm(&sub(&v, inside)) > 1.5 * self.max_step {
                    return None;
                }
                return Some(v);
            }
            let rows = [ev.row(0), ev.row(1), gg];
            let rhs = [ev.h[0], ev.h[1], gv];
            let dv = solve3(&rows, &rhs)?;
            for k in 0..3 {
                v[k] -= dv[k];
            }
            frame = ev.frame;
        }
        None
    }
}

fn solve3(rows: &[Vec<f64>; 3], rhs: &[f64; 3]) -> Option<[f64; 3]> {
    let mut a = [[0.0; 4]; 3];
    for r in 0..3 {
        a[r][..3].copy_from_slice(&rows[r][..3]);
        a[r][3] = rhs[r];
    }
    for c in 0..3 {
        let p = (c..3).max_by(|&x, &y| a[x][c].abs().total_cmp(&a[y][c].abs()))?;
        if a[p][c].abs() < 1e-300 {
            return None;
        }
        a.swap(c, p);
        for r in 0..3 {
            if r != c {
                let k = a[r][c] / a[c][c];
                for cc in c..4 {
                    a[r][cc] -= k * a[c][cc];
                }
            }
        }
    }
    Some([a[0][3] / a[0][0], a[1][3] / a[1][1], a[2][3] / a[2][2]])
}

/// Continues the coincidence locus `λ_j = λ_{j+1}` through `seed` until it
/// closes up or reaches the domain boundary at both ends.
pub fn trace_curve(
    f: &QuadraticFamily,
    j: usize,
    seed: &[f64],
    opts: &TraceOptions,
) -> Result<DegeneracyCurve> {
    check_trace_args(f, j)?;
    let (v0, ev0) = correct(f, j, seed, None, opts).ok_or_else(|| Error::CorrectorDivergence {
        at: seed.to_vec(),
    })?;
    if ev0.separation <= opts.separation_tol() {
        return Err(Error::NonGeneric(format!(
            "eigenvalue of multiplicity ≥ 3 at {v0:?}"
        )));
    }
    if !f.domain().contains(&v0, 1e-9) {
        return Err(Error::OutOfDomain { point: v0 });
    }
    let t0 = tangent(&ev0).ok_or_else(|| Error::NonGeneric(format!("singular locus at {v0:?}")))?;

    let diameter = f.domain().diameter();
    let mut max_step = opts.max_step(f);
    for _ in 0..6 {
        let marcher = Marcher {
            f,
            j,
            opts,
            max_step,
            min_step: opts.min_step_fraction * diameter,
        };
        let mut fwd = Vec::new();
        match marcher.run((&v0, &ev0, &t0), true, &mut fwd) {
            Ok(MarchEnd::Closed) => {
                let mut points = vec![v0.clone()];
                points.extend(fwd);
                return Ok(DegeneracyCurve {
                    j,
                    closed: true,
                    points,
                });
            }
            Ok(MarchEnd::Boundary) => {
                let back_t: Vec<f64> = t0.iter().map(|x| -x).collect();
                let mut bwd = Vec::new();
                match marcher.run((&v0, &ev0, &back_t), false, &mut bwd) {
                    Ok(_) => {
                        bwd.reverse();
                        bwd.push(v0.clone());
                        bwd.extend(fwd);
                        return Ok(DegeneracyCurve {
                            j,
                            closed: false,
                            points: bwd,
                        });
                    }
                    Err(MarchError::Fatal(e)) => return Err(e),
                    Err(MarchError::TooCoarse) => unreachable!("closure is not checked backwards"),
                }
            }
            Err(MarchError::TooCoarse) => max_step /= 4.0,
            Err(MarchError::Fatal(e)) => return Err(e),
        }
    }
    Err(Error::NonGeneric(format!(
        "component through {v0:?} too small to resolve"
    )))
}

/// Lattice scan for starting points on `f⁻¹(Λ_{j,2})`: local minima of the
/// gap over a `grid_res³` lattice of cell centers, refined by the corrector
/// and deduplicated at radius `max_step`.
pub fn seed_search(
    f: &QuadraticFamily,
    j: usize,
    grid_res: usize,
    opts: &TraceOptions,
) -> Result<Vec<Vec<f64>>> {
    check_trace_args(f, j)?;
    if grid_res < 8 {
        return Err(Error::InvalidArgument(format!("grid_res {grid_res} must be ≥ 8")));
    }
    let (lo, hi) = f.domain().bounding_box();
    let h: Vec<f64> = (0..3).map(|k| (hi[k] - lo[k]) / grid_res as f64).collect();
    let r = grid_res;
    let idx = |a: usize, b: usize, c: usize| (c * r + b) * r + a;
    let point = |i: usize| {
        let (a, b, c) = (i % r, (i / r) % r, i / (r * r));
        [a, b, c]
            .iter()
            .enumerate()
            .map(|(k, &x)| lo[k] + (x as f64 + 0.5) * h[k])
            .collect::<Vec<f64>>()
    };
    let gaps: Vec<f64> = (0..r * r * r)
        .into_par_iter()
        .map(|i| {
            let p = point(i);
            if !f.domain().contains(&p, 0.0) {
                return f64::NAN;
            }
            eigen_sorted(&f.eval_unchecked(&p))
                .map(|e| e.values[j - 1] - e.values[j])
                .unwrap_or(f64::NAN)
        })
        .collect();

    let lip: f64 = f.direction_norms().iter().map(|x| x * x).sum::<f64>().sqrt();
    let hmax = h.iter().cloned().fold(0.0, f64::max);
    let coarse = 2.0 * 3f64.sqrt() * lip * hmax;

    let candidates: Vec<usize> = (0..r * r * r)
        .filter(|&i| {
            let g = gaps[i];
            if !(g <= coarse) {
                return false;
            }
            let (a, b, c) = (i % r, (i / r) % r, i / (r * r));
            for dc in -1i64..=1 {
                for db in -1i64..=1 {
                    for da in -1i64..=1 {
                        if da == 0 && db == 0 && dc == 0 {
                            continue;
                        }
                        let (x, y, z) = (a as i64 + da, b as i64 + db, c as i64 + dc);
                        if x < 0 || y < 0 || z < 0 || x >= r as i64 || y >= r as i64 || z >= r as i64 {
                            continue;
                        }
                        let gn = gaps[idx(x as usize, y as usize, z as usize)];
                        if gn < g {
                            return false;
                        }
                    }
                }
            }
            true
        })
        .collect();

    let refined: Vec<Option<Vec<f64>>> = candidates
        .par_iter()
        .map(|&i| {
            let (v, ev) = correct(f, j, &point(i), None, opts)?;
            (f.domain().contains(&v, 0.0) && ev.separation > opts.separation_tol()).then_some(v)
        })
        .collect();

    let max_step = opts.max_step(f);
    let mut seeds: Vec<Vec<f64>> = Vec::new();
    for v in refined.into_iter().flatten() {
        if seeds.iter().all(|s| norm(&sub(s, &v)) >= max_step) {
            seeds.push(v);
        }
    }
    Ok(seeds)
}

/// Traces every component reachable from the lattice seeds, skipping seeds
/// that already lie on a traced curve.
pub fn trace_all(
    f: &QuadraticFamily,
    j: usize,
    seed_grid: usize,
    opts: &TraceOptions,
) -> Result<Vec<DegeneracyCurve>> {
    let seeds = seed_search(f, j, seed_grid, opts)?;
    let max_step = opts.max_step(f);
    let mut curves: Vec<DegeneracyCurve> = Vec::new();
    for s in &seeds {
        if curves.iter().any(|c| c.distance_to(s) <= 2.0 * max_step) {
            continue;
        }
        curves.push(trace_curve(f, j, s, opts)?);
    }
    Ok(curves)
}

/// A parametrized flat 2-cell `origin + s·e1 + t·e2` in parameter space:
/// `(s, t) ∈ [0,1]²` for quads, `s, t ≥ 0, s + t ≤ 1` for triangles.
#[derive(Clone, Debug, PartialEq)]
pub enum Cell2 {
    Quad {
        origin: Vec<f64>,
        e1: Vec<f64>,
        e2: Vec<f64>,
    },
    Triangle {
        origin: Vec<f64>,
        e1: Vec<f64>,
        e2: Vec<f64>,
    },
}

impl Cell2 {
    fn parts(&self) -> (&[f64], &[f64], &[f64]) {
        match self {
            Cell2::Quad { origin, e1, e2 } | Cell2::Triangle { origin, e1, e2 } => (origin, e1, e2),
        }
    }

    pub fn point(&self, s: f64, t: f64) -> Vec<f64> {
        let (o, e1, e2) = self.parts();
        o.iter()
            .zip(e1.iter().zip(e2))
            .map(|(o, (a, b))| o + s * a + t * b)
            .collect()
    }

    /// Corners in parameter coordinates, counter-clockwise.
    fn param_corners(&self) -> Vec<[f64; 2]> {
        match self {
            Cell2::Quad { .. } => vec![[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]],
            Cell2::Triangle { .. } => vec![[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]],
        }
    }

    fn contains_param(&self, s: f64, t: f64, slack: f64) -> bool {
        match self {
            Cell2::Quad { .. } => {
                s >= -slack && t >= -slack && s <= 1.0 + slack && t <= 1.0 + slack
            }
            Cell2::Triangle { .. } => s >= -slack && t >= -slack && s + t <= 1.0 + slack,
        }
    }

    fn diameter(&self) -> f64 {
        let c = self.param_corners();
        let mut d: f64 = 0.0;
        for a in &c {
            for b in &c {
                d = d.max(norm(&sub(&self.point(a[0], a[1]), &self.point(b[0], b[1]))));
            }
        }
        d
    }
}

#[derive(Clone, Debug)]
pub struct ParityOptions {
    pub gap_tol: f64,
    /// Quadrisection depth at which Newton root finding takes over.
    pub newton_depth: usize,
    /// Depth at which an undecided subcell becomes an error.
    pub max_depth: usize,
}

impl Default for ParityOptions {
    fn default() -> Self {
        Self {
            gap_tol: 1e-8,
            newton_depth: 8,
            max_depth: 26,
        }
    }
}

struct ParityCtx<'a> {
    f: &'a QuadraticFamily,
    cell: &'a Cell2,
    j: usize,
    norms: Vec<f64>,
    opts: &'a ParityOptions,
    roots: Vec<[f64; 2]>,
}

impl ParityCtx<'_> {
    /// Lower bound for the gap over the convex hull of `pts` by Weyl's
    /// inequality around the centroid, returned with the centroid gap.
    fn gap_bound(&self, pts: &[Vec<f64>]) -> Result<(f64, f64, Vec<f64>)> {
        let d = pts[0].len();
        let k = pts.len() as f64;
        let center: Vec<f64> = (0..d).map(|i| pts.iter().map(|p| p[i]).sum::<f64>() / k).collect();
        let spread: f64 = (0..d)
            .map(|i| {
                let r = pts.iter().map(|p| (p[i] - center[i]).abs()).fold(0.0, f64::max);
                r * self.norms[i]
            })
            .sum();
        let e = eigen_sorted(&self.f.eval_unchecked(&center))?;
        let g = e.values[self.j - 1] - e.values[self.j];
        Ok((g - 2.0 * spread, g, center))
    }

    fn check_edge(&self, a: &[f64], b: &[f64], depth: usize) -> Result<()> {
        let (lower, g, _) = self.gap_bound(&[a.to_vec(), b.to_vec()])?;
        let need = 10.0 * self.opts.gap_tol;
        if lower >= need {
            return Ok(());
        }
        if g < need || depth >= 48 {
            return Err(Error::BoundaryTooClose { min_gap: g });
        }
        let m: Vec<f64> = a.iter().zip(b).map(|(x, y)| 0.5 * (x + y)).collect();
        self.check_edge(a, &m, depth + 1)?;
        self.check_edge(&m, b, depth + 1)
    }

    fn newton(&self, start: [f64; 2]) -> Option<[f64; 2]> {
        let (_, e1, e2) = self.cell.parts();
        let topts = TraceOptions {
            gap_tol: self.opts.gap_tol,
            ..TraceOptions::default()
        };
        let mut st = start;
        let mut frame: Option<Frame> = None;
        for _ in 0..40 {
            let x = self.cell.point(st[0], st[1]);
            let ev = local_eval(self.f, &x, self.j, frame.as_ref())?;
            if ev.h_norm() <= topts.gap_tol / 10.0 {
                // transversality: the restricted Jacobian must be invertible
                let r0 = ev.row(0);
                let r1 = ev.row(1);
                let j2 = [[dot(&r0, e1), dot(&r0, e2)], [dot(&r1, e1), dot(&r1, e2)]];
                let det = j2[0][0] * j2[1][1] - j2[0][1] * j2[1][0];
                let scale = (j2[0][0].powi(2) + j2[0][1].powi(2) + j2[1][0].powi(2) + j2[1][1].powi(2)).max(1e-300);
                if det.abs() <= 1e-8 * scale {
                    return None;
                }
                return Some(st);
            }
            let r0 = ev.row(0);
            let r1 = ev.row(1);
            let j2 = [[dot(&r0, e1), dot(&r0, e2)], [dot(&r1, e1), dot(&r1, e2)]];
            let det = j2[0][0] * j2[1][1] - j2[0][1] * j2[1][0];
            if det == 0.0 || !det.is_finite() {
                return None;
            }
            let ds = (j2[1][1] * ev.h[0] - j2[0][1] * ev.h[1]) / det;
            let dt = (j2[0][0] * ev.h[1] - j2[1][0] * ev.h[0]) / det;
            st = [st[0] - ds, st[1] - dt];
            if !(st[0].abs() < 10.0 && st[1].abs() < 10.0) {
                return None;
            }
            frame = Some(ev.frame);
        }
        None
    }

    fn recurse(&mut self, poly: &[[f64; 2]], depth: usize) -> Result<()> {
        let pts: Vec<Vec<f64>> = poly.iter().map(|p| self.cell.point(p[0], p[1])).collect();
        let (lower, _, _) = self.gap_bound(&pts)?;
        if lower > 0.0 {
            return Ok(());
        }
        let k = poly.len() as f64;
        let centroid = [
            poly.iter().map(|p| p[0]).sum::<f64>() / k,
            poly.iter().map(|p| p[1]).sum::<f64>() / k,
        ];
        if depth >= self.opts.newton_depth {
            if let Some(root) = self.newton(centroid) {
                if self.cell.contains_param(root[0], root[1], 1e-12) {
                    self.roots.push(root);
                }
                return Ok(());
            }
            if depth >= self.opts.max_depth {
                return Err(Error::UnresolvedCell {
                    center: self.cell.point(centroid[0], centroid[1]),
                });
            }
        }
        for sub in split(poly) {
            self.recurse(&sub, depth + 1)?;
        }
        Ok(())
    }
}

fn mid(a: [f64; 2], b: [f64; 2]) -> [f64; 2] {
    [0.5 * (a[0] + b[0]), 0.5 * (a[1] + b[1])]
}

fn split(poly: &[[f64; 2]]) -> Vec<Vec<[f64; 2]>> {
    if poly.len() == 4 {
        let [a, b, c, d] = [poly[0], poly[1], poly[2], poly[3]];
        let (ab, bc, cd, da) = (mid(a, b), mid(b, c), mid(c, d), mid(d, a));
        let m = mid(a, c);
        vec![
            vec![a, ab, m, da],
            vec![ab, b, bc, m],
            vec![m, bc, c, cd],
            vec![da, m, cd, d],
        ]
    } else {
        let [a, b, c] = [poly[0], poly[1], poly[2]];
        let (ab, bc, ca) = (mid(a, b), mid(b, c), mid(c, a));
        vec![vec![a, ab, ca], vec![ab, b, bc], vec![ca, bc, c], vec![ab, bc, ca]]
    }
}

/// Mod-2 number of transversal crossings of the 2-cell with `f⁻¹(Λ_{j,2})`.
///
/// Subcells certified crossing-free by Weyl's inequality are dropped; the
/// rest are quadrisected until Newton's method on the restricted system
/// locates their crossing. The cell boundary must keep the gap above
/// `10·gap_tol`.
pub fn intersection_parity(
    f: &QuadraticFamily,
    cell: &Cell2,
    j: usize,
    opts: &ParityOptions,
) -> Result<u8> {
    if j == 0 || j >= f.n() {
        return Err(Error::IndexOutOfRange { index: j, n: f.n() });
    }
    let (o, e1, e2) = cell.parts();
    if o.len() != f.d() || e1.len() != f.d() || e2.len() != f.d() {
        return Err(Error::DimensionMismatch("cell and family dimensions differ".into()));
    }
    let mut ctx = ParityCtx {
        f,
        cell,
        j,
        norms: f.direction_norms(),
        opts,
        roots: Vec::new(),
    };
    let corners = cell.param_corners();
    for k in 0..corners.len() {
        let a = corners[k];
        let b = corners[(k + 1) % corners.len()];
        ctx.check_edge(&cell.point(a[0], a[1]), &cell.point(b[0], b[1]), 0)?;
    }
    ctx.recurse(&corners, 0)?;

    // adjacent leaves converge to the same crossing
    let merge = 1e-6 * cell.diameter().max(1e-300);
    let mut distinct: Vec<Vec<f64>> = Vec::new();
    for r in &ctx.roots {
        let p = cell.point(r[0], r[1]);
        if distinct.iter().all(|q| norm(&sub(q, &p)) > merge) {
            distinct.push(p);
        }
    }
    Ok((distinct.len() % 2) as u8)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::symspec::ParamDomain;

    fn sz() -> SymMatrix {
        SymMatrix::from_diag(&[1.0, -1.0])
    }
    fn sx() -> SymMatrix {
        SymMatrix::from_fn(2, |i, j| if i != j { 1.0 } else { 0.0 })
    }

    fn padded_disk() -> QuadraticFamily {
        QuadraticFamily::new(
            ParamDomain::unit_ball(3),
            SymMatrix::zeros(2),
            vec![sz(), sx(), SymMatrix::zeros(2)],
        )
        .unwrap()
    }

    #[test]
    fn stratum_examples() {
        let tags = detect_stratum(&SymMatrix::from_diag(&[1.0, 1.0, 0.0]), 1e-9).unwrap();
        assert_eq!(tags, vec![StratumTag { j: 1, m: 2, zero_crossing: false }]);
        let tags = detect_stratum(&SymMatrix::zeros(3), 1e-9).unwrap();
        assert_eq!(tags, vec![StratumTag { j: 1, m: 3, zero_crossing: true }]);
        assert!(detect_stratum(&SymMatrix::from_diag(&[3.0, 2.0, 1.0]), 1e-9).unwrap().is_empty());
        let tags = detect_stratum(&SymMatrix::from_diag(&[2.0, 0.0, 0.0, -1.0]), 1e-9).unwrap();
        assert_eq!(tags, vec![StratumTag { j: 2, m: 2, zero_crossing: true }]);
        assert!(detect_stratum(&SymMatrix::zeros(2), 0.0).is_err());
    }

    #[test]
    fn padded_disk_seeds_lie_on_axis() {
        let f = padded_disk();
        let seeds = seed_search(&f, 1, 16, &TraceOptions::default()).unwrap();
        assert!(!seeds.is_empty());
        for s in &seeds {
            assert!(s[0].abs() < 1e-9 && s[1].abs() < 1e-9, "{s:?}");
        }
    }

    #[test]
    fn constant_family_has_no_seeds() {
        let f = QuadraticFamily::new(
            ParamDomain::unit_ball(3),
            SymMatrix::from_diag(&[3.0, 2.0, 1.0]),
            vec![SymMatrix::zeros(3); 3],
        )
        .unwrap();
        for j in 1..3 {
            assert!(seed_search(&f, j, 10, &TraceOptions::default()).unwrap().is_empty());
        }
        assert!(seed_search(&f, 1, 4, &TraceOptions::default()).is_err());
    }

    #[test]
    fn padded_disk_traces_diameter() {
        let f = padded_disk();
        let opts = TraceOptions::default();
        let c = trace_curve(&f, 1, &[0.0, 0.0, 0.0], &opts).unwrap();
        assert!(!c.closed);
        let first = &c.points[0];
        let last = c.points.last().unwrap();
        assert!((norm(first) - 1.0).abs() < 1e-9);
        assert!((norm(last) - 1.0).abs() < 1e-9);
        assert!((first[2] * last[2] + 1.0).abs() < 1e-9);
        for p in &c.points {
            assert!(p[0].abs() < 1e-9 && p[1].abs() < 1e-9);
        }
        assert!(c.max_spacing() <= opts.max_step(&f) + 1e-12);
        assert!((c.length() - 2.0).abs() < 1e-9);
    }

    #[test]
    fn trace_requires_three_parameters() {
        let f = QuadraticFamily::new(ParamDomain::unit_ball(2), SymMatrix::zeros(2), vec![sz(), sx()]).unwrap();
        assert!(matches!(
            trace_curve(&f, 1, &[0.0, 0.0], &TraceOptions::default()),
            Err(Error::DimensionMismatch(_))
        ));
    }

    #[test]
    fn parity_of_square_around_the_cone_point() {
        let f = QuadraticFamily::new(ParamDomain::unit_ball(2), SymMatrix::zeros(2), vec![sz(), sx()]).unwrap();
        let cell = Cell2::Quad {
            origin: vec![-1.0, -1.0],
            e1: vec![2.0, 0.0],
            e2: vec![0.0, 2.0],
        };
        assert_eq!(intersection_parity(&f, &cell, 1, &ParityOptions::default()).unwrap(), 1);
        let off = Cell2::Quad {
            origin: vec![0.2, 0.1],
            e1: vec![0.5, 0.0],
            e2: vec![0.0, 0.5],
        };
        assert_eq!(intersection_parity(&f, &off, 1, &ParityOptions::default()).unwrap(), 0);
        let tri = Cell2::Triangle {
            origin: vec![-0.3, -0.2],
            e1: vec![0.9, 0.0],
            e2: vec![0.0, 0.8],
        };
        assert_eq!(intersection_parity(&f, &tri, 1, &ParityOptions::default()).unwrap(), 1);
    }

    #[test]
    fn parity_rejects_boundary_on_locus() {
        let f = QuadraticFamily::new(ParamDomain::unit_ball(2), SymMatrix::zeros(2), vec![sz(), sx()]).unwrap();
        let cell = Cell2::Quad {
            origin: vec![0.0, 0.0],
            e1: vec![0.5, 0.0],
            e2: vec![0.0, 0.5],
        };
        assert!(matches!(
            intersection_parity(&f, &cell, 1, &ParityOptions::default()),
            Err(Error::BoundaryTooClose { .. })
        ));
    }

    #[test]
    fn parity_picks_the_requested_pair() {
        // spectrum {5, |v|, −|v|}: λ₂ = λ₃ only at the origin, λ₁ = λ₂ only on |v| = 5
        let g = QuadraticFamily::new(
            ParamDomain::cube(vec![-2.0, -2.0], vec![2.0, 2.0]).unwrap(),
            SymMatrix::from_diag(&[0.0, 0.0, 5.0]),
            vec![
                SymMatrix::from_diag(&[1.0, -1.0, 0.0]),
                SymMatrix::from_fn(3, |i, j| if (i, j) == (0, 1) { 1.0 } else { 0.0 }),
            ],
        )
        .unwrap();
        let big = Cell2::Quad {
            origin: vec![-1.0, -1.0],
            e1: vec![2.0, 0.0],
            e2: vec![0.0, 2.0],
        };
        assert_eq!(intersection_parity(&g, &big, 2, &ParityOptions::default()).unwrap(), 1);
        assert_eq!(intersection_parity(&g, &big, 1, &ParityOptions::default()).unwrap(), 0);
    }
}
