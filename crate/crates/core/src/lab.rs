//! Built-in families and experiments: the quaternionic family
//! `p ↦ (x ↦ ⟨p, x̄ax⟩)`, its affine translates `S0 + i·su(2)`, the
//! linking experiment on random translates and the trace-free disk.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::linkage::total_mod2_linking;
use crate::specseq::{
    collapse_report, compute_d2_degree0, compute_d3_linking, compute_e2, CollapseReport,
    DifferentialEntry, E2Page,
};
use crate::strata::{trace_all, DegeneracyCurve, TraceOptions};
use crate::symspec::{ParamDomain, QuadraticFamily, SymMatrix, ZeroTol};

/// Quaternion `w + x·i + y·j + z·k`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Quat(pub [f64; 4]);

impl Quat {
    pub fn imag(v: [f64; 3]) -> Quat {
        Quat([0.0, v[0], v[1], v[2]])
    }

    pub fn conj(self) -> Quat {
        let [w, x, y, z] = self.0;
        Quat([w, -x, -y, -z])
    }

    pub fn mul(self, o: Quat) -> Quat {
        let [a1, b1, c1, d1] = self.0;
        let [a2, b2, c2, d2] = o.0;
        Quat([
            a1 * a2 - b1 * b2 - c1 * c2 - d1 * d2,
            a1 * b2 + b1 * a2 + c1 * d2 - d1 * c2,
            a1 * c2 - b1 * d2 + c1 * a2 + d1 * b2,
            a1 * d2 + b1 * c2 - c1 * b2 + d1 * a2,
        ])
    }

    pub fn norm(self) -> f64 {
        self.0.iter().map(|x| x * x).sum::<f64>().sqrt()
    }
}

/// `φ(x) = x̄ a x` for an imaginary quaternion `a`.
pub fn hopf_map(a: [f64; 3], x: [f64; 4]) -> [f64; 3] {
    let q = Quat(x);
    let r = q.conj().mul(Quat::imag(a)).mul(q).0;
    [r[1], r[2], r[3]]
}

/// Gram matrices of `x ↦ ⟨e_k, φ(x)⟩`, `k = 1, 2, 3`, in the basis
/// `1, i, j, k`, by polarization.
pub fn hopf_directions(a: [f64; 3]) -> [SymMatrix; 3] {
    let basis = |r: usize| {
        let mut e = [0.0; 4];
        e[r] = 1.0;
        e
    };
    std::array::from_fn(|k| {
        let q = |x: [f64; 4]| hopf_map(a, x)[k];
        SymMatrix::from_fn(4, |r, c| {
            let (u, v) = (basis(r), basis(c));
            let plus = std::array::from_fn(|t| u[t] + v[t]);
            let minus = std::array::from_fn(|t| u[t] - v[t]);
            0.25 * (q(plus) - q(minus))
        })
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct HopfFamilySpec {
    pub a: [f64; 3],
    pub zeta: Option<SymMatrix>,
    pub radius: f64,
}

impl Default for HopfFamilySpec {
    fn default() -> Self {
        Self {
            a: [1.0, 0.0, 0.0],
            zeta: None,
            radius: 1.0,
        }
    }
}

/// `p ↦ G(p) − ς` on the ball of the given radius.
pub fn hopf_family(spec: &HopfFamilySpec) -> Result<QuadraticFamily> {
    if spec.a.iter().all(|&x| x == 0.0) {
        return Err(Error::InvalidArgument("a must be a nonzero imaginary quaternion".into()));
    }
    let base = match &spec.zeta {
        Some(z) => z.scaled(-1.0),
        None => SymMatrix::zeros(4),
    };
    QuadraticFamily::new(
        ParamDomain::ball(vec![0.0; 3], spec.radius)?,
        base,
        hopf_directions(spec.a).to_vec(),
    )
}

/// `H ↦ S0 + H` over the three-dimensional span of the `a = i` Gram
/// matrices, on the ball of radius `radius`.
pub fn su2_affine_family(s0: &SymMatrix, radius: f64) -> Result<QuadraticFamily> {
    QuadraticFamily::new(
        ParamDomain::ball(vec![0.0; 3], radius)?,
        s0.clone(),
        hopf_directions([1.0, 0.0, 0.0]).to_vec(),
    )
}

/// A fixed positive definite `4×4` matrix with simple spectrum
/// `scale·(1, 2.2, 3.1, 4.3)` in a rotated basis. Unlike `scale·I` it keeps
/// the coincidence curves of the perturbed family one-dimensional.
pub fn generic_zeta(scale: f64) -> SymMatrix {
    let mut q = SymMatrix::identity(4).to_rows();
    for &(p, r, angle) in &[(0, 1, 0.37), (1, 2, 0.81), (2, 3, 1.13), (0, 3, 0.29), (1, 3, 0.53)] {
        let (c, s) = (f64::cos(angle), f64::sin(angle));
        for row in q.iter_mut() {
            let (x, y) = (row[p], row[r]);
            row[p] = c * x - s * y;
            row[r] = s * x + c * y;
        }
    }
    let diag = [1.0, 2.2, 3.1, 4.3];
    SymMatrix::from_fn(4, |i, j| {
        scale * (0..4).map(|k| q[i][k] * diag[k] * q[j][k]).sum::<f64>()
    })
}

/// Symmetric matrix with independent standard Gaussian entries on and
/// above the diagonal.
pub fn random_goe(n: usize, rng: &mut impl Rng) -> SymMatrix {
    SymMatrix::from_fn(n, |_, _| rng.sample::<f64, _>(StandardNormal))
}

pub fn default_prop1_radius(s0: &SymMatrix) -> Result<f64> {
    Ok(4.0 * (1.0 + s0.op_norm()?))
}

#[derive(Clone, Debug)]
pub struct Prop1Config {
    pub seed_grid: usize,
    /// Tracing step as a fraction of the radius.
    pub step_fraction: f64,
    pub trace: TraceOptions,
    /// Resamples of `S0` per trial after non-generic failures.
    pub max_resamples: usize,
}

impl Default for Prop1Config {
    fn default() -> Self {
        Self {
            seed_grid: 48,
            step_fraction: 1.0 / 400.0,
            trace: TraceOptions::default(),
            max_resamples: 3,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CurveSummary {
    pub j: usize,
    pub components: usize,
    pub closed_components: usize,
    pub vertices: usize,
    pub total_length: f64,
}

impl CurveSummary {
    pub fn of(j: usize, curves: &[DegeneracyCurve]) -> Self {
        Self {
            j,
            components: curves.len(),
            closed_components: curves.iter().filter(|c| c.closed).count(),
            vertices: curves.iter().map(DegeneracyCurve::len).sum(),
            total_length: curves.iter().map(DegeneracyCurve::length).sum(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Prop1Report {
    pub trial: usize,
    pub resamples: usize,
    pub s0: Vec<Vec<f64>>,
    pub radius: f64,
    pub curves: Vec<CurveSummary>,
    pub nonempty: [bool; 3],
    pub lk_c2_c1: u8,
    pub lk_c2_c3: u8,
}

/// Traces `C1, C2, C3` for `S0 + i·su(2)` in the ball of radius `radius`
/// and reports the mod-2 linking of `C2` with its neighbours.
pub fn run_prop1(s0: &SymMatrix, radius: f64, seed: u64) -> Result<Prop1Report> {
    run_prop1_with(s0, radius, seed, &Prop1Config::default()).map(|(r, _)| r)
}

/// Like [`run_prop1`], also returning the traced curves.
pub fn run_prop1_with(
    s0: &SymMatrix,
    radius: f64,
    seed: u64,
    cfg: &Prop1Config,
) -> Result<(Prop1Report, [Vec<DegeneracyCurve>; 3])> {
    if s0.n() != 4 {
        return Err(Error::DimensionMismatch(format!("S0 must be 4x4, got {}", s0.n())));
    }
    let f = su2_affine_family(s0, radius)?;
    let opts = TraceOptions {
        step: Some(cfg.step_fraction * radius),
        ..cfg.trace.clone()
    };
    let traced: Vec<Vec<DegeneracyCurve>> = (1..=3)
        .into_par_iter()
        .map(|j| trace_all(&f, j, cfg.seed_grid, &opts))
        .collect::<Result<_>>()?;
    let curves: [Vec<DegeneracyCurve>; 3] = traced.try_into().expect("three indices");
    if curves[1].iter().any(|c| !c.closed) {
        return Err(Error::NonGeneric(
            "C2 reaches the boundary sphere; the radius is too small".into(),
        ));
    }
    let lk_c2_c1 = total_mod2_linking(&curves[1], &curves[0], f.domain(), Some(seed))?;
    let lk_c2_c3 = total_mod2_linking(&curves[1], &curves[2], f.domain(), Some(seed))?;
    let report = Prop1Report {
        trial: 0,
        resamples: 0,
        s0: s0.to_rows(),
        radius,
        curves: (0..3).map(|k| CurveSummary::of(k + 1, &curves[k])).collect(),
        nonempty: std::array::from_fn(|k| !curves[k].is_empty()),
        lk_c2_c1,
        lk_c2_c3,
    };
    Ok((report, curves))
}

fn trial_rng(seed: u64, trial: usize) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed ^ (trial as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15))
}

/// `trials` independent runs on random `S0`, each drawn from its own
/// seeded stream and redrawn after non-generic failures. `radius_for`
/// picks the ball radius from `S0` (the default rule when `None`).
pub fn run_prop1_trials(
    trials: usize,
    seed: u64,
    radius_for: Option<&(dyn Fn(&SymMatrix) -> f64 + Sync)>,
    cfg: &Prop1Config,
) -> Result<Vec<Prop1Report>> {
    (0..trials)
        .into_par_iter()
        .map(|t| {
            let mut rng = trial_rng(seed, t);
            let mut last = None;
            for attempt in 0..=cfg.max_resamples {
                let s0 = random_goe(4, &mut rng);
                let radius = match radius_for {
                    Some(r) => r(&s0),
                    None => default_prop1_radius(&s0)?,
                };
                match run_prop1_with(&s0, radius, seed, cfg) {
                    Ok((mut report, _)) => {
                        report.trial = t;
                        report.resamples = attempt;
                        return Ok(report);
                    }
                    Err(e) if e.is_non_generic() => last = Some(e),
                    Err(e) => return Err(e),
                }
            }
            Err(last.expect("at least one attempt"))
        })
        .collect()
}

/// Small fixed offset of the cone point of the disk family, keeping it off
/// grid lines at the usual resolutions.
pub const DISK_OFFSET: [f64; 2] = [0.0113, 0.0071];

/// `v ↦ (v₁−δ₁)σ_z + (v₂−δ₂)σ_x − s·I` on the unit disk.
pub fn lemma4_family(s: f64) -> Result<QuadraticFamily> {
    let sz = SymMatrix::from_diag(&[1.0, -1.0]);
    let sx = SymMatrix::from_rows(&[vec![0.0, 1.0], vec![1.0, 0.0]], 0.0)?;
    let mut base = SymMatrix::identity(2).scaled(-s);
    base.add_scaled(-DISK_OFFSET[0], &sz);
    base.add_scaled(-DISK_OFFSET[1], &sx);
    QuadraticFamily::new(ParamDomain::unit_ball(2), base, vec![sz, sx])
}

#[derive(Clone, Debug)]
pub struct Lemma4Report {
    pub s: f64,
    pub grid_res: usize,
    pub refined_grid: usize,
    pub page: E2Page,
    pub d2: DifferentialEntry,
    pub collapse: CollapseReport,
    /// `E³ = 0`
    pub exact: bool,
}

/// E², the degree-0 d₂ and E³ for the trace-free disk family. The page is
/// recomputed at twice the resolution and must agree.
pub fn run_lemma4_disk(s: f64, grid_res: usize) -> Result<Lemma4Report> {
    if !(s > 0.0 && s < 1.0) {
        return Err(Error::InvalidArgument(format!("s = {s} must lie in (0, 1)")));
    }
    let f = lemma4_family(s)?;
    let tol = ZeroTol::default();
    let page = compute_e2(&f, grid_res, tol)?;
    let refined = compute_e2(&f, 2 * grid_res, tol)?;
    if !page.same_ranks(&refined) {
        return Err(Error::RefinementUnstable(format!(
            "grid {grid_res}:\n{}grid {}:\n{}",
            page.text_table(),
            2 * grid_res,
            refined.text_table()
        )));
    }
    let d2 = compute_d2_degree0(&f, &page, 1, grid_res)?;
    let collapse = collapse_report(&page, std::slice::from_ref(&d2), &[]);
    let exact = collapse.is_determined() && collapse.e3.iter().flatten().all(|&r| r == 0);
    Ok(Lemma4Report {
        s,
        grid_res,
        refined_grid: 2 * grid_res,
        page,
        d2,
        collapse,
        exact,
    })
}

#[derive(Clone, Debug)]
pub struct HopfConfig {
    pub zeta_scale: f64,
    pub grid_res: usize,
    pub seed_grid: usize,
    pub trace: TraceOptions,
}

impl Default for HopfConfig {
    fn default() -> Self {
        Self {
            zeta_scale: 0.05,
            grid_res: 64,
            seed_grid: 48,
            trace: TraceOptions::default(),
        }
    }
}

#[derive(Clone, Debug)]
pub struct HopfReport {
    pub zeta: SymMatrix,
    pub page: E2Page,
    /// traced `f⁻¹(Λ_{j,2})` for `j = 1, 2, 3`
    pub curves: [Vec<DegeneracyCurve>; 3],
    pub d2: Vec<DifferentialEntry>,
    pub d3: Vec<DifferentialEntry>,
    pub collapse: CollapseReport,
}

/// Page, coincidence curves, d₂/d₃ and collapse for `G − ς` on the unit
/// ball with `ς = generic_zeta(zeta_scale)`.
pub fn run_hopf_pipeline(cfg: &HopfConfig) -> Result<HopfReport> {
    let zeta = generic_zeta(cfg.zeta_scale);
    let f = hopf_family(&HopfFamilySpec {
        zeta: Some(zeta.clone()),
        ..HopfFamilySpec::default()
    })?;
    let page = compute_e2(&f, cfg.grid_res, ZeroTol::default())?;
    let n = f.n();

    let mut d2 = Vec::new();
    for j in 1..n {
        if page.rank(0, j as isize) == 1 && page.rank(2, j as isize - 1) > 0 {
            d2.push(compute_d2_degree0(&f, &page, j, cfg.grid_res)?);
        }
    }

    let traced: Vec<Vec<DegeneracyCurve>> = (1..n)
        .into_par_iter()
        .map(|j| trace_all(&f, j, cfg.seed_grid, &cfg.trace))
        .collect::<Result<_>>()?;
    let curves: [Vec<DegeneracyCurve>; 3] = traced.try_into().expect("n = 4");

    let mut d3 = Vec::new();
    for j in 2..n {
        if page.rank(0, j as isize) == 1 && page.rank(3, j as isize - 2) == 1 {
            d3.push(compute_d3_linking(&f, &page, j, &curves[j - 1], &curves[j - 2])?);
        }
    }
    let collapse = collapse_report(&page, &d2, &d3);
    Ok(HopfReport {
        zeta,
        page,
        curves,
        d2,
        d3,
        collapse,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::symspec::eigen_sorted;

    #[test]
    fn quaternion_units() {
        let i = Quat([0.0, 1.0, 0.0, 0.0]);
        let j = Quat([0.0, 0.0, 1.0, 0.0]);
        let k = Quat([0.0, 0.0, 0.0, 1.0]);
        assert_eq!(i.mul(j), k);
        assert_eq!(j.mul(k), i);
        assert_eq!(k.mul(i), j);
        assert_eq!(i.mul(i), Quat([-1.0, 0.0, 0.0, 0.0]));
        assert_eq!(j.mul(i), Quat([0.0, 0.0, 0.0, -1.0]));
    }

    #[test]
    fn hopf_at_first_axis_has_doubled_spectrum() {
        let f = hopf_family(&HopfFamilySpec::default()).unwrap();
        let m = f.eval(&[1.0, 0.0, 0.0]).unwrap();
        assert!(m.trace().abs() < 1e-15);
        let e = eigen_sorted(&m).unwrap();
        let c = e.values[0];
        assert!(c > 0.0);
        for (got, want) in e.values.iter().zip([c, c, -c, -c]) {
            assert!((got - want).abs() < 1e-12);
        }
        // |a| = 1, |p| = 1
        assert!((c - 1.0).abs() < 1e-12);
        assert_eq!(f.eval(&[0.0; 3]).unwrap(), SymMatrix::zeros(4));
    }

    #[test]
    fn hopf_rejects_zero_axis() {
        let spec = HopfFamilySpec {
            a: [0.0; 3],
            ..HopfFamilySpec::default()
        };
        assert!(hopf_family(&spec).is_err());
    }

    #[test]
    fn gram_matrices_reproduce_the_form() {
        let a = [0.3, -1.2, 0.5];
        let g = hopf_directions(a);
        let x = [0.7, -0.1, 0.4, 1.3];
        let phi = hopf_map(a, x);
        for k in 0..3 {
            assert!((g[k].quad_form(&x) - phi[k]).abs() < 1e-12);
        }
    }

    #[test]
    fn generic_zeta_spectrum() {
        let e = eigen_sorted(&generic_zeta(0.5)).unwrap();
        for (got, want) in e.values.iter().zip([2.15, 1.55, 1.1, 0.5]) {
            assert!((got - want).abs() < 1e-12);
        }
    }

    #[test]
    fn disk_family_spectrum() {
        let f = lemma4_family(0.3).unwrap();
        let v = [0.4, -0.2];
        let r = ((v[0] - DISK_OFFSET[0]).powi(2) + (v[1] - DISK_OFFSET[1]).powi(2)).sqrt();
        assert!((f.lambda_j(&v, 1).unwrap() - (r - 0.3)).abs() < 1e-12);
        assert!((f.lambda_j(&v, 2).unwrap() - (-r - 0.3)).abs() < 1e-12);
        assert!(run_lemma4_disk(1.0, 16).is_err());
    }

    #[test]
    fn trial_streams_differ() {
        let a = random_goe(4, &mut trial_rng(7, 0));
        let b = random_goe(4, &mut trial_rng(7, 1));
        assert_ne!(a, b);
        assert_eq!(a, random_goe(4, &mut trial_rng(7, 0)));
    }
}
