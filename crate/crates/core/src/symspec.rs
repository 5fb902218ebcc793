//! Dense symmetric matrices, their sorted spectra, and affine families
//! `v ↦ A₀ + Σ vᵢ Aᵢ` of symmetric matrices over a box or a ball.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Off-diagonal stopping threshold of the Jacobi sweeps, relative to the
/// Frobenius norm of the input.
pub const JACOBI_OFF_TOL: f64 = 1e-13;
pub const JACOBI_MAX_SWEEPS: usize = 50;

/// Symmetry slack accepted when loading matrices from untrusted input.
pub const LOAD_SYMMETRY_TOL: f64 = 1e-12;

/// Slack for domain membership checks.
pub const DOMAIN_SLACK: f64 = 1e-12;

/// Dense real symmetric matrix. Only one storage slot is written per
/// unordered index pair, so `get(i, j) == get(j, i)` holds exactly.
#[derive(Clone, Debug, PartialEq)]
pub struct SymMatrix {
    n: usize,
    data: Vec<f64>,
}

impl SymMatrix {
    pub fn zeros(n: usize) -> Self {
        assert!(n >= 1, "matrix dimension must be positive");
        Self {
            n,
            data: vec![0.0; n * n],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n);
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        m
    }

    pub fn from_diag(diag: &[f64]) -> Self {
        let mut m = Self::zeros(diag.len());
        for (i, &d) in diag.iter().enumerate() {
            m.set(i, i, d);
        }
        m
    }

    /// Builds a matrix from the upper triangle of `f(i, j)`, `i ≤ j`.
    pub fn from_fn(n: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut m = Self::zeros(n);
        for i in 0..n {
            for j in i..n {
                m.set(i, j, f(i, j));
            }
        }
        m
    }

    /// Builds a matrix from row-major rows, rejecting asymmetry beyond
    /// `sym_tol`. The stored value is the mean of the two mirrored entries.
    pub fn from_rows(rows: &[Vec<f64>], sym_tol: f64) -> Result<Self> {
        let n = rows.len();
        if n == 0 {
            return Err(Error::DimensionMismatch("empty matrix".into()));
        }
        if let Some(bad) = rows.iter().find(|r| r.len() != n) {
            return Err(Error::DimensionMismatch(format!(
                "row of length {} in a {n}x{n} matrix",
                bad.len()
            )));
        }
        for i in 0..n {
            for j in (i + 1)..n {
                let diff = (rows[i][j] - rows[j][i]).abs();
                if !(diff <= sym_tol) {
                    return Err(Error::NotSymmetric { row: i, col: j, diff });
                }
            }
        }
        Ok(Self::from_fn(n, |i, j| 0.5 * (rows[i][j] + rows[j][i])))
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        (0..self.n)
            .map(|i| self.data[i * self.n..(i + 1) * self.n].to_vec())
            .collect()
    }

    #[inline]
    pub fn n(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.n + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, value: f64) {
        self.data[i * self.n + j] = value;
        self.data[j * self.n + i] = value;
    }

    /// `‖S‖_max`, the largest absolute entry.
    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, x| m.max(x.abs()))
    }

    pub fn frobenius(&self) -> f64 {
        self.data.iter().map(|x| x * x).sum::<f64>().sqrt()
    }

    pub fn trace(&self) -> f64 {
        (0..self.n).map(|i| self.get(i, i)).sum()
    }

    /// Frobenius inner product `⟨A, B⟩ = tr(AB)`.
    pub fn inner(&self, other: &SymMatrix) -> f64 {
        self.data.iter().zip(&other.data).map(|(a, b)| a * b).sum()
    }

    pub fn scaled(&self, c: f64) -> SymMatrix {
        SymMatrix {
            n: self.n,
            data: self.data.iter().map(|x| c * x).collect(),
        }
    }

    /// `self += c · other`
    pub fn add_scaled(&mut self, c: f64, other: &SymMatrix) {
        assert_eq!(self.n, other.n);
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += c * b;
        }
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        (0..self.n)
            .map(|i| {
                self.data[i * self.n..(i + 1) * self.n]
                    .iter()
                    .zip(x)
                    .map(|(a, b)| a * b)
                    .sum()
            })
            .collect()
    }

    /// `xᵀ S y`
    pub fn bilinear(&self, x: &[f64], y: &[f64]) -> f64 {
        let mut acc = 0.0;
        for i in 0..self.n {
            let row = &self.data[i * self.n..(i + 1) * self.n];
            let ry: f64 = row.iter().zip(y).map(|(a, b)| a * b).sum();
            acc += x[i] * ry;
        }
        acc
    }

    pub fn quad_form(&self, x: &[f64]) -> f64 {
        self.bilinear(x, x)
    }

    /// Largest absolute eigenvalue.
    pub fn op_norm(&self) -> Result<f64> {
        let e = eigen_sorted(self)?;
        Ok(e.values[0].abs().max(e.values[self.n - 1].abs()))
    }

    /// Default zero tolerance `1e−9·(1+‖S‖_max)`.
    pub fn default_tol(&self) -> f64 {
        ZeroTol::default().threshold(self)
    }
}

/// Threshold below which an eigenvalue counts as zero.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "value", rename_all = "lowercase")]
pub enum ZeroTol {
    /// `c·(1+‖S‖_max)`
    Relative(f64),
    Absolute(f64),
}

impl Default for ZeroTol {
    fn default() -> Self {
        ZeroTol::Relative(1e-9)
    }
}

impl ZeroTol {
    pub fn threshold(&self, s: &SymMatrix) -> f64 {
        match *self {
            ZeroTol::Relative(c) => c * (1.0 + s.max_abs()),
            ZeroTol::Absolute(t) => t,
        }
    }
}

/// Spectrum in descending order with orthonormal eigenvectors; column `k`
/// of `vectors` belongs to `values[k]`.
#[derive(Clone, Debug)]
pub struct EigenData {
    pub values: Vec<f64>,
    vectors: Vec<f64>,
    n: usize,
}

impl EigenData {
    pub fn n(&self) -> usize {
        self.n
    }

    /// Eigenvector paired with `values[k]`.
    pub fn vector(&self, k: usize) -> Vec<f64> {
        (0..self.n).map(|i| self.vectors[i * self.n + k]).collect()
    }

    /// Entry `(i, k)` of the eigenvector matrix.
    #[inline]
    pub fn vector_entry(&self, i: usize, k: usize) -> f64 {
        self.vectors[i * self.n + k]
    }

    /// `max |VᵀV − I|`
    pub fn orthonormality_defect(&self) -> f64 {
        let n = self.n;
        let mut worst: f64 = 0.0;
        for a in 0..n {
            for b in a..n {
                let dot: f64 = (0..n)
                    .map(|i| self.vector_entry(i, a) * self.vector_entry(i, b))
                    .sum();
                let target = if a == b { 1.0 } else { 0.0 };
                worst = worst.max((dot - target).abs());
            }
        }
        worst
    }

    /// `Σ λ_k u_k u_kᵀ`
    pub fn reconstruct(&self) -> SymMatrix {
        let n = self.n;
        SymMatrix::from_fn(n, |i, j| {
            (0..n)
                .map(|k| self.values[k] * self.vector_entry(i, k) * self.vector_entry(j, k))
                .sum()
        })
    }
}

/// Cyclic Jacobi eigensolver with a fixed row-by-row sweep order. Returns
/// eigenvalues sorted descending (stable within ties).
pub fn eigen_sorted(s: &SymMatrix) -> Result<EigenData> {
    let n = s.n;
    let mut a = s.data.clone();
    let mut v = SymMatrix::identity(n).data;
    let scale = s.frobenius();

    let mut converged = scale == 0.0 || n == 1;
    let mut sweep = 0;
    while !converged {
        let off: f64 = (0..n)
            .flat_map(|p| ((p + 1)..n).map(move |q| (p, q)))
            .map(|(p, q)| a[p * n + q] * a[p * n + q])
            .sum::<f64>()
            .sqrt();
        if off <= JACOBI_OFF_TOL * scale {
            converged = true;
            break;
        }
        if sweep == JACOBI_MAX_SWEEPS {
            return Err(Error::NoConvergence { sweeps: sweep });
        }
        sweep += 1;
        for p in 0..n - 1 {
            for q in (p + 1)..n {
                let apq = a[p * n + q];
                if apq == 0.0 {
                    continue;
                }
                let theta = (a[q * n + q] - a[p * n + p]) / (2.0 * apq);
                let t = if theta.abs() > 1e150 {
                    0.5 / theta
                } else {
                    theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt())
                };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let sn = t * c;
                for k in 0..n {
                    let akp = a[k * n + p];
                    let akq = a[k * n + q];
                    a[k * n + p] = c * akp - sn * akq;
                    a[k * n + q] = sn * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[p * n + k];
                    let aqk = a[q * n + k];
                    a[p * n + k] = c * apk - sn * aqk;
                    a[q * n + k] = sn * apk + c * aqk;
                }
                a[p * n + q] = 0.0;
                a[q * n + p] = 0.0;
                for k in 0..n {
                    let vkp = v[k * n + p];
                    let vkq = v[k * n + q];
                    v[k * n + p] = c * vkp - sn * vkq;
                    v[k * n + q] = sn * vkp + c * vkq;
                }
            }
        }
    }
    debug_assert!(converged);

    let mut order: Vec<usize> = (0..n).collect();
    // stable: tied eigenvalues keep the solver's column order
    order.sort_by(|&x, &y| a[y * n + y].total_cmp(&a[x * n + x]));
    let values = order.iter().map(|&k| a[k * n + k]).collect();
    let mut vectors = vec![0.0; n * n];
    for (dst, &src) in order.iter().enumerate() {
        for i in 0..n {
            vectors[i * n + dst] = v[i * n + src];
        }
    }
    Ok(EigenData { values, vectors, n })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct IndexCounts {
    pub positive: usize,
    pub negative: usize,
    pub zero: usize,
}

/// Inertia with a zero band of half-width `tol`.
pub fn index_counts(s: &SymMatrix, tol: f64) -> Result<IndexCounts> {
    if !(tol >= 0.0) {
        return Err(Error::InvalidArgument(format!("tolerance {tol} must be ≥ 0")));
    }
    let e = eigen_sorted(s)?;
    let mut counts = IndexCounts {
        positive: 0,
        negative: 0,
        zero: 0,
    };
    for &l in &e.values {
        if l.abs() <= tol {
            counts.zero += 1;
        } else if l > tol {
            counts.positive += 1;
        } else {
            counts.negative += 1;
        }
    }
    Ok(counts)
}

/// `λ_j − λ_{j+1}` for a 1-based index `j`.
pub fn gap(s: &SymMatrix, j: usize) -> Result<f64> {
    if j == 0 || j >= s.n {
        return Err(Error::IndexOutOfRange { index: j, n: s.n });
    }
    let e = eigen_sorted(s)?;
    Ok(e.values[j - 1] - e.values[j])
}

/// Parameter space of a family: an axis-aligned box or a Euclidean ball.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum ParamDomain {
    Box { lower: Vec<f64>, upper: Vec<f64> },
    Ball { center: Vec<f64>, radius: f64 },
}

impl ParamDomain {
    pub fn ball(center: Vec<f64>, radius: f64) -> Result<Self> {
        let dom = ParamDomain::Ball { center, radius };
        dom.validate()?;
        Ok(dom)
    }

    pub fn unit_ball(d: usize) -> Self {
        ParamDomain::Ball {
            center: vec![0.0; d],
            radius: 1.0,
        }
    }

    pub fn cube(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        let dom = ParamDomain::Box { lower, upper };
        dom.validate()?;
        Ok(dom)
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            ParamDomain::Ball { center, radius } => {
                if center.is_empty() {
                    return Err(Error::InvalidDomain("ball of dimension 0".into()));
                }
                if !(*radius > 0.0) || !radius.is_finite() {
                    return Err(Error::InvalidDomain(format!("radius {radius} must be > 0")));
                }
            }
            ParamDomain::Box { lower, upper } => {
                if lower.is_empty() || lower.len() != upper.len() {
                    return Err(Error::InvalidDomain("box bounds of mismatched length".into()));
                }
                for (k, (l, u)) in lower.iter().zip(upper).enumerate() {
                    if !(l < u) {
                        return Err(Error::InvalidDomain(format!(
                            "axis {k}: lower {l} must be below upper {u}"
                        )));
                    }
                }
            }
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        match self {
            ParamDomain::Box { lower, .. } => lower.len(),
            ParamDomain::Ball { center, .. } => center.len(),
        }
    }

    pub fn contains(&self, v: &[f64], slack: f64) -> bool {
        if v.len() != self.dim() {
            return false;
        }
        match self {
            ParamDomain::Box { lower, upper } => v
                .iter()
                .zip(lower.iter().zip(upper))
                .all(|(x, (l, u))| *x >= l - slack && *x <= u + slack),
            ParamDomain::Ball { center, radius } => dist(v, center) <= radius + slack,
        }
    }

    pub fn diameter(&self) -> f64 {
        match self {
            ParamDomain::Box { lower, upper } => dist(lower, upper),
            ParamDomain::Ball { radius, .. } => 2.0 * radius,
        }
    }

    pub fn bounding_box(&self) -> (Vec<f64>, Vec<f64>) {
        match self {
            ParamDomain::Box { lower, upper } => (lower.clone(), upper.clone()),
            ParamDomain::Ball { center, radius } => (
                center.iter().map(|c| c - radius).collect(),
                center.iter().map(|c| c + radius).collect(),
            ),
        }
    }

    /// A boundary constraint `g(v) = 0` with gradient, chosen so that `g > 0`
    /// at the exterior point `outside`. Used to land traced curves on `∂V`.
    pub(crate) fn exit_constraint(&self, outside: &[f64]) -> impl Fn(&[f64]) -> (f64, Vec<f64>) {
        enum C {
            Sphere(Vec<f64>, f64),
            Face(usize, f64, f64),
        }
        let c = match self {
            ParamDomain::Ball { center, radius } => C::Sphere(center.clone(), *radius),
            ParamDomain::Box { lower, upper } => {
                let mut best = (0, 1.0, lower[0], f64::NEG_INFINITY);
                for k in 0..lower.len() {
                    let below = lower[k] - outside[k];
                    if below > best.3 {
                        best = (k, -1.0, lower[k], below);
                    }
                    let above = outside[k] - upper[k];
                    if above > best.3 {
                        best = (k, 1.0, upper[k], above);
                    }
                }
                C::Face(best.0, best.1, best.2)
            }
        };
        move |v: &[f64]| match &c {
            C::Sphere(center, radius) => {
                let r = dist(v, center);
                let grad = if r > 0.0 {
                    v.iter().zip(center).map(|(x, c)| (x - c) / r).collect()
                } else {
                    vec![0.0; v.len()]
                };
                (r - radius, grad)
            }
            C::Face(k, sign, bound) => {
                let mut grad = vec![0.0; v.len()];
                grad[*k] = *sign;
                (sign * (v[*k] - bound), grad)
            }
        }
    }
}

pub(crate) fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// Affine family `v ↦ base + Σ vᵢ directions[i]` over a parameter domain.
#[derive(Clone, Debug, PartialEq)]
pub struct QuadraticFamily {
    domain: ParamDomain,
    base: SymMatrix,
    directions: Vec<SymMatrix>,
}

impl QuadraticFamily {
    pub fn new(domain: ParamDomain, base: SymMatrix, directions: Vec<SymMatrix>) -> Result<Self> {
        domain.validate()?;
        if directions.len() != domain.dim() {
            return Err(Error::DimensionMismatch(format!(
                "{} directions for a {}-dimensional domain",
                directions.len(),
                domain.dim()
            )));
        }
        if let Some(a) = directions.iter().find(|a| a.n() != base.n()) {
            return Err(Error::DimensionMismatch(format!(
                "direction of size {} with base of size {}",
                a.n(),
                base.n()
            )));
        }
        Ok(Self {
            domain,
            base,
            directions,
        })
    }

    pub fn domain(&self) -> &ParamDomain {
        &self.domain
    }

    pub fn base(&self) -> &SymMatrix {
        &self.base
    }

    pub fn directions(&self) -> &[SymMatrix] {
        &self.directions
    }

    /// Matrix size `n`.
    pub fn n(&self) -> usize {
        self.base.n()
    }

    /// Parameter dimension `d`.
    pub fn d(&self) -> usize {
        self.directions.len()
    }

    /// `f_v`, rejecting points outside the domain.
    pub fn eval(&self, v: &[f64]) -> Result<SymMatrix> {
        if v.len() != self.d() {
            return Err(Error::DimensionMismatch(format!(
                "point of dimension {} for a {}-parameter family",
                v.len(),
                self.d()
            )));
        }
        if !self.domain.contains(v, DOMAIN_SLACK) {
            return Err(Error::OutOfDomain { point: v.to_vec() });
        }
        Ok(self.eval_unchecked(v))
    }

    /// `f_v` evaluated by the affine formula, wherever `v` lies.
    pub fn eval_unchecked(&self, v: &[f64]) -> SymMatrix {
        let mut s = self.base.clone();
        for (x, a) in v.iter().zip(&self.directions) {
            if *x != 0.0 {
                s.add_scaled(*x, a);
            }
        }
        s
    }

    /// `λ_j(f_v)`, 1-based.
    pub fn lambda_j(&self, v: &[f64], j: usize) -> Result<f64> {
        let s = self.eval(v)?;
        if j == 0 || j > s.n() {
            return Err(Error::IndexOutOfRange { index: j, n: s.n() });
        }
        Ok(eigen_sorted(&s)?.values[j - 1])
    }

    /// The family `c·f` (same domain).
    pub fn scaled(&self, c: f64) -> QuadraticFamily {
        QuadraticFamily {
            domain: self.domain.clone(),
            base: self.base.scaled(c),
            directions: self.directions.iter().map(|a| a.scaled(c)).collect(),
        }
    }

    /// Replaces the base matrix, keeping domain and directions.
    pub fn with_base(&self, base: SymMatrix) -> Result<QuadraticFamily> {
        QuadraticFamily::new(self.domain.clone(), base, self.directions.clone())
    }

    /// Replaces the domain, keeping the matrices.
    pub fn with_domain(&self, domain: ParamDomain) -> Result<QuadraticFamily> {
        QuadraticFamily::new(domain, self.base.clone(), self.directions.clone())
    }

    /// Upper bound on `‖f_v − f_w‖_op` per unit of `|vᵢ − wᵢ|`, per axis.
    pub(crate) fn direction_norms(&self) -> Vec<f64> {
        self.directions
            .iter()
            .map(|a| a.op_norm().unwrap_or_else(|_| a.frobenius()))
            .collect()
    }
}

/// On-disk form of a family.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct FamilyJson {
    pub n: usize,
    pub domain: ParamDomain,
    pub base: Vec<Vec<f64>>,
    pub directions: Vec<Vec<Vec<f64>>>,
}

impl TryFrom<FamilyJson> for QuadraticFamily {
    type Error = Error;

    fn try_from(js: FamilyJson) -> Result<Self> {
        let base = SymMatrix::from_rows(&js.base, LOAD_SYMMETRY_TOL)?;
        if base.n() != js.n {
            return Err(Error::DimensionMismatch(format!(
                "declared n = {} but base is {}x{}",
                js.n,
                base.n(),
                base.n()
            )));
        }
        let directions = js
            .directions
            .iter()
            .map(|rows| SymMatrix::from_rows(rows, LOAD_SYMMETRY_TOL))
            .collect::<Result<Vec<_>>>()?;
        QuadraticFamily::new(js.domain, base, directions)
    }
}

impl From<&QuadraticFamily> for FamilyJson {
    fn from(f: &QuadraticFamily) -> Self {
        FamilyJson {
            n: f.n(),
            domain: f.domain.clone(),
            base: f.base.to_rows(),
            directions: f.directions.iter().map(SymMatrix::to_rows).collect(),
        }
    }
}

impl QuadraticFamily {
    pub fn from_json_str(s: &str) -> Result<Self> {
        let js: FamilyJson = serde_json::from_str(s)?;
        js.try_into()
    }
}
