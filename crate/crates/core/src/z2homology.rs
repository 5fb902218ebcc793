//! Cubical model of the pair `(V, V^j_f)` and its relative cohomology over ℤ₂.
//!
//! Cells of a `res^d` grid are addressed by doubled coordinates
//! `c ∈ [0, 2·res]^d`: odd coordinates are the axes a cell extends along, so
//! the dimension of a cell is its number of odd coordinates. A cell of the
//! total complex lies in the subcomplex iff `λ_j > tol` at all its vertices.
//!
//! Ranks are computed on the relative complex (total minus sub) after
//! removing coreduction pairs (a cell with a single remaining face) and
//! collapse pairs (a cell with a single remaining coface). Both removals are
//! pure deletions that preserve homology. The small remainder is handled by
//! Gaussian elimination over GF(2). Over a field the ranks of `H^i` and
//! `H_i` agree, and cohomology classes are read off by evaluating cocycles
//! on a basis of relative cycles.

use std::collections::{HashSet, VecDeque};

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::symspec::{eigen_sorted, ParamDomain, QuadraticFamily, ZeroTol};

/// Above this many matrix bits the remainder is reduced column-sparse.
const DENSE_BIT_LIMIT: usize = 1 << 28;

/// Dense GF(2) matrix stored as bitset rows.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Z2Matrix {
    rows: usize,
    cols: usize,
    words: usize,
    bits: Vec<u64>,
}

impl Z2Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        let words = cols.div_ceil(64);
        Self {
            rows,
            cols,
            words,
            bits: vec![0; rows * words],
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> bool {
        (self.bits[r * self.words + c / 64] >> (c % 64)) & 1 == 1
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, value: bool) {
        let w = &mut self.bits[r * self.words + c / 64];
        if value {
            *w |= 1 << (c % 64);
        } else {
            *w &= !(1 << (c % 64));
        }
    }

    #[inline]
    pub fn toggle(&mut self, r: usize, c: usize) {
        self.bits[r * self.words + c / 64] ^= 1 << (c % 64);
    }

    pub fn is_zero(&self) -> bool {
        self.bits.iter().all(|&w| w == 0)
    }

    /// Matrix product over GF(2).
    pub fn mul(&self, other: &Z2Matrix) -> Z2Matrix {
        assert_eq!(self.cols, other.rows);
        let mut out = Z2Matrix::zeros(self.rows, other.cols);
        for r in 0..self.rows {
            for k in 0..self.cols {
                if self.get(r, k) {
                    let (dst, src) = (r * out.words, k * other.words);
                    for w in 0..out.words {
                        out.bits[dst + w] ^= other.bits[src + w];
                    }
                }
            }
        }
        out
    }

    /// Rank by forward elimination, pivoting on columns in index order.
    pub fn rank(&self) -> usize {
        let mut m = self.clone();
        let mut rank = 0;
        for c in 0..m.cols {
            if rank == m.rows {
                break;
            }
            let Some(p) = (rank..m.rows).find(|&r| m.get(r, c)) else {
                continue;
            };
            if p != rank {
                for w in 0..m.words {
                    m.bits.swap(p * m.words + w, rank * m.words + w);
                }
            }
            let wc = c / 64;
            for r in (rank + 1)..m.rows {
                if m.get(r, c) {
                    for w in wc..m.words {
                        let x = m.bits[rank * m.words + w];
                        m.bits[r * m.words + w] ^= x;
                    }
                }
            }
            rank += 1;
        }
        rank
    }
}

/// Column-sparse reduction (standard left-to-right pivot elimination). Each
/// column is a sorted list of row indices; returns the pivot row of every
/// column after reduction (`None` for columns reduced to zero) together
/// with, if requested, the column operations applied.
pub(crate) fn sparse_reduce(
    cols: &mut [Vec<u32>],
    n_rows: usize,
    track: bool,
) -> (Vec<Option<u32>>, Vec<Vec<u32>>) {
    let mut owner: Vec<Option<usize>> = vec![None; n_rows];
    let mut lows = vec![None; cols.len()];
    let mut ops: Vec<Vec<u32>> = if track {
        (0..cols.len() as u32).map(|i| vec![i]).collect()
    } else {
        Vec::new()
    };
    for i in 0..cols.len() {
        while let Some(&low) = cols[i].last() {
            match owner[low as usize] {
                Some(k) => {
                    let other = std::mem::take(&mut cols[k]);
                    cols[i] = xor_sorted(&cols[i], &other);
                    cols[k] = other;
                    if track {
                        let other = std::mem::take(&mut ops[k]);
                        ops[i] = xor_sorted(&ops[i], &other);
                        ops[k] = other;
                    }
                }
                None => {
                    owner[low as usize] = Some(i);
                    lows[i] = Some(low);
                    break;
                }
            }
        }
    }
    (lows, ops)
}

fn xor_sorted(a: &[u32], b: &[u32]) -> Vec<u32> {
    let mut out = Vec::with_capacity(a.len() + b.len());
    let (mut i, mut j) = (0, 0);
    while i < a.len() && j < b.len() {
        match a[i].cmp(&b[j]) {
            std::cmp::Ordering::Less => {
                out.push(a[i]);
                i += 1;
            }
            std::cmp::Ordering::Greater => {
                out.push(b[j]);
                j += 1;
            }
            std::cmp::Ordering::Equal => {
                i += 1;
                j += 1;
            }
        }
    }
    out.extend_from_slice(&a[i..]);
    out.extend_from_slice(&b[j..]);
    out
}

/// Uniform cubical grid over an axis-aligned box, `res` cells per axis.
#[derive(Clone, Debug, PartialEq)]
pub struct CubicalGrid {
    d: usize,
    res: usize,
    lower: Vec<f64>,
    h: Vec<f64>,
}

type Coords = [usize; 3];

impl CubicalGrid {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>, res: usize) -> Result<Self> {
        let d = lower.len();
        if !(1..=3).contains(&d) || upper.len() != d {
            return Err(Error::DimensionMismatch(format!(
                "cubical grids support 1 to 3 dimensions, got {d}"
            )));
        }
        if res == 0 {
            return Err(Error::InvalidArgument("grid resolution must be positive".into()));
        }
        let h = lower.iter().zip(&upper).map(|(l, u)| (u - l) / res as f64).collect();
        Ok(Self { d, res, lower, h })
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn res(&self) -> usize {
        self.res
    }

    pub fn cell_size(&self) -> &[f64] {
        &self.h
    }

    #[inline]
    fn side(&self) -> usize {
        2 * self.res + 1
    }

    pub fn num_cells(&self) -> usize {
        self.side().pow(self.d as u32)
    }

    pub fn num_vertices(&self) -> usize {
        (self.res + 1).pow(self.d as u32)
    }

    #[inline]
    pub fn coords(&self, idx: u32) -> Coords {
        let s = self.side();
        let mut i = idx as usize;
        let mut c = [0; 3];
        for slot in c.iter_mut().take(self.d) {
            *slot = i % s;
            i /= s;
        }
        c
    }

    #[inline]
    pub fn index(&self, c: &Coords) -> u32 {
        let s = self.side();
        let mut i = 0;
        for k in (0..self.d).rev() {
            i = i * s + c[k];
        }
        i as u32
    }

    #[inline]
    pub fn cell_dim(&self, idx: u32) -> usize {
        let c = self.coords(idx);
        (0..self.d).filter(|&k| c[k] % 2 == 1).count()
    }

    /// Index of a vertex cell in the `(res+1)^d` vertex lattice.
    #[inline]
    fn vertex_slot(&self, c: &Coords) -> usize {
        let mut i = 0;
        for k in (0..self.d).rev() {
            i = i * (self.res + 1) + c[k] / 2;
        }
        i
    }

    fn vertex_point_of_slot(&self, slot: usize) -> Vec<f64> {
        let mut s = slot;
        (0..self.d)
            .map(|k| {
                let c = s % (self.res + 1);
                s /= self.res + 1;
                self.lower[k] + c as f64 * self.h[k]
            })
            .collect()
    }

    /// Geometric point of doubled coordinates (cell centers for odd ones).
    pub fn point(&self, c: &Coords) -> Vec<f64> {
        (0..self.d)
            .map(|k| self.lower[k] + 0.5 * c[k] as f64 * self.h[k])
            .collect()
    }

    pub fn faces(&self, idx: u32, out: &mut Vec<u32>) {
        out.clear();
        let c = self.coords(idx);
        for k in 0..self.d {
            if c[k] % 2 == 1 {
                let mut a = c;
                a[k] -= 1;
                out.push(self.index(&a));
                a[k] += 2;
                out.push(self.index(&a));
            }
        }
    }

    pub fn cofaces(&self, idx: u32, out: &mut Vec<u32>) {
        out.clear();
        let c = self.coords(idx);
        for k in 0..self.d {
            if c[k] % 2 == 0 {
                let mut a = c;
                if c[k] > 0 {
                    a[k] = c[k] - 1;
                    out.push(self.index(&a));
                }
                if c[k] < 2 * self.res {
                    a[k] = c[k] + 1;
                    out.push(self.index(&a));
                }
            }
        }
    }

    /// Vertex cells of a cell.
    pub fn vertices(&self, idx: u32, out: &mut Vec<u32>) {
        out.clear();
        let c = self.coords(idx);
        let odd: Vec<usize> = (0..self.d).filter(|&k| c[k] % 2 == 1).collect();
        for mask in 0..(1usize << odd.len()) {
            let mut v = c;
            for (b, &k) in odd.iter().enumerate() {
                v[k] = if mask >> b & 1 == 1 { c[k] + 1 } else { c[k] - 1 };
            }
            out.push(self.index(&v));
        }
    }

    /// Lowest vertex of a cell (the "front" vertex for cup products).
    pub fn front_vertex(&self, idx: u32) -> u32 {
        let mut c = self.coords(idx);
        for k in 0..self.d {
            if c[k] % 2 == 1 {
                c[k] -= 1;
            }
        }
        self.index(&c)
    }

    /// The cell as a parallelogram: lowest vertex and edge vectors along its
    /// extended axes.
    pub fn cell_frame(&self, idx: u32) -> (Vec<f64>, Vec<Vec<f64>>) {
        let c = self.coords(idx);
        let mut lo = c;
        let mut edges = Vec::new();
        for k in 0..self.d {
            if c[k] % 2 == 1 {
                lo[k] -= 1;
                let mut e = vec![0.0; self.d];
                e[k] = self.h[k];
                edges.push(e);
            }
        }
        (self.point(&lo), edges)
    }
}

const TOTAL: u8 = 1;
const SUB: u8 = 2;

/// The pair (total complex, subcomplex) on a cubical grid.
#[derive(Clone, Debug)]
pub struct CubicalPair {
    grid: CubicalGrid,
    flags: Vec<u8>,
}

impl CubicalPair {
    /// Builds a pair from explicit predicates: `in_total` on top-dimensional
    /// cells (closed under faces here) and `vertex_in_sub` on vertex points.
    pub fn from_predicates(
        grid: CubicalGrid,
        in_total: impl Fn(&[f64]) -> bool + Sync,
        vertex_in_sub: impl Fn(&[f64]) -> bool + Sync,
    ) -> Self {
        let total = total_flags(&grid, &in_total);
        let pos: Vec<bool> = (0..grid.num_vertices())
            .into_par_iter()
            .map(|s| vertex_in_sub(&grid.vertex_point_of_slot(s)))
            .collect();
        Self::from_vertex_rule(grid, total, &pos)
    }

    fn from_vertex_rule(grid: CubicalGrid, mut flags: Vec<u8>, positive: &[bool]) -> Self {
        let n = grid.num_cells();
        let sub: Vec<bool> = (0..n as u32)
            .into_par_iter()
            .map_init(Vec::new, |buf, idx| {
                if flags[idx as usize] & TOTAL == 0 {
                    return false;
                }
                grid.vertices(idx, buf);
                buf.iter().all(|&v| positive[grid.vertex_slot(&grid.coords(v))])
            })
            .collect();
        for (f, s) in flags.iter_mut().zip(sub) {
            if s {
                *f |= SUB;
            }
        }
        Self { grid, flags }
    }

    pub fn grid(&self) -> &CubicalGrid {
        &self.grid
    }

    #[inline]
    pub fn in_total(&self, idx: u32) -> bool {
        self.flags[idx as usize] & TOTAL != 0
    }

    #[inline]
    pub fn in_sub(&self, idx: u32) -> bool {
        self.flags[idx as usize] & SUB != 0
    }

    /// Cells of the relative complex: in the total complex, not in the sub.
    #[inline]
    pub fn in_relative(&self, idx: u32) -> bool {
        self.flags[idx as usize] == TOTAL
    }

    /// Cell counts per dimension of (total, sub).
    pub fn cell_counts(&self) -> (Vec<usize>, Vec<usize>) {
        let d = self.grid.d;
        let mut total = vec![0; d + 1];
        let mut sub = vec![0; d + 1];
        for idx in 0..self.flags.len() as u32 {
            if self.in_total(idx) {
                let k = self.grid.cell_dim(idx);
                total[k] += 1;
                if self.in_sub(idx) {
                    sub[k] += 1;
                }
            }
        }
        (total, sub)
    }

    pub fn sub_is_empty(&self) -> bool {
        self.flags.iter().all(|&f| f & SUB == 0)
    }

    pub fn sub_is_total(&self) -> bool {
        self.flags.iter().all(|&f| f & TOTAL == 0 || f & SUB != 0)
    }

    /// Whether every cell of `self.sub` is also in `other.sub`.
    pub fn sub_contained_in(&self, other: &CubicalPair) -> bool {
        self.flags
            .iter()
            .zip(&other.flags)
            .all(|(&a, &b)| a & SUB == 0 || b & SUB != 0)
    }

    /// Face-closure of the total complex and of the subcomplex.
    pub fn is_face_closed(&self) -> bool {
        let mut buf = Vec::new();
        (0..self.flags.len() as u32).all(|idx| {
            let f = self.flags[idx as usize];
            if f & TOTAL == 0 {
                return true;
            }
            self.grid.faces(idx, &mut buf);
            buf.iter().all(|&y| {
                let g = self.flags[y as usize];
                g & TOTAL != 0 && (f & SUB == 0 || g & SUB != 0)
            })
        })
    }
}

fn total_flags(grid: &CubicalGrid, in_total: &(impl Fn(&[f64]) -> bool + Sync)) -> Vec<u8> {
    let n = grid.num_cells();
    let mut flags = vec![0u8; n];
    let tops: Vec<u32> = (0..n as u32)
        .into_par_iter()
        .filter(|&idx| grid.cell_dim(idx) == grid.d && in_total(&grid.point(&grid.coords(idx))))
        .collect();
    for idx in tops {
        let c = grid.coords(idx);
        // all cells of the closed cube: each coordinate in {c−1, c, c+1}
        for m in 0..3usize.pow(grid.d as u32) {
            let mut a = c;
            let mut mm = m;
            for slot in a.iter_mut().take(grid.d) {
                *slot = *slot + (mm % 3) - 1;
                mm /= 3;
            }
            flags[grid.index(&a) as usize] = TOTAL;
        }
    }
    flags
}

/// All eigenvalues of `f` at the vertices of a grid over the domain's
/// bounding box, with per-vertex zero thresholds.
#[derive(Clone, Debug)]
pub struct GridSpectra {
    grid: CubicalGrid,
    total: Vec<u8>,
    n: usize,
    values: Vec<f64>,
    thresholds: Vec<f64>,
}

impl GridSpectra {
    pub fn compute(f: &QuadraticFamily, grid_res: usize, tol: ZeroTol) -> Result<Self> {
        if grid_res < 8 {
            return Err(Error::InvalidArgument(format!("grid_res {grid_res} must be ≥ 8")));
        }
        let (lo, hi) = f.domain().bounding_box();
        let grid = CubicalGrid::new(lo, hi, grid_res)?;
        let total = match f.domain() {
            ParamDomain::Box { .. } => total_flags(&grid, &|_: &[f64]| true),
            ParamDomain::Ball { center, radius } => {
                let (c, r) = (center.clone(), *radius);
                total_flags(&grid, &move |p: &[f64]| crate::symspec::dist(p, &c) <= r)
            }
        };
        let n = f.n();
        let per_vertex: Vec<(Vec<f64>, f64)> = (0..grid.num_vertices())
            .into_par_iter()
            .map(|s| {
                let p = grid.vertex_point_of_slot(s);
                let m = f.eval_unchecked(&p);
                let thr = tol.threshold(&m);
                eigen_sorted(&m).map(|e| (e.values, thr))
            })
            .collect::<Result<_>>()?;
        let mut values = Vec::with_capacity(per_vertex.len() * n);
        let mut thresholds = Vec::with_capacity(per_vertex.len());
        for (v, t) in per_vertex {
            values.extend(v);
            thresholds.push(t);
        }
        Ok(Self {
            grid,
            total,
            n,
            values,
            thresholds,
        })
    }

    pub fn grid(&self) -> &CubicalGrid {
        &self.grid
    }

    /// The pair `(V, V^j)`; `j = 0` gives `V^0 = V` and `j = n+1` the empty
    /// set.
    pub fn pair(&self, j: usize) -> Result<CubicalPair> {
        if j > self.n + 1 {
            return Err(Error::IndexOutOfRange { index: j, n: self.n });
        }
        let positive: Vec<bool> = (0..self.thresholds.len())
            .map(|s| match j {
                0 => true,
                j if j == self.n + 1 => false,
                j => self.values[s * self.n + j - 1] > self.thresholds[s],
            })
            .collect();
        Ok(CubicalPair::from_vertex_rule(
            self.grid.clone(),
            self.total.clone(),
            &positive,
        ))
    }
}

/// `(V, V^j_f)` on a `grid_res^d` grid with the strict vertex rule.
pub fn build_cubical_pair(
    f: &QuadraticFamily,
    j: usize,
    grid_res: usize,
    tol: ZeroTol,
) -> Result<CubicalPair> {
    GridSpectra::compute(f, grid_res, tol)?.pair(j)
}

/// A cochain (or chain) given by its support.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Cochain {
    pub degree: usize,
    pub cells: Vec<u32>,
}

#[derive(Clone, Debug)]
pub struct CohomologyResult {
    /// `rank H^i(total, sub; ℤ₂)` for `i = 0..=d`
    pub ranks: Vec<usize>,
    /// Per degree, relative cycles forming the basis dual to the reported
    /// cohomology basis (filled on request).
    pub dual_cycles: Vec<Vec<Cochain>>,
}

impl CohomologyResult {
    /// Coordinates of the class of `cocycle` in the basis dual to
    /// `dual_cycles[cocycle.degree]`.
    pub fn class_of(&self, cocycle: &Cochain) -> Vec<u8> {
        let support: HashSet<u32> = cocycle.cells.iter().copied().collect();
        self.dual_cycles[cocycle.degree]
            .iter()
            .map(|z| (z.cells.iter().filter(|c| support.contains(c)).count() % 2) as u8)
            .collect()
    }
}

struct Reduction {
    alive: Vec<bool>,
    /// coreduction pairs `(face, coface)` in removal order
    log: Vec<(u32, u32)>,
}

fn reduce(pair: &CubicalPair) -> Reduction {
    let grid = &pair.grid;
    let n = grid.num_cells();
    let mut alive: Vec<bool> = (0..n as u32).map(|i| pair.in_relative(i)).collect();
    let mut nbd = vec![0u8; n];
    let mut ncof = vec![0u8; n];
    let mut buf = Vec::with_capacity(6);
    for idx in 0..n as u32 {
        if !alive[idx as usize] {
            continue;
        }
        grid.faces(idx, &mut buf);
        nbd[idx as usize] = buf.iter().filter(|&&y| alive[y as usize]).count() as u8;
        grid.cofaces(idx, &mut buf);
        ncof[idx as usize] = buf.iter().filter(|&&y| alive[y as usize]).count() as u8;
    }

    let mut queue: VecDeque<u32> = (0..n as u32).filter(|&i| alive[i as usize]).collect();
    let mut log = Vec::new();
    let mut fbuf = Vec::with_capacity(6);

    let remove = |x: u32,
                      alive: &mut Vec<bool>,
                      nbd: &mut Vec<u8>,
                      ncof: &mut Vec<u8>,
                      queue: &mut VecDeque<u32>,
                      fbuf: &mut Vec<u32>| {
        alive[x as usize] = false;
        grid.faces(x, fbuf);
        for &y in fbuf.iter() {
            if alive[y as usize] {
                ncof[y as usize] -= 1;
                queue.push_back(y);
            }
        }
        grid.cofaces(x, fbuf);
        for &z in fbuf.iter() {
            if alive[z as usize] {
                nbd[z as usize] -= 1;
                queue.push_back(z);
            }
        }
    };

    while let Some(c) = queue.pop_front() {
        if !alive[c as usize] {
            continue;
        }
        if nbd[c as usize] == 1 {
            grid.faces(c, &mut buf);
            let s = *buf.iter().find(|&&y| alive[y as usize]).expect("counted face");
            remove(s, &mut alive, &mut nbd, &mut ncof, &mut queue, &mut fbuf);
            remove(c, &mut alive, &mut nbd, &mut ncof, &mut queue, &mut fbuf);
            log.push((s, c));
        } else if ncof[c as usize] == 1 {
            grid.cofaces(c, &mut buf);
            let t = *buf.iter().find(|&&y| alive[y as usize]).expect("counted coface");
            remove(c, &mut alive, &mut nbd, &mut ncof, &mut queue, &mut fbuf);
            remove(t, &mut alive, &mut nbd, &mut ncof, &mut queue, &mut fbuf);
        }
    }
    Reduction { alive, log }
}

/// Remaining cells grouped by dimension, each group in index order.
fn remainder_by_dim(pair: &CubicalPair, red: &Reduction) -> Vec<Vec<u32>> {
    let mut by_dim = vec![Vec::new(); pair.grid.d + 1];
    for (i, &a) in red.alive.iter().enumerate() {
        if a {
            by_dim[pair.grid.cell_dim(i as u32)].push(i as u32);
        }
    }
    by_dim
}

/// Boundary columns of `cells` expressed in local indices of `rows`.
fn boundary_columns(grid: &CubicalGrid, cells: &[u32], rows: &[u32]) -> Vec<Vec<u32>> {
    let mut buf = Vec::new();
    cells
        .iter()
        .map(|&c| {
            grid.faces(c, &mut buf);
            let mut col: Vec<u32> = buf
                .iter()
                .filter_map(|y| rows.binary_search(y).ok().map(|i| i as u32))
                .collect();
            col.sort_unstable();
            col
        })
        .collect()
}

/// Rank of the coboundary `δ_{k-1}: C^{k-1} → C^k` of the remainder.
fn coboundary_rank(grid: &CubicalGrid, lower: &[u32], upper: &[u32]) -> usize {
    if lower.is_empty() || upper.is_empty() {
        return 0;
    }
    let mut cols = boundary_columns(grid, upper, lower);
    if lower.len().saturating_mul(upper.len()) <= DENSE_BIT_LIMIT {
        // rows: k-cells, columns: (k−1)-cells
        let mut m = Z2Matrix::zeros(upper.len(), lower.len());
        for (r, col) in cols.iter().enumerate() {
            for &c in col {
                m.toggle(r, c as usize);
            }
        }
        m.rank()
    } else {
        let (lows, _) = sparse_reduce(&mut cols, lower.len(), false);
        lows.iter().filter(|l| l.is_some()).count()
    }
}

/// Relative cohomology ranks `H^i(total, sub; ℤ₂)`.
pub fn cohomology_ranks(pair: &CubicalPair) -> CohomologyResult {
    let red = reduce(pair);
    let cells = remainder_by_dim(pair, &red);
    let d = pair.grid.d;
    // rank δ_{k-1} for k = 1..=d, stored at index k
    let mut rk = vec![0usize; d + 2];
    for k in 1..=d {
        rk[k] = coboundary_rank(&pair.grid, &cells[k - 1], &cells[k]);
    }
    let ranks = (0..=d)
        .map(|i| cells[i].len() - rk[i + 1] - rk[i])
        .collect();
    CohomologyResult {
        ranks,
        dual_cycles: vec![Vec::new(); d + 1],
    }
}

/// Ranks plus, for each degree in `degrees`, a basis of relative cycles
/// (lifted to the full relative complex) dual to the cohomology basis.
pub fn cohomology_with_basis(pair: &CubicalPair, degrees: &[usize]) -> CohomologyResult {
    let red = reduce(pair);
    let cells = remainder_by_dim(pair, &red);
    let grid = &pair.grid;
    let d = grid.d;
    let mut result = cohomology_ranks_from(pair, &cells);
    for &k in degrees {
        if k > d {
            continue;
        }
        // cycles of the remainder: reduce ∂_k with tracking
        let zero_cols: Vec<(usize, Vec<u32>)> = if k == 0 {
            (0..cells[0].len()).map(|i| (i, vec![i as u32])).collect()
        } else {
            let mut cols = boundary_columns(grid, &cells[k], &cells[k - 1]);
            let (lows, ops) = sparse_reduce(&mut cols, cells[k - 1].len(), true);
            lows.iter()
                .enumerate()
                .filter(|(_, l)| l.is_none())
                .map(|(i, _)| (i, ops[i].clone()))
                .collect()
        };
        let killed: HashSet<u32> = if k < d {
            let mut cols = boundary_columns(grid, &cells[k + 1], &cells[k]);
            let (lows, _) = sparse_reduce(&mut cols, cells[k].len(), false);
            lows.into_iter().flatten().collect()
        } else {
            HashSet::new()
        };
        let mut basis = Vec::new();
        for (i, local) in zero_cols {
            if killed.contains(&(i as u32)) {
                continue;
            }
            let z: HashSet<u32> = local.iter().map(|&l| cells[k][l as usize]).collect();
            basis.push(lift_cycle(grid, &red.log, k, z));
        }
        debug_assert_eq!(basis.len(), result.ranks[k]);
        result.dual_cycles[k] = basis;
    }
    result
}

fn cohomology_ranks_from(pair: &CubicalPair, cells: &[Vec<u32>]) -> CohomologyResult {
    let d = pair.grid.d;
    let mut rk = vec![0usize; d + 2];
    for k in 1..=d {
        rk[k] = coboundary_rank(&pair.grid, &cells[k - 1], &cells[k]);
    }
    CohomologyResult {
        ranks: (0..=d).map(|i| cells[i].len() - rk[i + 1] - rk[i]).collect(),
        dual_cycles: vec![Vec::new(); d + 1],
    }
}

/// Undoes the coreductions in reverse order: a `k`-cycle `z` of the
/// reduced complex becomes `z + ⟨∂z, σ⟩·τ` for each pair `(σ, τ)` with
/// `dim τ = k`. Collapse pairs need no correction.
fn lift_cycle(grid: &CubicalGrid, log: &[(u32, u32)], k: usize, mut z: HashSet<u32>) -> Cochain {
    let mut buf = Vec::new();
    for &(s, t) in log.iter().rev() {
        if grid.cell_dim(t) != k {
            continue;
        }
        grid.cofaces(s, &mut buf);
        let coef = buf.iter().filter(|c| z.contains(c)).count() % 2;
        if coef == 1 {
            z.insert(t);
        }
    }
    let mut cells: Vec<u32> = z.into_iter().collect();
    cells.sort_unstable();
    Cochain { degree: k, cells }
}

/// Relative boundary of a chain (faces in the sub complex dropped).
pub fn relative_boundary(pair: &CubicalPair, chain: &Cochain) -> Vec<u32> {
    let mut count = std::collections::HashMap::new();
    let mut buf = Vec::new();
    for &c in &chain.cells {
        pair.grid.faces(c, &mut buf);
        for &y in &buf {
            if pair.in_relative(y) {
                *count.entry(y).or_insert(0u32) += 1;
            }
        }
    }
    let mut out: Vec<u32> = count.into_iter().filter(|(_, n)| n % 2 == 1).map(|(y, _)| y).collect();
    out.sort_unstable();
    out
}

/// Checks `δ∘δ = 0` on the relative cochain complex by exact parity counts.
pub fn coboundary_squares_to_zero(pair: &CubicalPair) -> bool {
    let grid = &pair.grid;
    (0..grid.num_cells() as u32).into_par_iter().all(|idx| {
        if !pair.in_relative(idx) {
            return true;
        }
        let mut b1 = Vec::new();
        let mut b2 = Vec::new();
        let mut seen: Vec<(u32, u32)> = Vec::new();
        grid.cofaces(idx, &mut b1);
        for &t in &b1 {
            if !pair.in_relative(t) {
                continue;
            }
            grid.cofaces(t, &mut b2);
            for &r in &b2 {
                if !pair.in_relative(r) {
                    continue;
                }
                match seen.iter_mut().find(|(c, _)| *c == r) {
                    Some(e) => e.1 += 1,
                    None => seen.push((r, 1)),
                }
            }
        }
        seen.iter().all(|(_, n)| n % 2 == 0)
    })
}

/// `Σ (−1)^k (#k-cells of total − #k-cells of sub)`
pub fn relative_euler_characteristic(pair: &CubicalPair) -> i64 {
    let (t, s) = pair.cell_counts();
    t.iter()
        .zip(&s)
        .enumerate()
        .map(|(k, (a, b))| if k % 2 == 0 { (a - b) as i64 } else { -((a - b) as i64) })
        .sum()
}

/// Generator of `H⁰(total, sub)` when its rank is one: the indicator of the
/// vertices of the connected component of the total complex that misses
/// the subcomplex.
pub fn zero_cocycle_class(pair: &CubicalPair) -> Result<Cochain> {
    let rank = cohomology_ranks(pair).ranks[0];
    if rank != 1 {
        return Err(Error::RankPrecondition(format!("rank H^0 = {rank}, expected 1")));
    }
    let grid = &pair.grid;
    let n = grid.num_cells();
    let mut parent: Vec<u32> = (0..n as u32).collect();
    fn find(p: &mut [u32], mut x: u32) -> u32 {
        while p[x as usize] != x {
            p[x as usize] = p[p[x as usize] as usize];
            x = p[x as usize];
        }
        x
    }
    let mut buf = Vec::new();
    for idx in 0..n as u32 {
        if pair.in_total(idx) && grid.cell_dim(idx) == 1 {
            grid.faces(idx, &mut buf);
            let (a, b) = (find(&mut parent, buf[0]), find(&mut parent, buf[1]));
            if a != b {
                parent[a.max(b) as usize] = a.min(b);
            }
        }
    }
    let vertices: Vec<u32> = (0..n as u32)
        .filter(|&i| pair.in_total(i) && grid.cell_dim(i) == 0)
        .collect();
    let mut touched = HashSet::new();
    for &v in &vertices {
        if pair.in_sub(v) {
            touched.insert(find(&mut parent, v));
        }
    }
    let cells = vertices
        .into_iter()
        .filter(|&v| !touched.contains(&find(&mut parent, v)))
        .collect();
    Ok(Cochain { degree: 0, cells })
}

/// Whether a cochain on the relative complex is a cocycle.
pub fn is_relative_cocycle(pair: &CubicalPair, c: &Cochain) -> bool {
    let support: HashSet<u32> = c.cells.iter().copied().collect();
    let grid = &pair.grid;
    let mut buf = Vec::new();
    let mut touched = HashSet::new();
    for &s in &c.cells {
        grid.cofaces(s, &mut buf);
        touched.extend(buf.iter().copied().filter(|&t| pair.in_relative(t)));
    }
    touched.into_iter().all(|t| {
        grid.faces(t, &mut buf);
        buf.iter().filter(|y| support.contains(y)).count() % 2 == 0
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::symspec::{dist, SymMatrix};

    fn disk_grid(res: usize) -> CubicalGrid {
        CubicalGrid::new(vec![-1.0, -1.0], vec![1.0, 1.0], res).unwrap()
    }

    fn in_unit_ball(p: &[f64]) -> bool {
        p.iter().map(|x| x * x).sum::<f64>() <= 1.0
    }

    #[test]
    fn z2_rank_small_cases() {
        let mut m = Z2Matrix::zeros(3, 3);
        assert_eq!(m.rank(), 0);
        for i in 0..3 {
            m.set(i, i, true);
        }
        assert_eq!(m.rank(), 3);
        m.set(2, 0, true);
        m.set(2, 1, true);
        m.set(2, 2, true);
        assert_eq!(m.rank(), 3);
        // rows 0 + 1 = row 2
        let mut m = Z2Matrix::zeros(3, 70);
        m.set(0, 3, true);
        m.set(0, 69, true);
        m.set(1, 65, true);
        m.set(2, 3, true);
        m.set(2, 69, true);
        m.set(2, 65, true);
        assert_eq!(m.rank(), 2);
        assert!(m.get(2, 65));
        m.toggle(2, 65);
        assert!(!m.get(2, 65));
    }

    #[test]
    fn grid_addressing_round_trips() {
        let g = CubicalGrid::new(vec![0.0; 3], vec![1.0; 3], 5).unwrap();
        for idx in [0u32, 17, 400, g.num_cells() as u32 - 1] {
            assert_eq!(g.index(&g.coords(idx)), idx);
        }
        let cube = g.index(&[1, 1, 1]);
        assert_eq!(g.cell_dim(cube), 3);
        let mut buf = Vec::new();
        g.faces(cube, &mut buf);
        assert_eq!(buf.len(), 6);
        g.vertices(cube, &mut buf);
        assert_eq!(buf.len(), 8);
        g.cofaces(g.index(&[0, 0, 0]), &mut buf);
        assert_eq!(buf.len(), 3);
        assert_eq!(g.front_vertex(cube), g.index(&[0, 0, 0]));
    }

    #[test]
    fn disk_relative_to_nothing() {
        let pair = CubicalPair::from_predicates(disk_grid(16), in_unit_ball, |_| false);
        assert!(pair.is_face_closed());
        let r = cohomology_ranks(&pair);
        assert_eq!(r.ranks, vec![1, 0, 0]);
        assert!(coboundary_squares_to_zero(&pair));
        assert_eq!(relative_euler_characteristic(&pair), 1);
    }

    #[test]
    fn disk_relative_to_collar() {
        let pair = CubicalPair::from_predicates(disk_grid(24), in_unit_ball, |p| {
            p.iter().map(|x| x * x).sum::<f64>().sqrt() > 0.6
        });
        assert!(pair.is_face_closed());
        let r = cohomology_with_basis(&pair, &[2]);
        assert_eq!(r.ranks, vec![0, 0, 1]);
        // the fundamental relative cycle is every 2-cell of the inner disk
        let z = &r.dual_cycles[2][0];
        assert!(relative_boundary(&pair, z).is_empty());
        let expected = (0..pair.grid().num_cells() as u32)
            .filter(|&i| pair.in_relative(i) && pair.grid().cell_dim(i) == 2)
            .count();
        assert_eq!(z.cells.len(), expected);
    }

    #[test]
    fn ball_relative_to_outer_shell() {
        let g = CubicalGrid::new(vec![-1.0; 3], vec![1.0; 3], 12).unwrap();
        let pair = CubicalPair::from_predicates(g, in_unit_ball, |p| dist(p, &[0.0; 3]) > 0.3);
        let r = cohomology_with_basis(&pair, &[3]);
        assert_eq!(r.ranks, vec![0, 0, 0, 1]);
        assert!(relative_boundary(&pair, &r.dual_cycles[3][0]).is_empty());
        assert!(coboundary_squares_to_zero(&pair));
    }

    #[test]
    fn annulus_and_sphere_shell() {
        // (annulus, ∅): one loop
        let pair = CubicalPair::from_predicates(
            disk_grid(24),
            |p| {
                let r = dist(p, &[0.0, 0.0]);
                r <= 1.0 && r >= 0.4
            },
            |_| false,
        );
        let r = cohomology_with_basis(&pair, &[1]);
        assert_eq!(r.ranks, vec![1, 1, 0]);
        assert!(relative_boundary(&pair, &r.dual_cycles[1][0]).is_empty());

        // (shell, ∅) in 3D: H^2 of a sphere
        let g = CubicalGrid::new(vec![-1.0; 3], vec![1.0; 3], 14).unwrap();
        let pair = CubicalPair::from_predicates(
            g,
            |p| {
                let r = dist(p, &[0.0; 3]);
                r <= 1.0 && r >= 0.5
            },
            |_| false,
        );
        assert_eq!(cohomology_ranks(&pair).ranks, vec![1, 0, 1, 0]);
    }

    #[test]
    fn dense_and_sparse_ranks_agree() {
        let mut state = 0x2545F4914F6CDD1Du64;
        let mut next = || {
            state ^= state << 13;
            state ^= state >> 7;
            state ^= state << 17;
            state
        };
        for _ in 0..50 {
            let (r, c) = ((next() % 40 + 1) as usize, (next() % 40 + 1) as usize);
            let mut m = Z2Matrix::zeros(r, c);
            let mut cols: Vec<Vec<u32>> = vec![Vec::new(); r];
            for i in 0..r {
                for j in 0..c {
                    if next() % 4 == 0 {
                        m.set(i, j, true);
                        cols[i].push(j as u32);
                    }
                }
            }
            let (lows, _) = sparse_reduce(&mut cols, c, false);
            assert_eq!(m.rank(), lows.iter().filter(|l| l.is_some()).count());
        }
    }

    #[test]
    fn constant_families() {
        let fam = |d: f64| {
            QuadraticFamily::new(
                ParamDomain::unit_ball(2),
                SymMatrix::from_diag(&[d]),
                vec![SymMatrix::zeros(1); 2],
            )
            .unwrap()
        };
        let pos = build_cubical_pair(&fam(1.0), 1, 16, ZeroTol::default()).unwrap();
        assert!(pos.sub_is_total());
        assert_eq!(cohomology_ranks(&pos).ranks, vec![0, 0, 0]);
        assert!(zero_cocycle_class(&pos).is_err());

        let neg = build_cubical_pair(&fam(-1.0), 1, 16, ZeroTol::default()).unwrap();
        assert!(neg.sub_is_empty());
        let gen = zero_cocycle_class(&neg).unwrap();
        let (t, _) = neg.cell_counts();
        assert_eq!(gen.cells.len(), t[0]);
        assert!(is_relative_cocycle(&neg, &gen));
    }

    #[test]
    fn z2_product_of_boundaries_vanishes() {
        // ∂₁∂₂ = 0 on a single square, as dense GF(2) matrices
        let g = CubicalGrid::new(vec![0.0; 2], vec![1.0; 2], 1).unwrap();
        let by_dim: Vec<Vec<u32>> = (0..=2)
            .map(|k| (0..g.num_cells() as u32).filter(|&i| g.cell_dim(i) == k).collect())
            .collect();
        let mat = |k: usize| {
            let cols = boundary_columns(&g, &by_dim[k], &by_dim[k - 1]);
            let mut m = Z2Matrix::zeros(by_dim[k - 1].len(), by_dim[k].len());
            for (c, col) in cols.iter().enumerate() {
                for &r in col {
                    m.set(r as usize, c, true);
                }
            }
            m
        };
        assert!(mat(1).mul(&mat(2)).is_zero());
        assert!(!mat(1).is_zero());
    }
}
