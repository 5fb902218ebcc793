//! The E² page `E²_{i,j} = H^i(V, V^{j+1}_f; ℤ₂)`, the degree-0 part of d₂
//! and the linking-number form of d₃.
//!
//! Rows run over `j = 0..n`, columns over `i = 0..=d`. A differential d_r
//! maps `(i, j)` to `(i + r, j − r + 1)`.

use std::collections::HashMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};

use crate::error::{Error, Result};
use crate::linkage::total_mod2_linking;
use crate::strata::{intersection_parity, Cell2, DegeneracyCurve, ParityOptions};
use crate::symspec::{ParamDomain, QuadraticFamily, ZeroTol};
use crate::z2homology::{cohomology_ranks, cohomology_with_basis, zero_cocycle_class, GridSpectra, Z2Matrix};

#[derive(Clone, Debug, PartialEq)]
pub struct E2Page {
    pub n: usize,
    pub d: usize,
    pub grid_res: usize,
    pub tol: ZeroTol,
    /// `ranks[i][j]`
    pub ranks: Vec<Vec<usize>>,
}

impl E2Page {
    /// Rank at `(i, j)`, zero outside the page.
    pub fn rank(&self, i: isize, j: isize) -> usize {
        if i < 0 || j < 0 || i as usize > self.d || j as usize >= self.n {
            return 0;
        }
        self.ranks[i as usize][j as usize]
    }

    pub fn total_rank(&self) -> usize {
        self.ranks.iter().flatten().sum()
    }

    /// Positions with nonzero rank, as `(i, j)`.
    pub fn support(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        for i in 0..=self.d {
            for j in 0..self.n {
                if self.ranks[i][j] > 0 {
                    out.push((i, j));
                }
            }
        }
        out
    }

    pub fn same_ranks(&self, other: &E2Page) -> bool {
        self.ranks == other.ranks
    }

    /// `{"grid_res": .., "ranks": {"i,j": rank}}`
    pub fn to_json(&self) -> Value {
        let mut ranks = Map::new();
        for i in 0..=self.d {
            for j in 0..self.n {
                ranks.insert(format!("{i},{j}"), json!(self.ranks[i][j]));
            }
        }
        json!({ "grid_res": self.grid_res, "ranks": ranks })
    }

    /// Grid rendering: rows `j` descending, columns `i` ascending.
    pub fn text_table(&self) -> String {
        render_table(&self.ranks, self.n, self.d)
    }
}

fn render_table(ranks: &[Vec<usize>], n: usize, d: usize) -> String {
    let cell = |r: usize| match r {
        0 => "0".to_string(),
        1 => "Z2".to_string(),
        r => format!("Z2^{r}"),
    };
    let width = ranks.iter().flatten().map(|&r| cell(r).len()).max().unwrap_or(1).max(3);
    let mut out = String::new();
    for j in (0..n).rev() {
        out.push_str(&format!("j={j:<2}|"));
        for row in ranks.iter().take(d + 1) {
            out.push_str(&format!(" {:<width$}", cell(row[j])));
        }
        out.push('\n');
    }
    out.push_str(&format!("    +{}\n", "-".repeat((d + 1) * (width + 1))));
    out.push_str("     ");
    for i in 0..=d {
        out.push_str(&format!(" {:<width$}", format!("i={i}")));
    }
    out.push('\n');
    out.lines().map(|l| format!("{}\n", l.trim_end())).collect()
}

/// The E² page on a `grid_res^d` grid.
pub fn compute_e2(f: &QuadraticFamily, grid_res: usize, tol: ZeroTol) -> Result<E2Page> {
    let spectra = GridSpectra::compute(f, grid_res, tol)?;
    page_from_spectra(f, &spectra, grid_res, tol)
}

pub(crate) fn page_from_spectra(
    f: &QuadraticFamily,
    spectra: &GridSpectra,
    grid_res: usize,
    tol: ZeroTol,
) -> Result<E2Page> {
    let (n, d) = (f.n(), f.d());
    let columns: Vec<Vec<usize>> = (0..n)
        .into_par_iter()
        .map(|j| spectra.pair(j + 1).map(|p| cohomology_ranks(&p).ranks))
        .collect::<Result<_>>()?;
    let ranks = (0..=d).map(|i| columns.iter().map(|c| c[i]).collect()).collect();
    Ok(E2Page {
        n,
        d,
        grid_res,
        tol,
        ranks,
    })
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DifferentialEntry {
    pub r: usize,
    pub source: (usize, usize),
    pub target: (usize, usize),
    /// one row per source basis element, one column per target basis element
    pub matrix: Vec<Vec<u8>>,
}

impl DifferentialEntry {
    /// Rank of the map over ℤ₂.
    pub fn rank(&self) -> usize {
        let rows = self.matrix.len();
        let cols = self.matrix.first().map_or(0, Vec::len);
        let mut m = Z2Matrix::zeros(rows, cols);
        for (r, row) in self.matrix.iter().enumerate() {
            for (c, &x) in row.iter().enumerate() {
                m.set(r, c, x % 2 == 1);
            }
        }
        m.rank()
    }

    pub fn is_zero(&self) -> bool {
        self.matrix.iter().flatten().all(|&x| x % 2 == 0)
    }

    pub fn to_json(&self) -> Value {
        json!({
            "r": self.r,
            "source": [self.source.0, self.source.1],
            "target": [self.target.0, self.target.1],
            "matrix": self.matrix,
        })
    }
}

/// `d₂: E²_{0,j} → E²_{2,j−1}`: the degree-0 generator cupped with the
/// crossing cocycle of `Λ_{j,2}`, evaluated on a basis of relative 2-cycles
/// of `(V, V^j)`.
pub fn compute_d2_degree0(
    f: &QuadraticFamily,
    page: &E2Page,
    j: usize,
    grid_res: usize,
) -> Result<DifferentialEntry> {
    compute_d2_degree0_with(f, page, j, grid_res, &ParityOptions::default())
}

pub fn compute_d2_degree0_with(
    f: &QuadraticFamily,
    page: &E2Page,
    j: usize,
    grid_res: usize,
    opts: &ParityOptions,
) -> Result<DifferentialEntry> {
    let d = f.d();
    if d != 2 && d != 3 {
        return Err(Error::InvalidArgument(format!("d2 needs d = 2 or 3, got {d}")));
    }
    if j == 0 || j >= f.n() {
        return Err(Error::IndexOutOfRange { index: j, n: f.n() });
    }
    let src_rank = page.rank(0, j as isize);
    if src_rank != 1 {
        return Err(Error::RankPrecondition(format!("rank E2[0,{j}] = {src_rank}, expected 1")));
    }
    let spectra = GridSpectra::compute(f, grid_res, page.tol)?;
    let xi = zero_cocycle_class(&spectra.pair(j + 1)?)?;
    let target_pair = spectra.pair(j)?;
    let basis = cohomology_with_basis(&target_pair, &[2]);
    let grid = target_pair.grid();
    let mut xi_cells = xi.cells;
    xi_cells.sort_unstable();

    // 2-cells whose front vertex carries the generator
    let mut support: Vec<u32> = basis.dual_cycles[2]
        .iter()
        .flat_map(|z| z.cells.iter().copied())
        .filter(|&c| xi_cells.binary_search(&grid.front_vertex(c)).is_ok())
        .collect();
    support.sort_unstable();
    support.dedup();
    let parities: HashMap<u32, u8> = support
        .par_iter()
        .map(|&c| {
            let (origin, edges) = grid.cell_frame(c);
            let cell = Cell2::Quad {
                origin,
                e1: edges[0].clone(),
                e2: edges[1].clone(),
            };
            intersection_parity(f, &cell, j, opts).map(|p| (c, p))
        })
        .collect::<Result<_>>()?;
    let row = basis.dual_cycles[2]
        .iter()
        .map(|z| {
            (z.cells
                .iter()
                .map(|c| *parities.get(c).unwrap_or(&0) as usize)
                .sum::<usize>()
                % 2) as u8
        })
        .collect();
    Ok(DifferentialEntry {
        r: 2,
        source: (0, j),
        target: (2, j - 1),
        matrix: vec![row],
    })
}

/// `d₃: E²_{0,j} = H⁰(V, V^{j+1}) → E²_{3,j−2} = H³(V, V^{j−1})` as the total
/// mod-2 linking of the traced `f⁻¹(Λ_{j,2})` with `f⁻¹(Λ_{j−1,2})`.
pub fn compute_d3_linking(
    f: &QuadraticFamily,
    page: &E2Page,
    j: usize,
    curves_j: &[DegeneracyCurve],
    curves_jm1: &[DegeneracyCurve],
) -> Result<DifferentialEntry> {
    if f.d() != 3 {
        return Err(Error::InvalidArgument(format!("d3 needs d = 3, got {}", f.d())));
    }
    if !matches!(f.domain(), ParamDomain::Ball { .. }) {
        return Err(Error::InvalidDomain("d3 by linking needs a ball domain".into()));
    }
    if j < 2 || j >= f.n() {
        return Err(Error::IndexOutOfRange { index: j, n: f.n() });
    }
    let src = page.rank(0, j as isize);
    let tgt = page.rank(3, j as isize - 2);
    if src != 1 || tgt != 1 {
        return Err(Error::RankPrecondition(format!(
            "rank E2[0,{j}] = {src}, rank E2[3,{}] = {tgt}, expected 1 and 1",
            j - 2
        )));
    }
    if curves_j.iter().any(|c| c.j != j) || curves_jm1.iter().any(|c| c.j != j - 1) {
        return Err(Error::InvalidArgument("curve lists carry the wrong index".into()));
    }
    let parity = total_mod2_linking(curves_j, curves_jm1, f.domain(), None)?;
    Ok(DifferentialEntry {
        r: 3,
        source: (0, j),
        target: (3, j - 2),
        matrix: vec![vec![parity]],
    })
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CollapseReport {
    pub e3: Vec<Vec<usize>>,
    pub e_inf: Vec<Vec<usize>>,
    /// positions touched by a possibly nonzero differential that was not
    /// supplied (or lies outside the implemented cases)
    pub undetermined: Vec<(usize, usize)>,
    pub total: usize,
}

impl CollapseReport {
    pub fn is_determined(&self) -> bool {
        self.undetermined.is_empty()
    }

    pub fn to_json(&self) -> Value {
        let grid = |r: &Vec<Vec<usize>>| {
            let mut m = Map::new();
            for (i, col) in r.iter().enumerate() {
                for (j, x) in col.iter().enumerate() {
                    m.insert(format!("{i},{j}"), json!(x));
                }
            }
            Value::Object(m)
        };
        json!({
            "e3": grid(&self.e3),
            "e_inf": grid(&self.e_inf),
            "undetermined": self.undetermined.iter().map(|(i, j)| json!([i, j])).collect::<Vec<_>>(),
            "total": self.total,
        })
    }

    pub fn text_table(&self, n: usize, d: usize) -> String {
        render_table(&self.e_inf, n, d)
    }
}

/// Takes homology with respect to the supplied d₂ and then d₃ entries.
pub fn collapse_report(
    page: &E2Page,
    d2: &[DifferentialEntry],
    d3: &[DifferentialEntry],
) -> CollapseReport {
    let mut undetermined = Vec::new();
    let e3 = apply_differentials(page, &page.ranks, 2, d2, &mut undetermined);
    let e_inf = apply_differentials(page, &e3, 3, d3, &mut undetermined);
    undetermined.sort_unstable();
    undetermined.dedup();
    let total = e_inf.iter().flatten().sum();
    CollapseReport {
        e3,
        e_inf,
        undetermined,
        total,
    }
}

fn apply_differentials(
    page: &E2Page,
    ranks: &[Vec<usize>],
    r: usize,
    entries: &[DifferentialEntry],
    undetermined: &mut Vec<(usize, usize)>,
) -> Vec<Vec<usize>> {
    let mut out = ranks.to_vec();
    for i in 0..=page.d {
        for j in 0..page.n {
            let (ti, tj) = (i + r, j as isize - r as isize + 1);
            if ranks[i][j] == 0 || ti > page.d || tj < 0 || ranks[ti][tj as usize] == 0 {
                continue;
            }
            let tj = tj as usize;
            match entries.iter().find(|e| e.r == r && e.source == (i, j)) {
                Some(e) if e.target == (ti, tj) => {
                    let rk = e.rank();
                    out[i][j] -= rk.min(out[i][j]);
                    out[ti][tj] -= rk.min(out[ti][tj]);
                }
                _ => {
                    undetermined.push((i, j));
                    undetermined.push((ti, tj));
                }
            }
        }
    }
    out
}

/// Page JSON with the differentials attached.
pub fn page_json(page: &E2Page, d2: &[DifferentialEntry], d3: &[DifferentialEntry]) -> Value {
    let mut v = page.to_json();
    v["d2"] = Value::Array(d2.iter().map(DifferentialEntry::to_json).collect());
    v["d3"] = Value::Array(d3.iter().map(DifferentialEntry::to_json).collect());
    v
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::symspec::SymMatrix;

    fn page(ranks: Vec<Vec<usize>>, n: usize) -> E2Page {
        E2Page {
            n,
            d: ranks.len() - 1,
            grid_res: 8,
            tol: ZeroTol::default(),
            ranks,
        }
    }

    fn entry(r: usize, source: (usize, usize), target: (usize, usize), x: u8) -> DifferentialEntry {
        DifferentialEntry {
            r,
            source,
            target,
            matrix: vec![vec![x]],
        }
    }

    #[test]
    fn constant_family_page() {
        let f = QuadraticFamily::new(
            ParamDomain::unit_ball(3),
            SymMatrix::from_diag(&[1.0, -1.0]),
            vec![SymMatrix::zeros(2); 3],
        )
        .unwrap();
        let p = compute_e2(&f, 8, ZeroTol::default()).unwrap();
        assert_eq!(p.support(), vec![(0, 1)]);
        assert_eq!(p.to_json()["ranks"]["0,1"], json!(1));
        assert_eq!(p.to_json()["ranks"]["3,0"], json!(0));
    }

    #[test]
    fn table_layout() {
        let p = page(vec![vec![0, 1], vec![0, 0], vec![1, 0]], 2);
        let t = p.text_table();
        let lines: Vec<&str> = t.lines().collect();
        assert!(lines[0].starts_with("j=1"));
        assert!(lines[1].starts_with("j=0"));
        assert_eq!(lines[0].split_whitespace().collect::<Vec<_>>()[2..], ["Z2", "0", "0"]);
        assert_eq!(lines[1].split_whitespace().collect::<Vec<_>>()[2..], ["0", "0", "Z2"]);
    }

    #[test]
    fn no_differentials_means_no_change() {
        let p = page(vec![vec![1, 0], vec![0, 1]], 2);
        let c = collapse_report(&p, &[], &[]);
        assert_eq!(c.e_inf, p.ranks);
        assert!(c.is_determined());
        assert_eq!(c.total, 2);
    }

    #[test]
    fn collapse_cancels_supplied_maps() {
        let p = page(vec![vec![0, 1], vec![0, 0], vec![1, 0]], 2);
        let c = collapse_report(&p, &[entry(2, (0, 1), (2, 0), 1)], &[]);
        assert_eq!(c.total, 0);
        assert!(c.is_determined());
        let c = collapse_report(&p, &[entry(2, (0, 1), (2, 0), 0)], &[]);
        assert_eq!(c.total, 2);
        let c = collapse_report(&p, &[], &[]);
        assert_eq!(c.undetermined, vec![(0, 1), (2, 0)]);
    }

    #[test]
    fn d3_cancellation_on_the_four_by_four_shape() {
        let mut ranks = vec![vec![0; 4]; 4];
        ranks[0][2] = 1;
        ranks[0][3] = 1;
        ranks[3][0] = 1;
        ranks[3][1] = 1;
        let p = page(ranks, 4);
        let d3 = [entry(3, (0, 2), (3, 0), 1), entry(3, (0, 3), (3, 1), 1)];
        let c = collapse_report(&p, &[], &d3);
        assert_eq!(c.e3, p.ranks);
        assert_eq!(c.total, 0);
        assert!(c.is_determined());
        let c = collapse_report(&p, &[], &d3[..1]);
        assert_eq!(c.undetermined, vec![(0, 3), (3, 1)]);
    }

    #[test]
    fn entry_rank() {
        let e = DifferentialEntry {
            r: 2,
            source: (0, 1),
            target: (2, 0),
            matrix: vec![vec![1, 1], vec![1, 1]],
        };
        assert_eq!(e.rank(), 1);
        assert!(!e.is_zero());
    }
}
