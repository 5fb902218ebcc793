#![allow(dead_code)]

use qforms::SymMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_sym(n: usize, scale: f64, rng: &mut impl Rng) -> SymMatrix {
    SymMatrix::from_fn(n, |_, _| rng.random_range(-scale..scale))
}

/// Number of eigenvalues of `s` below `x`, from the signs of the pivots of
/// an LDLᵀ factorization of `s − x·I` (Sylvester's law of inertia).
pub fn count_below(s: &SymMatrix, x: f64) -> usize {
    let n = s.n();
    let mut a: Vec<Vec<f64>> = s.to_rows();
    for (i, row) in a.iter_mut().enumerate() {
        row[i] -= x;
    }
    let mut neg = 0;
    for k in 0..n {
        let mut p = a[k][k];
        if p == 0.0 {
            p = -1e-300;
        }
        if p < 0.0 {
            neg += 1;
        }
        for i in (k + 1)..n {
            let l = a[i][k] / p;
            for j in (k + 1)..n {
                a[i][j] -= l * a[k][j];
            }
        }
    }
    neg
}

/// Eigenvalues in descending order by bisection on the inertia count.
pub fn bisection_eigenvalues(s: &SymMatrix) -> Vec<f64> {
    let n = s.n();
    let bound = 1.0 + (0..n)
        .map(|i| (0..n).map(|j| s.get(i, j).abs()).sum::<f64>())
        .fold(0.0, f64::max);
    (0..n)
        .map(|k| {
            // the (k+1)-th largest is the smallest x with at least n−k below
            let (mut lo, mut hi) = (-bound, bound);
            for _ in 0..200 {
                let mid = 0.5 * (lo + hi);
                if count_below(s, mid) >= n - k {
                    hi = mid;
                } else {
                    lo = mid;
                }
            }
            0.5 * (lo + hi)
        })
        .collect()
}

/// Random orthogonal matrix as a product of Givens rotations (row-major).
pub fn random_orthogonal(n: usize, rng: &mut impl Rng) -> Vec<Vec<f64>> {
    let mut q: Vec<Vec<f64>> = (0..n)
        .map(|i| (0..n).map(|j| if i == j { 1.0 } else { 0.0 }).collect())
        .collect();
    for _ in 0..3 * n * n {
        let p = rng.random_range(0..n);
        let r = rng.random_range(0..n);
        if p == r {
            continue;
        }
        let t: f64 = rng.random_range(0.0..std::f64::consts::TAU);
        let (c, s) = (t.cos(), t.sin());
        for row in q.iter_mut() {
            let (x, y) = (row[p], row[r]);
            row[p] = c * x - s * y;
            row[r] = s * x + c * y;
        }
    }
    q
}

/// `Q S Qᵀ`
pub fn conjugate(s: &SymMatrix, q: &[Vec<f64>]) -> SymMatrix {
    let n = s.n();
    SymMatrix::from_fn(n, |i, j| {
        let mut acc = 0.0;
        for k in 0..n {
            for l in 0..n {
                acc += q[i][k] * s.get(k, l) * q[j][l];
            }
        }
        acc
    })
}

pub fn max_abs_diff(a: &SymMatrix, b: &SymMatrix) -> f64 {
    let n = a.n();
    let mut m: f64 = 0.0;
    for i in 0..n {
        for j in 0..n {
            m = m.max((a.get(i, j) - b.get(i, j)).abs());
        }
    }
    m
}

pub fn random_in_ball(d: usize, r: f64, rng: &mut impl Rng) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..d).map(|_| rng.random_range(-r..r)).collect();
        if v.iter().map(|x| x * x).sum::<f64>() <= r * r {
            return v;
        }
    }
}
