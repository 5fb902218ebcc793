mod common;

use common::*;
use proptest::prelude::*;
use qforms::lab::{hopf_family, HopfFamilySpec};
use qforms::symspec::{eigen_sorted, index_counts, FamilyJson};
use qforms::{ParamDomain, QuadraticFamily, SymMatrix};

fn sym_strategy(max_n: usize) -> impl Strategy<Value = SymMatrix> {
    (1..=max_n).prop_flat_map(|n| {
        prop::collection::vec(-10.0f64..10.0, n * n).prop_map(move |v| SymMatrix::from_fn(n, |i, j| v[i * n + j]))
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn reconstruction_and_orthonormality(s in sym_strategy(8)) {
        let e = eigen_sorted(&s).unwrap();
        let scale = 1.0 + s.max_abs();
        prop_assert!(max_abs_diff(&e.reconstruct(), &s) <= 1e-9 * scale);
        prop_assert!(e.orthonormality_defect() <= 1e-12);
        prop_assert!(e.values.windows(2).all(|w| w[0] >= w[1]));
    }

    #[test]
    fn matches_the_inertia_bisection_oracle(s in sym_strategy(4)) {
        let e = eigen_sorted(&s).unwrap();
        let oracle = bisection_eigenvalues(&s);
        for (a, b) in e.values.iter().zip(&oracle) {
            prop_assert!((a - b).abs() <= 1e-8 * (1.0 + s.max_abs()), "{a} vs {b}");
        }
        let sum: f64 = e.values.iter().sum();
        prop_assert!((sum - s.trace()).abs() <= 1e-10 * (1.0 + s.frobenius()));
    }

    #[test]
    fn positive_scaling_scales_the_spectrum(s in sym_strategy(6), c in 0.01f64..100.0) {
        let a = eigen_sorted(&s).unwrap().values;
        let b = eigen_sorted(&s.scaled(c)).unwrap().values;
        for (x, y) in a.iter().zip(&b) {
            prop_assert!((c * x - y).abs() <= 1e-9 * c * (1.0 + s.max_abs()));
        }
    }

    #[test]
    fn inertia_is_invariant_under_orthogonal_conjugation(s in sym_strategy(6), seed in any::<u64>()) {
        let mut r = rng(seed);
        let q = random_orthogonal(s.n(), &mut r);
        let t = conjugate(&s, &q);
        let tol = 1e-6 * (1.0 + s.max_abs());
        let a = index_counts(&s, tol).unwrap();
        let b = index_counts(&t, tol).unwrap();
        // eigenvalues within 1e-8 of the threshold could legitimately flip
        let near = eigen_sorted(&s).unwrap().values.iter().any(|l| (l.abs() - tol).abs() < 1e-8 * (1.0 + s.max_abs()));
        prop_assume!(!near);
        prop_assert_eq!(a, b);
    }

    #[test]
    fn hopf_spectrum_is_doubled(p in prop::array::uniform3(-0.577f64..0.577), a in prop::array::uniform3(-2.0f64..2.0)) {
        prop_assume!(a.iter().map(|x| x * x).sum::<f64>() > 1e-4);
        let f = hopf_family(&HopfFamilySpec { a, ..HopfFamilySpec::default() }).unwrap();
        let e = eigen_sorted(&f.eval(&p).unwrap()).unwrap();
        let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
        let np = p.iter().map(|x| x * x).sum::<f64>().sqrt();
        let v = &e.values;
        prop_assert!((v[0] - v[1]).abs() <= 1e-9);
        prop_assert!((v[2] - v[3]).abs() <= 1e-9);
        prop_assert!((v[0] + v[3]).abs() <= 1e-9);
        prop_assert!((v[0] - na * np).abs() <= 1e-9);
    }
}

#[test]
fn family_json_round_trip() {
    let f = QuadraticFamily::new(
        ParamDomain::cube(vec![-1.0, 0.0], vec![1.0, 2.0]).unwrap(),
        SymMatrix::from_diag(&[1.0, -0.5]),
        vec![SymMatrix::identity(2), SymMatrix::from_fn(2, |i, j| (i + j) as f64)],
    )
    .unwrap();
    let text = serde_json::to_string(&FamilyJson::from(&f)).unwrap();
    let back = QuadraticFamily::from_json_str(&text).unwrap();
    assert_eq!(back, f);
}

#[test]
fn thousand_random_reconstructions_up_to_dimension_eight() {
    let mut r = rng(11);
    for k in 0..1000 {
        let n = 1 + k % 8;
        let s = random_sym(n, 5.0, &mut r);
        let e = eigen_sorted(&s).unwrap();
        assert!(max_abs_diff(&e.reconstruct(), &s) <= 1e-9, "case {k}");
    }
}
