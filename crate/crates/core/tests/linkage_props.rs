mod common;

use common::*;
use proptest::prelude::*;
use qforms::lab::{generic_zeta, hopf_family, HopfFamilySpec};
use qforms::linkage::{close_relative_curve, mod2_linking, parities_over_directions, ArcChoice, PolyLink};
use qforms::strata::{trace_all, DegeneracyCurve, TraceOptions};
use rand::Rng;

/// Circle of radius `r` about `c` in the plane of the orthonormal pair
/// `(u, v)`.
fn circle(c: [f64; 3], u: [f64; 3], v: [f64; 3], r: f64, n: usize) -> Vec<Vec<f64>> {
    (0..n)
        .map(|k| {
            let a = std::f64::consts::TAU * k as f64 / n as f64;
            (0..3).map(|i| c[i] + r * (a.cos() * u[i] + a.sin() * v[i])).collect()
        })
        .collect()
}

fn rotate(q: &[Vec<f64>], p: &[f64]) -> Vec<f64> {
    (0..3).map(|i| (0..3).map(|k| q[i][k] * p[k]).sum()).collect()
}

/// A Hopf link (`linked`) or a split pair of circles, rigidly moved.
fn two_circles(linked: bool, seed: u64, n: usize) -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
    let mut r = rng(seed);
    let q = random_orthogonal(3, &mut r);
    let shift: Vec<f64> = (0..3).map(|_| r.random_range(-5.0..5.0)).collect();
    let a = circle([0.0; 3], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0], 1.0, n);
    let b_center = if linked { [1.0, 0.0, 0.0] } else { [0.0, 0.0, 2.5] };
    let b = circle(b_center, [1.0, 0.0, 0.0], [0.0, 0.0, 1.0], 1.0, n);
    let mv = |c: Vec<Vec<f64>>| -> Vec<Vec<f64>> {
        c.iter().map(|p| rotate(&q, p).iter().zip(&shift).map(|(x, s)| x + s).collect()).collect()
    };
    (mv(a), mv(b))
}

fn subdivide(c: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let n = c.len();
    (0..n)
        .flat_map(|k| {
            let (p, q) = (&c[k], &c[(k + 1) % n]);
            [p.clone(), p.iter().zip(q).map(|(a, b)| 0.5 * (a + b)).collect()]
        })
        .collect()
}

fn jitter(c: &[Vec<f64>], amount: f64, r: &mut impl Rng) -> Vec<Vec<f64>> {
    c.iter().map(|p| p.iter().map(|x| x + r.random_range(-amount..amount)).collect()).collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn parity_is_a_link_invariant(linked in any::<bool>(), seed in any::<u64>(), n in 12usize..80) {
        let (a, b) = two_circles(linked, seed, n);
        let expected = linked as u8;
        let link = PolyLink::new(&a, &b).unwrap();
        // ten projections
        let ps = parities_over_directions(&link, seed ^ 1, 10).unwrap();
        prop_assert!(ps.iter().all(|&p| p == expected), "{:?}", ps);
        // symmetry
        prop_assert_eq!(mod2_linking(&link.swapped()).unwrap().lk_mod2, expected);
        // subdivision
        let fine = PolyLink::new(&subdivide(&a), &subdivide(&b)).unwrap();
        prop_assert_eq!(mod2_linking(&fine).unwrap().lk_mod2, expected);
        // jitter at 1e-4 of the scale
        let mut r = rng(seed ^ 2);
        let amount = 1e-4 * link.scale();
        let jit = PolyLink::new(&jitter(&a, amount, &mut r), &jitter(&b, amount, &mut r)).unwrap();
        prop_assert_eq!(mod2_linking(&jit).unwrap().lk_mod2, expected);
    }
}

#[test]
fn traced_hopf_curves_are_linked() {
    let f = hopf_family(&HopfFamilySpec {
        zeta: Some(generic_zeta(0.05)),
        ..HopfFamilySpec::default()
    })
    .unwrap();
    let opts = TraceOptions::default();
    let c: Vec<Vec<DegeneracyCurve>> = (1..=3).map(|j| trace_all(&f, j, 48, &opts).unwrap()).collect();
    assert_eq!(c[1].len(), 1);
    let mut r = rng(3);
    for other in [&c[0], &c[2]] {
        for arc in [ArcChoice::Shortest, ArcChoice::Complement, ArcChoice::Through(vec![0.3, -0.8, 0.5])] {
            let mut parity = 0;
            for x in other.iter() {
                let link = PolyLink::from_curves(&c[1][0], x, f.domain(), &arc).unwrap();
                let ps = parities_over_directions(&link, 17, 10).unwrap();
                assert!(ps.windows(2).all(|w| w[0] == w[1]));
                parity ^= ps[0];
                // jitter and subdivision of the traced loop
                let closed = close_relative_curve(x, f.domain()).unwrap();
                let amount = 1e-4 * link.scale();
                let jit = PolyLink::new(&jitter(&c[1][0].points, amount, &mut r), &closed).unwrap();
                assert_eq!(mod2_linking(&jit).unwrap().lk_mod2, ps[0]);
                let sub = PolyLink::new(&subdivide(&c[1][0].points), &closed).unwrap();
                assert_eq!(mod2_linking(&sub).unwrap().lk_mod2, ps[0]);
            }
            assert_eq!(parity, 1, "{arc:?}");
        }
    }
}
