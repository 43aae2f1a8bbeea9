use proptest::prelude::*;

use rds_core::lpsolve::DEFAULT_FEASTOL;
use rds_core::matcore::{
    assemble_coupled, is_irreducible, is_schur, no_supporting_vector, spectral_radius,
    supporting_vector, DEFAULT_TOL,
};
use rds_core::{Matrix, NonnegMatrix};

fn rho(a: &NonnegMatrix) -> f64 {
    spectral_radius(a, DEFAULT_TOL).unwrap().rho
}

fn nonneg(n: usize) -> impl Strategy<Value = NonnegMatrix> {
    prop::collection::vec(prop_oneof![Just(0.0), 0.0..2.0f64], n * n)
        .prop_map(move |v| NonnegMatrix::new(Matrix::from_fn(n, |i, j| v[i * n + j])).unwrap())
}

fn sized() -> impl Strategy<Value = NonnegMatrix> {
    (1usize..=6).prop_flat_map(nonneg)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn two_by_two_matches_closed_form(a in nonneg(2)) {
        // off-diagonal product is >= 0, so the discriminant is nonnegative
        let (p, q, r, s) = (a[(0, 0)], a[(0, 1)], a[(1, 0)], a[(1, 1)]);
        let t = p + s;
        let det = p * s - q * r;
        let exact = (t + (t * t - 4.0 * det).max(0.0).sqrt()) / 2.0;
        prop_assert!((rho(&a) - exact).abs() <= 1e-8 * (1.0 + exact));
    }

    #[test]
    fn radius_lies_between_row_sum_bounds(a in sized()) {
        let sums: Vec<f64> = (0..a.n()).map(|i| a.row(i).iter().sum()).collect();
        let lo = sums.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = sums.iter().cloned().fold(0.0, f64::max);
        let r = rho(&a);
        prop_assert!(r >= lo - 1e-8 * (1.0 + hi) && r <= hi + 1e-8 * (1.0 + hi), "{lo} <= {r} <= {hi}");
    }

    #[test]
    fn radius_is_transpose_invariant(a in sized()) {
        let t = NonnegMatrix::new(a.transpose()).unwrap();
        let (r, rt) = (rho(&a), rho(&t));
        prop_assert!((r - rt).abs() <= 1e-7 * (1.0 + r));
    }

    #[test]
    fn radius_is_homogeneous(a in sized(), c in 0.01..10.0f64) {
        let r = rho(&a);
        prop_assert!((rho(&a.scale(c)) - c * r).abs() <= 1e-7 * (1.0 + c * r));
    }

    #[test]
    fn radius_is_monotone(a in sized(), bump in 0.0..1.0f64) {
        let n = a.n();
        let bigger = NonnegMatrix::new(Matrix::from_fn(n, |i, j| a[(i, j)] + bump * ((i + 2 * j) % 3) as f64 / 2.0)).unwrap();
        prop_assert!(rho(&bigger) >= rho(&a) - 1e-8 * (1.0 + rho(&a)));
    }

    #[test]
    fn uncoupled_radius_is_the_larger_block(a in sized(), seed in 0u64..1000) {
        let n = a.n();
        let b = NonnegMatrix::new(Matrix::from_fn(n, |i, j| ((i * 7 + j * 3 + seed as usize) % 5) as f64 / 4.0)).unwrap();
        let m = assemble_coupled(&a, &b, &NonnegMatrix::zeros(n)).unwrap();
        let expect = rho(&a).max(rho(&b));
        prop_assert!((rho(m.matrix()) - expect).abs() <= 1e-7 * (1.0 + expect));
        let (a2, b2, d2) = m.disassemble();
        prop_assert_eq!(a2, a);
        prop_assert_eq!(b2, b);
        prop_assert_eq!(d2, NonnegMatrix::zeros(n));
    }

    #[test]
    fn supporting_vector_matches_schur_test(a in sized(), target in 0.5..1.5f64) {
        let r0 = rho(&a);
        // rescaling a (near) nilpotent matrix would blow entries up to ~1e15
        prop_assume!(r0 > 1e-3);
        let a = a.scale(target / r0);
        prop_assume!((target - 1.0).abs() > 1e-3);
        let schur = is_schur(&a, 0.0).unwrap();
        prop_assert_eq!(schur, target < 1.0);
        prop_assert_eq!(no_supporting_vector(&a, DEFAULT_FEASTOL).unwrap(), schur);
        if let Some(w) = supporting_vector(&a, DEFAULT_FEASTOL).unwrap() {
            let aw = a.mul_vec(&w);
            prop_assert!(w.iter().all(|&x| x >= -1e-12));
            prop_assert!(aw.iter().zip(&w).all(|(p, q)| p + 1e-8 >= *q));
        }
    }
}

#[test]
fn irreducibility_examples() {
    assert!(is_irreducible(&NonnegMatrix::lit([[0.0, 1.0], [1.0, 0.0]])));
    assert!(!is_irreducible(&NonnegMatrix::lit([
        [1.0, 1.0],
        [0.0, 1.0]
    ])));
    let cycle = NonnegMatrix::lit([[0.0, 1.0, 0.0], [0.0, 0.0, 1.0], [1.0, 0.0, 0.0]]);
    assert!(is_irreducible(&cycle));
    assert!((rho(&cycle) - 1.0).abs() < 1e-9);
}
