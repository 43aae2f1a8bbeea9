use proptest::prelude::*;

use rds_core::leslie::{
    build_s1_s2, coupling_bounds, enumerate_coupling_class, lattice_size, row_selections,
    validate_leslie, LeslieClass, LeslieCoupling, LeslieMatrix,
};
use rds_core::{Matrix, NonnegMatrix};

fn leslie(n: usize) -> impl Strategy<Value = LeslieMatrix> {
    prop::collection::vec(0.0..1.0f64, n * n).prop_map(move |v| {
        let m = Matrix::from_fn(n, |i, j| {
            if i == 0 || j + 1 == i || (i == n - 1 && j == n - 1) {
                v[i * n + j]
            } else {
                0.0
            }
        });
        validate_leslie(&NonnegMatrix::new(m).unwrap()).unwrap()
    })
}

fn pair() -> impl Strategy<Value = (LeslieMatrix, LeslieMatrix)> {
    (2usize..=5).prop_flat_map(|n| (leslie(n), leslie(n)))
}

fn within(c: &LeslieCoupling, hi: &LeslieCoupling) -> bool {
    c.subdiag
        .iter()
        .zip(&hi.subdiag)
        .all(|(x, h)| *x >= 0.0 && x <= h)
        && c.corner >= 0.0
        && c.corner <= hi.corner
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn streams_stay_admissible((a, b) in pair(), seed in 0u64..1000) {
        let hi = coupling_bounds(&a, &b).unwrap();
        for class in [LeslieClass::Full, LeslieClass::SingleRow] {
            let lattice = lattice_size(&a, &b, class, 2).unwrap().unwrap();
            let all: Vec<_> = enumerate_coupling_class(&a, &b, class, 2, 30, seed).unwrap().collect();
            prop_assert_eq!(all.len() as u64, lattice + 30);
            for c in &all {
                prop_assert!(within(c, &hi));
                if class == LeslieClass::SingleRow {
                    prop_assert!(c.nonzero_rows() <= 1);
                }
                let back = LeslieCoupling::from_matrix(&c.to_matrix()).unwrap();
                prop_assert_eq!(&back, c);
            }
        }
    }

    #[test]
    fn streams_are_reproducible((a, b) in pair(), seed in 0u64..1000) {
        let one: Vec<_> = enumerate_coupling_class(&a, &b, LeslieClass::Full, 1, 20, seed).unwrap().collect();
        let two: Vec<_> = enumerate_coupling_class(&a, &b, LeslieClass::Full, 1, 20, seed).unwrap().collect();
        prop_assert_eq!(one, two);
    }

    #[test]
    fn row_selections_cover_every_choice((a, b) in pair()) {
        let (a, b) = (a.inner().clone(), b.inner().clone());
        let n = a.n();
        let sel = row_selections(&a, &b).unwrap();
        prop_assert_eq!(sel.len(), 1 << n);
        let mut seen: Vec<Vec<bool>> = Vec::new();
        for s in &sel {
            for i in 0..n {
                let src = if s.chooser[i] { &a } else { &b };
                prop_assert_eq!(s.matrix.row(i), src.row(i));
            }
            prop_assert!(!seen.contains(&s.chooser));
            seen.push(s.chooser.clone());
        }
    }

    #[test]
    fn envelope_members_stay_leslie((a, b) in pair()) {
        let (s1, s2) = build_s1_s2(&a, &b).unwrap();
        prop_assert!(validate_leslie(s1.inner()).is_ok());
        prop_assert!(validate_leslie(s2.inner()).is_ok());
        prop_assert_eq!(s1.n(), a.n());
    }
}

#[test]
fn rejects_matrices_off_the_pattern() {
    let m = NonnegMatrix::lit([[0.1, 0.2, 0.3], [0.4, 0.0, 0.5], [0.0, 0.6, 0.7]]);
    assert!(validate_leslie(&m).is_err());
}
