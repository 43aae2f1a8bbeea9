use crate::matrix::Matrix;

/// `true` iff the digraph with an edge `i -> j` whenever `a[i][j] > 0` is
/// strongly connected. A 1x1 matrix is irreducible.
pub fn is_irreducible(a: &Matrix) -> bool {
    let n = a.n();
    reaches_all(n, |i, j| a[(i, j)] > 0.0) && reaches_all(n, |i, j| a[(j, i)] > 0.0)
}

fn reaches_all(n: usize, edge: impl Fn(usize, usize) -> bool) -> bool {
    let mut seen = vec![false; n];
    let mut stack = vec![0];
    seen[0] = true;
    let mut count = 1;
    while let Some(i) = stack.pop() {
        for j in 0..n {
            if !seen[j] && edge(i, j) {
                seen[j] = true;
                count += 1;
                stack.push(j);
            }
        }
    }
    count == n
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matrix::NonnegMatrix;
    use proptest::prelude::*;

    /// Independent check: (I + A)^(n-1) has all entries positive.
    fn irreducible_by_powers(a: &Matrix) -> bool {
        let n = a.n();
        let pattern = Matrix::from_fn(n, |i, j| if i == j || a[(i, j)] > 0.0 { 1.0 } else { 0.0 });
        let mut acc = Matrix::identity(n);
        for _ in 0..n.saturating_sub(1) {
            acc = acc.matmul(&pattern).unwrap();
            // keep it a 0/1 pattern so nothing overflows
            acc = Matrix::from_fn(n, |i, j| if acc[(i, j)] > 0.0 { 1.0 } else { 0.0 });
        }
        acc.as_slice().iter().all(|&v| v > 0.0)
    }

    #[test]
    fn examples() {
        assert!(is_irreducible(&NonnegMatrix::lit([[0.0, 1.0], [1.0, 0.0]])));
        let upper = NonnegMatrix::lit([[0.1, 1.0], [0.0, 0.0]]);
        assert!(!is_irreducible(&upper));
        assert!(!irreducible_by_powers(&upper));
        let two_cycle = NonnegMatrix::lit([[0.0, 0.75], [1.0, 0.0]]);
        assert!(is_irreducible(&two_cycle));
        assert!(irreducible_by_powers(&two_cycle));
        assert!(is_irreducible(&NonnegMatrix::lit([[0.0]])));
    }

    proptest! {
        #[test]
        fn matches_matrix_power_oracle(n in 1usize..7, bits in prop::collection::vec(0u8..4, 36)) {
            // roughly one entry in four is positive
            let a = Matrix::from_fn(n, |i, j| if bits[i * 6 + j] == 0 { 1.0 } else { 0.0 });
            prop_assert_eq!(is_irreducible(&a), irreducible_by_powers(&a));
        }
    }
}
