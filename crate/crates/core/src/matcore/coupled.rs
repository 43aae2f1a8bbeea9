use crate::error::{Error, Result};
use crate::matrix::{Matrix, NonnegMatrix, INPUT_SLACK};

/// The `2n x 2n` block matrix `[[A - D, D], [D, B - D]]` together with the
/// blocks it was built from.
#[derive(Debug, Clone, PartialEq)]
pub struct CoupledMatrix {
    m: NonnegMatrix,
    a: NonnegMatrix,
    b: NonnegMatrix,
    d: NonnegMatrix,
}

impl CoupledMatrix {
    pub fn matrix(&self) -> &NonnegMatrix {
        &self.m
    }

    pub fn n(&self) -> usize {
        self.a.n()
    }

    /// Recovers `(A, B, D)` exactly.
    pub fn disassemble(&self) -> (NonnegMatrix, NonnegMatrix, NonnegMatrix) {
        (self.a.clone(), self.b.clone(), self.d.clone())
    }

    pub fn top_left(&self) -> Matrix {
        self.m.block(0, 0, self.n())
    }

    pub fn bottom_right(&self) -> Matrix {
        let n = self.n();
        self.m.block(n, n, n)
    }
}

/// `A - D` with entries in `[-INPUT_SLACK, 0)` clamped to zero.
pub(crate) fn admissible_difference(
    a: &NonnegMatrix,
    d: &NonnegMatrix,
    block: &'static str,
) -> Result<NonnegMatrix> {
    let n = a.n();
    let mut out = Matrix::zeros(n);
    for i in 0..n {
        for j in 0..n {
            let v = a[(i, j)] - d[(i, j)];
            if v < -INPUT_SLACK {
                return Err(Error::Inadmissible {
                    block,
                    row: i,
                    col: j,
                    value: v,
                });
            }
            out[(i, j)] = v.max(0.0);
        }
    }
    NonnegMatrix::new(out)
}

pub fn assemble_coupled(
    a: &NonnegMatrix,
    b: &NonnegMatrix,
    d: &NonnegMatrix,
) -> Result<CoupledMatrix> {
    let n = a.n();
    for other in [b, d] {
        if other.n() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                got: other.n(),
            });
        }
    }
    let a_d = admissible_difference(a, d, "A-D")?;
    let b_d = admissible_difference(b, d, "B-D")?;
    let mut m = Matrix::zeros(2 * n);
    m.set_block(0, 0, &a_d);
    m.set_block(0, n, d);
    m.set_block(n, 0, d);
    m.set_block(n, n, &b_d);
    Ok(CoupledMatrix {
        m: NonnegMatrix::new(m)?,
        a: a.clone(),
        b: b.clone(),
        d: d.clone(),
    })
}
