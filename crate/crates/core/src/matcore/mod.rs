//! Dense small-matrix numerics: spectral radius, Schur tests, symmetric
//! eigenpairs, irreducibility and the coupled block matrix.

mod coupled;
mod graph;
mod spectral;
mod symeig;

pub use coupled::{assemble_coupled, CoupledMatrix};
pub use graph::is_irreducible;
pub use spectral::{
    eigenvalues_qr, spectral_radius, spectral_radius_squaring, SpectralMethod, SpectralResult,
    DEFAULT_SCHUR_MARGIN, DEFAULT_TOL,
};
pub use symeig::{is_positive_definite, symmetric_eigen, symmetric_eigen_max, SymmetricEigen};

use crate::error::{Error, Result};
use crate::lpsolve::{self, LinearProgram, LpStatus, Relation, Sense};
use crate::matrix::{Matrix, NonnegMatrix};

/// `true` iff `rho(a) < 1 - margin`.
pub fn is_schur(a: &NonnegMatrix, margin: f64) -> Result<bool> {
    if !(margin >= 0.0) {
        return Err(Error::InvalidArgument(format!(
            "margin must be >= 0, got {margin}"
        )));
    }
    Ok(spectral_radius(a, DEFAULT_TOL)?.rho < 1.0 - margin)
}

/// `true` iff no `w >= 0` with `sum(w) = 1` satisfies `A w >= w`.
pub fn no_supporting_vector(a: &NonnegMatrix, feastol: f64) -> Result<bool> {
    Ok(supporting_vector(a, feastol)?.is_none())
}

/// Some `w >= 0` with `sum(w) = 1` and `A w >= w`, if one exists.
pub fn supporting_vector(a: &NonnegMatrix, feastol: f64) -> Result<Option<Vec<f64>>> {
    let n = a.n();
    let mut lp = LinearProgram::new(n, Sense::Minimize);
    lp.add_constraint(vec![1.0; n], Relation::Eq, 1.0);
    for i in 0..n {
        let mut row = a.row(i).to_vec();
        row[i] -= 1.0;
        lp.add_constraint(row, Relation::Ge, 0.0);
    }
    let out = lpsolve::solve(&lp, feastol)?;
    Ok(match out.status {
        LpStatus::Infeasible => None,
        _ => out.solution,
    })
}

/// Solves `m x = b` by Gaussian elimination with partial pivoting; `None` if
/// a pivot is exactly zero.
pub(crate) fn lu_solve(m: &Matrix, b: &[f64]) -> Option<Vec<f64>> {
    let n = m.n();
    let mut a = m.rows();
    let mut x = b.to_vec();
    for k in 0..n {
        let p = (k..n).max_by(|&i, &j| a[i][k].abs().total_cmp(&a[j][k].abs()))?;
        if a[p][k] == 0.0 {
            return None;
        }
        a.swap(k, p);
        x.swap(k, p);
        for i in (k + 1)..n {
            let f = a[i][k] / a[k][k];
            if f == 0.0 {
                continue;
            }
            for j in k..n {
                a[i][j] -= f * a[k][j];
            }
            x[i] -= f * x[k];
        }
    }
    for k in (0..n).rev() {
        let s: f64 = ((k + 1)..n).map(|j| a[k][j] * x[j]).sum();
        x[k] = (x[k] - s) / a[k][k];
    }
    Some(x)
}
