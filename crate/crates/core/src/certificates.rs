//! Lyapunov-type certificates for a pair of nonnegative matrices.
//!
//! Copositive certificates (`v >> 0` with linear conditions on `vᵀA`, `vᵀB`)
//! come from one margin LP. Diagonal certificates (`E = diag(e) > 0` making a
//! Stein or Lyapunov form negative definite for both matrices) come from a
//! central cutting-plane search over `e`: every query point that fails yields
//! eigenvector cuts `xᵀF(e)x <= -delta`, which are linear in `e`, and the next
//! query is the Chebyshev centre of the polytope cut out so far.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::leslie::common_right_vector;
use crate::lpsolve::{
    self, strict_feasibility, LinearProgram, LpStatus, Relation, Sense, StrictRow, DEFAULT_FEASTOL,
};
use crate::matcore::{
    is_positive_definite, supporting_vector, symmetric_eigen, symmetric_eigen_max,
};
use crate::matrix::{Matrix, NonnegMatrix, PositiveVector};

/// Slack allowed on the non-strict rows of a joint certificate.
pub const NON_STRICT_SLACK: f64 = 1e-12;
pub const MAX_CUTS: usize = 500;
const E_MIN: f64 = 1e-6;
const E_MAX: f64 = 1e6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CopositiveFlavor {
    Clclf,
    Jlclf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DiagonalFlavor {
    Stein,
    Lyapunov,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CopositiveCert {
    pub flavor: CopositiveFlavor,
    pub vector: PositiveVector,
    pub margin: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagonalCert {
    pub flavor: DiagonalFlavor,
    pub diag: Vec<f64>,
    pub margin: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum CdlfOutcome {
    Found(DiagonalCert),
    /// The accumulated cuts admit no `e` in the normalized box.
    Infeasible {
        cuts: usize,
    },
    /// Cut budget exhausted; `best_lambda` is the smallest worst-case
    /// eigenvalue seen at any query point.
    Undecided {
        cuts: usize,
        best_lambda: f64,
    },
}

impl CdlfOutcome {
    pub fn cert(&self) -> Option<&DiagonalCert> {
        match self {
            CdlfOutcome::Found(c) => Some(c),
            _ => None,
        }
    }
}

fn check_pair(a: &NonnegMatrix, b: &NonnegMatrix) -> Result<usize> {
    if a.n() != b.n() {
        return Err(Error::DimensionMismatch {
            expected: a.n(),
            got: b.n(),
        });
    }
    Ok(a.n())
}

/// Coefficients of `j -> (vᵀX)_j - v_j` as rows over `v`.
fn left_rows(x: &Matrix) -> Vec<Vec<f64>> {
    let n = x.n();
    (0..n)
        .map(|j| {
            let mut c: Vec<f64> = (0..n).map(|i| x[(i, j)]).collect();
            c[j] -= 1.0;
            c
        })
        .collect()
}

/// Rescales `v` so that its smallest entry is 1.
fn normalize_min(v: &[f64], margin: f64) -> (Vec<f64>, f64) {
    let lo = v.iter().cloned().fold(f64::INFINITY, f64::min);
    (v.iter().map(|x| x / lo).collect(), margin / lo)
}

/// `v >> 0` with `vᵀA << vᵀ` and `vᵀB << vᵀ`.
pub fn find_clclf(a: &NonnegMatrix, b: &NonnegMatrix) -> Result<Option<CopositiveCert>> {
    let n = check_pair(a, b)?;
    let rows: Vec<StrictRow> = left_rows(a)
        .into_iter()
        .chain(left_rows(b))
        .map(StrictRow::strict)
        .collect();
    let out = strict_feasibility(&rows, &vec![1.0; n], DEFAULT_FEASTOL)?;
    Ok(out.witness.map(|w| {
        let (v, margin) = normalize_min(&w, out.margin);
        CopositiveCert {
            flavor: CopositiveFlavor::Clclf,
            vector: PositiveVector(v),
            margin,
        }
    }))
}

/// `v >> 0` with `vᵀA <= vᵀ`, `vᵀB <= vᵀ` and `vᵀ(A + B) << 2vᵀ`.
pub fn find_jlclf(a: &NonnegMatrix, b: &NonnegMatrix) -> Result<Option<CopositiveCert>> {
    let n = check_pair(a, b)?;
    let sum = a.add(b)?.scale(0.5);
    let rows: Vec<StrictRow> = left_rows(a)
        .into_iter()
        .chain(left_rows(b))
        .map(StrictRow::non_strict)
        .chain(left_rows(&sum).into_iter().map(StrictRow::strict))
        .collect();
    let out = strict_feasibility(&rows, &vec![1.0; n], DEFAULT_FEASTOL)?;
    let Some(w) = out.witness else {
        return Ok(None);
    };
    // the LP works with (A + B) / 2, report the slack against 2vᵀ
    let (v, margin) = normalize_min(&w, 2.0 * out.margin);
    let cert = CopositiveCert {
        flavor: CopositiveFlavor::Jlclf,
        vector: PositiveVector(v),
        margin,
    };
    Ok(verify_copositive_cert(a, b, &cert).then_some(cert))
}

/// Re-checks a copositive certificate with column sums computed directly.
/// Strict rows need slack `>= margin / 2`; non-strict rows may exceed by
/// `NON_STRICT_SLACK` relative to the row scale.
pub fn verify_copositive_cert(a: &NonnegMatrix, b: &NonnegMatrix, cert: &CopositiveCert) -> bool {
    let n = a.n();
    let v = cert.vector.as_slice();
    if b.n() != n || v.len() != n || !cert.vector.ggt0() || !(cert.margin > 0.0) {
        return false;
    }
    let col = |m: &NonnegMatrix, j: usize| -> (f64, f64) {
        let s: f64 = (0..n).map(|i| v[i] * m[(i, j)]).sum();
        (s, s.abs() + v[j])
    };
    for j in 0..n {
        let (sa, scale_a) = col(a, j);
        let (sb, scale_b) = col(b, j);
        match cert.flavor {
            CopositiveFlavor::Clclf => {
                if v[j] - sa < 0.5 * cert.margin || v[j] - sb < 0.5 * cert.margin {
                    return false;
                }
            }
            CopositiveFlavor::Jlclf => {
                if sa - v[j] > NON_STRICT_SLACK * scale_a || sb - v[j] > NON_STRICT_SLACK * scale_b
                {
                    return false;
                }
                if 2.0 * v[j] - sa - sb < 0.5 * cert.margin {
                    return false;
                }
            }
        }
    }
    true
}

/// The symmetric matrix that must be negative definite: `XᵀEX - E` (Stein)
/// or `(X - I)ᵀE + E(X - I)` (Lyapunov), with `E = diag(e)`.
pub fn constraint_matrix(x: &Matrix, e: &[f64], flavor: DiagonalFlavor) -> Matrix {
    let n = x.n();
    match flavor {
        DiagonalFlavor::Stein => Matrix::from_fn(n, |i, j| {
            let s: f64 = (0..n).map(|k| x[(k, i)] * e[k] * x[(k, j)]).sum();
            if i == j {
                s - e[i]
            } else {
                s
            }
        }),
        DiagonalFlavor::Lyapunov => Matrix::from_fn(n, |i, j| {
            let xm = |r: usize, c: usize| x[(r, c)] - if r == c { 1.0 } else { 0.0 };
            xm(j, i) * e[j] + e[i] * xm(i, j)
        }),
    }
}

/// Coefficients `g` with `zᵀF(e)z = g · e`.
fn cut_coefficients(x: &Matrix, z: &[f64], flavor: DiagonalFlavor) -> Vec<f64> {
    let xz = x.mul_vec(z);
    match flavor {
        DiagonalFlavor::Stein => xz.iter().zip(z).map(|(p, q)| p * p - q * q).collect(),
        DiagonalFlavor::Lyapunov => xz.iter().zip(z).map(|(p, q)| 2.0 * q * (p - q)).collect(),
    }
}

struct CutSearch<'a> {
    mats: [&'a Matrix; 2],
    flavor: DiagonalFlavor,
    delta: f64,
    cuts: Vec<Vec<f64>>,
    best_lambda: f64,
}

impl CutSearch<'_> {
    /// Evaluates both forms at `e`; adds a cut for every eigenvector whose
    /// eigenvalue exceeds `-delta`. Returns the worst eigenvalue.
    fn query(&mut self, e: &[f64]) -> Result<f64> {
        let mut worst = f64::NEG_INFINITY;
        for x in self.mats {
            let eig = symmetric_eigen(&constraint_matrix(x, e, self.flavor))?;
            for (l, z) in eig.values.iter().zip(&eig.vectors) {
                worst = worst.max(*l);
                if *l > -self.delta {
                    self.cuts.push(cut_coefficients(x, z, self.flavor));
                }
            }
        }
        self.best_lambda = self.best_lambda.min(worst);
        Ok(worst)
    }

    fn base_lp(&self, n: usize, with_radius: bool) -> LinearProgram {
        let k = n + usize::from(with_radius);
        let mut lp = LinearProgram::new(k, Sense::Maximize);
        for j in 0..n {
            lp.set_bounds(j, E_MIN, E_MAX);
        }
        let mut sum = vec![1.0; n];
        if with_radius {
            sum.push(0.0);
            lp.set_bounds(n, f64::NEG_INFINITY, n as f64);
            let mut obj = vec![0.0; k];
            obj[n] = 1.0;
            lp.set_objective(obj);
        }
        lp.add_constraint(sum, Relation::Eq, n as f64);
        for g in &self.cuts {
            let mut row = g.clone();
            if with_radius {
                row.push(g.iter().map(|v| v * v).sum::<f64>().sqrt());
            }
            lp.add_constraint(row, Relation::Le, -self.delta);
        }
        lp
    }
}

/// Searches for a common diagonal Lyapunov function of the given flavor.
pub fn find_cdlf(
    a: &NonnegMatrix,
    b: &NonnegMatrix,
    flavor: DiagonalFlavor,
) -> Result<CdlfOutcome> {
    let n = check_pair(a, b)?;
    let scale = 1.0 + a.norm_inf().powi(2).max(b.norm_inf().powi(2));
    let mut search = CutSearch {
        mats: [a.as_matrix(), b.as_matrix()],
        flavor,
        delta: 1e-8 * scale,
        cuts: Vec::new(),
        best_lambda: f64::INFINITY,
    };

    // A vector w >= 0 with Xw >= w makes every coefficient of its cut
    // nonnegative, which no e > 0 can satisfy.
    let mut obstructed = false;
    for x in [a, b] {
        if let Some(w) = supporting_vector(x, DEFAULT_FEASTOL)? {
            search.cuts.push(cut_coefficients(x, &w, flavor));
            obstructed = true;
        }
    }

    let mut probes = Vec::new();
    if !obstructed {
        probes.push(vec![1.0; n]);
        // diag(v ./ w) from a common left and a common right vector
        if let (Some(v), Some(w)) = (find_clclf(a, b)?, common_right_vector(a, b)?) {
            let e: Vec<f64> = v.vector.0.iter().zip(&w.0).map(|(p, q)| p / q).collect();
            let total: f64 = e.iter().sum();
            probes.push(e.iter().map(|x| x * n as f64 / total).collect());
        }
    }
    let try_point = |search: &mut CutSearch, e: Vec<f64>| -> Result<Option<DiagonalCert>> {
        let worst = search.query(&e)?;
        if worst <= -search.delta {
            let cert = DiagonalCert {
                flavor,
                diag: e,
                margin: -worst,
            };
            if verify_diagonal_cert(a, b, &cert) {
                return Ok(Some(cert));
            }
        }
        Ok(None)
    };
    for e in probes {
        if let Some(cert) = try_point(&mut search, e)? {
            return Ok(CdlfOutcome::Found(cert));
        }
    }

    while search.cuts.len() < MAX_CUTS {
        let lp = search.base_lp(n, true);
        let out = lpsolve::solve(&lp, DEFAULT_FEASTOL)?;
        let centre = match out.status {
            LpStatus::Optimal => out.solution.expect("optimal has a solution"),
            LpStatus::Infeasible => {
                return Ok(CdlfOutcome::Infeasible {
                    cuts: search.cuts.len(),
                })
            }
            LpStatus::Unbounded => {
                return Err(Error::LpNumerical("Chebyshev-centre LP unbounded".into()))
            }
        };
        if centre[n] <= 0.0 {
            // no interior left; confirm with the plain cut system
            let plain = lpsolve::solve(&search.base_lp(n, false), DEFAULT_FEASTOL)?;
            return Ok(if plain.status == LpStatus::Infeasible {
                CdlfOutcome::Infeasible {
                    cuts: search.cuts.len(),
                }
            } else {
                CdlfOutcome::Undecided {
                    cuts: search.cuts.len(),
                    best_lambda: search.best_lambda,
                }
            });
        }
        if let Some(cert) = try_point(&mut search, centre[..n].to_vec())? {
            return Ok(CdlfOutcome::Found(cert));
        }
    }
    Ok(CdlfOutcome::Undecided {
        cuts: search.cuts.len(),
        best_lambda: search.best_lambda,
    })
}

/// Both forms must satisfy `lambda_max <= -margin / 2`, confirmed by a
/// Cholesky factorization of `-F - (margin / 2) I` and by Jacobi; the two
/// checks must agree.
pub fn verify_diagonal_cert(a: &NonnegMatrix, b: &NonnegMatrix, cert: &DiagonalCert) -> bool {
    let n = a.n();
    if b.n() != n
        || cert.diag.len() != n
        || !cert.diag.iter().all(|&v| v > 0.0 && v.is_finite())
        || !(cert.margin > 0.0)
    {
        return false;
    }
    let half = 0.5 * cert.margin;
    [a, b].iter().all(|x| {
        let f = constraint_matrix(x.as_matrix(), &cert.diag, cert.flavor);
        let mut shifted = f.scale(-1.0);
        for i in 0..n {
            shifted[(i, i)] -= half;
        }
        let by_factor = is_positive_definite(&shifted);
        let by_jacobi = match symmetric_eigen_max(&f) {
            Ok((l, _)) => l <= -half,
            Err(_) => false,
        };
        by_factor && by_jacobi
    })
}

/// `||(XᵀEX - E) - ((X - I)ᵀE + E(X - I) + (X - I)ᵀE(X - I))||_inf`.
pub fn stein_lyapunov_identity_residual(a: &NonnegMatrix, e: &[f64]) -> Result<f64> {
    let n = a.n();
    if e.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: e.len(),
        });
    }
    let em = Matrix::diag(e);
    let x = a.as_matrix();
    let xm = x.sub(&Matrix::identity(n))?;
    let lhs = x.transpose().matmul(&em)?.matmul(x)?.sub(&em)?;
    let rhs = xm
        .transpose()
        .matmul(&em)?
        .add(&em.matmul(&xm)?)?
        .add(&xm.transpose().matmul(&em)?.matmul(&xm)?)?;
    Ok(lhs.sub(&rhs)?.norm_inf())
}
