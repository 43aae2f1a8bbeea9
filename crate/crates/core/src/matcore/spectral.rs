//! Spectral radius of nonnegative matrices.
//!
//! The primary route reduces the matrix to upper Hessenberg form with
//! Householder reflections and runs the Francis double-shift QR iteration,
//! taking the eigenvalue of largest modulus. The cross-check is normalized
//! repeated squaring, `rho = lim ||A^(2^k)||^(1/2^k)`, which for nonnegative
//! matrices is entrywise forward stable and copes with reducible, periodic
//! and defective cases where QR loses accuracy (a defective eigenvalue of
//! multiplicity `m` is only resolved to about `eps^(1/m)` by QR).
//!
//! When the two routes agree within `10 * tol * (1 + rho)` the QR value is
//! reported; otherwise the squaring value is reported and the gap is kept in
//! [`SpectralResult::cross_check_gap`].

use serde::{Deserialize, Serialize};

use super::{is_irreducible, lu_solve};
use crate::error::{Error, Result};
use crate::matrix::{norm_inf, Matrix, NonnegMatrix, PositiveVector};

pub const DEFAULT_TOL: f64 = 1e-10;
pub const DEFAULT_SCHUR_MARGIN: f64 = 1e-9;

const MAX_SQUARINGS: usize = 200;
const QR_MAX_ITS_PER_ROOT: usize = 120;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SpectralMethod {
    Qr,
    PowerSquaring,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectralResult {
    pub rho: f64,
    pub method: SpectralMethod,
    /// Convergence residual of the squaring iteration (difference of the last
    /// two estimates).
    pub residual: f64,
    /// `|rho_qr - rho_squaring|`, or `None` if QR failed to converge.
    pub cross_check_gap: Option<f64>,
    /// Positive Perron vector (unit max-norm), present for irreducible input.
    pub perron_vector: Option<PositiveVector>,
}

pub fn spectral_radius(a: &NonnegMatrix, tol: f64) -> Result<SpectralResult> {
    if !(tol > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "tol must be > 0, got {tol}"
        )));
    }
    let (rho_sq, residual) = spectral_radius_squaring(a, tol)?;
    let qr = eigenvalues_qr(a.as_matrix()).ok().map(|eigs| {
        eigs.iter()
            .map(|&(re, im)| re.hypot(im))
            .fold(0.0, f64::max)
    });
    let (rho, method, gap) = match qr {
        Some(rho_qr) => {
            let gap = (rho_qr - rho_sq).abs();
            if gap <= 10.0 * tol * (1.0 + rho_sq) {
                (rho_qr, SpectralMethod::Qr, Some(gap))
            } else {
                (rho_sq, SpectralMethod::PowerSquaring, Some(gap))
            }
        }
        None => (rho_sq, SpectralMethod::PowerSquaring, None),
    };
    let perron_vector = if is_irreducible(a) {
        Some(perron_vector(a, rho, tol)?)
    } else {
        None
    };
    Ok(SpectralResult {
        rho,
        method,
        residual,
        cross_check_gap: gap,
        perron_vector,
    })
}

/// Spectral radius by normalized repeated squaring. Returns `(rho, residual)`.
pub fn spectral_radius_squaring(a: &NonnegMatrix, tol: f64) -> Result<(f64, f64)> {
    let mut b = a.as_matrix().clone();
    // log ||A^(2^k)||, k = 0
    let norm0 = b.norm_inf();
    if norm0 == 0.0 {
        return Ok((0.0, 0.0));
    }
    b = b.scale(1.0 / norm0);
    let mut log_norm = norm0.ln();
    let mut power = 1.0_f64;
    let mut prev = norm0;
    let mut residual = f64::INFINITY;
    // periodic patterns can make two successive estimates coincide exactly,
    // so one small step is not enough
    let mut small_steps = 0;
    for k in 1..=MAX_SQUARINGS {
        let sq = b.matmul(&b)?;
        let nrm = sq.norm_inf();
        if nrm == 0.0 {
            return Ok((0.0, 0.0));
        }
        b = sq.scale(1.0 / nrm);
        log_norm = 2.0 * log_norm + nrm.ln();
        power *= 2.0;
        let est = (log_norm / power).exp();
        residual = (est - prev).abs();
        prev = est;
        if residual <= 0.25 * tol * est.max(1.0) {
            small_steps += 1;
        } else {
            small_steps = 0;
        }
        if k >= 4 && small_steps >= 2 {
            return Ok((est, residual));
        }
    }
    Err(Error::NonConvergence {
        what: "repeated squaring",
        iterations: MAX_SQUARINGS,
        estimate: prev,
        residual,
    })
}

/// All eigenvalues `(re, im)` of a general real square matrix.
pub fn eigenvalues_qr(a: &Matrix) -> Result<Vec<(f64, f64)>> {
    let mut h = hessenberg(a);
    hqr(&mut h)
}

/// Householder reduction to upper Hessenberg form (similarity transform).
fn hessenberg(a: &Matrix) -> Vec<Vec<f64>> {
    let n = a.n();
    let mut h = a.rows();
    if n < 3 {
        return h;
    }
    for k in 0..n - 2 {
        let mut alpha = ((k + 1)..n).map(|i| h[i][k] * h[i][k]).sum::<f64>().sqrt();
        if alpha == 0.0 {
            continue;
        }
        if h[k + 1][k] > 0.0 {
            alpha = -alpha;
        }
        let mut v: Vec<f64> = ((k + 1)..n).map(|i| h[i][k]).collect();
        v[0] -= alpha;
        let vnorm2: f64 = v.iter().map(|x| x * x).sum();
        if vnorm2 == 0.0 {
            continue;
        }
        // rows: H <- (I - 2vv'/v'v) H
        for j in 0..n {
            let s: f64 = v
                .iter()
                .enumerate()
                .map(|(i, vi)| vi * h[k + 1 + i][j])
                .sum();
            let f = 2.0 * s / vnorm2;
            for (i, vi) in v.iter().enumerate() {
                h[k + 1 + i][j] -= f * vi;
            }
        }
        // columns: H <- H (I - 2vv'/v'v)
        for row in h.iter_mut() {
            let s: f64 = v
                .iter()
                .enumerate()
                .map(|(j, vj)| row[k + 1 + j] * vj)
                .sum();
            let f = 2.0 * s / vnorm2;
            for (j, vj) in v.iter().enumerate() {
                row[k + 1 + j] -= f * vj;
            }
        }
        h[k + 1][k] = alpha;
        for row in h.iter_mut().skip(k + 2) {
            row[k] = 0.0;
        }
    }
    h
}

fn sign(a: f64, b: f64) -> f64 {
    if b >= 0.0 {
        a.abs()
    } else {
        -a.abs()
    }
}

/// Francis double-shift QR on an upper Hessenberg matrix (destroys `a`).
fn hqr(a: &mut [Vec<f64>]) -> Result<Vec<(f64, f64)>> {
    let n = a.len();
    let mut wr = vec![0.0; n];
    let mut wi = vec![0.0; n];
    let mut anorm = 0.0;
    for i in 0..n {
        for j in i.saturating_sub(1)..n {
            anorm += a[i][j].abs();
        }
    }
    let mut nn = n as isize - 1;
    let mut t = 0.0;
    while nn >= 0 {
        let nu = nn as usize;
        let mut its = 0;
        loop {
            // look for a single small subdiagonal element
            let mut l = nu;
            while l >= 1 {
                let mut s = a[l - 1][l - 1].abs() + a[l][l].abs();
                if s == 0.0 {
                    s = anorm;
                }
                if a[l][l - 1].abs() + s == s {
                    a[l][l - 1] = 0.0;
                    break;
                }
                l -= 1;
            }
            let mut x = a[nu][nu];
            if l == nu {
                wr[nu] = x + t;
                wi[nu] = 0.0;
                nn -= 1;
                break;
            }
            let mut y = a[nu - 1][nu - 1];
            let mut w = a[nu][nu - 1] * a[nu - 1][nu];
            if l + 1 == nu {
                let p = 0.5 * (y - x);
                let q = p * p + w;
                let z = q.abs().sqrt();
                x += t;
                if q >= 0.0 {
                    let z = p + sign(z, p);
                    wr[nu - 1] = x + z;
                    wr[nu] = if z != 0.0 { x - w / z } else { x + z };
                    wi[nu - 1] = 0.0;
                    wi[nu] = 0.0;
                } else {
                    wr[nu - 1] = x + p;
                    wr[nu] = x + p;
                    wi[nu - 1] = -z;
                    wi[nu] = z;
                }
                nn -= 2;
                break;
            }
            if its == QR_MAX_ITS_PER_ROOT {
                return Err(Error::NonConvergence {
                    what: "Hessenberg QR",
                    iterations: its,
                    estimate: f64::NAN,
                    residual: a[nu][nu - 1].abs(),
                });
            }
            if its > 0 && its % 10 == 0 {
                // exceptional shift
                t += x;
                for (i, row) in a.iter_mut().enumerate().take(nu + 1) {
                    row[i] -= x;
                }
                let s = a[nu][nu - 1].abs() + a[nu - 1][nu - 2].abs();
                x = 0.75 * s;
                y = x;
                w = -0.4375 * s * s;
            }
            its += 1;
            // form shift and look for two consecutive small subdiagonal elements
            let mut m = nu - 2;
            let (mut p, mut q, mut r);
            loop {
                let z = a[m][m];
                let rr = x - z;
                let ss = y - z;
                p = (rr * ss - w) / a[m + 1][m] + a[m][m + 1];
                q = a[m + 1][m + 1] - z - rr - ss;
                r = a[m + 2][m + 1];
                let s = p.abs() + q.abs() + r.abs();
                p /= s;
                q /= s;
                r /= s;
                if m == l {
                    break;
                }
                let u = a[m][m - 1].abs() * (q.abs() + r.abs());
                let v = p.abs() * (a[m - 1][m - 1].abs() + z.abs() + a[m + 1][m + 1].abs());
                if u + v == v {
                    break;
                }
                m -= 1;
            }
            for i in (m + 2)..=nu {
                a[i][i - 2] = 0.0;
                if i != m + 2 {
                    a[i][i - 3] = 0.0;
                }
            }
            // double QR step on rows l..=nn and columns m..=nn
            let mut k = m;
            while k < nu {
                if k != m {
                    p = a[k][k - 1];
                    q = a[k + 1][k - 1];
                    r = 0.0;
                    if k + 1 != nu {
                        r = a[k + 2][k - 1];
                    }
                    x = p.abs() + q.abs() + r.abs();
                    if x != 0.0 {
                        p /= x;
                        q /= x;
                        r /= x;
                    }
                }
                let s = sign((p * p + q * q + r * r).sqrt(), p);
                if s != 0.0 {
                    if k == m {
                        if l != m {
                            a[k][k - 1] = -a[k][k - 1];
                        }
                    } else {
                        a[k][k - 1] = -s * x;
                    }
                    p += s;
                    x = p / s;
                    y = q / s;
                    let z = r / s;
                    q /= p;
                    r /= p;
                    for j in k..=nu {
                        let mut pp = a[k][j] + q * a[k + 1][j];
                        if k + 1 != nu {
                            pp += r * a[k + 2][j];
                            a[k + 2][j] -= pp * z;
                        }
                        a[k + 1][j] -= pp * y;
                        a[k][j] -= pp * x;
                    }
                    let mmin = if nu < k + 3 { nu } else { k + 3 };
                    for row in a.iter_mut().take(mmin + 1).skip(l) {
                        let mut pp = x * row[k] + y * row[k + 1];
                        if k + 1 != nu {
                            pp += z * row[k + 2];
                            row[k + 2] -= pp * r;
                        }
                        row[k + 1] -= pp * q;
                        row[k] -= pp;
                    }
                }
                k += 1;
            }
        }
    }
    Ok(wr.into_iter().zip(wi).collect())
}

/// Perron vector of an irreducible nonnegative matrix by shifted inverse
/// iteration, normalized to unit max-norm.
fn perron_vector(a: &NonnegMatrix, rho: f64, tol: f64) -> Result<PositiveVector> {
    let n = a.n();
    if n == 1 {
        return Ok(PositiveVector(vec![1.0]));
    }
    let target = tol * (1.0 + rho);
    let mut x = vec![1.0 / n as f64; n];
    let mut residual = f64::INFINITY;
    for rel in [1e-9, 1e-7, 1e-5] {
        let sigma = rho + rel * (1.0 + rho);
        let mut shifted = a.as_matrix().scale(-1.0);
        for i in 0..n {
            shifted[(i, i)] += sigma;
        }
        for _ in 0..8 {
            let Some(y) = lu_solve(&shifted, &x) else {
                break;
            };
            let scale = norm_inf(&y);
            if scale == 0.0 || !scale.is_finite() {
                break;
            }
            x = y.iter().map(|v| (v / scale).abs()).collect();
            let ax = a.mul_vec(&x);
            residual = ax
                .iter()
                .zip(&x)
                .map(|(p, q)| (p - rho * q).abs())
                .fold(0.0, f64::max);
            if residual <= target && x.iter().all(|&v| v > 0.0) {
                return Ok(PositiveVector(x));
            }
        }
    }
    Err(Error::NonConvergence {
        what: "Perron vector inverse iteration",
        iterations: 24,
        estimate: rho,
        residual,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Largest root modulus of `l^3 + c2 l^2 + c1 l + c0` by the closed-form
    /// (Cardano / trigonometric) cubic formulas.
    fn cubic_max_modulus(c2: f64, c1: f64, c0: f64) -> f64 {
        // depressed cubic t^3 + p t + q, l = t - c2/3
        let shift = -c2 / 3.0;
        let p = c1 - c2 * c2 / 3.0;
        let q = 2.0 * c2.powi(3) / 27.0 - c2 * c1 / 3.0 + c0;
        let disc = (q / 2.0).powi(2) + (p / 3.0).powi(3);
        if disc > 0.0 {
            let u = (-q / 2.0 + disc.sqrt()).cbrt();
            let v = (-q / 2.0 - disc.sqrt()).cbrt();
            let real = u + v + shift;
            let re = -(u + v) / 2.0 + shift;
            let im = (u - v) * 3f64.sqrt() / 2.0;
            real.abs().max(re.hypot(im))
        } else {
            let r = (-p / 3.0).sqrt();
            let phi = (-q / (2.0 * r.powi(3))).clamp(-1.0, 1.0).acos();
            (0..3)
                .map(|k| {
                    (2.0 * r * ((phi + 2.0 * std::f64::consts::PI * k as f64) / 3.0).cos() + shift)
                        .abs()
                })
                .fold(0.0, f64::max)
        }
    }

    fn char_poly_3(m: &Matrix) -> (f64, f64, f64) {
        let a = |i, j| m[(i, j)];
        let tr = a(0, 0) + a(1, 1) + a(2, 2);
        let minors = a(0, 0) * a(1, 1) - a(0, 1) * a(1, 0) + a(0, 0) * a(2, 2) - a(0, 2) * a(2, 0)
            + a(1, 1) * a(2, 2)
            - a(1, 2) * a(2, 1);
        let det = a(0, 0) * (a(1, 1) * a(2, 2) - a(1, 2) * a(2, 1))
            - a(0, 1) * (a(1, 0) * a(2, 2) - a(1, 2) * a(2, 0))
            + a(0, 2) * (a(1, 0) * a(2, 1) - a(1, 1) * a(2, 0));
        (-tr, minors, -det)
    }

    fn leslie_a() -> NonnegMatrix {
        NonnegMatrix::lit([[0.1, 0.85, 0.15], [0.9, 0.0, 0.0], [0.0, 0.7, 0.2]])
    }

    #[test]
    fn scalar() {
        let r = spectral_radius(&NonnegMatrix::lit([[0.5]]), DEFAULT_TOL).unwrap();
        assert!((r.rho - 0.5).abs() < 1e-15);
        assert_eq!(r.perron_vector, Some(PositiveVector(vec![1.0])));
    }

    #[test]
    fn upper_triangular_example() {
        let a = NonnegMatrix::lit([[0.1, 1.0], [0.0, 0.0]]);
        let r = spectral_radius(&a, DEFAULT_TOL).unwrap();
        assert!((r.rho - 0.1).abs() < 1e-10, "{r:?}");
        assert!(r.perron_vector.is_none());
    }

    #[test]
    fn leslie_three_by_three_matches_cubic_formula() {
        let a = leslie_a();
        let (c2, c1, c0) = char_poly_3(&a);
        // coefficients of the printed matrix, computed by hand
        assert!((c2 + 0.3).abs() < 1e-15 && (c1 + 0.745).abs() < 1e-15);
        assert!((c0 - 0.0585).abs() < 1e-15);
        let exact = cubic_max_modulus(c2, c1, c0);
        let r = spectral_radius(&a, DEFAULT_TOL).unwrap();
        assert!(r.rho < 1.0);
        assert!((r.rho - exact).abs() < 1e-10, "{} vs {}", r.rho, exact);
        assert_eq!(r.method, SpectralMethod::Qr);
        let x = r.perron_vector.unwrap();
        assert!(x.ggt0());
        let ax = a.mul_vec(x.as_slice());
        for (p, q) in ax.iter().zip(x.as_slice()) {
            assert!((p - r.rho * q).abs() <= DEFAULT_TOL * (1.0 + r.rho));
        }
    }

    #[test]
    fn nilpotent_is_exactly_zero() {
        let a = NonnegMatrix::lit([[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0]]);
        let r = spectral_radius(&a, DEFAULT_TOL).unwrap();
        assert_eq!(r.rho, 0.0);
    }

    #[test]
    fn periodic_and_defective_cases() {
        let cyc = NonnegMatrix::lit([[0.0, 1.0, 0.0], [0.0, 0.0, 1.0], [0.9, 0.0, 0.0]]);
        let r = spectral_radius(&cyc, DEFAULT_TOL).unwrap();
        assert!((r.rho - 0.9f64.cbrt()).abs() < 1e-10, "{r:?}");
        assert!(r.perron_vector.unwrap().ggt0());

        let jordan = NonnegMatrix::lit([[0.5, 1.0, 0.0], [0.0, 0.5, 1.0], [0.0, 0.0, 0.5]]);
        let r = spectral_radius(&jordan, DEFAULT_TOL).unwrap();
        assert!((r.rho - 0.5).abs() < 1e-10, "{r:?}");

        let swap = NonnegMatrix::lit([[0.0, 1.0], [1.0, 0.0]]);
        let r = spectral_radius(&swap, DEFAULT_TOL).unwrap();
        assert!((r.rho - 1.0).abs() < 1e-12);
    }

    #[test]
    fn qr_eigenvalues_of_known_matrix() {
        // rotation-like block with eigenvalues 1 +- 2i, and 3
        let m = Matrix::from_slice_rows([[1.0, -2.0, 0.0], [2.0, 1.0, 0.0], [0.0, 0.0, 3.0]]);
        let mut eigs = eigenvalues_qr(&m).unwrap();
        eigs.sort_by(|a, b| {
            a.0.partial_cmp(&b.0)
                .unwrap()
                .then(a.1.partial_cmp(&b.1).unwrap())
        });
        assert!((eigs[0].0 - 1.0).abs() < 1e-12 && (eigs[0].1 + 2.0).abs() < 1e-12);
        assert!((eigs[1].0 - 1.0).abs() < 1e-12 && (eigs[1].1 - 2.0).abs() < 1e-12);
        assert!((eigs[2].0 - 3.0).abs() < 1e-12);
    }

    #[test]
    fn rejects_nonpositive_tol() {
        assert!(spectral_radius(&NonnegMatrix::lit([[0.5]]), 0.0).is_err());
    }
}
