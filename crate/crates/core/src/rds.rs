//! Verdict engine for robust diffusive stability: certificates prove it for a
//! coupling class, sampled couplings with `rho(M) > 1` refute it, and
//! anything else is reported as undecided.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::certificates::{
    find_cdlf, find_clclf, find_jlclf, verify_copositive_cert, verify_diagonal_cert, CdlfOutcome,
    CopositiveCert, CopositiveFlavor, DiagonalCert, DiagonalFlavor,
};
use crate::error::{Error, Result};
use crate::leslie::{
    build_s1_s2, common_right_vector, enumerate_coupling_class, lattice_size, validate_leslie,
    LeslieClass, LeslieCoupling, LeslieMatrix,
};
use crate::lpsolve::DEFAULT_FEASTOL;
use crate::matcore::{
    assemble_coupled, eigenvalues_qr, is_irreducible, spectral_radius, spectral_radius_squaring,
    DEFAULT_SCHUR_MARGIN, DEFAULT_TOL,
};
use crate::matrix::{Matrix, NonnegMatrix, PositiveVector};

pub const DEFAULT_BUDGET: u64 = 10_000;
pub const LATTICE_RESOLUTION: usize = 8;
pub const LATTICE_CAP: u64 = 4096;
pub const ASCENT_ROUNDS: usize = 10;
pub const DIVERGENCE_GUARD: f64 = 1e300;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CouplingKind {
    /// `D` diagonal with `d_ii <= min(a_ii, b_ii)`.
    Diagonal,
    /// `D` on the subdiagonal and the last diagonal entry.
    Leslie,
    /// As `Leslie`, with at most one nonzero row.
    LeslieSingleRow,
}

impl CouplingKind {
    pub fn label(self) -> &'static str {
        match self {
            CouplingKind::Diagonal => "diagonal",
            CouplingKind::Leslie => "leslie",
            CouplingKind::LeslieSingleRow => "leslie-single-row",
        }
    }

    fn leslie_class(self) -> Option<LeslieClass> {
        match self {
            CouplingKind::Diagonal => None,
            CouplingKind::Leslie => Some(LeslieClass::Full),
            CouplingKind::LeslieSingleRow => Some(LeslieClass::SingleRow),
        }
    }
}

/// Two Schur-stable nonnegative systems and the coupling class under study.
#[derive(Debug, Clone, PartialEq)]
pub struct SystemPair {
    a: NonnegMatrix,
    b: NonnegMatrix,
    kind: CouplingKind,
    schur_margin: f64,
    rho_a: f64,
    rho_b: f64,
    leslie: Option<(LeslieMatrix, LeslieMatrix)>,
}

impl SystemPair {
    pub fn new(a: NonnegMatrix, b: NonnegMatrix, kind: CouplingKind) -> Result<Self> {
        Self::with_margin(a, b, kind, DEFAULT_SCHUR_MARGIN)
    }

    pub fn with_margin(
        a: NonnegMatrix,
        b: NonnegMatrix,
        kind: CouplingKind,
        schur_margin: f64,
    ) -> Result<Self> {
        if a.n() != b.n() {
            return Err(Error::DimensionMismatch {
                expected: a.n(),
                got: b.n(),
            });
        }
        if !(schur_margin >= 0.0) {
            return Err(Error::InvalidArgument(format!(
                "Schur margin must be >= 0, got {schur_margin}"
            )));
        }
        let rho_a = spectral_radius(&a, DEFAULT_TOL)?.rho;
        let rho_b = spectral_radius(&b, DEFAULT_TOL)?.rho;
        for (which, rho) in [("A", rho_a), ("B", rho_b)] {
            if !(rho < 1.0 - schur_margin) {
                return Err(Error::NotSchur {
                    which,
                    rho,
                    margin: schur_margin,
                });
            }
        }
        let leslie = match kind {
            CouplingKind::Diagonal => None,
            _ => Some((validate_leslie(&a)?, validate_leslie(&b)?)),
        };
        Ok(Self {
            a,
            b,
            kind,
            schur_margin,
            rho_a,
            rho_b,
            leslie,
        })
    }

    pub fn a(&self) -> &NonnegMatrix {
        &self.a
    }

    pub fn b(&self) -> &NonnegMatrix {
        &self.b
    }

    pub fn kind(&self) -> CouplingKind {
        self.kind
    }

    pub fn n(&self) -> usize {
        self.a.n()
    }

    pub fn schur_margin(&self) -> f64 {
        self.schur_margin
    }

    pub fn rho_a(&self) -> f64 {
        self.rho_a
    }

    pub fn rho_b(&self) -> f64 {
        self.rho_b
    }

    /// Free coupling coordinates `(row, col, upper bound)` with a positive bound.
    pub fn free_coordinates(&self) -> Vec<(usize, usize, f64)> {
        let n = self.n();
        let bound = |i: usize, j: usize| self.a[(i, j)].min(self.b[(i, j)]);
        let cells: Vec<(usize, usize)> = match self.kind {
            CouplingKind::Diagonal => (0..n).map(|i| (i, i)).collect(),
            _ => (1..n)
                .map(|i| (i, i - 1))
                .chain(std::iter::once((n - 1, n - 1)))
                .collect(),
        };
        cells
            .into_iter()
            .map(|(i, j)| (i, j, bound(i, j)))
            .filter(|c| c.2 > 0.0)
            .collect()
    }

    /// Checks that `d` belongs to the pair's coupling class.
    pub fn check_admissible(&self, d: &NonnegMatrix) -> Result<()> {
        let n = self.n();
        if d.n() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                got: d.n(),
            });
        }
        match self.kind {
            CouplingKind::Diagonal => {
                for i in 0..n {
                    for j in 0..n {
                        if i != j && d[(i, j)] != 0.0 {
                            return Err(Error::CouplingClass {
                                class: "diagonal",
                                detail: format!("off-diagonal entry ({i}, {j}) = {}", d[(i, j)]),
                            });
                        }
                    }
                }
            }
            CouplingKind::Leslie | CouplingKind::LeslieSingleRow => {
                let c = LeslieCoupling::from_matrix(d)?;
                if self.kind == CouplingKind::LeslieSingleRow && c.nonzero_rows() > 1 {
                    return Err(Error::CouplingClass {
                        class: "Leslie single-row",
                        detail: format!("{} nonzero rows", c.nonzero_rows()),
                    });
                }
            }
        }
        // entrywise bounds are enforced by assembly
        assemble_coupled(&self.a, &self.b, d).map(|_| ())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Status {
    Certified,
    Refuted,
    Undecided,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Reason {
    CdlfLyapunov,
    CdlfStein,
    JlclfIrreducible,
    Clclf,
    LeslieSingleRow,
    S1S2,
    CommonRightVector,
    SampledCounterexample,
}

impl Reason {
    /// One-line justification for human-readable reports.
    pub fn describe(self) -> &'static str {
        match self {
            Reason::CdlfLyapunov => {
                "common diagonal Lyapunov function in Lyapunov form ((A-I)ᵀE + E(A-I) < 0 for A and B) rules out destabilizing diagonal coupling"
            }
            Reason::CdlfStein => {
                "common diagonal Lyapunov function in Stein form (AᵀEA - E < 0 for A and B) implies the Lyapunov form and rules out destabilizing diagonal coupling"
            }
            Reason::JlclfIrreducible => {
                "joint linear copositive Lyapunov function with an irreducible system rules out destabilizing diagonal coupling"
            }
            Reason::Clclf => {
                "common linear copositive Lyapunov function rules out destabilizing diagonal coupling"
            }
            Reason::LeslieSingleRow => {
                "Schur-stable Leslie systems coupled through a single row are always robustly stable"
            }
            Reason::S1S2 => {
                "both envelope matrices S1 and S2 are Schur-stable, which rules out destabilizing Leslie coupling"
            }
            Reason::CommonRightVector => {
                "a common vector v >> 0 with Av << v and Bv << v gives M(v, v) << (v, v) for every admissible coupling"
            }
            Reason::SampledCounterexample => {
                "an admissible coupling with spectral radius above 1 was found and re-verified"
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RightVectorFlavor {
    CommonRight,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EnvelopeFlavor {
    S1S2,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SingleRowFlavor {
    LeslieSingleRow,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RightVectorCert {
    pub flavor: RightVectorFlavor,
    pub vector: PositiveVector,
    pub margin: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvelopeCert {
    pub flavor: EnvelopeFlavor,
    pub s1: LeslieMatrix,
    pub s2: LeslieMatrix,
    pub rho_s1: f64,
    pub rho_s2: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SingleRowCert {
    pub flavor: SingleRowFlavor,
    pub rho_a: f64,
    pub rho_b: f64,
}

/// Any certificate the engine can return; every variant carries a `flavor`
/// field naming it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Certificate {
    Copositive(CopositiveCert),
    Diagonal(DiagonalCert),
    RightVector(RightVectorCert),
    Envelope(EnvelopeCert),
    SingleRow(SingleRowCert),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RdsVerdict {
    pub status: Status,
    pub reason: Option<Reason>,
    pub certificate: Option<Certificate>,
    pub witness_d: Option<NonnegMatrix>,
    pub rho_at_witness: Option<f64>,
    pub note: Option<String>,
    pub seed: u64,
    pub budget: u64,
}

/// Re-checks that `cert` is valid for the pair and that it covers the
/// pair's coupling class.
pub fn verify_certificate(pair: &SystemPair, cert: &Certificate) -> Result<bool> {
    let (a, b) = (&pair.a, &pair.b);
    Ok(match cert {
        Certificate::Copositive(c) => {
            pair.kind == CouplingKind::Diagonal
                && verify_copositive_cert(a, b, c)
                && (c.flavor == CopositiveFlavor::Clclf || is_irreducible(a) || is_irreducible(b))
        }
        Certificate::Diagonal(c) => {
            // a Stein certificate also satisfies the Lyapunov form
            pair.kind == CouplingKind::Diagonal && verify_diagonal_cert(a, b, c)
        }
        Certificate::RightVector(c) => {
            let v = c.vector.as_slice();
            v.len() == pair.n()
                && c.vector.ggt0()
                && c.margin > 0.0
                && [a, b].iter().all(|x| {
                    x.mul_vec(v)
                        .iter()
                        .zip(v)
                        .all(|(xv, vi)| vi - xv >= 0.5 * c.margin)
                })
        }
        Certificate::Envelope(c) => {
            let Some((la, lb)) = &pair.leslie else {
                return Ok(false);
            };
            let (s1, s2) = build_s1_s2(la, lb)?;
            s1 == c.s1
                && s2 == c.s2
                && spectral_radius(s1.inner(), DEFAULT_TOL)?.rho < 1.0
                && spectral_radius(s2.inner(), DEFAULT_TOL)?.rho < 1.0
        }
        Certificate::SingleRow(_) => {
            pair.kind == CouplingKind::LeslieSingleRow
                && spectral_radius(a, DEFAULT_TOL)?.rho < 1.0
                && spectral_radius(b, DEFAULT_TOL)?.rho < 1.0
        }
    })
}

fn certified(reason: Reason, cert: Certificate, seed: u64, budget: u64) -> RdsVerdict {
    RdsVerdict {
        status: Status::Certified,
        reason: Some(reason),
        certificate: Some(cert),
        witness_d: None,
        rho_at_witness: None,
        note: None,
        seed,
        budget,
    }
}

/// Tries certificates in a fixed order for the pair's class, then searches
/// for a destabilizing coupling.
///
/// Diagonal class: CLCLF, JLCLF with an irreducible system, CDLF Lyapunov
/// form, CDLF Stein form. Leslie class: S1/S2 envelope, common right
/// vector. Single-row Leslie class: certified outright.
pub fn decide_rds(pair: &SystemPair, budget: u64, seed: u64) -> Result<RdsVerdict> {
    let (a, b) = (&pair.a, &pair.b);
    let mut notes: Vec<String> = Vec::new();
    let found = match pair.kind {
        CouplingKind::Diagonal => decide_diagonal(a, b, &mut notes)?,
        CouplingKind::Leslie => {
            let (la, lb) = pair.leslie.as_ref().expect("validated at construction");
            let (s1, s2) = build_s1_s2(la, lb)?;
            let rho_s1 = spectral_radius(s1.inner(), DEFAULT_TOL)?.rho;
            let rho_s2 = spectral_radius(s2.inner(), DEFAULT_TOL)?.rho;
            if rho_s1 < 1.0 - pair.schur_margin && rho_s2 < 1.0 - pair.schur_margin {
                Some((
                    Reason::S1S2,
                    Certificate::Envelope(EnvelopeCert {
                        flavor: EnvelopeFlavor::S1S2,
                        s1,
                        s2,
                        rho_s1,
                        rho_s2,
                    }),
                ))
            } else if let Some(v) = common_right_vector(a, b)? {
                let margin = [a, b]
                    .iter()
                    .flat_map(|x| {
                        x.mul_vec(&v.0)
                            .into_iter()
                            .zip(v.0.clone())
                            .map(|(xv, vi)| vi - xv)
                    })
                    .fold(f64::INFINITY, f64::min);
                Some((
                    Reason::CommonRightVector,
                    Certificate::RightVector(RightVectorCert {
                        flavor: RightVectorFlavor::CommonRight,
                        vector: v,
                        margin,
                    }),
                ))
            } else {
                notes.push(format!(
                    "envelopes not Schur-stable (rho(S1) = {rho_s1:.6}, rho(S2) = {rho_s2:.6}) and no common right vector"
                ));
                None
            }
        }
        CouplingKind::LeslieSingleRow => Some((
            Reason::LeslieSingleRow,
            Certificate::SingleRow(SingleRowCert {
                flavor: SingleRowFlavor::LeslieSingleRow,
                rho_a: pair.rho_a,
                rho_b: pair.rho_b,
            }),
        )),
    };
    if let Some((reason, cert)) = found {
        if !verify_certificate(pair, &cert)? {
            return Err(Error::LpNumerical(format!(
                "certificate for {reason:?} failed re-verification"
            )));
        }
        return Ok(certified(reason, cert, seed, budget));
    }
    if let Some((d, rho)) = find_destabilizer(pair, budget, seed)? {
        return Ok(RdsVerdict {
            status: Status::Refuted,
            reason: Some(Reason::SampledCounterexample),
            certificate: None,
            witness_d: Some(d),
            rho_at_witness: Some(rho),
            note: (!notes.is_empty()).then(|| notes.join("; ")),
            seed,
            budget,
        });
    }
    notes.push(format!(
        "no certificate and no destabilizing coupling within budget {budget}"
    ));
    Ok(RdsVerdict {
        status: Status::Undecided,
        reason: None,
        certificate: None,
        witness_d: None,
        rho_at_witness: None,
        note: Some(notes.join("; ")),
        seed,
        budget,
    })
}

fn decide_diagonal(
    a: &NonnegMatrix,
    b: &NonnegMatrix,
    notes: &mut Vec<String>,
) -> Result<Option<(Reason, Certificate)>> {
    if let Some(c) = find_clclf(a, b)? {
        return Ok(Some((Reason::Clclf, Certificate::Copositive(c))));
    }
    if is_irreducible(a) || is_irreducible(b) {
        if let Some(c) = find_jlclf(a, b)? {
            return Ok(Some((Reason::JlclfIrreducible, Certificate::Copositive(c))));
        }
    } else if find_jlclf(a, b)?.is_some() {
        notes.push("a joint copositive vector exists but both systems are reducible".into());
    }
    for (flavor, reason) in [
        (DiagonalFlavor::Lyapunov, Reason::CdlfLyapunov),
        (DiagonalFlavor::Stein, Reason::CdlfStein),
    ] {
        match find_cdlf(a, b, flavor)? {
            CdlfOutcome::Found(c) => return Ok(Some((reason, Certificate::Diagonal(c)))),
            CdlfOutcome::Infeasible { .. } => {}
            CdlfOutcome::Undecided { cuts, best_lambda } => notes.push(format!(
                "{flavor:?} diagonal search stopped after {cuts} cuts (best lambda_max {best_lambda:e})"
            )),
        }
    }
    Ok(None)
}

/// `rho(M(D))` for an admissible `d`.
pub fn rho_coupled(pair: &SystemPair, d: &NonnegMatrix) -> Result<f64> {
    pair.check_admissible(d)?;
    let m = assemble_coupled(&pair.a, &pair.b, d)?;
    Ok(spectral_radius(m.matrix(), DEFAULT_TOL)?.rho)
}

/// Spectral radius for search: QR max modulus, squaring if QR fails.
fn rho_fast(m: &NonnegMatrix) -> Result<f64> {
    match eigenvalues_qr(m.as_matrix()) {
        Ok(eigs) => Ok(eigs
            .iter()
            .map(|&(re, im)| re.hypot(im))
            .fold(0.0, f64::max)),
        Err(_) => Ok(spectral_radius_squaring(m, DEFAULT_TOL)?.0),
    }
}

struct Search<'a> {
    pair: &'a SystemPair,
    coords: Vec<(usize, usize, f64)>,
    evals: u64,
    budget: u64,
    best: Option<(Vec<f64>, f64)>,
}

impl Search<'_> {
    fn matrix(&self, vals: &[f64]) -> NonnegMatrix {
        let mut d = Matrix::zeros(self.pair.n());
        for (&(i, j, _), &v) in self.coords.iter().zip(vals) {
            d[(i, j)] = v;
        }
        NonnegMatrix::new(d).expect("coordinates are nonnegative")
    }

    fn exhausted(&self) -> bool {
        self.evals >= self.budget
    }

    /// Evaluates a candidate; keeps it if strictly better (ties keep the
    /// earlier one).
    fn eval(&mut self, vals: Vec<f64>) -> Result<f64> {
        self.evals += 1;
        let m = assemble_coupled(&self.pair.a, &self.pair.b, &self.matrix(&vals))?;
        let rho = rho_fast(m.matrix())?;
        if self.best.as_ref().is_none_or(|(_, r)| rho > *r) {
            self.best = Some((vals, rho));
        }
        Ok(rho)
    }

    fn coords_of(&self, c: &LeslieCoupling) -> Vec<f64> {
        let d = c.to_matrix();
        self.coords.iter().map(|&(i, j, _)| d[(i, j)]).collect()
    }
}

/// Grid pass, seeded random samples, then coordinate ascent on `rho(M)`
/// from the best point. Returns a coupling whose `rho(M)` exceeds
/// `1 + feastol` under the independent squaring method.
pub fn find_destabilizer(
    pair: &SystemPair,
    budget: u64,
    seed: u64,
) -> Result<Option<(NonnegMatrix, f64)>> {
    if budget == 0 {
        return Err(Error::InvalidArgument("budget must be >= 1".into()));
    }
    let coords = pair.free_coordinates();
    if coords.is_empty() {
        return Ok(None);
    }
    let mut s = Search {
        pair,
        coords,
        evals: 0,
        budget,
        best: None,
    };
    let k = s.coords.len();

    // lattice
    let size = match (pair.kind.leslie_class(), &pair.leslie) {
        (Some(class), Some((la, lb))) => lattice_size(la, lb, class, LATTICE_RESOLUTION)?,
        _ => (LATTICE_RESOLUTION as u64 + 1).checked_pow(k as u32),
    };
    let lattice = size.filter(|&sz| sz <= LATTICE_CAP && sz <= budget / 2);
    let samples = ((budget - lattice.unwrap_or(0)) / 2) as usize;
    match (pair.kind.leslie_class(), &pair.leslie) {
        (Some(class), Some((la, lb))) => {
            // the stream puts the lattice first; skip it when it is too big
            let res = if lattice.is_some() {
                LATTICE_RESOLUTION
            } else {
                1
            };
            let skip = if lattice.is_some() {
                0
            } else {
                lattice_size(la, lb, class, 1)?.unwrap_or(0) as usize
            };
            let stream = enumerate_coupling_class(la, lb, class, res, samples, seed)?;
            for c in stream.skip(skip) {
                if s.exhausted() {
                    break;
                }
                let vals = s.coords_of(&c);
                s.eval(vals)?;
            }
        }
        _ => {
            if let Some(total) = lattice {
                let base = LATTICE_RESOLUTION as u64 + 1;
                for idx in 0..total {
                    let mut rem = idx;
                    let vals: Vec<f64> = s
                        .coords
                        .iter()
                        .map(|&(_, _, hi)| {
                            let step = rem % base;
                            rem /= base;
                            (hi * step as f64 / LATTICE_RESOLUTION as f64).min(hi)
                        })
                        .collect();
                    s.eval(vals)?;
                }
            }
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            for _ in 0..samples {
                if s.exhausted() {
                    break;
                }
                let vals = s
                    .coords
                    .iter()
                    .map(|&(_, _, hi)| rng.gen_range(0.0..=hi))
                    .collect();
                s.eval(vals)?;
            }
        }
    }

    // coordinate ascent; the single-row class stays inside the active row
    if let Some((start, _)) = s.best.clone() {
        let movable: Vec<usize> = match pair.kind {
            CouplingKind::LeslieSingleRow => {
                let active = (0..k).find(|&c| start[c] > 0.0).map(|c| s.coords[c].0);
                (0..k).filter(|&c| Some(s.coords[c].0) == active).collect()
            }
            _ => (0..k).collect(),
        };
        let mut steps: Vec<f64> = s.coords.iter().map(|c| c.2 / 8.0).collect();
        'rounds: for _ in 0..ASCENT_ROUNDS {
            for &c in &movable {
                for dir in [1.0, -1.0] {
                    if s.exhausted() {
                        break 'rounds;
                    }
                    let (cur, cur_rho) = s.best.clone().expect("best exists");
                    let mut next = cur.clone();
                    next[c] = (cur[c] + dir * steps[c]).clamp(0.0, s.coords[c].2);
                    if next[c] == cur[c] {
                        continue;
                    }
                    if s.eval(next)? > cur_rho {
                        break;
                    }
                }
            }
            steps.iter_mut().for_each(|v| *v *= 0.5);
        }
    }

    let Some((vals, rho)) = s.best.clone() else {
        return Ok(None);
    };
    if rho <= 1.0 + DEFAULT_FEASTOL {
        return Ok(None);
    }
    let d = s.matrix(&vals);
    pair.check_admissible(&d)?;
    let m = assemble_coupled(&pair.a, &pair.b, &d)?;
    let (rho_sq, _) = spectral_radius_squaring(m.matrix(), DEFAULT_TOL)?;
    if rho_sq <= 1.0 + DEFAULT_FEASTOL {
        return Ok(None);
    }
    Ok(Some((d, spectral_radius(m.matrix(), DEFAULT_TOL)?.rho)))
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    /// `(x(t), y(t))` for `t = 0..=T`.
    pub states: Vec<(Vec<f64>, Vec<f64>)>,
    /// Max-norm of `(x(t), y(t))`.
    pub norms: Vec<f64>,
    /// Least-squares slope of `ln ||state||` over the last half of the run.
    pub growth_estimate: f64,
    /// The run was cut short because the norm passed `DIVERGENCE_GUARD`.
    pub divergent: bool,
}

impl Trajectory {
    /// CSV with columns `t, x_1..x_n, y_1..y_n, norm`.
    pub fn to_csv(&self) -> String {
        let n = self.states.first().map_or(0, |s| s.0.len());
        let mut out = String::from("t");
        for i in 1..=n {
            out.push_str(&format!(",x_{i}"));
        }
        for i in 1..=n {
            out.push_str(&format!(",y_{i}"));
        }
        out.push_str(",norm\n");
        for (t, ((x, y), nrm)) in self.states.iter().zip(&self.norms).enumerate() {
            out.push_str(&t.to_string());
            for v in x.iter().chain(y) {
                out.push_str(&format!(",{v:e}"));
            }
            out.push_str(&format!(",{nrm:e}\n"));
        }
        out
    }
}

/// Iterates `x(t+1) = (A-D)x(t) + Dy(t)`, `y(t+1) = Dx(t) + (B-D)y(t)`.
pub fn simulate_coupled(
    pair: &SystemPair,
    d: &NonnegMatrix,
    x0: &[f64],
    y0: &[f64],
    t_max: usize,
) -> Result<Trajectory> {
    let n = pair.n();
    pair.check_admissible(d)?;
    if t_max == 0 {
        return Err(Error::InvalidArgument("t_max must be >= 1".into()));
    }
    for v in [x0, y0] {
        if v.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                got: v.len(),
            });
        }
        if v.iter().any(|x| !(x.is_finite() && *x >= 0.0)) {
            return Err(Error::InvalidArgument(
                "initial states must be finite and nonnegative".into(),
            ));
        }
    }
    let m = assemble_coupled(&pair.a, &pair.b, d)?;
    let (tl, br) = (m.top_left(), m.bottom_right());
    let norm = |x: &[f64], y: &[f64]| x.iter().chain(y).fold(0.0f64, |acc, v| acc.max(v.abs()));
    let mut states = vec![(x0.to_vec(), y0.to_vec())];
    let mut norms = vec![norm(x0, y0)];
    let mut divergent = false;
    for _ in 0..t_max {
        let (x, y) = states.last().expect("nonempty");
        let (ax, dy, dx, by) = (tl.mul_vec(x), d.mul_vec(y), d.mul_vec(x), br.mul_vec(y));
        let nx: Vec<f64> = ax.iter().zip(&dy).map(|(p, q)| p + q).collect();
        let ny: Vec<f64> = dx.iter().zip(&by).map(|(p, q)| p + q).collect();
        let nrm = norm(&nx, &ny);
        if !(nrm <= DIVERGENCE_GUARD) {
            divergent = true;
            break;
        }
        states.push((nx, ny));
        norms.push(nrm);
    }
    let tail_start = norms.len() - (t_max / 2).max(1).min(norms.len() - 1) - 1;
    let growth_estimate = log_slope(&norms[tail_start..]);
    Ok(Trajectory {
        states,
        norms,
        growth_estimate,
        divergent,
    })
}

fn log_slope(norms: &[f64]) -> f64 {
    let m = norms.len() as f64;
    if norms.len() < 2 {
        return 0.0;
    }
    let ys: Vec<f64> = norms.iter().map(|v| v.max(1e-300).ln()).collect();
    let tbar = (m - 1.0) / 2.0;
    let ybar = ys.iter().sum::<f64>() / m;
    let (mut num, mut den) = (0.0, 0.0);
    for (t, y) in ys.iter().enumerate() {
        num += (t as f64 - tbar) * (y - ybar);
        den += (t as f64 - tbar).powi(2);
    }
    num / den
}

fn check_diag(n: usize, v: &[f64], what: &str) -> Result<()> {
    if v.len() != n {
        return Err(Error::InvalidArgument(format!(
            "{what} has {} entries, expected {n}",
            v.len()
        )));
    }
    Ok(())
}

/// `(M - I)ᵀP + P(M - I)` with `P = diag(e, e)`.
pub fn coupled_lyapunov_form(m: &Matrix, e: &[f64]) -> Result<Matrix> {
    let n2 = m.n();
    check_diag(n2 / 2, e, "diagonal e")?;
    let p: Vec<f64> = e.iter().chain(e).copied().collect();
    Ok(Matrix::from_fn(n2, |i, j| {
        let mm = |r: usize, c: usize| m[(r, c)] - if r == c { 1.0 } else { 0.0 };
        mm(j, i) * p[j] + p[i] * mm(i, j)
    }))
}

/// `[[Q_A - 2ED, 2ED], [2ED, Q_B - 2ED]]` for diagonal `E`, `D`, where `Q_X`
/// is the Lyapunov form of `X`.
pub fn block_lyapunov_form(a: &Matrix, b: &Matrix, d: &[f64], e: &[f64]) -> Result<Matrix> {
    let n = a.n();
    check_diag(n, d, "diagonal d")?;
    check_diag(n, e, "diagonal e")?;
    let lyap = |x: &Matrix| {
        Matrix::from_fn(n, |i, j| {
            let xm = |r: usize, c: usize| x[(r, c)] - if r == c { 1.0 } else { 0.0 };
            xm(j, i) * e[j] + e[i] * xm(i, j)
        })
    };
    let ed = Matrix::diag(
        &e.iter()
            .zip(d)
            .map(|(p, q)| 2.0 * p * q)
            .collect::<Vec<_>>(),
    );
    let mut out = Matrix::zeros(2 * n);
    out.set_block(0, 0, &lyap(a).sub(&ed)?);
    out.set_block(0, n, &ed);
    out.set_block(n, 0, &ed);
    out.set_block(n, n, &lyap(b).sub(&ed)?);
    Ok(out)
}

/// `[[-2ED, 2ED], [2ED, -2ED]]`.
pub fn coupling_block(d: &[f64], e: &[f64]) -> Result<Matrix> {
    let n = d.len();
    check_diag(n, e, "diagonal e")?;
    let ed: Vec<f64> = e.iter().zip(d).map(|(p, q)| 2.0 * p * q).collect();
    Ok(Matrix::from_fn(2 * n, |i, j| {
        if i % n != j % n {
            0.0
        } else if (i < n) == (j < n) {
            -ed[i % n]
        } else {
            ed[i % n]
        }
    }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matcore::symmetric_eigen_max;

    fn ex1(kind: CouplingKind) -> SystemPair {
        SystemPair::new(
            NonnegMatrix::lit([[0.1, 1.0], [0.0, 0.0]]),
            NonnegMatrix::lit([[0.1, 0.0], [1.0, 0.0]]),
            kind,
        )
        .unwrap()
    }

    fn printed() -> (SystemPair, NonnegMatrix) {
        let a = NonnegMatrix::lit([[0.1, 0.85, 0.15], [0.9, 0.0, 0.0], [0.0, 0.7, 0.2]]);
        let b = NonnegMatrix::lit([[0.6, 0.1, 1.0], [0.5, 0.0, 0.0], [0.0, 0.35, 0.45]]);
        let d = NonnegMatrix::lit([[0.0, 0.0, 0.0], [0.25, 0.0, 0.0], [0.0, 0.2, 0.0]]);
        (SystemPair::new(a, b, CouplingKind::Leslie).unwrap(), d)
    }

    #[test]
    fn construction_checks() {
        let i = NonnegMatrix::identity(2);
        assert!(matches!(
            SystemPair::new(i.clone(), i, CouplingKind::Diagonal),
            Err(Error::NotSchur { which: "A", .. })
        ));
        let a = NonnegMatrix::lit([[0.1, 1.0], [0.0, 0.0]]);
        let b = NonnegMatrix::lit([[0.1, 0.0], [1.0, 0.0]]);
        assert!(SystemPair::new(a.clone(), b.clone(), CouplingKind::Leslie).is_ok());
        let c = NonnegMatrix::lit([[0.1, 0.0, 0.0], [0.0, 0.0, 0.3], [0.0, 0.0, 0.0]]);
        assert!(matches!(
            SystemPair::new(c.clone(), c, CouplingKind::Leslie),
            Err(Error::LesliePattern(_))
        ));
    }

    #[test]
    fn coupled_radius_examples() {
        let p = ex1(CouplingKind::Diagonal);
        assert!((rho_coupled(&p, &NonnegMatrix::zeros(2)).unwrap() - 0.1).abs() < 1e-10);
        let h = NonnegMatrix::lit([[0.5]]);
        let q = SystemPair::new(h.clone(), h, CouplingKind::Diagonal).unwrap();
        // [[0.3, 0.2], [0.2, 0.3]] has eigenvalues 0.3 +- 0.2
        assert!((rho_coupled(&q, &NonnegMatrix::lit([[0.2]])).unwrap() - 0.5).abs() < 1e-12);
        let off = NonnegMatrix::lit([[0.0, 0.1], [0.0, 0.0]]);
        assert!(matches!(
            rho_coupled(&p, &off),
            Err(Error::CouplingClass { .. })
        ));
    }

    #[test]
    fn printed_leslie_pair_is_refuted() {
        let (p, d) = printed();
        let rho = rho_coupled(&p, &d).unwrap();
        assert!((rho - 1.02).abs() < 0.005, "{rho}");
        let v = decide_rds(&p, DEFAULT_BUDGET, 0).unwrap();
        assert_eq!(v.status, Status::Refuted);
        let w = v.witness_d.unwrap();
        assert!(p.check_admissible(&w).is_ok());
        assert!(v.rho_at_witness.unwrap() >= rho - 1e-9);
    }

    #[test]
    fn single_row_is_certified_without_search() {
        let (p, _) = printed();
        let q =
            SystemPair::new(p.a().clone(), p.b().clone(), CouplingKind::LeslieSingleRow).unwrap();
        let v = decide_rds(&q, 1, 0).unwrap();
        assert_eq!(v.status, Status::Certified);
        assert_eq!(v.reason, Some(Reason::LeslieSingleRow));
        let two_rows = NonnegMatrix::lit([[0.0, 0.0, 0.0], [0.25, 0.0, 0.0], [0.0, 0.2, 0.0]]);
        assert!(q.check_admissible(&two_rows).is_err());
        let one_row = NonnegMatrix::lit([[0.0, 0.0, 0.0], [0.0, 0.0, 0.0], [0.0, 0.2, 0.1]]);
        assert!(rho_coupled(&q, &one_row).unwrap() < 1.0);
    }

    #[test]
    fn shift_pair_has_no_destabilizer() {
        let p = ex1(CouplingKind::Diagonal);
        assert!(find_destabilizer(&p, 2000, 3).unwrap().is_none());
        let v = decide_rds(&p, 100, 0).unwrap();
        assert_eq!(v.reason, Some(Reason::CdlfLyapunov));
    }

    #[test]
    fn verdict_json_fields() {
        let p = ex1(CouplingKind::Diagonal);
        let v = decide_rds(&p, 100, 4).unwrap();
        let j: serde_json::Value = serde_json::to_value(&v).unwrap();
        for key in [
            "status",
            "reason",
            "certificate",
            "witness_d",
            "rho_at_witness",
            "seed",
            "budget",
        ] {
            assert!(j.get(key).is_some(), "missing {key}");
        }
        assert_eq!(j["status"], "certified");
        assert_eq!(j["reason"], "cdlf_lyapunov");
        assert_eq!(j["certificate"]["flavor"], "lyapunov");
        let back: RdsVerdict = serde_json::from_value(j).unwrap();
        assert_eq!(back, v);
    }

    #[test]
    fn simulation() {
        let (p, d) = printed();
        let x0 = [1.0, 1.0, 1.0];
        let t = simulate_coupled(&p, &d, &x0, &x0, 400).unwrap();
        let rho = rho_coupled(&p, &d).unwrap();
        assert!((t.growth_estimate - rho.ln()).abs() < 0.005);
        // recurrence holds exactly
        let m = assemble_coupled(p.a(), p.b(), &d).unwrap();
        let (x, y) = &t.states[3];
        let (nx, ny) = &t.states[4];
        let ax = m.top_left().mul_vec(x);
        let dy = d.mul_vec(y);
        assert!(nx
            .iter()
            .zip(ax.iter().zip(&dy))
            .all(|(v, (p, q))| *v == p + q));
        assert_eq!(ny.len(), 3);

        let zero = simulate_coupled(&p, &NonnegMatrix::zeros(3), &[0.0; 3], &[0.0; 3], 10).unwrap();
        assert!(zero
            .states
            .iter()
            .all(|(x, y)| x.iter().chain(y).all(|v| *v == 0.0)));
        let decay = simulate_coupled(&p, &NonnegMatrix::zeros(3), &x0, &x0, 200).unwrap();
        assert!(decay.growth_estimate < 0.0);
        let csv = decay.to_csv();
        assert!(csv.starts_with("t,x_1,x_2,x_3,y_1,y_2,y_3,norm\n"));
        assert_eq!(csv.lines().count(), 202);
    }

    #[test]
    fn divergence_guard() {
        let (p, d) = printed();
        let big = [1e299; 3];
        let t = simulate_coupled(&p, &d, &big, &big, 1000).unwrap();
        assert!(t.divergent);
        assert!(t.states.len() < 1001);
        assert!(t.norms.iter().all(|v| *v <= DIVERGENCE_GUARD));
        assert!(t.growth_estimate > 0.0);
    }

    #[test]
    fn block_identities() {
        let a = Matrix::from_slice_rows([[0.2, 0.5], [0.3, 0.1]]);
        let b = Matrix::from_slice_rows([[0.4, 0.0], [0.6, 0.3]]);
        let d = [0.1, 0.05];
        let e = [1.5, 0.7];
        let na = NonnegMatrix::new(a.clone()).unwrap();
        let nb = NonnegMatrix::new(b.clone()).unwrap();
        let m = assemble_coupled(&na, &nb, &NonnegMatrix::new(Matrix::diag(&d)).unwrap()).unwrap();
        let lhs = coupled_lyapunov_form(m.matrix(), &e).unwrap();
        let rhs = block_lyapunov_form(&a, &b, &d, &e).unwrap();
        assert!(lhs.sub(&rhs).unwrap().max_abs() < 1e-15);
        let (l, _) = symmetric_eigen_max(&coupling_block(&d, &e).unwrap()).unwrap();
        assert!(l <= 1e-12);
    }
}
