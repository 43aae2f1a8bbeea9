//! Extended Leslie matrices: arbitrary first row, a subdiagonal, and an
//! optional `(n, n)` entry. Couplings between two Leslie systems live on the
//! subdiagonal and the corner, bounded entrywise by both systems.
//!
//! Indices are 0-based throughout.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lpsolve::{strict_feasibility, StrictRow, DEFAULT_FEASTOL};
use crate::matrix::{Matrix, MatrixJson, NonnegMatrix, PositiveVector};

/// Largest `n` for which all `2^n` row selections are materialized.
pub const MAX_SELECTION_DIM: usize = 20;

fn in_pattern(n: usize, i: usize, j: usize) -> bool {
    i == 0 || j + 1 == i || (i == n - 1 && j == n - 1)
}

fn in_coupling_pattern(n: usize, i: usize, j: usize) -> bool {
    (i >= 1 && j + 1 == i) || (i == n - 1 && j == n - 1)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "MatrixJson", into = "MatrixJson")]
pub struct LeslieMatrix {
    inner: NonnegMatrix,
}

impl LeslieMatrix {
    pub fn inner(&self) -> &NonnegMatrix {
        &self.inner
    }

    pub fn n(&self) -> usize {
        self.inner.n()
    }

    pub fn first_row(&self) -> &[f64] {
        self.inner.row(0)
    }

    /// `a[1][0], a[2][1], ..., a[n-1][n-2]`.
    pub fn subdiag(&self) -> Vec<f64> {
        (1..self.n()).map(|i| self.inner[(i, i - 1)]).collect()
    }

    pub fn corner(&self) -> f64 {
        let n = self.n();
        self.inner[(n - 1, n - 1)]
    }
}

impl TryFrom<MatrixJson> for LeslieMatrix {
    type Error = Error;

    fn try_from(j: MatrixJson) -> Result<Self> {
        validate_leslie(&NonnegMatrix::try_from(j)?)
    }
}

impl From<LeslieMatrix> for MatrixJson {
    fn from(m: LeslieMatrix) -> Self {
        m.inner.into()
    }
}

/// Checks the extended Leslie pattern, listing every nonzero outside it.
pub fn validate_leslie(m: &NonnegMatrix) -> Result<LeslieMatrix> {
    let n = m.n();
    let bad: Vec<(usize, usize)> = (0..n)
        .flat_map(|i| (0..n).map(move |j| (i, j)))
        .filter(|&(i, j)| !in_pattern(n, i, j) && m[(i, j)] != 0.0)
        .collect();
    if !bad.is_empty() {
        return Err(Error::LesliePattern(bad));
    }
    Ok(LeslieMatrix { inner: m.clone() })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LeslieClass {
    /// Subdiagonal plus corner.
    Full,
    /// At most one nonzero row of the induced matrix.
    SingleRow,
}

/// Coupling on the subdiagonal and the `(n-1, n-1)` corner.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LeslieCoupling {
    pub subdiag: Vec<f64>,
    pub corner: f64,
}

impl LeslieCoupling {
    pub fn zeros(n: usize) -> Self {
        Self {
            subdiag: vec![0.0; n.saturating_sub(1)],
            corner: 0.0,
        }
    }

    pub fn n(&self) -> usize {
        self.subdiag.len() + 1
    }

    /// Coordinate `k < n - 1` is `subdiag[k]` (row `k + 1`); `n - 1` is the corner.
    fn coord_mut(&mut self, k: usize) -> &mut f64 {
        if k < self.subdiag.len() {
            &mut self.subdiag[k]
        } else {
            &mut self.corner
        }
    }

    fn coord(&self, k: usize) -> f64 {
        if k < self.subdiag.len() {
            self.subdiag[k]
        } else {
            self.corner
        }
    }

    pub fn to_matrix(&self) -> NonnegMatrix {
        let n = self.n();
        let mut m = Matrix::zeros(n);
        for (k, &v) in self.subdiag.iter().enumerate() {
            m[(k + 1, k)] = v;
        }
        m[(n - 1, n - 1)] += self.corner;
        NonnegMatrix::new(m).expect("coupling entries are nonnegative")
    }

    /// Reads a coupling off a matrix, rejecting entries outside the pattern.
    pub fn from_matrix(d: &NonnegMatrix) -> Result<Self> {
        let n = d.n();
        let bad: Vec<(usize, usize)> = (0..n)
            .flat_map(|i| (0..n).map(move |j| (i, j)))
            .filter(|&(i, j)| !in_coupling_pattern(n, i, j) && d[(i, j)] != 0.0)
            .collect();
        if !bad.is_empty() {
            return Err(Error::CouplingClass {
                class: "Leslie",
                detail: format!("nonzero entries off the subdiagonal/corner at {bad:?}"),
            });
        }
        Ok(Self {
            subdiag: (1..n).map(|i| d[(i, i - 1)]).collect(),
            corner: d[(n - 1, n - 1)],
        })
    }

    /// Number of nonzero rows of the induced matrix.
    pub fn nonzero_rows(&self) -> usize {
        let n = self.n();
        (1..n)
            .filter(|&i| self.subdiag[i - 1] != 0.0 || (i == n - 1 && self.corner != 0.0))
            .count()
            + usize::from(n == 1 && self.corner != 0.0)
    }
}

/// Entrywise upper bounds `min(a, b)` on the coupling pattern.
pub fn coupling_bounds(a: &LeslieMatrix, b: &LeslieMatrix) -> Result<LeslieCoupling> {
    if a.n() != b.n() {
        return Err(Error::DimensionMismatch {
            expected: a.n(),
            got: b.n(),
        });
    }
    Ok(LeslieCoupling {
        subdiag: a
            .subdiag()
            .iter()
            .zip(b.subdiag())
            .map(|(x, y)| x.min(y))
            .collect(),
        corner: a.corner().min(b.corner()),
    })
}

/// Row of the induced matrix that coordinate `k` lives in.
fn coord_row(n: usize, k: usize) -> usize {
    if k < n - 1 {
        k + 1
    } else {
        n - 1
    }
}

/// A block of lattice points over `coords`, skipping the all-zero point
/// when `skip_zero` is set.
#[derive(Debug, Clone)]
struct Segment {
    coords: Vec<usize>,
    skip_zero: bool,
}

impl Segment {
    fn size(&self, resolution: usize) -> Option<u64> {
        let base = resolution as u64 + 1;
        let mut total: u64 = 1;
        for _ in &self.coords {
            total = total.checked_mul(base)?;
        }
        Some(total - u64::from(self.skip_zero))
    }
}

fn segments(bounds: &LeslieCoupling, class: LeslieClass) -> Vec<Segment> {
    let n = bounds.n();
    let free: Vec<usize> = (0..n).filter(|&k| bounds.coord(k) > 0.0).collect();
    match class {
        LeslieClass::Full => vec![Segment {
            coords: free,
            skip_zero: false,
        }],
        LeslieClass::SingleRow => {
            let mut segs = vec![Segment {
                coords: Vec::new(),
                skip_zero: false,
            }];
            for row in 0..n {
                let coords: Vec<usize> = free
                    .iter()
                    .copied()
                    .filter(|&k| coord_row(n, k) == row)
                    .collect();
                if !coords.is_empty() {
                    segs.push(Segment {
                        coords,
                        skip_zero: true,
                    });
                }
            }
            segs
        }
    }
}

/// Number of lattice points, or `None` on overflow.
pub fn lattice_size(
    a: &LeslieMatrix,
    b: &LeslieMatrix,
    class: LeslieClass,
    resolution: usize,
) -> Result<Option<u64>> {
    let bounds = coupling_bounds(a, b)?;
    Ok(segments(&bounds, class)
        .iter()
        .try_fold(0u64, |acc, s| acc.checked_add(s.size(resolution)?)))
}

/// Deterministic stream of admissible couplings: the full lattice with
/// `resolution + 1` values per free coordinate, then `samples` uniform draws
/// from a ChaCha generator seeded with `seed`. A new stream built from the
/// same arguments replays the same sequence.
#[derive(Debug, Clone)]
pub struct CouplingStream {
    bounds: LeslieCoupling,
    segments: Vec<Segment>,
    resolution: usize,
    segment: usize,
    index: u64,
    samples_left: usize,
    rng: ChaCha8Rng,
}

pub fn enumerate_coupling_class(
    a: &LeslieMatrix,
    b: &LeslieMatrix,
    class: LeslieClass,
    resolution: usize,
    samples: usize,
    seed: u64,
) -> Result<CouplingStream> {
    if resolution == 0 {
        return Err(Error::InvalidArgument(
            "lattice resolution must be >= 1".into(),
        ));
    }
    let bounds = coupling_bounds(a, b)?;
    let segments = segments(&bounds, class);
    Ok(CouplingStream {
        bounds,
        segments,
        resolution,
        segment: 0,
        index: 0,
        samples_left: samples,
        rng: ChaCha8Rng::seed_from_u64(seed),
    })
}

impl CouplingStream {
    fn lattice_point(&self, seg: &Segment, mut index: u64) -> LeslieCoupling {
        let base = self.resolution as u64 + 1;
        let mut d = LeslieCoupling::zeros(self.bounds.n());
        for &k in &seg.coords {
            let step = index % base;
            index /= base;
            let hi = self.bounds.coord(k);
            *d.coord_mut(k) = (hi * step as f64 / self.resolution as f64).min(hi);
        }
        d
    }

    fn sample(&mut self) -> LeslieCoupling {
        let n = self.bounds.n();
        let mut d = LeslieCoupling::zeros(n);
        let active: Vec<&Segment> = self
            .segments
            .iter()
            .filter(|s| !s.coords.is_empty())
            .collect();
        let coords: Vec<usize> = match active.len() {
            0 => Vec::new(),
            1 => active[0].coords.clone(),
            // single-row class: pick a row first
            m => active[self.rng.gen_range(0..m)].coords.clone(),
        };
        for k in coords {
            let hi = self.bounds.coord(k);
            *d.coord_mut(k) = self.rng.gen_range(0.0..=hi);
        }
        d
    }
}

impl Iterator for CouplingStream {
    type Item = LeslieCoupling;

    fn next(&mut self) -> Option<LeslieCoupling> {
        while self.segment < self.segments.len() {
            let seg = &self.segments[self.segment];
            let size = seg.size(self.resolution).unwrap_or(u64::MAX);
            if self.index < size {
                let idx = self.index + u64::from(seg.skip_zero);
                self.index += 1;
                return Some(self.lattice_point(seg, idx));
            }
            self.segment += 1;
            self.index = 0;
        }
        if self.samples_left > 0 {
            self.samples_left -= 1;
            return Some(self.sample());
        }
        None
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RowSelection {
    /// `true` takes the row from `a`, `false` from `b`.
    pub chooser: Vec<bool>,
    pub matrix: NonnegMatrix,
}

/// All `2^n` row selections; selection `k` takes row `i` from `a` iff bit
/// `i` of `k` is set.
pub fn row_selections(a: &NonnegMatrix, b: &NonnegMatrix) -> Result<Vec<RowSelection>> {
    let n = a.n();
    if b.n() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: b.n(),
        });
    }
    if n > MAX_SELECTION_DIM {
        return Err(Error::InvalidArgument(format!(
            "2^{n} row selections is too many (limit n = {MAX_SELECTION_DIM})"
        )));
    }
    (0..1u64 << n)
        .map(|k| {
            let chooser: Vec<bool> = (0..n).map(|i| k >> i & 1 == 1).collect();
            let m = Matrix::from_fn(n, |i, j| if chooser[i] { a[(i, j)] } else { b[(i, j)] });
            Ok(RowSelection {
                chooser,
                matrix: NonnegMatrix::new(m)?,
            })
        })
        .collect()
}

/// Envelopes sharing the entrywise-max subdiagonal and corner; `s1` keeps
/// the first row of `a`, `s2` that of `b`. For `n = 1` the corner maximum
/// wins over the first-row copy.
pub fn build_s1_s2(a: &LeslieMatrix, b: &LeslieMatrix) -> Result<(LeslieMatrix, LeslieMatrix)> {
    let n = a.n();
    if b.n() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: b.n(),
        });
    }
    let build = |first: &[f64]| {
        let mut m = Matrix::zeros(n);
        for j in 0..n {
            m[(0, j)] = first[j];
        }
        for i in 1..n {
            m[(i, i - 1)] = a.inner[(i, i - 1)].max(b.inner[(i, i - 1)]);
        }
        m[(n - 1, n - 1)] = a.corner().max(b.corner());
        LeslieMatrix {
            inner: NonnegMatrix::new(m).expect("entries come from nonnegative inputs"),
        }
    };
    Ok((build(a.first_row()), build(b.first_row())))
}

/// `v >> 0` with `Av << v` and `Bv << v`, scaled so `min(v) = 1`.
pub fn common_right_vector(a: &NonnegMatrix, b: &NonnegMatrix) -> Result<Option<PositiveVector>> {
    let n = a.n();
    if b.n() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: b.n(),
        });
    }
    let rows: Vec<StrictRow> = [a, b]
        .iter()
        .flat_map(|x| {
            (0..n).map(move |i| {
                let mut c = x.row(i).to_vec();
                c[i] -= 1.0;
                StrictRow::strict(c)
            })
        })
        .collect();
    let out = strict_feasibility(&rows, &vec![1.0; n], DEFAULT_FEASTOL)?;
    Ok(out.witness.map(|w| {
        let lo = w.iter().cloned().fold(f64::INFINITY, f64::min);
        PositiveVector(w.iter().map(|x| x / lo).collect())
    }))
}
