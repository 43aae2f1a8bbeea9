//! Dense two-phase primal simplex for small feasibility problems.
//!
//! Variables carry bounds `lower <= x <= upper` (either side may be
//! infinite). Internally every variable is mapped onto nonnegative columns,
//! finite upper bounds become rows, rows are sign-normalized to a
//! nonnegative right-hand side, and phase 1 minimizes the sum of artificial
//! variables. Bland's rule (lowest index enters, lowest basic index breaks
//! ratio ties) prevents cycling; a pivot cap remains as a guard.
//!
//! An infeasible verdict always comes with a [`FarkasRay`] built from the
//! phase-1 duals and checked against the original data before it is
//! returned. Optimal solutions are re-substituted into every row and bound.
//!
//! [`strict_feasibility`] wraps the engine for systems of strict and
//! non-strict homogeneous rows by maximizing a common margin `eps`.

use crate::error::{Error, Result};

pub const DEFAULT_FEASTOL: f64 = 1e-9;
/// Upper box used to compactify homogeneous (scale-free) systems.
pub const MAX_BOUND: f64 = 1e6;

/// Relative violation tolerated when an optimal basis is substituted back.
const RESUBSTITUTION_TOL: f64 = 1e-7;
const PIVOT_TOL: f64 = 1e-9;
const OPT_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Relation {
    Le,
    Ge,
    Eq,
}

impl Relation {
    fn flipped(self) -> Self {
        match self {
            Relation::Le => Relation::Ge,
            Relation::Ge => Relation::Le,
            Relation::Eq => Relation::Eq,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sense {
    Maximize,
    Minimize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Constraint {
    pub coeffs: Vec<f64>,
    pub relation: Relation,
    pub rhs: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LinearProgram {
    pub num_vars: usize,
    pub constraints: Vec<Constraint>,
    pub objective: Vec<f64>,
    pub sense: Sense,
    /// Per-variable lower bounds; `f64::NEG_INFINITY` for none. Default 0.
    pub lower: Vec<f64>,
    /// Per-variable upper bounds; `f64::INFINITY` for none. Default none.
    pub upper: Vec<f64>,
}

impl LinearProgram {
    pub fn new(num_vars: usize, sense: Sense) -> Self {
        Self {
            num_vars,
            constraints: Vec::new(),
            objective: vec![0.0; num_vars],
            sense,
            lower: vec![0.0; num_vars],
            upper: vec![f64::INFINITY; num_vars],
        }
    }

    pub fn add_constraint(&mut self, coeffs: Vec<f64>, relation: Relation, rhs: f64) {
        self.constraints.push(Constraint {
            coeffs,
            relation,
            rhs,
        });
    }

    pub fn set_objective(&mut self, objective: Vec<f64>) {
        self.objective = objective;
    }

    pub fn set_bounds(&mut self, var: usize, lower: f64, upper: f64) {
        self.lower[var] = lower;
        self.upper[var] = upper;
    }

    fn validate(&self) -> Result<()> {
        let k = self.num_vars;
        if self.objective.len() != k || self.lower.len() != k || self.upper.len() != k {
            return Err(Error::InvalidLp(
                "objective/bounds length != num_vars".into(),
            ));
        }
        if self.objective.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidLp("non-finite objective coefficient".into()));
        }
        for (i, c) in self.constraints.iter().enumerate() {
            if c.coeffs.len() != k {
                return Err(Error::InvalidLp(format!(
                    "constraint {i} has {} coefficients, expected {k}",
                    c.coeffs.len()
                )));
            }
            if c.coeffs.iter().any(|v| !v.is_finite()) || !c.rhs.is_finite() {
                return Err(Error::InvalidLp(format!("constraint {i} is not finite")));
            }
        }
        for j in 0..k {
            let (lo, hi) = (self.lower[j], self.upper[j]);
            if lo.is_nan()
                || hi.is_nan()
                || lo == f64::INFINITY
                || hi == f64::NEG_INFINITY
                || lo > hi
            {
                return Err(Error::InvalidLp(format!("bad bounds [{lo}, {hi}] on x{j}")));
            }
        }
        Ok(())
    }

    /// Worst violation of rows and bounds at `x`, each scaled by the row's
    /// magnitude at `x`.
    pub fn max_violation(&self, x: &[f64]) -> f64 {
        let mut worst: f64 = 0.0;
        for c in &self.constraints {
            let lhs: f64 = c.coeffs.iter().zip(x).map(|(a, b)| a * b).sum();
            let mag: f64 = c.coeffs.iter().zip(x).map(|(a, b)| (a * b).abs()).sum();
            let scale = 1f64.max(c.rhs.abs()).max(mag);
            let v = match c.relation {
                Relation::Le => lhs - c.rhs,
                Relation::Ge => c.rhs - lhs,
                Relation::Eq => (lhs - c.rhs).abs(),
            };
            worst = worst.max(v / scale);
        }
        for j in 0..self.num_vars {
            let scale = 1f64.max(x[j].abs());
            worst = worst.max((self.lower[j] - x[j]) / scale);
            worst = worst.max((x[j] - self.upper[j]) / scale);
        }
        worst
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LpStatus {
    Optimal,
    Infeasible,
    Unbounded,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LpOutcome {
    pub status: LpStatus,
    pub solution: Option<Vec<f64>>,
    pub objective_value: Option<f64>,
    pub farkas: Option<FarkasRay>,
}

/// Infeasibility certificate in terms of the original program.
///
/// For every feasible `x`, each term `rows[k] * (g_k x - h_k)`,
/// `lower[j] * (l_j - x_j)` and `upper[j] * (x_j - u_j)` is `<= 0` given the
/// sign conventions (`rows[k] >= 0` on `<=` rows, `<= 0` on `>=` rows, free on
/// equalities; bound multipliers `>= 0`). If the `x` coefficients of the sum
/// cancel and its constant part is positive, no feasible `x` exists.
#[derive(Debug, Clone, PartialEq)]
pub struct FarkasRay {
    pub rows: Vec<f64>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl FarkasRay {
    /// Returns `(sign_violation, coefficient_residual, gap)` for the ray
    /// rescaled to unit largest multiplier. `gap` is relative to the size of
    /// the combined right-hand side and already discounts what the residual
    /// coefficients could contribute over the finite variable bounds.
    pub fn evaluate(&self, lp: &LinearProgram) -> (f64, f64, f64) {
        let norm = self
            .rows
            .iter()
            .chain(&self.lower)
            .chain(&self.upper)
            .fold(0.0f64, |m, v| m.max(v.abs()));
        if norm == 0.0 || !norm.is_finite() {
            return (0.0, 0.0, 0.0);
        }
        let mut sign_violation: f64 = 0.0;
        let mut coeff = vec![0.0; lp.num_vars];
        let mut gap = 0.0;
        let mut gap_scale = 1.0;
        let mut scale = 1.0;
        for (c, &r) in lp.constraints.iter().zip(&self.rows) {
            let r = r / norm;
            let bad = match c.relation {
                Relation::Le => -r,
                Relation::Ge => r,
                Relation::Eq => 0.0,
            };
            sign_violation = sign_violation.max(bad);
            for (acc, g) in coeff.iter_mut().zip(&c.coeffs) {
                *acc += r * g;
                scale += (r * g).abs();
            }
            gap -= r * c.rhs;
            gap_scale += (r * c.rhs).abs();
        }
        for j in 0..lp.num_vars {
            let (mu, nu) = (self.lower[j] / norm, self.upper[j] / norm);
            sign_violation = sign_violation.max(-mu).max(-nu);
            coeff[j] += nu - mu;
            scale += mu.abs() + nu.abs();
            if mu != 0.0 {
                gap += mu * lp.lower[j];
                gap_scale += (mu * lp.lower[j]).abs();
            }
            if nu != 0.0 {
                gap -= nu * lp.upper[j];
                gap_scale += (nu * lp.upper[j]).abs();
            }
        }
        let slop: f64 = coeff
            .iter()
            .enumerate()
            .map(|(j, v)| {
                let reach = lp.lower[j].abs().max(lp.upper[j].abs());
                if reach.is_finite() {
                    v.abs() * reach
                } else {
                    0.0
                }
            })
            .sum();
        let residual = coeff.iter().fold(0.0f64, |m, v| m.max(v.abs())) / scale;
        (sign_violation, residual, (gap - slop) / gap_scale)
    }

    pub fn verify(&self, lp: &LinearProgram, feastol: f64) -> bool {
        if self.rows.len() != lp.constraints.len()
            || self.lower.len() != lp.num_vars
            || self.upper.len() != lp.num_vars
        {
            return false;
        }
        let (sign, residual, gap) = self.evaluate(lp);
        sign <= feastol && residual <= feastol && gap > feastol && gap.is_finite()
    }
}

/// `x_j = offset + sum(coef * column)`.
struct VarMap {
    offset: f64,
    terms: Vec<(usize, f64)>,
}

#[derive(Clone, Copy)]
enum RowKind {
    Constraint(usize),
    Upper(usize),
}

struct StdRow {
    coeffs: Vec<f64>,
    relation: Relation,
    rhs: f64,
    kind: RowKind,
}

struct Tableau {
    rows: Vec<Vec<f64>>,
    obj: Vec<f64>,
    basis: Vec<usize>,
    width: usize,
    pivots: usize,
    pivot_cap: usize,
}

enum SimplexEnd {
    Optimal,
    Unbounded,
}

impl Tableau {
    fn rhs(&self, i: usize) -> f64 {
        self.rows[i][self.width]
    }

    fn pivot(&mut self, r: usize, c: usize) -> Result<()> {
        self.pivots += 1;
        if self.pivots > self.pivot_cap {
            return Err(Error::PivotLimit(self.pivot_cap));
        }
        let p = self.rows[r][c];
        for v in self.rows[r].iter_mut() {
            *v /= p;
        }
        let pivot_row = self.rows[r].clone();
        for (i, row) in self.rows.iter_mut().enumerate() {
            if i == r {
                continue;
            }
            let f = row[c];
            if f != 0.0 {
                for (v, pv) in row.iter_mut().zip(&pivot_row) {
                    *v -= f * pv;
                }
                row[c] = 0.0;
                let w = row.len() - 1;
                if row[w] < 0.0 && row[w] > -PIVOT_TOL {
                    row[w] = 0.0;
                }
            }
        }
        let f = self.obj[c];
        if f != 0.0 {
            for (v, pv) in self.obj.iter_mut().zip(&pivot_row) {
                *v -= f * pv;
            }
            self.obj[c] = 0.0;
        }
        self.basis[r] = c;
        Ok(())
    }

    fn set_costs(&mut self, costs: &[f64]) {
        let w = self.width;
        let mut obj = vec![0.0; w + 1];
        obj[..w].copy_from_slice(costs);
        for (i, row) in self.rows.iter().enumerate() {
            let cb = costs[self.basis[i]];
            if cb != 0.0 {
                for (o, v) in obj.iter_mut().zip(row) {
                    *o -= cb * v;
                }
            }
        }
        self.obj = obj;
    }

    /// Objective value of the current basic solution (minimization form).
    fn value(&self) -> f64 {
        -self.obj[self.width]
    }

    fn run(&mut self, allowed: impl Fn(usize) -> bool) -> Result<SimplexEnd> {
        loop {
            let Some(enter) = (0..self.width).find(|&j| allowed(j) && self.obj[j] < -OPT_TOL)
            else {
                return Ok(SimplexEnd::Optimal);
            };
            let mut best: Option<f64> = None;
            for i in 0..self.rows.len() {
                let a = self.rows[i][enter];
                if a > PIVOT_TOL {
                    let ratio = self.rhs(i).max(0.0) / a;
                    best = Some(best.map_or(ratio, |b: f64| b.min(ratio)));
                }
            }
            let Some(min_ratio) = best else {
                return Ok(SimplexEnd::Unbounded);
            };
            let tie = 1e-12 * (1.0 + min_ratio.abs());
            let leave = (0..self.rows.len())
                .filter(|&i| {
                    let a = self.rows[i][enter];
                    a > PIVOT_TOL && self.rhs(i).max(0.0) / a <= min_ratio + tie
                })
                .min_by_key(|&i| self.basis[i])
                .expect("a ratio row exists");
            self.pivot(leave, enter)?;
        }
    }
}

pub fn solve(lp: &LinearProgram, feastol: f64) -> Result<LpOutcome> {
    lp.validate()?;
    if !(feastol > 0.0) {
        return Err(Error::InvalidLp(format!(
            "feastol must be > 0, got {feastol}"
        )));
    }
    let k = lp.num_vars;

    // variables -> nonnegative columns
    let mut maps = Vec::with_capacity(k);
    let mut ncols = 0;
    let mut std_rows: Vec<StdRow> = Vec::new();
    let mut upper_rows = Vec::new();
    for j in 0..k {
        let (lo, hi) = (lp.lower[j], lp.upper[j]);
        if lo.is_finite() {
            maps.push(VarMap {
                offset: lo,
                terms: vec![(ncols, 1.0)],
            });
            if hi.is_finite() {
                upper_rows.push((j, ncols, hi - lo));
            }
            ncols += 1;
        } else if hi.is_finite() {
            maps.push(VarMap {
                offset: hi,
                terms: vec![(ncols, -1.0)],
            });
            ncols += 1;
        } else {
            maps.push(VarMap {
                offset: 0.0,
                terms: vec![(ncols, 1.0), (ncols + 1, -1.0)],
            });
            ncols += 2;
        }
    }
    for (idx, c) in lp.constraints.iter().enumerate() {
        let mut coeffs = vec![0.0; ncols];
        let mut rhs = c.rhs;
        for (j, &g) in c.coeffs.iter().enumerate() {
            if g == 0.0 {
                continue;
            }
            rhs -= g * maps[j].offset;
            for &(col, t) in &maps[j].terms {
                coeffs[col] += g * t;
            }
        }
        std_rows.push(StdRow {
            coeffs,
            relation: c.relation,
            rhs,
            kind: RowKind::Constraint(idx),
        });
    }
    for (j, col, width) in upper_rows {
        let mut coeffs = vec![0.0; ncols];
        coeffs[col] = 1.0;
        std_rows.push(StdRow {
            coeffs,
            relation: Relation::Le,
            rhs: width,
            kind: RowKind::Upper(j),
        });
    }

    // sign-normalize and lay out slack / artificial columns
    let m = std_rows.len();
    let mut signs = vec![1.0; m];
    for (i, row) in std_rows.iter_mut().enumerate() {
        if row.rhs < 0.0 {
            signs[i] = -1.0;
            row.rhs = -row.rhs;
            row.coeffs.iter_mut().for_each(|v| *v = -*v);
            row.relation = row.relation.flipped();
        }
    }
    let n_slack = std_rows
        .iter()
        .filter(|r| r.relation != Relation::Eq)
        .count();
    let n_art = std_rows
        .iter()
        .filter(|r| r.relation != Relation::Le)
        .count();
    let art_start = ncols + n_slack;
    let width = art_start + n_art;
    let mut rows = Vec::with_capacity(m);
    let mut basis = Vec::with_capacity(m);
    let mut slack_of = vec![None; m];
    let mut art_of = vec![None; m];
    let (mut s, mut a) = (ncols, art_start);
    for (i, r) in std_rows.iter().enumerate() {
        let mut row = vec![0.0; width + 1];
        row[..ncols].copy_from_slice(&r.coeffs);
        row[width] = r.rhs;
        match r.relation {
            Relation::Le => {
                row[s] = 1.0;
                slack_of[i] = Some((s, 1.0));
                basis.push(s);
                s += 1;
            }
            Relation::Ge => {
                row[s] = -1.0;
                slack_of[i] = Some((s, -1.0));
                s += 1;
                row[a] = 1.0;
                art_of[i] = Some(a);
                basis.push(a);
                a += 1;
            }
            Relation::Eq => {
                row[a] = 1.0;
                art_of[i] = Some(a);
                basis.push(a);
                a += 1;
            }
        }
        rows.push(row);
    }
    let mut tab = Tableau {
        rows,
        obj: Vec::new(),
        basis,
        width,
        pivots: 0,
        pivot_cap: 20_000 + 50 * (m + width),
    };

    // phase 1
    let mut phase1_costs = vec![0.0; width];
    phase1_costs[art_start..].iter_mut().for_each(|c| *c = 1.0);
    tab.set_costs(&phase1_costs);
    tab.run(|_| true)?;
    let infeasibility = tab.value();
    if infeasibility > feastol {
        let ray = farkas_from_phase1(lp, &tab, &std_rows, &signs, &slack_of, &art_of, &maps);
        if ray.verify(lp, feastol) {
            return Ok(LpOutcome {
                status: LpStatus::Infeasible,
                solution: None,
                objective_value: None,
                farkas: Some(ray),
            });
        }
        // a leftover at rounding level relative to the data is not evidence
        // of infeasibility; phase 2 and re-substitution decide
        let data_scale = std_rows.iter().map(|r| r.rhs).fold(1.0, f64::max);
        if infeasibility > feastol * data_scale {
            let (sv, res, gap) = ray.evaluate(lp);
            return Err(Error::LpNumerical(format!(
                "phase 1 ended at {infeasibility:e} but the Farkas ray does not verify \
                 (sign {sv:e}, residual {res:e}, gap {gap:e})"
            )));
        }
    }

    // drive zero-level artificials out of the basis where possible
    for i in 0..m {
        if tab.basis[i] >= art_start {
            if let Some(j) = (0..art_start).find(|&j| tab.rows[i][j].abs() > PIVOT_TOL) {
                tab.pivot(i, j)?;
            }
        }
    }

    // phase 2 (minimization form)
    let sign = match lp.sense {
        Sense::Minimize => 1.0,
        Sense::Maximize => -1.0,
    };
    let mut costs = vec![0.0; width];
    for (j, map) in maps.iter().enumerate() {
        for &(col, t) in &map.terms {
            costs[col] += sign * lp.objective[j] * t;
        }
    }
    tab.set_costs(&costs);
    match tab.run(|j| j < art_start)? {
        SimplexEnd::Unbounded => Ok(LpOutcome {
            status: LpStatus::Unbounded,
            solution: None,
            objective_value: None,
            farkas: None,
        }),
        SimplexEnd::Optimal => {
            let mut cols = vec![0.0; width];
            for (i, &b) in tab.basis.iter().enumerate() {
                cols[b] = tab.rhs(i).max(0.0);
            }
            let x: Vec<f64> = maps
                .iter()
                .map(|map| map.offset + map.terms.iter().map(|&(c, t)| t * cols[c]).sum::<f64>())
                .collect();
            let violation = lp.max_violation(&x);
            if violation > RESUBSTITUTION_TOL.max(feastol) {
                return Err(Error::LpNumerical(format!(
                    "optimal point violates a constraint by {violation:e} (relative)"
                )));
            }
            let value = lp.objective.iter().zip(&x).map(|(c, v)| c * v).sum();
            Ok(LpOutcome {
                status: LpStatus::Optimal,
                solution: Some(x),
                objective_value: Some(value),
                farkas: None,
            })
        }
    }
}

fn farkas_from_phase1(
    lp: &LinearProgram,
    tab: &Tableau,
    std_rows: &[StdRow],
    signs: &[f64],
    slack_of: &[Option<(usize, f64)>],
    art_of: &[Option<usize>],
    maps: &[VarMap],
) -> FarkasRay {
    let k = lp.num_vars;
    let mut ray = FarkasRay {
        rows: vec![0.0; lp.constraints.len()],
        lower: vec![0.0; k],
        upper: vec![0.0; k],
    };
    for (i, row) in std_rows.iter().enumerate() {
        // phase-1 dual of the sign-normalized row, read off reduced costs
        let y = match (slack_of[i], art_of[i]) {
            (Some((col, coef)), _) => -tab.obj[col] * coef,
            (None, Some(col)) => 1.0 - tab.obj[col],
            (None, None) => unreachable!("every row has a slack or an artificial"),
        };
        // multiplier on (g x - h) in the original orientation
        let r = -y * signs[i];
        match row.kind {
            RowKind::Constraint(c) => ray.rows[c] = r,
            RowKind::Upper(j) => ray.upper[j] = r.max(0.0),
        }
    }
    for j in 0..k {
        let c: f64 = lp
            .constraints
            .iter()
            .zip(&ray.rows)
            .map(|(con, r)| r * con.coeffs[j])
            .sum();
        let lower_finite = lp.lower[j].is_finite();
        let upper_finite = lp.upper[j].is_finite();
        if lower_finite {
            ray.lower[j] = (c + ray.upper[j]).max(0.0);
        } else if upper_finite {
            ray.upper[j] = (-c).max(0.0);
        }
        debug_assert!(maps[j].terms.len() == 2 || lower_finite || upper_finite);
    }
    ray
}

/// One homogeneous row `<c, x> <= -eps` (strict) or `<c, x> <= 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct StrictRow {
    pub coeffs: Vec<f64>,
    pub strict: bool,
}

impl StrictRow {
    pub fn strict(coeffs: Vec<f64>) -> Self {
        Self {
            coeffs,
            strict: true,
        }
    }

    pub fn non_strict(coeffs: Vec<f64>) -> Self {
        Self {
            coeffs,
            strict: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StrictOutcome {
    pub feasible: bool,
    pub witness: Option<Vec<f64>>,
    /// Optimal common margin `eps*`; `-inf` when even the non-strict part
    /// is infeasible.
    pub margin: f64,
}

/// Maximizes `eps` subject to the rows, `lower_bounds <= x <= MAX_BOUND` and
/// `sum(x) <= n * MAX_BOUND`. Feasible means `eps* > feastol`.
pub fn strict_feasibility(
    rows: &[StrictRow],
    lower_bounds: &[f64],
    feastol: f64,
) -> Result<StrictOutcome> {
    strict_feasibility_bounded(rows, lower_bounds, MAX_BOUND, feastol)
}

pub fn strict_feasibility_bounded(
    rows: &[StrictRow],
    lower_bounds: &[f64],
    max_bound: f64,
    feastol: f64,
) -> Result<StrictOutcome> {
    if rows.is_empty() {
        return Err(Error::InvalidLp("empty strict system".into()));
    }
    let k = lower_bounds.len();
    let eps = k;
    let mut lp = LinearProgram::new(k + 1, Sense::Maximize);
    let mut obj = vec![0.0; k + 1];
    obj[eps] = 1.0;
    lp.set_objective(obj);
    for (j, &lo) in lower_bounds.iter().enumerate() {
        lp.set_bounds(j, lo, max_bound);
    }
    lp.set_bounds(eps, f64::NEG_INFINITY, max_bound);
    for row in rows {
        if row.coeffs.len() != k {
            return Err(Error::InvalidLp(format!(
                "row has {} coefficients, expected {k}",
                row.coeffs.len()
            )));
        }
        let mut c = row.coeffs.clone();
        c.push(if row.strict { 1.0 } else { 0.0 });
        lp.add_constraint(c, Relation::Le, 0.0);
    }
    let mut total = vec![1.0; k];
    total.push(0.0);
    lp.add_constraint(total, Relation::Le, k as f64 * max_bound);

    let out = solve(&lp, feastol)?;
    match out.status {
        LpStatus::Infeasible => Ok(StrictOutcome {
            feasible: false,
            witness: None,
            margin: f64::NEG_INFINITY,
        }),
        LpStatus::Unbounded => Err(Error::LpNumerical("margin LP reported unbounded".into())),
        LpStatus::Optimal => {
            let sol = out.solution.expect("optimal has a solution");
            let margin = sol[eps];
            let x = sol[..k].to_vec();
            if margin <= feastol {
                return Ok(StrictOutcome {
                    feasible: false,
                    witness: None,
                    margin,
                });
            }
            for row in rows.iter().filter(|r| r.strict) {
                let slack: f64 = -row.coeffs.iter().zip(&x).map(|(a, b)| a * b).sum::<f64>();
                if slack < 0.5 * margin {
                    return Err(Error::LpNumerical(format!(
                        "witness slack {slack:e} below half the margin {margin:e}"
                    )));
                }
            }
            Ok(StrictOutcome {
                feasible: true,
                witness: Some(x),
                margin,
            })
        }
    }
}
