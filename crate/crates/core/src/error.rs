use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("matrix must have dimension n >= 1")]
    EmptyMatrix,
    #[error("matrix shape mismatch: declared n = {declared}, found {found}")]
    Shape { declared: usize, found: String },
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("entry ({row}, {col}) is not finite")]
    NonFinite { row: usize, col: usize },
    #[error("entry ({row}, {col}) = {value} is negative")]
    NegativeEntry { row: usize, col: usize, value: f64 },
    #[error("coupling is not admissible: {block}[{row}][{col}] = {value} < 0")]
    Inadmissible {
        block: &'static str,
        row: usize,
        col: usize,
        value: f64,
    },
    #[error("matrix is not symmetric: |s[{row}][{col}] - s[{col}][{row}]| = {gap}")]
    NotSymmetric { row: usize, col: usize, gap: f64 },
    #[error("{what} did not converge after {iterations} iterations (best estimate {estimate}, residual {residual})")]
    NonConvergence {
        what: &'static str,
        iterations: usize,
        estimate: f64,
        residual: f64,
    },
    #[error("extended Leslie pattern violated at {}", format_coords(.0))]
    LesliePattern(Vec<(usize, usize)>),
    #[error("coupling does not belong to the {class} class: {detail}")]
    CouplingClass { class: &'static str, detail: String },
    #[error("matrix {which} is not Schur-stable: rho = {rho} >= 1 - {margin}")]
    NotSchur {
        which: &'static str,
        rho: f64,
        margin: f64,
    },
    #[error("invalid LP: {0}")]
    InvalidLp(String),
    #[error("simplex pivot limit {0} exceeded")]
    PivotLimit(usize),
    #[error("LP numerical failure: {0}")]
    LpNumerical(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

fn format_coords(coords: &[(usize, usize)]) -> String {
    coords
        .iter()
        .map(|(i, j)| format!("({i}, {j})"))
        .collect::<Vec<_>>()
        .join(", ")
}
