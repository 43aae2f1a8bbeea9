#![allow(clippy::neg_cmp_op_on_partial_ord)]

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::json;

use rds_core::certificates::{
    find_cdlf, find_clclf, find_jlclf, verify_copositive_cert, verify_diagonal_cert, CdlfOutcome,
    DiagonalFlavor,
};
use rds_core::leslie::{row_selections, validate_leslie};
use rds_core::matcore::{assemble_coupled, spectral_radius};
use rds_core::rds::{
    decide_rds, find_destabilizer, simulate_coupled, verify_certificate, Certificate, CouplingKind,
    Status, SystemPair,
};
use rds_core::NonnegMatrix;

const EXIT_DEFINITE: u8 = 0;
const EXIT_UNDECIDED: u8 = 1;
const EXIT_USAGE: u8 = 2;

#[derive(Parser, Debug)]
#[command(
    name = "rds",
    version,
    about = "Robust diffusive stability of coupled nonnegative systems"
)]
struct Cli {
    #[command(subcommand)]
    verb: Verb,
    #[command(flatten)]
    opts: Opts,
}

#[derive(Args, Debug, Clone)]
struct Opts {
    /// Emit JSON instead of text.
    #[arg(long, global = true)]
    json: bool,
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Evaluation budget for the destabilizer search.
    #[arg(long, global = true, default_value_t = 10_000)]
    budget: u64,
    /// Required gap below 1 for the Schur test of A and B.
    #[arg(long, global = true, default_value_t = 1e-9)]
    margin: f64,
    /// Tolerance for eigenvalue iterations.
    #[arg(long, global = true, default_value_t = 1e-10)]
    tol: f64,
    /// Reject A and B unless they have the extended Leslie pattern.
    #[arg(long, global = true)]
    leslie: bool,
}

#[derive(Args, Debug)]
struct Pair {
    #[arg(short = 'a', value_name = "FILE")]
    a: PathBuf,
    #[arg(short = 'b', value_name = "FILE")]
    b: PathBuf,
}

#[derive(Subcommand, Debug)]
enum Verb {
    /// Spectral radius of one matrix.
    SpectralRadius {
        #[arg(short = 'a', value_name = "FILE")]
        a: PathBuf,
    },
    /// Search for (or re-verify) a Lyapunov certificate for a pair.
    Certify {
        /// Certificate family; `cdlf` is refined by `--flavor`.
        #[arg(value_enum)]
        kind: Option<CertKind>,
        #[arg(long, value_enum)]
        flavor: Option<Flavor>,
        /// Re-verify a certificate file instead of searching.
        #[arg(long, value_name = "CERT")]
        verify: Option<PathBuf>,
        /// Coupling class used when re-verifying class-level certificates.
        #[arg(long, value_enum, default_value = "diagonal")]
        coupling: Coupling,
        #[command(flatten)]
        pair: Pair,
    },
    /// Certify or refute robust diffusive stability for a coupling class.
    CheckRds {
        #[arg(long, value_enum, default_value = "diagonal")]
        coupling: Coupling,
        #[command(flatten)]
        pair: Pair,
    },
    /// Search for an admissible coupling with rho(M) > 1.
    FindDestabilizer {
        #[arg(long, value_enum, default_value = "diagonal")]
        coupling: Coupling,
        #[command(flatten)]
        pair: Pair,
    },
    /// Spectral radius of the coupled matrix for a given D.
    RhoCoupled {
        /// Coupling class of D; inferred from D when omitted.
        #[arg(long, value_enum)]
        coupling: Option<Coupling>,
        #[command(flatten)]
        pair: Pair,
        #[arg(short = 'd', value_name = "FILE")]
        d: PathBuf,
    },
    /// Iterate the coupled system and write the trajectory as CSV.
    Simulate {
        #[arg(long, value_enum)]
        coupling: Option<Coupling>,
        #[command(flatten)]
        pair: Pair,
        #[arg(short = 'd', value_name = "FILE")]
        d: PathBuf,
        #[arg(long, default_value_t = 200)]
        steps: usize,
        /// Comma-separated initial x; all ones by default.
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        x0: Option<Vec<f64>>,
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        y0: Option<Vec<f64>>,
        #[arg(long, value_name = "PATH")]
        out: Option<PathBuf>,
    },
    /// Spectral radii of all 2^n row selections of A and B.
    RowSelections {
        #[command(flatten)]
        pair: Pair,
    },
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
enum CertKind {
    Clclf,
    Jlclf,
    Cdlf,
    Auto,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
enum Flavor {
    Clclf,
    Jlclf,
    CdlfStein,
    CdlfLyapunov,
    Auto,
    Stein,
    Lyapunov,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
enum Coupling {
    Diagonal,
    Leslie,
    LeslieSingleRow,
}

impl From<Coupling> for CouplingKind {
    fn from(c: Coupling) -> Self {
        match c {
            Coupling::Diagonal => CouplingKind::Diagonal,
            Coupling::Leslie => CouplingKind::Leslie,
            Coupling::LeslieSingleRow => CouplingKind::LeslieSingleRow,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Search {
    Clclf,
    Jlclf,
    Stein,
    Lyapunov,
}

/// Input or usage problem; reported on one line with exit code 2.
#[derive(Debug)]
struct UsageError(String);

type CliResult<T> = std::result::Result<T, UsageError>;

fn at(path: &Path) -> impl Fn(rds_core::Error) -> UsageError + '_ {
    move |e| UsageError(format!("{}: {e}", path.display()))
}

fn load_matrix(path: &Path, leslie: bool) -> CliResult<NonnegMatrix> {
    let text = fs::read_to_string(path)
        .map_err(|e| UsageError(format!("{}: cannot read: {e}", path.display())))?;
    let m: NonnegMatrix =
        serde_json::from_str(&text).map_err(|e| UsageError(format!("{}: {e}", path.display())))?;
    if leslie {
        validate_leslie(&m).map_err(at(path))?;
    }
    Ok(m)
}

fn load_pair(pair: &Pair, opts: &Opts) -> CliResult<(NonnegMatrix, NonnegMatrix)> {
    let a = load_matrix(&pair.a, opts.leslie)?;
    let b = load_matrix(&pair.b, opts.leslie)?;
    if a.n() != b.n() {
        return Err(UsageError(format!(
            "{}: dimension mismatch: {} is {}x{}, this file is {}x{}",
            pair.b.display(),
            pair.a.display(),
            a.n(),
            a.n(),
            b.n(),
            b.n()
        )));
    }
    Ok((a, b))
}

fn system(pair: &Pair, opts: &Opts, kind: CouplingKind) -> CliResult<SystemPair> {
    let (a, b) = load_pair(pair, opts)?;
    SystemPair::with_margin(a, b, kind, opts.margin)
        .map_err(|e| UsageError(format!("{}, {}: {e}", pair.a.display(), pair.b.display())))
}

/// Builds the system for a given D, inferring the class when not specified.
fn coupled_system(
    pair: &Pair,
    d_path: &Path,
    coupling: Option<Coupling>,
    opts: &Opts,
) -> CliResult<(SystemPair, NonnegMatrix)> {
    let (a, b) = load_pair(pair, opts)?;
    let d = load_matrix(d_path, false)?;
    if d.n() != a.n() {
        return Err(UsageError(format!(
            "{}: dimension mismatch: expected {}x{}, got {}x{}",
            d_path.display(),
            a.n(),
            a.n(),
            d.n(),
            d.n()
        )));
    }
    let kinds: Vec<CouplingKind> = match coupling {
        Some(c) => vec![c.into()],
        None => vec![CouplingKind::Diagonal, CouplingKind::Leslie],
    };
    let mut last = None;
    for kind in kinds {
        let sys = SystemPair::with_margin(a.clone(), b.clone(), kind, opts.margin)
            .map_err(|e| UsageError(format!("{}, {}: {e}", pair.a.display(), pair.b.display())));
        match sys {
            Ok(sys) => match sys.check_admissible(&d) {
                Ok(()) => return Ok((sys, d)),
                Err(e) => last = Some(at(d_path)(e)),
            },
            Err(e) => last = Some(e),
        }
    }
    Err(last.expect("at least one class was tried"))
}

fn emit<T: Serialize>(opts: &Opts, value: &T, text: String) {
    if opts.json {
        println!(
            "{}",
            serde_json::to_string_pretty(value).expect("report serializes")
        );
    } else {
        print!("{text}");
    }
}

fn fmt_vec(v: &[f64]) -> String {
    let cells: Vec<String> = v.iter().map(|x| format!("{x:.6}")).collect();
    format!("[{}]", cells.join(", "))
}

fn run(cli: Cli) -> CliResult<u8> {
    let opts = cli.opts;
    if !(opts.margin >= 0.0 && opts.margin < 1.0) {
        return Err(UsageError(format!(
            "--margin must lie in [0, 1), got {}",
            opts.margin
        )));
    }
    if !(opts.tol > 0.0) {
        return Err(UsageError(format!(
            "--tol must be positive, got {}",
            opts.tol
        )));
    }
    if opts.budget == 0 {
        return Err(UsageError("--budget must be at least 1".into()));
    }
    match cli.verb {
        Verb::SpectralRadius { a } => {
            let m = load_matrix(&a, opts.leslie)?;
            let r = spectral_radius(&m, opts.tol).map_err(at(&a))?;
            let text = format!(
                "rho = {:.12}\nschur: {}\n",
                r.rho,
                r.rho < 1.0 - opts.margin
            );
            emit(&opts, &r, text);
            Ok(EXIT_DEFINITE)
        }
        Verb::Certify {
            kind,
            flavor,
            verify,
            coupling,
            pair,
        } => match verify {
            Some(cert_path) => verify_cert(&pair, &cert_path, coupling, &opts),
            None => certify(&pair, kind, flavor, &opts),
        },
        Verb::CheckRds { coupling, pair } => {
            let sys = system(&pair, &opts, coupling.into())?;
            let v = decide_rds(&sys, opts.budget, opts.seed).map_err(at(&pair.a))?;
            let mut text = format!("status: {:?}\n", v.status).to_lowercase();
            if let Some(r) = v.reason {
                let _ = writeln!(text, "reason: {}", r.describe());
            }
            if let Some(d) = &v.witness_d {
                let _ = write!(
                    text,
                    "destabilizing D (rho(M) = {:.9}):\n{}",
                    v.rho_at_witness.unwrap_or(f64::NAN),
                    d.as_matrix()
                );
            }
            if let Some(n) = &v.note {
                let _ = writeln!(text, "note: {n}");
            }
            emit(&opts, &v, text);
            Ok(if v.status == Status::Undecided {
                EXIT_UNDECIDED
            } else {
                EXIT_DEFINITE
            })
        }
        Verb::FindDestabilizer { coupling, pair } => {
            let sys = system(&pair, &opts, coupling.into())?;
            let found = find_destabilizer(&sys, opts.budget, opts.seed).map_err(at(&pair.a))?;
            let report = json!({
                "found": found.is_some(),
                "d": found.as_ref().map(|(d, _)| d),
                "rho": found.as_ref().map(|(_, r)| r),
                "seed": opts.seed,
                "budget": opts.budget,
            });
            let text = match &found {
                Some((d, r)) => format!("found D with rho(M) = {r:.9}:\n{}", d.as_matrix()),
                None => format!(
                    "no destabilizing coupling found within budget {}\n",
                    opts.budget
                ),
            };
            emit(&opts, &report, text);
            Ok(if found.is_some() {
                EXIT_DEFINITE
            } else {
                EXIT_UNDECIDED
            })
        }
        Verb::RhoCoupled { coupling, pair, d } => {
            let (sys, dm) = coupled_system(&pair, &d, coupling, &opts)?;
            let m = assemble_coupled(sys.a(), sys.b(), &dm).map_err(at(&d))?;
            let r = spectral_radius(m.matrix(), opts.tol).map_err(at(&d))?;
            let report = json!({
                "rho": r.rho,
                "coupling": sys.kind(),
                "stable": r.rho < 1.0,
            });
            emit(&opts, &report, format!("rho(M) = {:.9}\n", r.rho));
            Ok(EXIT_DEFINITE)
        }
        Verb::Simulate {
            coupling,
            pair,
            d,
            steps,
            x0,
            y0,
            out,
        } => {
            let (sys, dm) = coupled_system(&pair, &d, coupling, &opts)?;
            let n = sys.n();
            let x0 = x0.unwrap_or_else(|| vec![1.0; n]);
            let y0 = y0.unwrap_or_else(|| vec![1.0; n]);
            let t = simulate_coupled(&sys, &dm, &x0, &y0, steps)
                .map_err(|e| UsageError(format!("simulate: {e}")))?;
            if let Some(path) = &out {
                fs::write(path, t.to_csv())
                    .map_err(|e| UsageError(format!("{}: cannot write: {e}", path.display())))?;
            }
            let report = json!({
                "steps": t.norms.len() - 1,
                "final_norm": t.norms.last(),
                "growth_estimate": t.growth_estimate,
                "divergent": t.divergent,
            });
            let text = format!(
                "steps: {}\nfinal norm: {:e}\ngrowth estimate (per step, log): {:.6}\ndivergent: {}\n",
                t.norms.len() - 1,
                t.norms.last().copied().unwrap_or(f64::NAN),
                t.growth_estimate,
                t.divergent
            );
            emit(&opts, &report, text);
            Ok(EXIT_DEFINITE)
        }
        Verb::RowSelections { pair } => {
            let (a, b) = load_pair(&pair, &opts)?;
            let sel = row_selections(&a, &b).map_err(at(&pair.a))?;
            let mut rows = Vec::with_capacity(sel.len());
            let mut text = String::new();
            let mut all_schur = true;
            for s in &sel {
                let r = spectral_radius(&s.matrix, opts.tol)
                    .map_err(at(&pair.a))?
                    .rho;
                all_schur &= r < 1.0 - opts.margin;
                let pick: String = s
                    .chooser
                    .iter()
                    .map(|&c| if c { 'A' } else { 'B' })
                    .collect();
                let _ = writeln!(text, "{pick}  rho = {r:.9}");
                rows.push(json!({ "rows_from": pick, "rho": r }));
            }
            let _ = writeln!(text, "all selections schur: {all_schur}");
            emit(
                &opts,
                &json!({ "selections": rows, "all_schur": all_schur }),
                text,
            );
            Ok(EXIT_DEFINITE)
        }
    }
}

fn searches(kind: Option<CertKind>, flavor: Option<Flavor>) -> CliResult<Vec<Search>> {
    let all = vec![
        Search::Clclf,
        Search::Jlclf,
        Search::Lyapunov,
        Search::Stein,
    ];
    let from_flavor = |f: Flavor| match f {
        Flavor::Clclf => vec![Search::Clclf],
        Flavor::Jlclf => vec![Search::Jlclf],
        Flavor::CdlfStein | Flavor::Stein => vec![Search::Stein],
        Flavor::CdlfLyapunov | Flavor::Lyapunov => vec![Search::Lyapunov],
        Flavor::Auto => all.clone(),
    };
    Ok(match (kind, flavor) {
        (None | Some(CertKind::Auto), None) => all.clone(),
        (None | Some(CertKind::Auto), Some(f)) => from_flavor(f),
        (Some(CertKind::Clclf), None | Some(Flavor::Clclf | Flavor::Auto)) => vec![Search::Clclf],
        (Some(CertKind::Jlclf), None | Some(Flavor::Jlclf | Flavor::Auto)) => vec![Search::Jlclf],
        (Some(CertKind::Cdlf), None | Some(Flavor::Auto)) => vec![Search::Lyapunov, Search::Stein],
        (Some(CertKind::Cdlf), Some(Flavor::Stein | Flavor::CdlfStein)) => vec![Search::Stein],
        (Some(CertKind::Cdlf), Some(Flavor::Lyapunov | Flavor::CdlfLyapunov)) => {
            vec![Search::Lyapunov]
        }
        (Some(k), Some(f)) => {
            return Err(UsageError(
                format!("--flavor {f:?} does not apply to certificate kind {k:?}").to_lowercase(),
            ))
        }
    })
}

fn certify(
    pair: &Pair,
    kind: Option<CertKind>,
    flavor: Option<Flavor>,
    opts: &Opts,
) -> CliResult<u8> {
    let plan = searches(kind, flavor)?;
    let (a, b) = load_pair(pair, opts)?;
    let fail =
        |e: rds_core::Error| UsageError(format!("{}, {}: {e}", pair.a.display(), pair.b.display()));
    let mut tried = Vec::new();
    let mut undecided = false;
    for s in plan {
        let (name, cert) = match s {
            Search::Clclf => (
                "clclf",
                find_clclf(&a, &b)
                    .map_err(fail)?
                    .map(Certificate::Copositive),
            ),
            Search::Jlclf => (
                "jlclf",
                find_jlclf(&a, &b)
                    .map_err(fail)?
                    .map(Certificate::Copositive),
            ),
            Search::Stein | Search::Lyapunov => {
                let (name, fl) = if s == Search::Stein {
                    ("cdlf-stein", DiagonalFlavor::Stein)
                } else {
                    ("cdlf-lyapunov", DiagonalFlavor::Lyapunov)
                };
                match find_cdlf(&a, &b, fl).map_err(fail)? {
                    CdlfOutcome::Found(c) => (name, Some(Certificate::Diagonal(c))),
                    CdlfOutcome::Infeasible { .. } => (name, None),
                    CdlfOutcome::Undecided { .. } => {
                        undecided = true;
                        (name, None)
                    }
                }
            }
        };
        tried.push(name);
        if let Some(cert) = cert {
            let text = match &cert {
                Certificate::Copositive(c) => format!(
                    "found {name} certificate\nv = {}\nmargin = {:e}\n",
                    fmt_vec(c.vector.as_slice()),
                    c.margin
                ),
                Certificate::Diagonal(c) => format!(
                    "found {name} certificate\nE = diag{}\nmargin = {:e}\n",
                    fmt_vec(&c.diag),
                    c.margin
                ),
                _ => unreachable!("only pair certificates are searched here"),
            };
            emit(opts, &cert, text);
            return Ok(EXIT_DEFINITE);
        }
    }
    let report = json!({ "found": false, "tried": tried, "undecided": undecided });
    let text = if undecided {
        format!(
            "no certificate found ({}); the diagonal search was inconclusive\n",
            tried.join(", ")
        )
    } else {
        format!("no certificate exists ({})\n", tried.join(", "))
    };
    emit(opts, &report, text);
    Ok(if undecided {
        EXIT_UNDECIDED
    } else {
        EXIT_DEFINITE
    })
}

fn verify_cert(pair: &Pair, cert_path: &Path, coupling: Coupling, opts: &Opts) -> CliResult<u8> {
    let text = fs::read_to_string(cert_path)
        .map_err(|e| UsageError(format!("{}: cannot read: {e}", cert_path.display())))?;
    let cert: Certificate = serde_json::from_str(&text)
        .map_err(|e| UsageError(format!("{}: not a certificate: {e}", cert_path.display())))?;
    let ok = match &cert {
        Certificate::Copositive(c) => {
            let (a, b) = load_pair(pair, opts)?;
            verify_copositive_cert(&a, &b, c)
        }
        Certificate::Diagonal(c) => {
            let (a, b) = load_pair(pair, opts)?;
            verify_diagonal_cert(&a, &b, c)
        }
        _ => {
            let sys = system(pair, opts, coupling.into())?;
            verify_certificate(&sys, &cert).map_err(at(cert_path))?
        }
    };
    let report = json!({ "verified": ok, "certificate": cert });
    let text = if ok {
        "certificate verified\n"
    } else {
        "certificate rejected\n"
    };
    emit(opts, &report, text.to_string());
    Ok(if ok { EXIT_DEFINITE } else { EXIT_UNDECIDED })
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            if !e.use_stderr() {
                let _ = e.print();
                return ExitCode::from(EXIT_DEFINITE);
            }
            let rendered = e.render().to_string();
            let line = rendered.lines().next().unwrap_or("usage error");
            eprintln!("{}", line.trim());
            return ExitCode::from(EXIT_USAGE);
        }
    };
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(UsageError(msg)) => {
            eprintln!("error: {}", msg.replace('\n', " "));
            ExitCode::from(EXIT_USAGE)
        }
    }
}
