//! Machine-readable reports for `check` and `verify`, plus their text form.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::Serialize;

use crate::config::Config;
use crate::expr::Env;
use crate::obstruction::{obstruction_verdict, ObstructionStatus, ObstructionVerdict};
use crate::poisson::{JacobiVerdict, PoissonStructure};
use crate::resolution::{piece_seed, verify_resolution, CoverageResult, ResolutionStatus, SymplecticVerdict};

use super::problem::{Problem, ProblemError};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// Uncovered target nodes listed in a report.
const MAX_LISTED_UNCOVERED: usize = 20;

/// Overall outcome; the exit code is a function of this alone.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    Check(ObstructionStatus),
    Verify(ResolutionStatus),
    /// Some declared bracket failed the Jacobi identity.
    NotPoisson,
}

impl Status {
    pub fn name(self) -> String {
        match self {
            Status::Check(s) => format!("{s:?}"),
            Status::Verify(s) => format!("{s:?}"),
            Status::NotPoisson => "NotPoisson".into(),
        }
    }

    pub fn exit_code(self) -> i32 {
        match self {
            Status::Check(s) if s.is_obstructed() => 1,
            Status::Check(_) => 0,
            Status::Verify(ResolutionStatus::Verified) => 0,
            Status::Verify(ResolutionStatus::Refuted) => 1,
            Status::Verify(ResolutionStatus::Inconclusive) => 2,
            Status::NotPoisson => 3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    pub verdict: String,
    pub residual: Option<f64>,
    pub witness: Option<Env>,
    pub citation: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub detail: Option<String>,
}

impl Check {
    fn new(name: impl Into<String>, verdict: impl Into<String>) -> Self {
        Check {
            name: name.into(),
            verdict: verdict.into(),
            residual: None,
            witness: None,
            citation: None,
            detail: None,
        }
    }
}

/// Settings the run actually used.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunOptions {
    pub seed: u64,
    pub samples: usize,
    pub tol: f64,
    pub grid: Option<Vec<usize>>,
    pub jacobi: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CoverageSummary {
    pub grid: Vec<usize>,
    pub total: usize,
    pub covered: usize,
    pub covered_fraction: f64,
    /// Covered nodes per piece, crediting the first piece that reached each.
    pub by_piece: BTreeMap<String, usize>,
    pub max_solver_residual: f64,
    pub uncovered_listed: Vec<Vec<f64>>,
}

impl CoverageSummary {
    fn new(c: &CoverageResult) -> Self {
        let mut by_piece = BTreeMap::new();
        for w in &c.witnesses {
            *by_piece.entry(w.piece.clone()).or_insert(0) += 1;
        }
        CoverageSummary {
            grid: c.grid.clone(),
            total: c.total,
            covered: c.covered,
            covered_fraction: c.covered_fraction,
            by_piece,
            max_solver_residual: c.witnesses.iter().map(|w| w.residual).fold(0.0, f64::max),
            uncovered_listed: c.uncovered.iter().take(MAX_LISTED_UNCOVERED).cloned().collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LocusSummary {
    pub kind: String,
    pub obstruction: String,
    pub statement: String,
    pub evidence: crate::obstruction::LocusEvidence,
    /// Bivector rank to number of evaluated locus points.
    pub ranks: BTreeMap<usize, usize>,
}

impl LocusSummary {
    fn new(v: &ObstructionVerdict) -> Self {
        LocusSummary {
            kind: format!("{:?}", v.locus.kind),
            obstruction: format!("{:?}", v.status),
            statement: v.statement.clone(),
            evidence: v.locus.evidence.clone(),
            ranks: v.locus_ranks.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Report {
    pub version: &'static str,
    pub command: &'static str,
    pub input_digest: String,
    pub options: RunOptions,
    pub status: String,
    pub exit_code: i32,
    pub reason: Option<String>,
    pub checks: Vec<Check>,
    pub coverage: Option<CoverageSummary>,
    pub locus: Option<LocusSummary>,
    pub notes: Vec<String>,
}

fn pass_fail(ok: bool) -> &'static str {
    if ok {
        "pass"
    } else {
        "fail"
    }
}

fn jacobi_check(name: &str, p: &PoissonStructure, cfg: &Config, seed: u64) -> Result<Check, ProblemError> {
    let mut c = Check::new(format!("jacobi:{name}"), "skipped");
    if !cfg.check_jacobi {
        return Ok(c);
    }
    let v = p
        .verify_jacobi(cfg.jacobi_samples, cfg.jacobi_tol, seed)
        .map_err(|error| ProblemError::Poisson { path: name.to_string(), error })?;
    c.verdict = pass_fail(v.passed()).into();
    match v {
        JacobiVerdict::Pass { samples, components } => {
            c.detail = Some(format!("{components} components at {samples} samples"));
        }
        JacobiVerdict::Fail { triple, witness, gap } => {
            c.residual = Some(gap);
            c.witness = Some(witness);
            c.detail = Some(format!("triple {triple:?}"));
        }
    }
    Ok(c)
}

fn obstruction_checks(v: &ObstructionVerdict) -> [Check; 2] {
    let mut locus = Check::new("locus", format!("{:?}", v.locus.kind));
    locus.detail = Some(format!(
        "{} zero points in {} cells, {} components",
        v.locus.evidence.zero_points, v.locus.evidence.zero_cells, v.locus.evidence.components
    ));
    let mut obs = Check::new("obstruction", format!("{:?}", v.status));
    obs.citation = Some(v.cited_result.clone());
    [locus, obs]
}

fn run_options(cfg: &Config, problem: &Problem) -> RunOptions {
    RunOptions {
        seed: cfg.seed,
        samples: cfg.samples,
        tol: cfg.tol,
        grid: problem.options.grid.clone(),
        jacobi: cfg.check_jacobi,
    }
}

fn finish(
    command: &'static str,
    digest: String,
    options: RunOptions,
    status: Status,
    reason: Option<String>,
    checks: Vec<Check>,
) -> Report {
    Report {
        version: VERSION,
        command,
        input_digest: digest,
        options,
        status: status.name(),
        exit_code: status.exit_code(),
        reason,
        checks,
        coverage: None,
        locus: None,
        notes: Vec::new(),
    }
}

fn not_poisson(checks: &[Check]) -> Option<String> {
    checks
        .iter()
        .find(|c| c.verdict == "fail")
        .map(|c| format!("{} failed: the declared bracket is not a Poisson structure", c.name))
}

/// Target-only analysis: Jacobi, locus classification and obstruction.
pub fn check_report(problem: &Problem, cfg: &Config, digest: String) -> Result<Report, ProblemError> {
    let opts = run_options(cfg, problem);
    let mut checks = vec![jacobi_check("target", &problem.target, cfg, cfg.seed)?];
    if let Some(reason) = not_poisson(&checks) {
        return Ok(finish("check", digest, opts, Status::NotPoisson, Some(reason), checks));
    }
    let v = obstruction_verdict(&problem.target, &cfg.locus)
        .map_err(|error| ProblemError::Poisson { path: "target".into(), error })?;
    checks.extend(obstruction_checks(&v));
    let mut r = finish("check", digest, opts, Status::Check(v.status), None, checks);
    r.locus = Some(LocusSummary::new(&v));
    r.notes.push(v.statement.clone());
    Ok(r)
}

/// Full candidate verification.
pub fn verify_report(problem: &Problem, cfg: &Config, digest: String) -> Result<Report, ProblemError> {
    let cand = problem.candidate.as_ref().ok_or(ProblemError::NoPieces)?;
    let opts = run_options(cfg, problem);
    let mut checks = vec![jacobi_check("target", &problem.target, cfg, cfg.seed)?];
    for piece in cand.pieces() {
        checks.push(jacobi_check(&piece.name, &piece.structure, cfg, piece_seed(cfg.seed, &piece.name))?);
    }
    if let Some(reason) = not_poisson(&checks) {
        return Ok(finish("verify", digest, opts, Status::NotPoisson, Some(reason), checks));
    }
    let out = verify_resolution(cand, cfg)?;
    for p in &out.pieces {
        let mut s = Check::new(format!("symplectic:{}", p.name), pass_fail(p.symplectic.passed()));
        match &p.symplectic {
            SymplecticVerdict::Pass { min_abs_pf, samples } => {
                s.residual = Some(*min_abs_pf);
                s.detail = Some(format!("min |Pf| over {samples} samples; grid search found no zero"));
            }
            SymplecticVerdict::Fail { witness, abs_pf } => {
                s.residual = Some(*abs_pf);
                s.witness = Some(witness.clone());
            }
        }
        checks.push(s);
        let mut m = Check::new(format!("morphism:{}", p.name), format!("{:?}", p.morphism.status));
        m.residual = Some(p.morphism.worst_residual);
        m.witness = p.morphism.witness.clone();
        m.detail = Some(format!("{} points", p.morphism.samples_used));
        checks.push(m);
    }
    let cov = &out.coverage;
    let mut c = Check::new("coverage", if cov.covered == cov.total { "complete" } else { "incomplete" });
    c.residual = Some(1.0 - cov.covered_fraction);
    c.detail = Some(format!("{} of {} target grid nodes reached", cov.covered, cov.total));
    checks.push(c);
    let rv = &out.regular_values;
    let mut c = Check::new("regular_values", if rv.consistent() { "consistent" } else { "inconsistent" });
    c.witness = rv.witness.clone();
    let mut detail = format!(
        "{} regular samples, {} violations; {} singular targets, {} non-critical preimages",
        rv.regular_samples, rv.violations, rv.singular_targets, rv.preimage_violations
    );
    if let Some(x) = &rv.preimage_witness {
        let _ = write!(detail, ", first at {x:?}");
    }
    c.detail = Some(detail);
    checks.push(c);
    checks.extend(obstruction_checks(&out.obstruction));

    let mut r = finish("verify", digest, opts, Status::Verify(out.status), out.reason.clone(), checks);
    r.coverage = Some(CoverageSummary::new(cov));
    r.locus = Some(LocusSummary::new(&out.obstruction));
    r.notes = out.notes.clone();
    r.notes.push(
        "Surjectivity is measured only as coverage of the target grid; properness of the map is not checked.".into(),
    );
    Ok(r)
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.3e}")).unwrap_or_default()
}

impl Report {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("reports serialize") + "\n"
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "sympres {} {} (input {})", self.version, self.command, &self.input_digest[..12]);
        let _ = writeln!(s, "status: {} (exit {})", self.status, self.exit_code);
        if let Some(r) = &self.reason {
            let _ = writeln!(s, "reason: {r}");
        }
        let width = self.checks.iter().map(|c| c.name.len()).max().unwrap_or(0);
        let _ = writeln!(s, "checks:");
        for c in &self.checks {
            let _ = write!(s, "  {:width$}  {:<22} {:>10}", c.name, c.verdict, fmt_opt(c.residual));
            if let Some(w) = &c.witness {
                let _ = write!(s, "  at {w}");
            }
            if let Some(d) = &c.detail {
                let _ = write!(s, "  [{d}]");
            }
            s.push('\n');
        }
        if let Some(c) = &self.coverage {
            let grid: Vec<String> = c.grid.iter().map(|n| n.to_string()).collect();
            let _ = writeln!(
                s,
                "coverage: {}/{} ({:.6}) on a {} grid",
                c.covered,
                c.total,
                c.covered_fraction,
                grid.join("x")
            );
        }
        if let Some(l) = &self.locus {
            let _ = writeln!(s, "locus: {} -> {}", l.kind, l.obstruction);
        }
        for c in self.checks.iter().filter_map(|c| c.citation.as_ref()) {
            let _ = writeln!(s, "cited: {c}");
        }
        for n in &self.notes {
            let _ = writeln!(s, "note: {n}");
        }
        s
    }
}
