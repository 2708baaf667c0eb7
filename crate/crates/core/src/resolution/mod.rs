//! Verification of symplectic-resolution candidates.
//!
//! A candidate is a disjoint union of symplectic pieces, each mapped into
//! one target structure. Surjectivity is only measured as grid coverage of
//! the target box; properness is never checked.

mod solver;

use std::collections::HashSet;

use serde::Serialize;
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::config::Config;
use crate::expr::{Env, EvalError};
use crate::grid::{expand_counts, scan_zero_set, Grid, ScanConfig};
use crate::morphism::{verify_morphism, MorphismError, MorphismStatus, MorphismVerdict, SmoothMap};
use crate::obstruction::{obstruction_verdict, ObstructionStatus, ObstructionVerdict};
use crate::poisson::{numeric_rank, pfaffian_of, PoissonError, PoissonStructure};

pub use solver::{solve, Solution, SolverConfig};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ResolutionError {
    #[error("a candidate needs at least one piece")]
    NoPieces,
    #[error("piece name `{0}` is used twice")]
    DuplicateName(String),
    #[error("piece `{piece}` has dimension {source_dim}, target has {target_dim}")]
    DimensionMismatch { piece: String, source_dim: usize, target_dim: usize },
    #[error("map of piece `{0}` does not target the candidate's target chart")]
    TargetMismatch(String),
    #[error("map of piece `{0}` does not start from the piece's chart")]
    SourceMismatch(String),
    #[error("probe {probe} of piece `{piece}` has the wrong dimension or lies outside its box")]
    BadProbe { piece: String, probe: usize },
    #[error("piece `{piece}`: {error}")]
    Piece { piece: String, error: MorphismError },
    #[error(transparent)]
    Poisson(#[from] PoissonError),
}

/// One symplectic source chart with its map into the target.
#[derive(Debug, Clone, PartialEq)]
pub struct Piece {
    pub name: String,
    pub structure: PoissonStructure,
    pub map: SmoothMap,
    /// Source points checked before random samples in the morphism test.
    pub probes: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ResolutionCandidate {
    target: PoissonStructure,
    pieces: Vec<Piece>,
}

impl ResolutionCandidate {
    pub fn new(target: PoissonStructure, pieces: Vec<Piece>) -> Result<Self, ResolutionError> {
        if pieces.is_empty() {
            return Err(ResolutionError::NoPieces);
        }
        let mut names = HashSet::new();
        for piece in &pieces {
            if !names.insert(piece.name.as_str()) {
                return Err(ResolutionError::DuplicateName(piece.name.clone()));
            }
            let sd = piece.structure.dim();
            if sd != target.dim() {
                return Err(ResolutionError::DimensionMismatch {
                    piece: piece.name.clone(),
                    source_dim: sd,
                    target_dim: target.dim(),
                });
            }
            if piece.map.target() != target.chart() {
                return Err(ResolutionError::TargetMismatch(piece.name.clone()));
            }
            if piece.map.source() != piece.structure.chart() {
                return Err(ResolutionError::SourceMismatch(piece.name.clone()));
            }
            if let Some(k) = piece.probes.iter().position(|p| !piece.structure.chart().contains(p)) {
                return Err(ResolutionError::BadProbe { piece: piece.name.clone(), probe: k });
            }
        }
        Ok(ResolutionCandidate { target, pieces })
    }

    pub fn target(&self) -> &PoissonStructure {
        &self.target
    }

    pub fn pieces(&self) -> &[Piece] {
        &self.pieces
    }
}

/// Seed for one piece, independent of its position in the piece list.
pub fn piece_seed(seed: u64, name: &str) -> u64 {
    let mut h = Sha256::new();
    h.update(seed.to_le_bytes());
    h.update(name.as_bytes());
    let digest = h.finalize();
    u64::from_le_bytes(digest[..8].try_into().expect("digest has 32 bytes"))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum SymplecticVerdict {
    Pass { min_abs_pf: f64, samples: usize },
    Fail { witness: Env, abs_pf: f64 },
}

impl SymplecticVerdict {
    pub fn passed(&self) -> bool {
        matches!(self, SymplecticVerdict::Pass { .. })
    }
}

/// Nodes per axis for the zero search inside [`verify_symplectic`].
fn symplectic_grid_nodes(dim: usize) -> usize {
    ((2e5f64).powf(1.0 / dim as f64).floor() as usize).clamp(3, 21)
}

/// Passes iff `|Pf| > tol` at `n_samples` seeded points and a grid zero
/// search over the box finds no point with `|Pf| <= tol`.
///
/// The grid search is what catches thin zero sets (such as `{p,q} = q`)
/// that random samples almost surely miss.
pub fn verify_symplectic(
    structure: &PoissonStructure,
    n_samples: usize,
    tol: f64,
    seed: u64,
) -> Result<SymplecticVerdict, PoissonError> {
    let d = structure.dim();
    if d % 2 == 1 {
        return Err(PoissonError::OddDimension(d));
    }
    let compiled = structure.compile();
    let chart = structure.chart();
    let pf = |x: &[f64]| compiled.matrix_at(x).map(|m| pfaffian_of(&m));
    let mut sampler = chart.sample_box().sampler(seed);
    let mut min_abs = f64::INFINITY;
    for _ in 0..n_samples {
        let x = sampler.next_point();
        let v = pf(&x)?.abs();
        if v <= tol {
            return Ok(SymplecticVerdict::Fail { witness: chart.env(&x), abs_pf: v });
        }
        min_abs = min_abs.min(v);
    }
    let grid = Grid::new(chart.bounds(), symplectic_grid_nodes(d));
    let cfg = ScanConfig { abs_threshold: Some(tol), ..ScanConfig::default() };
    let scan = scan_zero_set(&grid, &|x| pf(x).ok(), &cfg);
    if let Some(x) = scan.points.first() {
        let v = pf(x)?.abs();
        return Ok(SymplecticVerdict::Fail { witness: chart.env(x), abs_pf: v });
    }
    if scan.undefined_nodes > 0 {
        log::warn!("Pfaffian undefined at {} grid nodes of the piece box", scan.undefined_nodes);
    }
    Ok(SymplecticVerdict::Pass { min_abs_pf: min_abs, samples: n_samples })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CoverageWitness {
    pub target: Vec<f64>,
    pub piece: String,
    pub preimage: Vec<f64>,
    pub residual: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CoverageResult {
    pub grid: Vec<usize>,
    pub total: usize,
    pub covered: usize,
    pub covered_fraction: f64,
    pub uncovered: Vec<Vec<f64>>,
    pub witnesses: Vec<CoverageWitness>,
}

/// Tries every target grid node against each piece in order; a node is
/// covered when some piece's solver reaches the solver tolerance.
pub fn surjectivity_coverage(
    cand: &ResolutionCandidate,
    nodes: &[usize],
    solver_cfg: &SolverConfig,
    seed: u64,
) -> CoverageResult {
    let grid = Grid::with_counts(cand.target.chart().bounds(), &expand_counts(nodes, cand.target.dim()));
    let compiled: Vec<_> = cand.pieces.iter().map(|p| (p, p.map.compile(), piece_seed(seed, &p.name))).collect();
    let total = grid.node_count();
    let mut result = CoverageResult {
        grid: grid.counts().to_vec(),
        total,
        covered: 0,
        covered_fraction: 0.0,
        uncovered: Vec::new(),
        witnesses: Vec::new(),
    };
    let mut idx = vec![0usize; grid.dim()];
    for k in 0..total {
        let target = grid.node(&idx);
        let found = compiled.iter().find_map(|(piece, map, s)| {
            let point_seed = s.wrapping_add(k as u64);
            solve(map, piece.structure.chart().bounds(), &target, point_seed, solver_cfg).map(|sol| CoverageWitness {
                target: target.clone(),
                piece: piece.name.clone(),
                preimage: sol.preimage,
                residual: sol.residual,
            })
        });
        match found {
            Some(w) => {
                result.covered += 1;
                result.witnesses.push(w);
            }
            None => result.uncovered.push(target),
        }
        grid.advance(&mut idx);
    }
    result.covered_fraction = result.covered as f64 / total as f64;
    result
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RegularValueCheck {
    pub samples: usize,
    /// Samples where the map was a local diffeomorphism.
    pub regular_samples: usize,
    /// Regular samples whose image had less than full rank.
    pub violations: usize,
    pub witness: Option<Env>,
    /// Covered target nodes where the target bivector is degenerate.
    pub singular_targets: usize,
    /// Of those, preimages where the map was not critical.
    pub preimage_violations: usize,
    pub preimage_witness: Option<Vec<f64>>,
}

impl RegularValueCheck {
    pub fn consistent(&self) -> bool {
        self.violations == 0 && self.preimage_violations == 0
    }
}

/// Where the Jacobian is invertible the target must be symplectic at the
/// image, and preimages of degenerate target points must be critical.
pub fn regular_value_consistency(
    cand: &ResolutionCandidate,
    coverage: &CoverageResult,
    cfg: &Config,
) -> Result<RegularValueCheck, ResolutionError> {
    let target = cand.target.compile();
    let full = cand.target.dim();
    let rank_at = |m: &[f64]| -> Result<usize, EvalError> {
        Ok(numeric_rank(&target.matrix_at(m).map_err(EvalError::Domain)?, &cfg.rank).0)
    };
    let mut out = RegularValueCheck {
        samples: 0,
        regular_samples: 0,
        violations: 0,
        witness: None,
        singular_targets: 0,
        preimage_violations: 0,
        preimage_witness: None,
    };
    for piece in &cand.pieces {
        let map = piece.map.compile();
        let chart = piece.structure.chart();
        let mut sampler = chart.sample_box().sampler(piece_seed(cfg.seed, &piece.name) ^ 0x5eed);
        for _ in 0..cfg.regular_samples {
            let x = sampler.next_point();
            out.samples += 1;
            let (Ok(nd), Ok(img)) = (map.normalized_det(&x), map.image(&x)) else { continue };
            if nd.abs() <= cfg.critical_tau {
                continue;
            }
            out.regular_samples += 1;
            let r = rank_at(&img).map_err(|e| ResolutionError::Poisson(e.into()))?;
            if r < full {
                out.violations += 1;
                out.witness.get_or_insert_with(|| chart.env(&x));
            }
        }
    }
    for w in &coverage.witnesses {
        let r = rank_at(&w.target).map_err(|e| ResolutionError::Poisson(e.into()))?;
        if r == full {
            continue;
        }
        out.singular_targets += 1;
        let piece = cand.pieces.iter().find(|p| p.name == w.piece).expect("witness names a piece");
        let nd = piece.map.compile().normalized_det(&w.preimage).unwrap_or(0.0);
        if nd.abs() >= cfg.critical_tau {
            out.preimage_violations += 1;
            out.preimage_witness.get_or_insert_with(|| w.preimage.clone());
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PieceOutcome {
    pub name: String,
    pub symplectic: SymplecticVerdict,
    pub morphism: MorphismVerdict,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum ResolutionStatus {
    Verified,
    Refuted,
    Inconclusive,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ResolutionOutcome {
    pub status: ResolutionStatus,
    pub reason: Option<String>,
    pub pieces: Vec<PieceOutcome>,
    pub coverage: CoverageResult,
    pub regular_values: RegularValueCheck,
    pub obstruction: ObstructionVerdict,
    pub notes: Vec<String>,
}

pub const NOT_PROPER_CAVEAT: &str = "The target's singular locus contains a codimension-1 sheet, so no proper \
    symplectic resolution exists. This candidate is therefore not proper; its coverage and morphism checks are \
    unaffected.";

/// Runs every check and combines them into one status.
///
/// Refuted means some piece failed symplecticity or the morphism test.
/// Inconclusive means the checks passed but coverage was incomplete, the
/// regular-value consistency failed, or the target carries an
/// unconditional obstruction that contradicts the candidate.
pub fn verify_resolution(cand: &ResolutionCandidate, cfg: &Config) -> Result<ResolutionOutcome, ResolutionError> {
    let mut pieces = Vec::new();
    for piece in &cand.pieces {
        let seed = piece_seed(cfg.seed, &piece.name);
        let symplectic = verify_symplectic(&piece.structure, cfg.samples, cfg.tol, seed)?;
        let morphism =
            verify_morphism(&piece.structure, &cand.target, &piece.map, cfg.samples, cfg.tol, seed, &piece.probes)
                .map_err(|error| ResolutionError::Piece { piece: piece.name.clone(), error })?;
        pieces.push(PieceOutcome { name: piece.name.clone(), symplectic, morphism });
    }
    let coverage = surjectivity_coverage(cand, &cfg.coverage_nodes, &cfg.solver, cfg.seed);
    let regular_values = regular_value_consistency(cand, &coverage, cfg)?;
    let locus_cfg = crate::obstruction::LocusConfig { rank: cfg.rank, ..cfg.locus.clone() };
    let obstruction = obstruction_verdict(&cand.target, &locus_cfg)?;

    let mut notes = Vec::new();
    let refuted_by = pieces.iter().find_map(|p| {
        if !p.symplectic.passed() {
            Some(format!("piece `{}` is not symplectic on its box", p.name))
        } else if p.morphism.status == MorphismStatus::NotMorphism {
            Some(format!("piece `{}` is not a Poisson morphism", p.name))
        } else {
            None
        }
    });
    let (status, reason) = if let Some(r) = refuted_by {
        (ResolutionStatus::Refuted, Some(r))
    } else if coverage.covered < coverage.total {
        (ResolutionStatus::Inconclusive, Some(format!("{} target grid points not covered", coverage.uncovered.len())))
    } else if !regular_values.consistent() {
        (ResolutionStatus::Inconclusive, Some("regular-value consistency failed".to_string()))
    } else if matches!(
        obstruction.status,
        ObstructionStatus::NotDenseSymplectic | ObstructionStatus::NoResolutionRankZero
    ) {
        (
            ResolutionStatus::Inconclusive,
            Some("checks passed but the target carries an obstruction to every resolution".to_string()),
        )
    } else {
        (ResolutionStatus::Verified, None)
    };
    if status == ResolutionStatus::Verified && obstruction.status == ObstructionStatus::NoProperResolution {
        notes.push(NOT_PROPER_CAVEAT.to_string());
    }
    if cand.pieces.len() > 1 {
        notes.push(format!("The source is a disjoint union of {} pieces and is not connected.", cand.pieces.len()));
    }
    Ok(ResolutionOutcome { status, reason, pieces, coverage, regular_values, obstruction, notes })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::{parse, Expr, Interval};
    use crate::poisson::Chart;

    fn p(s: &str) -> Expr {
        parse(s).unwrap()
    }

    fn target(entry: &str) -> PoissonStructure {
        PoissonStructure::new(Chart::uniform(&["x", "y"], -2.0, 2.0).unwrap(), [((0, 1), p(entry))]).unwrap()
    }

    fn piece(name: &str, t: &PoissonStructure, lo: [f64; 2], hi: [f64; 2], bracket: &str, comps: [&str; 2]) -> Piece {
        let chart = Chart::new(&["p", "q"], &[Interval::new(lo[0], hi[0]), Interval::new(lo[1], hi[1])]).unwrap();
        let structure = PoissonStructure::new(chart.clone(), [((0, 1), p(bracket))]).unwrap();
        let map = SmoothMap::new(chart, t.chart().clone(), comps.iter().map(|c| p(c)).collect()).unwrap();
        Piece { name: name.into(), structure, map, probes: vec![] }
    }

    fn union3() -> ResolutionCandidate {
        let t = target("x");
        let (lo, hi) = ([-3.0, -2.5], [1.5, 2.5]);
        ResolutionCandidate::new(
            t.clone(),
            vec![
                piece("plus", &t, lo, hi, "1", ["exp(p)", "q"]),
                piece("minus", &t, lo, hi, "1", ["-exp(p)", "q"]),
                piece("axis", &t, lo, hi, "1", ["0", "q"]),
            ],
        )
        .unwrap()
    }

    #[test]
    fn symplectic_checks() {
        let chart = Chart::new(&["p", "q"], &[Interval::new(-3.0, 3.0), Interval::new(-2.0, 2.0)]).unwrap();
        let canon = PoissonStructure::standard_symplectic(chart.clone()).unwrap();
        assert_eq!(
            verify_symplectic(&canon, 100, 1e-9, 1).unwrap(),
            SymplecticVerdict::Pass { min_abs_pf: 1.0, samples: 100 }
        );

        let powers = PoissonStructure::new(chart.clone(), [((0, 1), p("q^2*sin(p*q)^2 + cos(p*q)^2"))]).unwrap();
        match verify_symplectic(&powers, 1000, 1e-9, 1).unwrap() {
            SymplecticVerdict::Pass { min_abs_pf, .. } => assert!(min_abs_pf > 0.0),
            v => panic!("{v:?}"),
        }

        let degenerate = PoissonStructure::new(chart, [((0, 1), p("q"))]).unwrap();
        match verify_symplectic(&degenerate, 1000, 1e-9, 1).unwrap() {
            SymplecticVerdict::Fail { witness, abs_pf } => {
                assert!(witness.get("q").unwrap().abs() <= 1e-9);
                assert!(abs_pf <= 1e-9);
            }
            v => panic!("{v:?}"),
        }
    }

    #[test]
    fn candidate_validation() {
        let t = target("x");
        let (lo, hi) = ([-1.0, -1.0], [1.0, 1.0]);
        assert_eq!(ResolutionCandidate::new(t.clone(), vec![]), Err(ResolutionError::NoPieces));
        let a = piece("a", &t, lo, hi, "1", ["p", "q"]);
        assert_eq!(
            ResolutionCandidate::new(t.clone(), vec![a.clone(), a.clone()]),
            Err(ResolutionError::DuplicateName("a".into()))
        );
        let mut bad = a.clone();
        bad.probes = vec![vec![5.0, 0.0]];
        assert!(matches!(ResolutionCandidate::new(t, vec![bad]), Err(ResolutionError::BadProbe { .. })));
    }

    #[test]
    fn coverage_of_single_exponential_piece() {
        let t = target("x");
        let cand = ResolutionCandidate::new(
            t.clone(),
            vec![piece("plus", &t, [-3.0, -2.5], [1.5, 2.5], "1", ["exp(p)", "q"])],
        )
        .unwrap();
        let cov = surjectivity_coverage(&cand, &[21], &SolverConfig::default(), 42);
        // Columns x = 0.2, ..., 2.0 are in the image; x = 0 and below are not.
        assert_eq!(cov.covered, 10 * 21);
        assert!(cov.uncovered.iter().all(|m| m[0] <= 0.0));
    }

    #[test]
    fn coverage_is_monotone_in_pieces() {
        let full = union3();
        let partial = ResolutionCandidate::new(full.target().clone(), full.pieces()[..2].to_vec()).unwrap();
        let cfg = SolverConfig::default();
        let a = surjectivity_coverage(&partial, &[11], &cfg, 42);
        let b = surjectivity_coverage(&full, &[11], &cfg, 42);
        assert!(b.covered >= a.covered);
        assert_eq!(b.covered_fraction, 1.0);
        // The shared pieces give the same witnesses.
        for w in &a.witnesses {
            assert!(b.witnesses.contains(w));
        }
    }

    #[test]
    fn union3_verifies_with_caveat() {
        let locus = crate::obstruction::LocusConfig { nodes: Some(vec![41]), ..Default::default() };
        let cfg = Config { samples: 500, coverage_nodes: vec![11], locus, ..Config::default() };
        let out = verify_resolution(&union3(), &cfg).unwrap();
        assert_eq!(out.status, ResolutionStatus::Verified, "{:?}", out.reason);
        assert_eq!(out.obstruction.status, ObstructionStatus::NoProperResolution);
        assert!(out.notes.iter().any(|n| n == NOT_PROPER_CAVEAT));
        assert!(out.regular_values.consistent());
        assert!(out.regular_values.singular_targets > 0);
    }

    #[test]
    fn seeds_depend_on_name_only() {
        assert_eq!(piece_seed(42, "a"), piece_seed(42, "a"));
        assert_ne!(piece_seed(42, "a"), piece_seed(42, "b"));
        assert_ne!(piece_seed(42, "a"), piece_seed(43, "a"));
    }
}
