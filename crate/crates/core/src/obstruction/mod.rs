//! Singular-locus scanning, classification and non-existence verdicts.
//!
//! The singular locus is the zero set of the Pfaffian. It is sampled on a
//! grid and classified by cell geometry; the thresholds here are desk-scale
//! heuristics, not proofs.

mod ode;

use std::collections::{BTreeMap, VecDeque};

use serde::Serialize;

use crate::expr::CompiledExpr;
use crate::grid::{expand_counts, scan_zero_set, Grid, ScanConfig};
use crate::poisson::{pfaffian_of, CompiledStructure, PointRank, PoissonError, PoissonStructure, RankConfig};

pub use ode::{characteristic_ode_trace, OdeConfig, OdeError, OdeTrace};

/// Largest dimension for which the Pfaffian is expanded symbolically
/// (15 terms at dimension 6).
const SYMBOLIC_PF_MAX_DIM: usize = 6;

#[derive(Debug, Clone, PartialEq)]
pub struct LocusConfig {
    /// Grid nodes per axis (one entry for all axes); by default the largest
    /// uniform count up to 81 that keeps the grid within `max_nodes`.
    pub nodes: Option<Vec<usize>>,
    pub max_nodes: usize,
    pub scan: ScanConfig,
    /// A refined point counts toward the codimension-1 quorum when the slope
    /// of `|Pf|^(2/dim)` there exceeds this.
    pub grad_tol: f64,
    pub quorum: f64,
    /// Slope step as a fraction of the widest box side.
    pub slope_step_rel: f64,
    pub rank: RankConfig,
    /// Cap on locus points that get gradients and ranks (evenly strided).
    pub max_eval_points: usize,
}

impl Default for LocusConfig {
    fn default() -> Self {
        LocusConfig {
            nodes: None,
            max_nodes: 50_000_000,
            scan: ScanConfig::default(),
            grad_tol: 1e-6,
            quorum: 0.9,
            slope_step_rel: 1e-8,
            rank: RankConfig::default(),
            max_eval_points: 50_000,
        }
    }
}

impl LocusConfig {
    pub fn nodes_for_dim(&self, dim: usize) -> Vec<usize> {
        match &self.nodes {
            Some(counts) => expand_counts(counts, dim),
            None => {
                let fit = (self.max_nodes as f64).powf(1.0 / dim as f64).floor() as usize;
                vec![fit.clamp(3, 81); dim]
            }
        }
    }
}

enum PfEval {
    Symbolic { pf: CompiledExpr, grad: Vec<CompiledExpr> },
    Numeric(CompiledStructure),
}

impl PfEval {
    fn new(p: &PoissonStructure) -> Result<Self, PoissonError> {
        if p.dim() <= SYMBOLIC_PF_MAX_DIM {
            let pf = p.pfaffian()?;
            let coords = p.chart().coords();
            let grad = coords.iter().map(|c| pf.differentiate(c).compile(coords)).collect::<Result<_, _>>()?;
            Ok(PfEval::Symbolic { pf: pf.compile(coords)?, grad })
        } else {
            Ok(PfEval::Numeric(p.compile()))
        }
    }

    fn value(&self, x: &[f64]) -> Option<f64> {
        match self {
            PfEval::Symbolic { pf, .. } => pf.eval_opt(x),
            PfEval::Numeric(s) => s.matrix_at(x).ok().map(|m| pfaffian_of(&m)),
        }
    }

    fn gradient_norm(&self, x: &[f64], widths: &[f64]) -> Option<f64> {
        match self {
            PfEval::Symbolic { grad, .. } => {
                let mut s = 0.0;
                for g in grad {
                    let v = g.eval_opt(x)?;
                    s += v * v;
                }
                Some(s.sqrt())
            }
            PfEval::Numeric(_) => {
                let mut s = 0.0;
                for (a, w) in widths.iter().enumerate() {
                    let h = 1e-6 * w;
                    let mut xp = x.to_vec();
                    let mut xm = x.to_vec();
                    xp[a] += h;
                    xm[a] -= h;
                    let d = (self.value(&xp)? - self.value(&xm)?) / (2.0 * h);
                    s += d * d;
                }
                Some(s.sqrt())
            }
        }
    }
}

/// Output of [`scan_singular_locus`].
#[derive(Debug, Clone, PartialEq)]
pub struct LocusScan {
    pub grid: Grid,
    pub dim: usize,
    pub max_abs_pf: f64,
    pub threshold: f64,
    /// Points with `|Pf|` at or below the threshold.
    pub zero_points: Vec<Vec<f64>>,
    /// `|∇Pf|` at the evaluated points.
    pub gradient_norms: Vec<f64>,
    /// Slope of `|Pf|^(2/dim)` at the evaluated points.
    pub slopes: Vec<f64>,
    /// Indices into `zero_points` of the evaluated points.
    pub evaluated: Vec<usize>,
    /// Sorted grid cells touching the zero set.
    pub cell_map: Vec<usize>,
    /// Sorted grid cells with every corner near zero.
    pub flat_cells: Vec<usize>,
    pub near_zero_nodes: usize,
    pub sign_change_edges: usize,
    pub refined_minima: usize,
    pub undefined_nodes: usize,
    pub truncated: bool,
}

impl LocusScan {
    pub fn is_empty(&self) -> bool {
        self.zero_points.is_empty() && self.cell_map.is_empty()
    }

    pub fn evaluated_points(&self) -> impl Iterator<Item = &Vec<f64>> {
        self.evaluated.iter().map(|&i| &self.zero_points[i])
    }
}

fn strided_indices(len: usize, cap: usize) -> Vec<usize> {
    if len <= cap {
        return (0..len).collect();
    }
    (0..cap).map(|k| k * len / cap).collect()
}

/// Evaluates the Pfaffian on a grid over the chart box and collects its
/// zero set.
pub fn scan_singular_locus(p: &PoissonStructure, cfg: &LocusConfig) -> Result<LocusScan, PoissonError> {
    let d = p.dim();
    if d % 2 == 1 {
        return Err(PoissonError::OddDimension(d));
    }
    let eval = PfEval::new(p)?;
    let grid = Grid::with_counts(p.chart().bounds(), &cfg.nodes_for_dim(d));
    let z = scan_zero_set(&grid, &|x| eval.value(x), &cfg.scan);

    let widths: Vec<f64> = p.chart().bounds().iter().map(|iv| iv.width()).collect();
    let h = cfg.slope_step_rel * widths.iter().cloned().fold(0.0, f64::max);
    let power = 2.0 / d as f64;
    let evaluated = strided_indices(z.points.len(), cfg.max_eval_points);
    let mut gradient_norms = Vec::with_capacity(evaluated.len());
    let mut slopes = Vec::with_capacity(evaluated.len());
    for &i in &evaluated {
        let x = &z.points[i];
        gradient_norms.push(eval.gradient_norm(x, &widths).unwrap_or(f64::NAN));
        slopes.push(root_slope(&eval, p, x, h, power));
    }

    Ok(LocusScan {
        dim: d,
        max_abs_pf: z.max_abs,
        threshold: z.threshold,
        zero_points: z.points,
        gradient_norms,
        slopes,
        evaluated,
        cell_map: z.zero_cells,
        flat_cells: z.flat_cells,
        near_zero_nodes: z.near_zero_nodes,
        sign_change_edges: z.sign_change_edges,
        refined_minima: z.refined_minima,
        undefined_nodes: z.undefined_nodes,
        truncated: z.truncated,
        grid,
    })
}

/// Norm over axes of the one-sided difference slope of `|Pf|^power`,
/// taking the larger side on each axis.
///
/// `|Pf|^(2/dim)` scales like a distance to a simple hypersurface, so this
/// sees a transverse zero even when `∇Pf` itself vanishes (for example when
/// every Pfaffian term carries the same factor).
fn root_slope(eval: &PfEval, p: &PoissonStructure, x: &[f64], h: f64, power: f64) -> f64 {
    let g = |y: &[f64]| eval.value(y).map(|v| v.abs().powf(power));
    let Some(g0) = g(x) else { return f64::NAN };
    let mut total = 0.0;
    for (a, iv) in p.chart().bounds().iter().enumerate() {
        let mut best: f64 = 0.0;
        for dir in [1.0, -1.0] {
            let mut y = x.to_vec();
            y[a] += dir * h;
            if !iv.contains(y[a]) {
                continue;
            }
            if let Some(gy) = g(&y) {
                best = best.max((gy - g0).abs() / h);
            }
        }
        total += best * best;
    }
    total.sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum LocusKind {
    Empty,
    /// Nonempty, not full-dimensional and not a confirmed codimension-1
    /// sheet. This includes genuinely codimension >= 2 loci and sheets that
    /// failed the gradient quorum (higher-order zeros).
    IsolatedPoints,
    CodimOneHypersurface,
    FatRegion,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LocusEvidence {
    pub grid_nodes: Vec<usize>,
    pub zero_points: usize,
    pub zero_cells: usize,
    pub flat_cells: usize,
    pub fat_block: bool,
    pub components: usize,
    pub largest_component_cells: usize,
    /// Box-counting dimension of the largest component.
    pub max_component_dimension: f64,
    pub sheet_components: usize,
    /// Fraction of evaluated points passing the slope test.
    pub gradient_quorum: f64,
    pub truncated: bool,
    pub examples: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LocusClass {
    pub kind: LocusKind,
    pub evidence: LocusEvidence,
}

struct Component {
    cells: usize,
    dimension: f64,
    spans: Vec<usize>,
}

fn has_fat_block(scan: &LocusScan) -> bool {
    let g = &scan.grid;
    let d = scan.dim;
    scan.flat_cells.iter().any(|&c| {
        let idx = g.cell_multi(c);
        if idx.iter().enumerate().any(|(a, &i)| i + 1 >= g.cells_on_axis(a)) {
            return false;
        }
        (0..(1usize << d)).all(|mask| {
            let nb: Vec<usize> = idx.iter().enumerate().map(|(a, &i)| i + ((mask >> a) & 1)).collect();
            scan.flat_cells.binary_search(&g.cell_flat(&nb)).is_ok()
        })
    })
}

fn components(scan: &LocusScan) -> Vec<Component> {
    let g = &scan.grid;
    let cells = &scan.cell_map;
    let mut seen = vec![false; cells.len()];
    let mut out = Vec::new();
    for start in 0..cells.len() {
        if seen[start] {
            continue;
        }
        seen[start] = true;
        let mut queue = VecDeque::from([start]);
        let mut members = Vec::new();
        while let Some(k) = queue.pop_front() {
            let idx = g.cell_multi(cells[k]);
            members.push(idx.clone());
            for a in 0..idx.len() {
                for up in [false, true] {
                    let mut nb = idx.clone();
                    if up {
                        if nb[a] + 1 >= g.cells_on_axis(a) {
                            continue;
                        }
                        nb[a] += 1;
                    } else {
                        if nb[a] == 0 {
                            continue;
                        }
                        nb[a] -= 1;
                    }
                    if let Ok(j) = cells.binary_search(&g.cell_flat(&nb)) {
                        if !seen[j] {
                            seen[j] = true;
                            queue.push_back(j);
                        }
                    }
                }
            }
        }
        let d = scan.dim;
        let spans = (0..d)
            .map(|a| {
                let lo = members.iter().map(|c| c[a]).min().unwrap_or(0);
                let hi = members.iter().map(|c| c[a]).max().unwrap_or(0);
                hi - lo + 1
            })
            .collect();
        let mut coarse: Vec<Vec<usize>> = members.iter().map(|c| c.iter().map(|i| i / 2).collect()).collect();
        coarse.sort_unstable();
        coarse.dedup();
        let dimension = (members.len() as f64 / coarse.len() as f64).log2();
        out.push(Component { cells: members.len(), dimension, spans });
    }
    out
}

/// Classifies the scanned zero set; see [`LocusKind`].
pub fn classify_locus(scan: &LocusScan, cfg: &LocusConfig) -> LocusClass {
    let d = scan.dim;
    let passing = scan.slopes.iter().filter(|s| **s > cfg.grad_tol).count();
    let quorum = if scan.slopes.is_empty() { 0.0 } else { passing as f64 / scan.slopes.len() as f64 };
    let mut ev = LocusEvidence {
        grid_nodes: scan.grid.counts().to_vec(),
        zero_points: scan.zero_points.len(),
        zero_cells: scan.cell_map.len(),
        flat_cells: scan.flat_cells.len(),
        fat_block: false,
        components: 0,
        largest_component_cells: 0,
        max_component_dimension: 0.0,
        sheet_components: 0,
        gradient_quorum: quorum,
        truncated: scan.truncated,
        examples: strided_indices(scan.zero_points.len(), 5).into_iter().map(|i| scan.zero_points[i].clone()).collect(),
    };
    if scan.is_empty() {
        return LocusClass { kind: LocusKind::Empty, evidence: ev };
    }
    if has_fat_block(scan) {
        ev.fat_block = true;
        return LocusClass { kind: LocusKind::FatRegion, evidence: ev };
    }
    let comps = components(scan);
    ev.components = comps.len();
    if let Some(big) = comps.iter().max_by_key(|c| c.cells) {
        ev.largest_component_cells = big.cells;
    }
    ev.max_component_dimension = comps.iter().map(|c| c.dimension).fold(0.0, f64::max);
    ev.sheet_components = comps
        .iter()
        .filter(|c| c.dimension >= d as f64 - 1.5 && c.spans.iter().filter(|&&s| s >= 4).count() + 1 >= d)
        .count();
    let kind = if ev.sheet_components > 0 && quorum >= cfg.quorum {
        LocusKind::CodimOneHypersurface
    } else {
        LocusKind::IsolatedPoints
    };
    LocusClass { kind, evidence: ev }
}

/// Ranks of the bivector at the evaluated locus points.
pub fn rank_on_locus(p: &PoissonStructure, scan: &LocusScan, cfg: &RankConfig) -> Vec<PointRank> {
    scan.evaluated_points().filter_map(|x| p.rank_at(x, cfg).ok()).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum ObstructionStatus {
    NotDenseSymplectic,
    NoProperResolution,
    NoResolutionRankZero,
    Inconclusive,
    SymplecticOnBox,
}

impl ObstructionStatus {
    /// Verdicts that rule out resolutions of some class.
    pub fn is_obstructed(self) -> bool {
        matches!(
            self,
            ObstructionStatus::NotDenseSymplectic
                | ObstructionStatus::NoProperResolution
                | ObstructionStatus::NoResolutionRankZero
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ObstructionVerdict {
    pub status: ObstructionStatus,
    pub cited_result: String,
    pub statement: String,
    pub locus: LocusClass,
    /// Rank value to number of evaluated locus points.
    pub locus_ranks: BTreeMap<usize, usize>,
}

const CITE_DENSE: &str = "a Poisson manifold with a symplectic resolution is symplectic on an open dense subset";
const CITE_CODIM1: &str = "a structure symplectic on an open dense subset whose singular locus contains a \
    codimension-1 submanifold admits no proper symplectic resolution, and in the holomorphic case no connected one";
const CITE_RANK0: &str = "in dimension at least 4, if the singular locus contains a codimension-1 submanifold \
    and a symplectic resolution exists, the bivector cannot vanish at every point of that submanifold";
const CITE_ISOLATED: &str = "structures with isolated singularities can admit symplectic resolutions";
const CITE_SYMPLECTIC: &str = "a symplectic structure resolves itself through the identity map";

/// Runs the locus scan and applies the decision table.
pub fn obstruction_verdict(p: &PoissonStructure, cfg: &LocusConfig) -> Result<ObstructionVerdict, PoissonError> {
    let scan = scan_singular_locus(p, cfg)?;
    let locus = classify_locus(&scan, cfg);
    let ranks = if scan.is_empty() { Vec::new() } else { rank_on_locus(p, &scan, &cfg.rank) };
    let mut locus_ranks = BTreeMap::new();
    for r in &ranks {
        *locus_ranks.entry(r.rank).or_insert(0) += 1;
    }
    let all_rank_zero = !ranks.is_empty() && ranks.iter().all(|r| r.rank == 0);
    let (status, cited, statement) = match locus.kind {
        LocusKind::FatRegion => (
            ObstructionStatus::NotDenseSymplectic,
            CITE_DENSE,
            "The Pfaffian vanishes on a full-dimensional region, so the structure is not symplectic on an open \
             dense subset. No separable symplectic resolution exists.",
        ),
        LocusKind::CodimOneHypersurface if p.dim() >= 4 && all_rank_zero => (
            ObstructionStatus::NoResolutionRankZero,
            CITE_RANK0,
            "The singular locus contains a codimension-1 sheet on which the bivector has rank 0 at every \
             evaluated point. No symplectic resolution exists.",
        ),
        LocusKind::CodimOneHypersurface => (
            ObstructionStatus::NoProperResolution,
            CITE_CODIM1,
            "The singular locus contains a codimension-1 sheet. No proper symplectic resolution exists; in the \
             holomorphic case no connected one exists either. Non-proper resolutions are not excluded, and \
             whether a smooth connected resolution exists remains open.",
        ),
        LocusKind::IsolatedPoints => (
            ObstructionStatus::Inconclusive,
            CITE_ISOLATED,
            "The singular locus was not confirmed to contain a codimension-1 sheet. No obstruction applies; \
             resolutions may exist.",
        ),
        LocusKind::Empty => (
            ObstructionStatus::SymplecticOnBox,
            CITE_SYMPLECTIC,
            "The Pfaffian has no zero on the scanned box. The structure is symplectic there.",
        ),
    };
    Ok(ObstructionVerdict {
        status,
        cited_result: cited.to_string(),
        statement: statement.to_string(),
        locus,
        locus_ranks,
    })
}
