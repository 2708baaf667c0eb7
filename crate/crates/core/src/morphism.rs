//! Smooth maps between charts and Poisson-morphism checks.

use std::collections::HashMap;

use nalgebra::DMatrix;
use serde::Serialize;
use thiserror::Error;

use crate::expr::{CompiledExpr, DomainError, Env, EvalError, Expr};
use crate::grid::{expand_counts, scan_zero_set, Grid, ScanConfig};
use crate::poisson::{Chart, PoissonError, PoissonStructure};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MorphismError {
    #[error("map has {components} components for a {target}-dimensional target")]
    ComponentCount { components: usize, target: usize },
    #[error("no component given for target coordinate `{0}`")]
    MissingComponent(String),
    #[error("`{0}` is not a target coordinate")]
    UnknownTarget(String),
    #[error("component for `{0}` given twice")]
    DuplicateComponent(String),
    #[error("determinant needs a square Jacobian, got {rows}x{cols}")]
    NotSquare { rows: usize, cols: usize },
    #[error("structure chart does not match the map's {0} chart")]
    ChartMismatch(&'static str),
    #[error(transparent)]
    Poisson(#[from] PoissonError),
    #[error("{error} at {point}")]
    DomainAt { error: DomainError, point: Env },
}

impl From<EvalError> for MorphismError {
    fn from(e: EvalError) -> Self {
        MorphismError::Poisson(PoissonError::Eval(e))
    }
}

/// `φ: source → target`, one expression per target coordinate.
#[derive(Debug, Clone, PartialEq)]
pub struct SmoothMap {
    source: Chart,
    target: Chart,
    components: Vec<Expr>,
}

impl SmoothMap {
    pub fn new(source: Chart, target: Chart, components: Vec<Expr>) -> Result<Self, MorphismError> {
        if components.len() != target.dim() {
            return Err(MorphismError::ComponentCount { components: components.len(), target: target.dim() });
        }
        for c in &components {
            source.check_vars(c)?;
        }
        Ok(SmoothMap { source, target, components })
    }

    /// Components keyed by target coordinate name.
    pub fn from_names<S: AsRef<str>>(
        source: Chart,
        target: Chart,
        components: impl IntoIterator<Item = (S, Expr)>,
    ) -> Result<Self, MorphismError> {
        let mut slots: Vec<Option<Expr>> = vec![None; target.dim()];
        for (name, e) in components {
            let name = name.as_ref();
            let i = target.index_of(name).ok_or_else(|| MorphismError::UnknownTarget(name.into()))?;
            if slots[i].replace(e).is_some() {
                return Err(MorphismError::DuplicateComponent(name.into()));
            }
        }
        let comps = slots
            .into_iter()
            .zip(target.coords())
            .map(|(e, c)| e.ok_or_else(|| MorphismError::MissingComponent(c.clone())))
            .collect::<Result<_, _>>()?;
        Self::new(source, target, comps)
    }

    /// Identity on `chart`.
    pub fn identity(chart: Chart) -> Self {
        let components = chart.coords().iter().map(Expr::var).collect();
        SmoothMap { source: chart.clone(), target: chart, components }
    }

    pub fn source(&self) -> &Chart {
        &self.source
    }

    pub fn target(&self) -> &Chart {
        &self.target
    }

    pub fn components(&self) -> &[Expr] {
        &self.components
    }

    pub fn is_square(&self) -> bool {
        self.source.dim() == self.target.dim()
    }

    /// `f ∘ φ`.
    pub fn pullback(&self, f: &Expr) -> Result<Expr, MorphismError> {
        self.target.check_vars(f)?;
        let subst: HashMap<String, Expr> =
            self.target.coords().iter().cloned().zip(self.components.iter().cloned()).collect();
        Ok(f.substitute(&subst).simplify())
    }

    /// `next ∘ self`.
    pub fn then(&self, next: &SmoothMap) -> Result<SmoothMap, MorphismError> {
        if next.source != self.target {
            return Err(MorphismError::ChartMismatch("target"));
        }
        let comps = next.components.iter().map(|c| self.pullback(c)).collect::<Result<_, _>>()?;
        SmoothMap::new(self.source.clone(), next.target.clone(), comps)
    }

    /// `J[i][j] = ∂φ_i/∂σ_j`.
    pub fn jacobian_exprs(&self) -> Vec<Vec<Expr>> {
        self.components.iter().map(|c| self.source.coords().iter().map(|s| c.differentiate(s)).collect()).collect()
    }

    pub fn jacobian_det_expr(&self) -> Result<Expr, MorphismError> {
        if !self.is_square() {
            return Err(MorphismError::NotSquare { rows: self.target.dim(), cols: self.source.dim() });
        }
        let jac = self.jacobian_exprs();
        let cols: Vec<usize> = (0..jac.len()).collect();
        Ok(cofactor_det(&jac, 0, &cols).simplify())
    }

    pub fn compile(&self) -> CompiledMap {
        let coords = self.source.coords();
        let compile = |e: &Expr| e.compile(coords).expect("component variables are validated");
        CompiledMap {
            rows: self.target.dim(),
            cols: self.source.dim(),
            components: self.components.iter().map(compile).collect(),
            jacobian: self.jacobian_exprs().iter().flatten().map(compile).collect(),
        }
    }

    pub fn image(&self, point: &[f64]) -> Result<Vec<f64>, DomainError> {
        self.compile().image(point)
    }

    pub fn jacobian_at(&self, point: &[f64]) -> Result<DMatrix<f64>, DomainError> {
        self.compile().jacobian(point)
    }
}

fn cofactor_det(m: &[Vec<Expr>], row: usize, cols: &[usize]) -> Expr {
    if cols.is_empty() {
        return Expr::one();
    }
    let mut sum = Expr::zero();
    for (pos, &c) in cols.iter().enumerate() {
        let a = &m[row][c];
        if a.is_zero() {
            continue;
        }
        let rest: Vec<usize> = cols.iter().copied().filter(|&k| k != c).collect();
        let term = a.clone() * cofactor_det(m, row + 1, &rest);
        sum = if pos % 2 == 0 { sum + term } else { sum - term };
    }
    sum
}

/// Components and Jacobian entries compiled over the source chart.
#[derive(Debug, Clone)]
pub struct CompiledMap {
    rows: usize,
    cols: usize,
    components: Vec<CompiledExpr>,
    jacobian: Vec<CompiledExpr>,
}

impl CompiledMap {
    pub fn image(&self, point: &[f64]) -> Result<Vec<f64>, DomainError> {
        self.components.iter().map(|c| c.eval(point)).collect()
    }

    pub fn jacobian(&self, point: &[f64]) -> Result<DMatrix<f64>, DomainError> {
        let mut m = DMatrix::zeros(self.rows, self.cols);
        for (k, c) in self.jacobian.iter().enumerate() {
            m[(k / self.cols, k % self.cols)] = c.eval(point)?;
        }
        Ok(m)
    }

    /// `det J / max(1, Π row norms)`, the quantity compared against the
    /// critical threshold.
    pub fn normalized_det(&self, point: &[f64]) -> Result<f64, DomainError> {
        let j = self.jacobian(point)?;
        let scale: f64 = j.row_iter().map(|r| r.norm()).product();
        Ok(j.determinant() / scale.max(1.0))
    }
}

/// Residual of the morphism condition at one source point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Residual {
    /// `max_{i<j} |{φ*x_i, φ*x_j}_Σ − φ*π_M^{ij}|`.
    pub raw: f64,
    /// Same maximum with each term divided by `1 + |φ*π_M^{ij}|`.
    pub normalized: f64,
}

/// Precompiled morphism condition for repeated evaluation.
pub struct MorphismCheck {
    source: Chart,
    pairs: Vec<(CompiledExpr, CompiledExpr)>,
}

impl MorphismCheck {
    pub fn new(ps: &PoissonStructure, pm: &PoissonStructure, m: &SmoothMap) -> Result<Self, MorphismError> {
        if ps.chart() != m.source() {
            return Err(MorphismError::ChartMismatch("source"));
        }
        if pm.chart() != m.target() {
            return Err(MorphismError::ChartMismatch("target"));
        }
        let coords = m.source().coords();
        let n = m.target().dim();
        let mut pairs = Vec::new();
        for i in 0..n {
            for j in i + 1..n {
                let lhs = ps.bracket(&m.components[i], &m.components[j])?;
                let rhs = m.pullback(pm.upper(i, j))?;
                pairs.push((lhs.compile(coords)?, rhs.compile(coords)?));
            }
        }
        Ok(MorphismCheck { source: m.source().clone(), pairs })
    }

    pub fn residual(&self, point: &[f64]) -> Result<Residual, DomainError> {
        let mut r = Residual { raw: 0.0, normalized: 0.0 };
        for (lhs, rhs) in &self.pairs {
            let target = rhs.eval(point)?;
            let gap = (lhs.eval(point)? - target).abs();
            r.raw = r.raw.max(gap);
            r.normalized = r.normalized.max(gap / (1.0 + target.abs()));
        }
        Ok(r)
    }

    fn residual_env(&self, point: &[f64]) -> Result<Residual, MorphismError> {
        self.residual(point).map_err(|error| MorphismError::DomainAt { error, point: self.source.env(point) })
    }
}

/// Raw residual `max_{i<j} |{φ*x_i, φ*x_j}_Σ − φ*π_M^{ij}|` at `point`.
pub fn morphism_residual(
    ps: &PoissonStructure,
    pm: &PoissonStructure,
    m: &SmoothMap,
    point: &[f64],
) -> Result<f64, MorphismError> {
    Ok(MorphismCheck::new(ps, pm, m)?.residual_env(point)?.raw)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum MorphismStatus {
    Morphism,
    NotMorphism,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MorphismVerdict {
    pub status: MorphismStatus,
    /// Largest raw residual seen.
    pub worst_residual: f64,
    pub witness: Option<Env>,
    pub samples_used: usize,
}

/// Checks the morphism condition at every probe point, then at `n_samples`
/// seeded points of the source box. A point fails when some pair has
/// `|lhs − rhs| > tol (1 + |rhs|)`; the first failure is returned.
pub fn verify_morphism(
    ps: &PoissonStructure,
    pm: &PoissonStructure,
    m: &SmoothMap,
    n_samples: usize,
    tol: f64,
    seed: u64,
    probes: &[Vec<f64>],
) -> Result<MorphismVerdict, MorphismError> {
    let check = MorphismCheck::new(ps, pm, m)?;
    let mut sampler = m.source().sample_box().sampler(seed);
    let mut worst = 0.0f64;
    let mut used = 0;
    let points = probes.iter().cloned().chain(std::iter::repeat_with(|| sampler.next_point()).take(n_samples));
    for point in points {
        let r = check.residual_env(&point)?;
        used += 1;
        worst = worst.max(r.raw);
        if r.normalized > tol {
            return Ok(MorphismVerdict {
                status: MorphismStatus::NotMorphism,
                worst_residual: worst,
                witness: Some(m.source().env(&point)),
                samples_used: used,
            });
        }
    }
    Ok(MorphismVerdict { status: MorphismStatus::Morphism, worst_residual: worst, witness: None, samples_used: used })
}

#[derive(Debug, Clone, PartialEq)]
pub struct CriticalScan {
    pub points: Vec<Vec<f64>>,
    pub images: Vec<Vec<f64>>,
    /// Every grid cell was critical.
    pub everywhere: bool,
    pub truncated: bool,
}

impl CriticalScan {
    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// Source points where `|det J| / max(1, Π row norms) <= tau`, found by the
/// zero-set scan on a grid over the source box.
pub fn critical_scan(m: &SmoothMap, nodes: &[usize], tau: f64) -> Result<CriticalScan, MorphismError> {
    if !m.is_square() {
        return Err(MorphismError::NotSquare { rows: m.target().dim(), cols: m.source().dim() });
    }
    let compiled = m.compile();
    let grid = Grid::with_counts(m.source().bounds(), &expand_counts(nodes, m.source().dim()));
    let cfg = ScanConfig { abs_threshold: Some(tau), ..ScanConfig::default() };
    let scan = scan_zero_set(&grid, &|p| compiled.normalized_det(p).ok(), &cfg);
    let images = scan.points.iter().filter_map(|p| compiled.image(p).ok()).collect::<Vec<_>>();
    let points = if images.len() == scan.points.len() {
        scan.points
    } else {
        scan.points.into_iter().filter(|p| compiled.image(p).is_ok()).collect()
    };
    Ok(CriticalScan {
        points,
        images,
        everywhere: scan.flat_cells.len() == grid.cell_count(),
        truncated: scan.truncated,
    })
}
