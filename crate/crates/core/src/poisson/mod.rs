//! Poisson structures on coordinate charts.
//!
//! A structure stores the strictly upper-triangular bivector entries
//! `π^{ij}`, `i < j`; antisymmetry is built in. The Jacobi identity is not
//! enforced by construction and must be checked with
//! [`PoissonStructure::verify_jacobi`].

mod pfaffian;
mod rank;

use std::collections::HashSet;

use nalgebra::DMatrix;
use serde::Serialize;
use thiserror::Error;

use crate::expr::{hybrid_close, CompiledExpr, DomainError, Env, EvalError, Expr, Interval, SampleBox};

pub use pfaffian::{pfaffian_of, symbolic_pfaffian};
pub use rank::{numeric_rank, PointRank, RankConfig};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ChartError {
    #[error("chart needs at least one coordinate")]
    Empty,
    #[error("`{0}` is not a valid coordinate name")]
    InvalidName(String),
    #[error("coordinate `{0}` appears twice")]
    Duplicate(String),
    #[error("{coords} coordinates but {intervals} intervals")]
    LengthMismatch { coords: usize, intervals: usize },
    #[error("interval [{lo}, {hi}] for `{coord}` must be finite with positive length")]
    BadInterval { coord: String, lo: f64, hi: f64 },
}

/// Ordered coordinates with a compact sampling box.
#[derive(Debug, Clone, PartialEq)]
pub struct Chart {
    coords: Vec<String>,
    bounds: Vec<Interval>,
}

impl Chart {
    pub fn new<S: AsRef<str>>(coords: &[S], bounds: &[Interval]) -> Result<Chart, ChartError> {
        if coords.is_empty() {
            return Err(ChartError::Empty);
        }
        if coords.len() != bounds.len() {
            return Err(ChartError::LengthMismatch { coords: coords.len(), intervals: bounds.len() });
        }
        let mut seen = HashSet::new();
        for (name, iv) in coords.iter().map(AsRef::as_ref).zip(bounds) {
            if !crate::expr::is_identifier(name) || name == "pi" || crate::expr::Func::from_name(name).is_some() {
                return Err(ChartError::InvalidName(name.to_string()));
            }
            if !seen.insert(name) {
                return Err(ChartError::Duplicate(name.to_string()));
            }
            if !(iv.lo.is_finite() && iv.hi.is_finite() && iv.lo < iv.hi) {
                return Err(ChartError::BadInterval { coord: name.to_string(), lo: iv.lo, hi: iv.hi });
            }
        }
        Ok(Chart { coords: coords.iter().map(|s| s.as_ref().to_string()).collect(), bounds: bounds.to_vec() })
    }

    /// Same interval on every axis.
    pub fn uniform<S: AsRef<str>>(coords: &[S], lo: f64, hi: f64) -> Result<Chart, ChartError> {
        Chart::new(coords, &vec![Interval::new(lo, hi); coords.len()])
    }

    pub fn coords(&self) -> &[String] {
        &self.coords
    }

    pub fn bounds(&self) -> &[Interval] {
        &self.bounds
    }

    pub fn dim(&self) -> usize {
        self.coords.len()
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.coords.iter().position(|c| c == name)
    }

    pub fn sample_box(&self) -> SampleBox {
        SampleBox::new(&self.coords, &self.bounds)
    }

    pub fn contains(&self, point: &[f64]) -> bool {
        point.len() == self.dim() && self.bounds.iter().zip(point).all(|(iv, &x)| iv.contains(x))
    }

    pub fn env(&self, point: &[f64]) -> Env {
        Env::from_point(&self.coords, point)
    }

    /// Fails with the first variable of `e` that is not a coordinate.
    pub fn check_vars(&self, e: &Expr) -> Result<(), PoissonError> {
        match e.free_vars().into_iter().find(|v| self.index_of(v).is_none()) {
            Some(var) => Err(PoissonError::UnknownVariable(var)),
            None => Ok(()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PoissonError {
    #[error(transparent)]
    Chart(#[from] ChartError),
    #[error("unknown variable `{0}`")]
    UnknownVariable(String),
    #[error("unknown coordinate `{0}`")]
    UnknownCoordinate(String),
    #[error("bracket entry ({0}, {1}) must satisfy i < j < dim")]
    BadEntry(usize, usize),
    #[error("bracket entry ({0}, {1}) given twice")]
    DuplicateEntry(usize, usize),
    #[error("index triple ({0}, {1}, {2}) must satisfy i < j < k < dim")]
    BadTriple(usize, usize, usize),
    #[error("operation needs an even-dimensional chart, got dimension {0}")]
    OddDimension(usize),
    #[error(transparent)]
    Eval(#[from] EvalError),
}

impl From<DomainError> for PoissonError {
    fn from(e: DomainError) -> Self {
        PoissonError::Eval(EvalError::Domain(e))
    }
}

fn packed_index(i: usize, j: usize, n: usize) -> usize {
    debug_assert!(i < j && j < n);
    i * (2 * n - i - 1) / 2 + (j - i - 1)
}

/// Antisymmetric bivector `π^{ij}` of expressions over a chart.
#[derive(Debug, Clone, PartialEq)]
pub struct PoissonStructure {
    chart: Chart,
    upper: Vec<Expr>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum JacobiVerdict {
    Pass { samples: usize, components: usize },
    Fail { triple: (usize, usize, usize), witness: Env, gap: f64 },
}

impl JacobiVerdict {
    pub fn passed(&self) -> bool {
        matches!(self, JacobiVerdict::Pass { .. })
    }
}

impl PoissonStructure {
    /// Builds from `(i, j) -> π^{ij}` entries with `i < j`; omitted pairs are 0.
    pub fn new(chart: Chart, entries: impl IntoIterator<Item = ((usize, usize), Expr)>) -> Result<Self, PoissonError> {
        let n = chart.dim();
        let mut upper = vec![Expr::zero(); n * n.saturating_sub(1) / 2];
        let mut given = HashSet::new();
        for ((i, j), e) in entries {
            if !(i < j && j < n) {
                return Err(PoissonError::BadEntry(i, j));
            }
            if !given.insert((i, j)) {
                return Err(PoissonError::DuplicateEntry(i, j));
            }
            chart.check_vars(&e)?;
            upper[packed_index(i, j, n)] = e;
        }
        Ok(PoissonStructure { chart, upper })
    }

    /// Builds from entries keyed by coordinate names, in chart order.
    pub fn from_names<S: AsRef<str>>(
        chart: Chart,
        entries: impl IntoIterator<Item = ((S, S), Expr)>,
    ) -> Result<Self, PoissonError> {
        let mut indexed = Vec::new();
        for ((a, b), e) in entries {
            let i = chart.index_of(a.as_ref()).ok_or_else(|| PoissonError::UnknownCoordinate(a.as_ref().into()))?;
            let j = chart.index_of(b.as_ref()).ok_or_else(|| PoissonError::UnknownCoordinate(b.as_ref().into()))?;
            indexed.push(((i, j), e));
        }
        Self::new(chart, indexed)
    }

    /// Canonical symplectic structure: `{x_{2k}, x_{2k+1}} = 1`.
    pub fn standard_symplectic(chart: Chart) -> Result<Self, PoissonError> {
        let n = chart.dim();
        if n % 2 == 1 {
            return Err(PoissonError::OddDimension(n));
        }
        Self::new(chart, (0..n / 2).map(|k| ((2 * k, 2 * k + 1), Expr::one())))
    }

    pub fn chart(&self) -> &Chart {
        &self.chart
    }

    pub fn dim(&self) -> usize {
        self.chart.dim()
    }

    /// `π^{ij}` for any pair, using antisymmetry.
    pub fn entry(&self, i: usize, j: usize) -> Expr {
        let n = self.dim();
        match i.cmp(&j) {
            std::cmp::Ordering::Equal => Expr::zero(),
            std::cmp::Ordering::Less => self.upper[packed_index(i, j, n)].clone(),
            std::cmp::Ordering::Greater => (-self.upper[packed_index(j, i, n)].clone()).simplify(),
        }
    }

    /// Stored entry for `i < j`.
    pub fn upper(&self, i: usize, j: usize) -> &Expr {
        &self.upper[packed_index(i, j, self.dim())]
    }

    /// Iterates over stored `(i, j, π^{ij})` with `i < j`.
    pub fn upper_entries(&self) -> impl Iterator<Item = (usize, usize, &Expr)> {
        let n = self.dim();
        (0..n).flat_map(move |i| (i + 1..n).map(move |j| (i, j))).map(|(i, j)| (i, j, self.upper(i, j)))
    }

    /// `{f, g} = Σ π^{ij} ∂_i f ∂_j g`.
    pub fn bracket(&self, f: &Expr, g: &Expr) -> Result<Expr, PoissonError> {
        self.chart.check_vars(f)?;
        self.chart.check_vars(g)?;
        if f == g {
            return Ok(Expr::zero());
        }
        let coords = self.chart.coords();
        let df: Vec<Expr> = coords.iter().map(|c| f.differentiate(c)).collect();
        let dg: Vec<Expr> = coords.iter().map(|c| g.differentiate(c)).collect();
        let mut sum = Expr::zero();
        for (i, j, pij) in self.upper_entries() {
            if pij.is_zero() {
                continue;
            }
            let cross = df[i].clone() * dg[j].clone() - df[j].clone() * dg[i].clone();
            sum = sum + pij.clone() * cross;
        }
        Ok(sum.simplify())
    }

    /// Component `J^{ijk}` of the Jacobiator.
    pub fn jacobiator(&self, i: usize, j: usize, k: usize) -> Result<Expr, PoissonError> {
        let n = self.dim();
        if !(i < j && j < k && k < n) {
            return Err(PoissonError::BadTriple(i, j, k));
        }
        let coords = self.chart.coords();
        let mut sum = Expr::zero();
        for (l, coord) in coords.iter().enumerate() {
            for (a, b, c) in [(i, j, k), (j, k, i), (k, i, j)] {
                let pal = self.entry(a, l);
                if pal.is_zero() {
                    continue;
                }
                let d = self.entry(b, c).differentiate(coord);
                if d.is_zero() {
                    continue;
                }
                sum = sum + pal * d;
            }
        }
        Ok(sum.simplify())
    }

    /// Sampled check of every Jacobiator component against zero.
    pub fn verify_jacobi(&self, samples: usize, tol: f64, seed: u64) -> Result<JacobiVerdict, PoissonError> {
        let n = self.dim();
        let mut components = Vec::new();
        for i in 0..n {
            for j in i + 1..n {
                for k in j + 1..n {
                    let jac = self.jacobiator(i, j, k)?;
                    if !jac.is_zero() {
                        components.push(((i, j, k), jac.compile(self.chart.coords())?));
                    }
                }
            }
        }
        let total = n * n.saturating_sub(1) * n.saturating_sub(2) / 6;
        if components.is_empty() {
            return Ok(JacobiVerdict::Pass { samples, components: total });
        }
        let mut sampler = self.chart.sample_box().sampler(seed);
        for _ in 0..samples {
            let point = sampler.next_point();
            for (triple, c) in &components {
                let v = c.eval(&point)?;
                if !hybrid_close(v, 0.0, tol) {
                    return Ok(JacobiVerdict::Fail { triple: *triple, witness: self.chart.env(&point), gap: v.abs() });
                }
            }
        }
        Ok(JacobiVerdict::Pass { samples, components: total })
    }

    /// Entries compiled for repeated numeric evaluation.
    pub fn compile(&self) -> CompiledStructure {
        let coords = self.chart.coords();
        let entries = self
            .upper_entries()
            .filter(|(_, _, e)| !e.is_zero())
            .map(|(i, j, e)| (i, j, e.compile(coords).expect("entry variables are validated")))
            .collect();
        CompiledStructure { dim: self.dim(), entries }
    }

    /// Full antisymmetric matrix at `point` (chart order).
    pub fn matrix_at(&self, point: &[f64]) -> Result<DMatrix<f64>, PoissonError> {
        if !self.chart.contains(point) {
            log::warn!("evaluating bivector outside the chart box at {:?}", point);
        }
        Ok(self.compile().matrix_at(point)?)
    }

    pub fn rank_at(&self, point: &[f64], cfg: &RankConfig) -> Result<PointRank, PoissonError> {
        let m = self.matrix_at(point)?;
        let (rank, singular_values) = numeric_rank(&m, cfg);
        Ok(PointRank { point: point.to_vec(), rank, singular_values })
    }

    /// Symbolic Pfaffian. Defined for every even dimension; the expansion
    /// has `(dim - 1)!!` terms.
    pub fn pfaffian(&self) -> Result<Expr, PoissonError> {
        let n = self.dim();
        if n % 2 == 1 {
            return Err(PoissonError::OddDimension(n));
        }
        Ok(symbolic_pfaffian(n, &|i, j| self.entry(i, j)))
    }

    /// Numeric Pfaffian at `point`; signed up to dimension 6, magnitude
    /// `sqrt|det|` above.
    pub fn pfaffian_at(&self, point: &[f64]) -> Result<f64, PoissonError> {
        let n = self.dim();
        if n % 2 == 1 {
            return Err(PoissonError::OddDimension(n));
        }
        Ok(pfaffian_of(&self.matrix_at(point)?))
    }

    /// `X_f^i = Σ_j π^{ij} ∂_j f`.
    pub fn hamiltonian_vector_field(&self, f: &Expr) -> Result<Vec<Expr>, PoissonError> {
        self.chart.check_vars(f)?;
        let n = self.dim();
        let df: Vec<Expr> = self.chart.coords().iter().map(|c| f.differentiate(c)).collect();
        Ok((0..n)
            .map(|i| {
                let mut sum = Expr::zero();
                for (j, dfj) in df.iter().enumerate() {
                    if i != j && !dfj.is_zero() {
                        sum = sum + self.entry(i, j) * dfj.clone();
                    }
                }
                sum.simplify()
            })
            .collect())
    }
}

/// Bivector entries compiled against the chart ordering.
#[derive(Debug, Clone)]
pub struct CompiledStructure {
    dim: usize,
    entries: Vec<(usize, usize, CompiledExpr)>,
}

impl CompiledStructure {
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn matrix_at(&self, point: &[f64]) -> Result<DMatrix<f64>, DomainError> {
        let mut m = DMatrix::zeros(self.dim, self.dim);
        for (i, j, c) in &self.entries {
            let v = c.eval(point)?;
            m[(*i, *j)] = v;
            m[(*j, *i)] = -v;
        }
        Ok(m)
    }
}
