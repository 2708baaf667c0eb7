//! Problem files: JSON documents describing a target structure and,
//! optionally, candidate pieces mapping onto it.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::config::Config;
use crate::expr::{parse, Expr, Interval, ParseError};
use crate::morphism::{MorphismError, SmoothMap};
use crate::poisson::{Chart, ChartError, PoissonError, PoissonStructure};
use crate::resolution::{Piece, ResolutionCandidate, ResolutionError};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StructureSpec {
    pub coords: Vec<String>,
    #[serde(rename = "box")]
    pub bounds: Vec<[f64; 2]>,
    /// `"a,b"` to expression; omitted pairs are zero.
    #[serde(default)]
    pub brackets: BTreeMap<String, String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PieceSpec {
    pub name: String,
    pub coords: Vec<String>,
    #[serde(rename = "box")]
    pub bounds: Vec<[f64; 2]>,
    #[serde(default)]
    pub brackets: BTreeMap<String, String>,
    /// Target coordinate to component expression.
    pub map: BTreeMap<String, String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub probes: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Options {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub samples: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tol: Option<f64>,
    /// Target grid nodes per axis; a single entry applies to every axis.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub grid: Option<Vec<usize>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ode_step: Option<f64>,
}

impl Options {
    /// Fields set in `over` win.
    pub fn merged(&self, over: &Options) -> Options {
        Options {
            seed: over.seed.or(self.seed),
            samples: over.samples.or(self.samples),
            tol: over.tol.or(self.tol),
            grid: over.grid.clone().or_else(|| self.grid.clone()),
            ode_step: over.ode_step.or(self.ode_step),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemFile {
    pub target: StructureSpec,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub pieces: Vec<PieceSpec>,
    #[serde(default)]
    pub options: Options,
}

#[derive(Debug, Error)]
pub enum ProblemError {
    #[error("invalid problem file: {0}")]
    Json(#[from] serde_json::Error),
    #[error("{path}: {error} in `{text}`")]
    Parse { path: String, text: String, error: ParseError },
    #[error("{path}: {error}")]
    Chart { path: String, error: ChartError },
    #[error("{path}: bracket key `{key}` must name two coordinates as \"a,b\"")]
    BadKey { path: String, key: String },
    #[error("{path}: {error}")]
    Poisson { path: String, error: PoissonError },
    #[error("{path}: {error}")]
    Map { path: String, error: MorphismError },
    #[error("{path}: missing component for target coordinate `{coord}`")]
    MissingComponent { path: String, coord: String },
    #[error(transparent)]
    Resolution(#[from] ResolutionError),
    #[error("option `{name}`: {reason}")]
    Option { name: &'static str, reason: String },
    #[error("the file has no pieces to verify")]
    NoPieces,
}

fn parse_at(path: String, text: &str) -> Result<Expr, ProblemError> {
    parse(text).map_err(|error| ProblemError::Parse { path, text: text.to_string(), error })
}

fn chart(path: &str, coords: &[String], bounds: &[[f64; 2]]) -> Result<Chart, ProblemError> {
    let intervals: Vec<Interval> = bounds.iter().map(|[lo, hi]| Interval::new(*lo, *hi)).collect();
    Chart::new(coords, &intervals).map_err(|error| ProblemError::Chart { path: format!("{path}.box"), error })
}

fn structure(path: &str, chart: Chart, brackets: &BTreeMap<String, String>) -> Result<PoissonStructure, ProblemError> {
    let mut entries = Vec::with_capacity(brackets.len());
    for (key, text) in brackets {
        let entry_path = format!("{path}.brackets[\"{key}\"]");
        let Some((a, b)) = key.split_once(',') else {
            return Err(ProblemError::BadKey { path: format!("{path}.brackets"), key: key.clone() });
        };
        let e = parse_at(entry_path, text)?;
        entries.push(((a.trim().to_string(), b.trim().to_string()), e));
    }
    PoissonStructure::from_names(chart, entries)
        .map_err(|error| ProblemError::Poisson { path: format!("{path}.brackets"), error })
}

impl StructureSpec {
    pub fn build(&self, path: &str) -> Result<PoissonStructure, ProblemError> {
        let chart = chart(path, &self.coords, &self.bounds)?;
        structure(path, chart, &self.brackets)
    }
}

impl PieceSpec {
    pub fn build(&self, path: &str, target: &PoissonStructure) -> Result<Piece, ProblemError> {
        let chart = chart(path, &self.coords, &self.bounds)?;
        let st = structure(path, chart.clone(), &self.brackets)?;
        let tchart = target.chart();
        if let Some(coord) = tchart.coords().iter().find(|c| !self.map.contains_key(c.as_str())) {
            return Err(ProblemError::MissingComponent { path: format!("{path}.map"), coord: coord.clone() });
        }
        let mut comps = Vec::with_capacity(self.map.len());
        for (coord, text) in &self.map {
            comps.push((coord.as_str(), parse_at(format!("{path}.map[\"{coord}\"]"), text)?));
        }
        let map = SmoothMap::from_names(chart, tchart.clone(), comps)
            .map_err(|error| ProblemError::Map { path: format!("{path}.map"), error })?;
        Ok(Piece { name: self.name.clone(), structure: st, map, probes: self.probes.clone() })
    }
}

/// A validated problem file.
#[derive(Debug, Clone)]
pub struct Problem {
    pub target: PoissonStructure,
    pub candidate: Option<ResolutionCandidate>,
    pub options: Options,
}

impl ProblemFile {
    pub fn from_json(text: &str) -> Result<Self, ProblemError> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn build(&self) -> Result<Problem, ProblemError> {
        let target = self.target.build("target")?;
        let candidate = if self.pieces.is_empty() {
            None
        } else {
            let pieces = self
                .pieces
                .iter()
                .enumerate()
                .map(|(k, p)| p.build(&format!("pieces[{k}]"), &target))
                .collect::<Result<Vec<_>, _>>()?;
            Some(ResolutionCandidate::new(target.clone(), pieces)?)
        };
        Ok(Problem { target, candidate, options: self.options.clone() })
    }
}

fn bad(name: &'static str, reason: impl Into<String>) -> ProblemError {
    ProblemError::Option { name, reason: reason.into() }
}

/// Applies `opts` to the defaults, checking each value against the target
/// dimension.
pub fn config_for(opts: &Options, dim: usize) -> Result<Config, ProblemError> {
    let mut cfg = Config::default();
    if let Some(seed) = opts.seed {
        cfg.seed = seed;
    }
    if let Some(samples) = opts.samples {
        if samples == 0 {
            return Err(bad("samples", "must be positive"));
        }
        cfg.samples = samples;
    }
    if let Some(tol) = opts.tol {
        if !(tol > 0.0 && tol.is_finite()) {
            return Err(bad("tol", format!("must be positive and finite, got {tol}")));
        }
        cfg.tol = tol;
    }
    if let Some(grid) = &opts.grid {
        if grid.len() != 1 && grid.len() != dim {
            return Err(bad("grid", format!("needs 1 or {dim} entries, got {}", grid.len())));
        }
        if grid.iter().any(|&n| n < 2) {
            return Err(bad("grid", "every axis needs at least 2 nodes"));
        }
        let total = crate::grid::expand_counts(grid, dim).iter().try_fold(1usize, |acc, &n| acc.checked_mul(n));
        if total.is_none_or(|t| t > cfg.locus.max_nodes) {
            return Err(bad("grid", format!("more than {} nodes", cfg.locus.max_nodes)));
        }
        cfg.coverage_nodes = grid.clone();
        cfg.locus.nodes = Some(grid.clone());
    }
    if let Some(step) = opts.ode_step {
        if !(step > 0.0 && step.is_finite()) {
            return Err(bad("ode_step", format!("must be positive and finite, got {step}")));
        }
        cfg.ode.step = step;
    }
    Ok(cfg)
}

#[cfg(test)]
mod tests {
    use super::*;

    const PLANE: &str = r#"{
        "target": {"coords": ["x", "y"], "box": [[-2, 2], [-2, 2]], "brackets": {"x,y": "x"}},
        "options": {"grid": [21]}
    }"#;

    #[test]
    fn minimal_target() {
        let p = ProblemFile::from_json(PLANE).unwrap().build().unwrap();
        assert!(p.candidate.is_none());
        assert_eq!(p.target.upper(0, 1), &parse("x").unwrap());
        let cfg = config_for(&p.options, 2).unwrap();
        assert_eq!(cfg.coverage_nodes, vec![21]);
        assert_eq!(cfg.locus.nodes_for_dim(2), vec![21, 21]);
    }

    #[test]
    fn parse_errors_carry_path_and_offset() {
        let text = PLANE.replace("\"x\"}", "\"x * (y\"}");
        let err = ProblemFile::from_json(&text).unwrap().build().unwrap_err();
        match &err {
            ProblemError::Parse { path, error, .. } => {
                assert_eq!(path, "target.brackets[\"x,y\"]");
                assert_eq!(error.offset, 6);
            }
            e => panic!("{e:?}"),
        }
        assert!(err.to_string().contains("offset 6"));
    }

    #[test]
    fn rejects_bad_structure() {
        let reversed = PLANE.replace("\"x,y\"", "\"y,x\"");
        assert!(matches!(
            ProblemFile::from_json(&reversed).unwrap().build(),
            Err(ProblemError::Poisson { error: PoissonError::BadEntry(1, 0), .. })
        ));
        let key = PLANE.replace("\"x,y\"", "\"xy\"");
        assert!(matches!(ProblemFile::from_json(&key).unwrap().build(), Err(ProblemError::BadKey { .. })));
        let unknown = PLANE.replace("\"grid\"", "\"grids\"");
        assert!(matches!(ProblemFile::from_json(&unknown), Err(ProblemError::Json(_))));
        let empty_box = PLANE.replace("[-2, 2], [-2, 2]", "[-2, 2], [1, 1]");
        assert!(matches!(ProblemFile::from_json(&empty_box).unwrap().build(), Err(ProblemError::Chart { .. })));
    }

    #[test]
    fn piece_map_must_cover_target() {
        let text = r#"{
            "target": {"coords": ["x", "y"], "box": [[-1, 1], [-1, 1]], "brackets": {"x,y": "1"}},
            "pieces": [{"name": "a", "coords": ["p", "q"], "box": [[-1, 1], [-1, 1]],
                        "brackets": {"p,q": "1"}, "map": {"x": "p"}}]
        }"#;
        let err = ProblemFile::from_json(text).unwrap().build().unwrap_err();
        assert!(matches!(err, ProblemError::MissingComponent { ref coord, .. } if coord == "y"), "{err}");
        let stray = text.replace("{\"x\": \"p\"}", "{\"x\": \"p\", \"y\": \"q\", \"z\": \"0\"}");
        assert!(matches!(ProblemFile::from_json(&stray).unwrap().build(), Err(ProblemError::Map { .. })));
        let ok = text.replace("{\"x\": \"p\"}", "{\"x\": \"p\", \"y\": \"q\"}");
        let p = ProblemFile::from_json(&ok).unwrap().build().unwrap();
        assert_eq!(p.candidate.unwrap().pieces().len(), 1);
    }

    #[test]
    fn option_validation() {
        let with = |o: Options| config_for(&o, 2);
        assert!(with(Options { grid: Some(vec![3, 4, 5]), ..Default::default() }).is_err());
        assert!(with(Options { grid: Some(vec![1]), ..Default::default() }).is_err());
        assert!(with(Options { grid: Some(vec![100_000]), ..Default::default() }).is_err());
        assert!(with(Options { tol: Some(0.0), ..Default::default() }).is_err());
        assert!(with(Options { samples: Some(0), ..Default::default() }).is_err());
        assert!(with(Options { ode_step: Some(-1.0), ..Default::default() }).is_err());
        let cfg = with(Options { seed: Some(7), grid: Some(vec![11, 13]), ..Default::default() }).unwrap();
        assert_eq!(cfg.seed, 7);
        assert_eq!(cfg.coverage_nodes, vec![11, 13]);
    }

    #[test]
    fn merge_prefers_override() {
        let file = Options { seed: Some(1), samples: Some(10), ..Default::default() };
        let flags = Options { seed: Some(2), ..Default::default() };
        let m = file.merged(&flags);
        assert_eq!((m.seed, m.samples), (Some(2), Some(10)));
    }
}
