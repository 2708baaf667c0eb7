//! Seeded sampling and randomized identity testing.
//!
//! `equivalent` is probabilistic: a pass means the two expressions agreed
//! at every sampled point, nothing more.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::eval::{Env, EvalError};
use super::Expr;

/// Closed interval `[lo, hi]`. A point interval (`lo == hi`) is allowed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    pub fn new(lo: f64, hi: f64) -> Self {
        Interval { lo, hi }
    }

    pub fn width(&self) -> f64 {
        self.hi - self.lo
    }

    pub fn contains(&self, x: f64) -> bool {
        self.lo <= x && x <= self.hi
    }

    pub fn clamp(&self, x: f64) -> f64 {
        x.clamp(self.lo, self.hi)
    }

    pub fn mid(&self) -> f64 {
        0.5 * (self.lo + self.hi)
    }
}

/// Named axis-aligned box used for sampling.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleBox {
    names: Vec<String>,
    bounds: Vec<Interval>,
}

impl SampleBox {
    pub fn new<S: AsRef<str>>(names: &[S], bounds: &[Interval]) -> Self {
        assert_eq!(names.len(), bounds.len(), "one interval per variable");
        SampleBox { names: names.iter().map(|s| s.as_ref().to_string()).collect(), bounds: bounds.to_vec() }
    }

    /// Same interval on every axis.
    pub fn uniform<S: AsRef<str>>(names: &[S], lo: f64, hi: f64) -> Self {
        let bounds = vec![Interval::new(lo, hi); names.len()];
        Self::new(names, &bounds)
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn bounds(&self) -> &[Interval] {
        &self.bounds
    }

    pub fn dim(&self) -> usize {
        self.names.len()
    }

    pub fn contains(&self, point: &[f64]) -> bool {
        point.len() == self.dim() && self.bounds.iter().zip(point).all(|(iv, &x)| iv.contains(x))
    }

    pub fn sampler(&self, seed: u64) -> Sampler {
        Sampler { rng: ChaCha8Rng::seed_from_u64(seed), bounds: self.bounds.clone() }
    }
}

/// Deterministic stream of uniform points in a box.
pub struct Sampler {
    rng: ChaCha8Rng,
    bounds: Vec<Interval>,
}

impl Sampler {
    pub fn next_point(&mut self) -> Vec<f64> {
        let rng = &mut self.rng;
        self.bounds
            .iter()
            .map(|iv| if iv.width() > 0.0 { iv.lo + iv.width() * rng.random::<f64>() } else { iv.lo })
            .collect()
    }
}

/// `|value - reference| <= tol * (1 + |reference|)`.
pub fn hybrid_close(reference: f64, value: f64, tol: f64) -> bool {
    (value - reference).abs() <= tol * (1.0 + reference.abs())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum Equivalence {
    Equivalent { samples: usize },
    NotEquivalent { witness: Env, gap: f64 },
}

impl Equivalence {
    pub fn holds(&self) -> bool {
        matches!(self, Equivalence::Equivalent { .. })
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EquivError {
    #[error("variable `{0}` is not bounded by the sampling box")]
    Unbounded(String),
    #[error("only {valid} of {wanted} samples were in the domain after {attempts} attempts")]
    Exhausted { wanted: usize, valid: usize, attempts: usize },
}

/// Compares `e1` and `e2` at `n` seeded uniform points of `bx`.
///
/// Points where either side is undefined (or non-finite) are skipped and
/// redrawn, up to `10 n` draws in total.
pub fn equivalent(
    e1: &Expr,
    e2: &Expr,
    bx: &SampleBox,
    n: usize,
    tol: f64,
    seed: u64,
) -> Result<Equivalence, EquivError> {
    let compile = |e: &Expr| {
        e.compile(bx.names()).map_err(|err| match err {
            EvalError::Unbound(name) => EquivError::Unbounded(name),
            EvalError::Domain(_) => unreachable!("compilation does not evaluate"),
        })
    };
    let c1 = compile(e1)?;
    let c2 = compile(e2)?;
    let n = n.max(1);
    let max_attempts = 10 * n;
    let mut sampler = bx.sampler(seed);
    let mut valid = 0;
    let mut attempts = 0;
    while valid < n {
        if attempts == max_attempts {
            return Err(EquivError::Exhausted { wanted: n, valid, attempts });
        }
        attempts += 1;
        let point = sampler.next_point();
        let (Some(a), Some(b)) = (c1.eval_opt(&point), c2.eval_opt(&point)) else {
            continue;
        };
        if !a.is_finite() || !b.is_finite() {
            continue;
        }
        valid += 1;
        if !hybrid_close(a, b, tol) {
            return Ok(Equivalence::NotEquivalent { witness: Env::from_point(bx.names(), &point), gap: (a - b).abs() });
        }
    }
    Ok(Equivalence::Equivalent { samples: valid })
}
