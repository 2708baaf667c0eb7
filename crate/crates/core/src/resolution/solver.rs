//! Multi-start Levenberg–Marquardt for `min |φ(σ) − m*|²` over a box.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::expr::Interval;
use crate::morphism::CompiledMap;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SolverConfig {
    /// LM runs per piece and target point.
    pub starts: usize,
    /// Random candidates screened by residual to choose the starts; the box
    /// center is always a candidate.
    pub pool: usize,
    pub max_iter: usize,
    /// Success when `|φ(σ) − m*| < tol`.
    pub tol: f64,
    pub lambda0: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig { starts: 8, pool: 64, max_iter: 100, tol: 1e-8, lambda0: 1e-3 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Solution {
    pub preimage: Vec<f64>,
    pub residual: f64,
}

fn residual_norm(map: &CompiledMap, x: &[f64], target: &[f64]) -> Option<(DVector<f64>, f64)> {
    let img = map.image(x).ok()?;
    let r = DVector::from_iterator(target.len(), img.iter().zip(target).map(|(a, b)| a - b));
    let n = r.norm();
    n.is_finite().then_some((r, n))
}

/// Best solution found from the chosen starts, or `None` if every start
/// failed to reach `cfg.tol`.
pub fn solve(
    map: &CompiledMap,
    bounds: &[Interval],
    target: &[f64],
    seed: u64,
    cfg: &SolverConfig,
) -> Option<Solution> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let center: Vec<f64> = bounds.iter().map(Interval::mid).collect();
    let mut pool: Vec<(f64, Vec<f64>)> = Vec::with_capacity(cfg.pool + 1);
    let consider = |x: Vec<f64>, pool: &mut Vec<(f64, Vec<f64>)>| {
        if let Some((_, n)) = residual_norm(map, &x, target) {
            pool.push((n, x));
        }
    };
    consider(center, &mut pool);
    for _ in 0..cfg.pool {
        let x = bounds.iter().map(|iv| iv.lo + iv.width() * rng.random::<f64>()).collect();
        consider(x, &mut pool);
    }
    // Stable sort keeps the center ahead of equally good random points.
    pool.sort_by(|a, b| a.0.total_cmp(&b.0));

    let mut best: Option<Solution> = None;
    for (_, start) in pool.into_iter().take(cfg.starts.max(1)) {
        if let Some(sol) = levenberg_marquardt(map, bounds, target, start, cfg) {
            if sol.residual < cfg.tol {
                return Some(sol);
            }
            if best.as_ref().is_none_or(|b| sol.residual < b.residual) {
                best = Some(sol);
            }
        }
    }
    best.filter(|b| b.residual < cfg.tol)
}

fn levenberg_marquardt(
    map: &CompiledMap,
    bounds: &[Interval],
    target: &[f64],
    mut x: Vec<f64>,
    cfg: &SolverConfig,
) -> Option<Solution> {
    let d = x.len();
    let (mut r, mut norm) = residual_norm(map, &x, target)?;
    let mut lambda = cfg.lambda0;
    for _ in 0..cfg.max_iter {
        if norm < cfg.tol {
            break;
        }
        let Ok(j) = map.jacobian(&x) else { break };
        let jt = j.transpose();
        let jtj = &jt * &j;
        let g = &jt * &r;
        let mut accepted = false;
        while lambda < 1e16 {
            let damped = &jtj + DMatrix::<f64>::identity(d, d) * (lambda * (1.0 + jtj.diagonal().max()));
            let Some(step) = damped.cholesky().map(|c| c.solve(&(-&g))) else {
                lambda *= 10.0;
                continue;
            };
            let trial: Vec<f64> = x.iter().zip(step.iter()).zip(bounds).map(|((xi, s), iv)| iv.clamp(xi + s)).collect();
            match residual_norm(map, &trial, target) {
                Some((rt, nt)) if nt < norm => {
                    x = trial;
                    r = rt;
                    norm = nt;
                    lambda = (lambda / 3.0).max(1e-12);
                    accepted = true;
                    break;
                }
                _ => lambda *= 4.0,
            }
        }
        if !accepted {
            break;
        }
    }
    Some(Solution { preimage: x, residual: norm })
}
