//! Fixed-step RK4 for the characteristic equation `du/dp = f(u, v0)`.

use serde::Serialize;
use thiserror::Error;

use crate::expr::{EvalError, Expr};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum OdeError {
    #[error("step must be positive and finite, got {0}")]
    BadStep(f64),
    #[error("equation may only use `x` and `y`, found `{0}`")]
    UnknownVariable(String),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OdeConfig {
    pub step: f64,
    /// `|u|` above this counts as blow-up.
    pub blow_up: f64,
    /// Keep every `stride`-th step in the trajectory (start and end are
    /// always kept).
    pub stride: usize,
}

impl Default for OdeConfig {
    fn default() -> Self {
        OdeConfig { step: 1e-3, blow_up: 1e9, stride: 100 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OdeTrace {
    /// Sampled `(p, u)` pairs.
    pub trajectory: Vec<(f64, f64)>,
    pub max_abs_u: f64,
    pub blow_up: bool,
    /// `p` at which blow-up or a domain error stopped the integration.
    pub stopped_at: Option<f64>,
    /// Set when `f` was undefined mid-integration.
    pub domain_error: Option<String>,
    pub steps: usize,
}

/// Integrates `du/dp = f(u, v0)` from `p_span.0` to `p_span.1` (either
/// direction), with `x` standing for `u` and `y` for `v0`.
pub fn characteristic_ode_trace(
    f: &Expr,
    v0: f64,
    u0: f64,
    p_span: (f64, f64),
    cfg: &OdeConfig,
) -> Result<OdeTrace, OdeError> {
    if !(cfg.step > 0.0 && cfg.step.is_finite()) {
        return Err(OdeError::BadStep(cfg.step));
    }
    let rhs = f.compile(&["x", "y"]).map_err(|e| match e {
        EvalError::Unbound(v) => OdeError::UnknownVariable(v),
        EvalError::Domain(_) => unreachable!("compilation does not evaluate"),
    })?;
    let rate = |u: f64| rhs.eval(&[u, v0]);

    let (p0, p1) = p_span;
    let length = (p1 - p0).abs();
    let n = (length / cfg.step).ceil() as usize;
    let h = if n == 0 { 0.0 } else { (p1 - p0) / n as f64 };
    let stride = cfg.stride.max(1);

    let mut trace = OdeTrace {
        trajectory: vec![(p0, u0)],
        max_abs_u: u0.abs(),
        blow_up: false,
        stopped_at: None,
        domain_error: None,
        steps: 0,
    };
    let mut u = u0;
    for k in 1..=n {
        let p_prev = p0 + h * (k - 1) as f64;
        let step = (|| {
            let k1 = rate(u)?;
            let k2 = rate(u + 0.5 * h * k1)?;
            let k3 = rate(u + 0.5 * h * k2)?;
            let k4 = rate(u + h * k3)?;
            Ok::<f64, crate::expr::DomainError>(u + h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4))
        })();
        let p = if k == n { p1 } else { p0 + h * k as f64 };
        match step {
            Err(e) => {
                trace.domain_error = Some(e.to_string());
                trace.stopped_at = Some(p_prev);
                trace.trajectory.push((p_prev, u));
                break;
            }
            Ok(next) => {
                u = next;
                trace.steps = k;
                if !u.is_finite() || u.abs() > cfg.blow_up {
                    trace.blow_up = true;
                    trace.stopped_at = Some(p);
                    trace.max_abs_u = f64::INFINITY;
                    trace.trajectory.push((p, u));
                    break;
                }
                trace.max_abs_u = trace.max_abs_u.max(u.abs());
                if k % stride == 0 || k == n {
                    trace.trajectory.push((p, u));
                }
            }
        }
    }
    Ok(trace)
}
