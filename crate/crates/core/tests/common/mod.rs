//! Generators and oracles shared by the property suites and the acceptance
//! harness. Every oracle here evaluates numerically and never consults the
//! symbolic machinery it is checking.
#![allow(dead_code)]

use nalgebra::DMatrix;
use proptest::prelude::*;
use proptest::test_runner::{Config as PtConfig, RngAlgorithm, TestCaseError, TestRng, TestRunner};

use sympres::expr::{equivalent, CompiledExpr, Expr, SampleBox};
use sympres::poisson::{Chart, PoissonStructure};

/// Expressions that stay defined on any box: denominators, `log` and `sqrt`
/// arguments are kept positive and `exp` only sees bounded arguments.
pub fn expr_strategy(vars: &'static [&'static str], depth: u32) -> BoxedStrategy<Expr> {
    let leaf = prop_oneof![
        (-20i32..=20).prop_map(|k| Expr::constant(k as f64 / 10.0)),
        proptest::sample::select(vars).prop_map(Expr::var),
    ];
    leaf.prop_recursive(depth, 24, 2, |inner| {
        prop_oneof![
            (inner.clone(), inner.clone()).prop_map(|(a, b)| a + b),
            (inner.clone(), inner.clone()).prop_map(|(a, b)| a - b),
            (inner.clone(), inner.clone()).prop_map(|(a, b)| a * b),
            (inner.clone(), inner.clone()).prop_map(|(a, b)| a / (Expr::one() + b.pow(2))),
            inner.clone().prop_map(|a| -a),
            (inner.clone(), 0i32..=3).prop_map(|(a, k)| a.pow(k)),
            inner.clone().prop_map(Expr::sin),
            inner.clone().prop_map(Expr::cos),
            inner.clone().prop_map(|a| a.sin().exp()),
            inner.clone().prop_map(|a| (Expr::constant(0.5) + a.pow(2)).log()),
            inner.clone().prop_map(|a| (Expr::constant(0.5) + a.pow(2)).sqrt()),
        ]
    })
    .boxed()
}

pub const XY: &[&str] = &["x", "y"];
pub const X4: &[&str] = &["x1", "x2", "x3", "x4"];

pub fn plane_chart() -> Chart {
    Chart::uniform(XY, -1.5, 1.5).unwrap()
}

pub fn plane_box() -> SampleBox {
    SampleBox::uniform(XY, -1.5, 1.5)
}

/// Five-point central difference of `c` along axis `a`.
pub fn fd_partial(c: &CompiledExpr, x: &[f64], a: usize) -> Option<f64> {
    let h = 1e-3;
    let at = |t: f64| {
        let mut y = x.to_vec();
        y[a] += t;
        c.eval_opt(&y)
    };
    Some((-at(2.0 * h)? + 8.0 * at(h)? - 8.0 * at(-h)? + at(-2.0 * h)?) / (12.0 * h))
}

pub fn close(reference: f64, value: f64, tol: f64) -> bool {
    (reference - value).abs() <= tol * (1.0 + reference.abs())
}

pub fn holds(a: &Expr, b: &Expr, bx: &SampleBox, seed: u64) -> Result<(), TestCaseError> {
    let v = equivalent(a, b, bx, 32, 1e-9, seed).map_err(|e| TestCaseError::fail(e.to_string()))?;
    prop_assert!(v.holds(), "{a}  vs  {b}: {v:?}");
    Ok(())
}

/// Symbolic partials agree with finite differences at a few points.
pub fn derivative_matches_fd(e: &Expr, points: &[Vec<f64>]) -> Result<(), TestCaseError> {
    let c = e.compile(XY).unwrap();
    for (a, var) in XY.iter().enumerate() {
        let d = e.differentiate(var).compile(XY).unwrap();
        for x in points {
            let (Some(exact), Some(fd)) = (d.eval_opt(x), fd_partial(&c, x, a)) else { continue };
            prop_assert!(close(exact, fd, 1e-5), "d{e}/d{var} at {x:?}: {exact} vs {fd}");
        }
    }
    Ok(())
}

/// Antisymmetry and the Leibniz rule for the bracket of `pi`.
pub fn bracket_laws(pi: &Expr, f: &Expr, g: &Expr, h: &Expr, seed: u64) -> Result<(), TestCaseError> {
    let p = PoissonStructure::new(plane_chart(), [((0, 1), pi.clone())]).unwrap();
    let fg = p.bracket(f, g).unwrap();
    let gf = p.bracket(g, f).unwrap();
    let bx = plane_box();
    holds(&(fg.clone() + gf), &Expr::zero(), &bx, seed)?;
    let lhs = p.bracket(f, &(g.clone() * h.clone())).unwrap();
    let rhs = fg * h.clone() + g.clone() * p.bracket(f, h).unwrap();
    holds(&lhs, &rhs, &bx, seed)
}

/// `det π = Pf(π)²` at `x` for the structure with upper entries `entries`.
pub fn det_is_pf_squared(entries: &[Expr], x: &[f64]) -> Result<(), TestCaseError> {
    let chart = Chart::uniform(X4, -1.5, 1.5).unwrap();
    let mut k = 0;
    let mut upper = Vec::new();
    for i in 0..4 {
        for j in i + 1..4 {
            upper.push(((i, j), entries[k].clone()));
            k += 1;
        }
    }
    let p = PoissonStructure::new(chart, upper).unwrap();
    let m: DMatrix<f64> = p.matrix_at(x).unwrap();
    let det = m.clone().determinant();
    let pf = p.pfaffian_at(x).unwrap();
    let scale = m.iter().map(|v| v.abs()).fold(1.0, f64::max).powi(4);
    prop_assert!((det - pf * pf).abs() <= 1e-9 * scale.max(det.abs()), "det {det}, Pf² {}", pf * pf);
    Ok(())
}

/// Deterministic runner for the acceptance harness.
pub fn runner(cases: u32, seed: u8) -> TestRunner {
    let cfg = PtConfig { cases, failure_persistence: None, ..PtConfig::default() };
    TestRunner::new_with_rng(cfg, TestRng::from_seed(RngAlgorithm::ChaCha, &[seed; 32]))
}

pub fn point_strategy(dim: usize, lo: f64, hi: f64) -> impl Strategy<Value = Vec<f64>> {
    proptest::collection::vec(lo..hi, dim)
}
