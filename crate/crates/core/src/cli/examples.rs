//! Bundled example problems.

use std::collections::BTreeMap;
use std::f64::consts::FRAC_PI_4;

use super::problem::{Options, PieceSpec, ProblemFile, StructureSpec};

pub const SQUARES: &str = include_str!("../../problems/squares.json");
pub const UNION3: &str = include_str!("../../problems/union3.json");

pub const NAMES: [&str; 3] = ["squares", "union3", "powers"];

/// `q^k` as source text, with `k` a non-negative integer.
fn q_pow(k: u32) -> String {
    match k {
        0 => "1".into(),
        1 => "q".into(),
        _ => format!("q^{k}"),
    }
}

/// Target `{x,y} = x^(2n) + y^(2m)` with the candidate
/// `(p, q) -> (q sin(p q^(2m-1)), q cos(p q^(2m-1)))` and
/// `{p,q} = q^(2n-2m) sin^2 + cos^2` of the same angle.
///
/// Only `n = m` gives a Poisson morphism; the bundled probe `(π/4, 1)`
/// exposes the mismatch otherwise.
pub fn powers(n: u32, m: u32) -> Result<ProblemFile, String> {
    if m == 0 || n < m {
        return Err(format!("powers needs n >= m >= 1, got n = {n}, m = {m}"));
    }
    let angle = match 2 * m - 1 {
        1 => "p*q".to_string(),
        k => format!("p*q^{k}"),
    };
    let lead = match 2 * (n - m) {
        0 => String::new(),
        k => format!("{}*", q_pow(k)),
    };
    let target = StructureSpec {
        coords: vec!["x".into(), "y".into()],
        bounds: vec![[-2.0, 2.0], [-2.0, 2.0]],
        brackets: BTreeMap::from([("x,y".into(), format!("x^{} + y^{}", 2 * n, 2 * m))]),
    };
    let piece = PieceSpec {
        name: "plane".into(),
        coords: vec!["p".into(), "q".into()],
        bounds: vec![[-3.0, 3.0], [-2.0, 2.0]],
        brackets: BTreeMap::from([("p,q".into(), format!("{lead}sin({angle})^2 + cos({angle})^2"))]),
        map: BTreeMap::from([("x".into(), format!("q*sin({angle})")), ("y".into(), format!("q*cos({angle})"))]),
        probes: vec![vec![FRAC_PI_4, 1.0]],
    };
    Ok(ProblemFile {
        target,
        pieces: vec![piece],
        options: Options {
            seed: Some(42),
            samples: Some(10_000),
            tol: Some(1e-9),
            grid: Some(vec![41]),
            ode_step: None,
        },
    })
}

/// Problem JSON text of a bundled example.
pub fn source(name: &str, n: u32, m: u32) -> Result<String, String> {
    match name {
        "squares" => Ok(SQUARES.to_string()),
        "union3" => Ok(UNION3.to_string()),
        "powers" => {
            let file = powers(n, m)?;
            Ok(serde_json::to_string_pretty(&file).expect("problem files serialize") + "\n")
        }
        _ => Err(format!("unknown example `{name}`; known: {}", NAMES.join(", "))),
    }
}
