//! Pointwise evaluation: tree-walking over an [`Env`] and a compiled
//! postfix form over positional slices for hot loops.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{Expr, Func};

/// Assignment of real values to variable names.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Env(BTreeMap<String, f64>);

impl Env {
    pub fn new() -> Self {
        Env(BTreeMap::new())
    }

    /// Pairs names with values positionally.
    pub fn from_point<S: AsRef<str>>(names: &[S], values: &[f64]) -> Self {
        Env(names.iter().map(|n| n.as_ref().to_string()).zip(values.iter().copied()).collect())
    }

    pub fn insert(&mut self, name: impl Into<String>, value: f64) {
        self.0.insert(name.into(), value);
    }

    pub fn get(&self, name: &str) -> Option<f64> {
        self.0.get(name).copied()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, f64)> {
        self.0.iter().map(|(k, v)| (k.as_str(), *v))
    }

    /// Values for `names`, in order.
    pub fn point<S: AsRef<str>>(&self, names: &[S]) -> Result<Vec<f64>, EvalError> {
        names.iter().map(|n| self.get(n.as_ref()).ok_or_else(|| EvalError::Unbound(n.as_ref().to_string()))).collect()
    }
}

impl<S: Into<String>> FromIterator<(S, f64)> for Env {
    fn from_iter<I: IntoIterator<Item = (S, f64)>>(iter: I) -> Self {
        Env(iter.into_iter().map(|(k, v)| (k.into(), v)).collect())
    }
}

impl fmt::Display for Env {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("(")?;
        for (i, (k, v)) in self.0.iter().enumerate() {
            if i > 0 {
                f.write_str(", ")?;
            }
            write!(f, "{k}={v}")?;
        }
        f.write_str(")")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DomainKind {
    DivisionByZero,
    LogNonPositive,
    SqrtNegative,
    ZeroToNegativePower,
}

impl fmt::Display for DomainKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            DomainKind::DivisionByZero => "division by zero",
            DomainKind::LogNonPositive => "log of non-positive value",
            DomainKind::SqrtNegative => "sqrt of negative value",
            DomainKind::ZeroToNegativePower => "zero raised to a negative power",
        })
    }
}

/// Evaluation left the domain of an operation.
#[derive(Debug, Clone, PartialEq, Error)]
#[error("domain error: {kind} in `{subtree}`")]
pub struct DomainError {
    pub kind: DomainKind,
    pub subtree: String,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EvalError {
    #[error("unbound variable `{0}`")]
    Unbound(String),
    #[error(transparent)]
    Domain(#[from] DomainError),
}

fn apply_func(func: Func, x: f64) -> Option<f64> {
    Some(match func {
        Func::Sin => x.sin(),
        Func::Cos => x.cos(),
        Func::Exp => x.exp(),
        Func::Log if x > 0.0 => x.ln(),
        Func::Sqrt if x >= 0.0 => x.sqrt(),
        Func::Log | Func::Sqrt => return None,
    })
}

fn func_domain(func: Func) -> DomainKind {
    match func {
        Func::Log => DomainKind::LogNonPositive,
        _ => DomainKind::SqrtNegative,
    }
}

impl Expr {
    /// Double-precision evaluation.
    pub fn evaluate(&self, env: &Env) -> Result<f64, EvalError> {
        let domain = |kind| EvalError::Domain(DomainError { kind, subtree: self.to_string() });
        Ok(match self {
            Expr::Const(c) => *c,
            Expr::Var(name) => env.get(name).ok_or_else(|| EvalError::Unbound(name.clone()))?,
            Expr::Add(a, b) => a.evaluate(env)? + b.evaluate(env)?,
            Expr::Sub(a, b) => a.evaluate(env)? - b.evaluate(env)?,
            Expr::Mul(a, b) => a.evaluate(env)? * b.evaluate(env)?,
            Expr::Div(a, b) => {
                let num = a.evaluate(env)?;
                let den = b.evaluate(env)?;
                if den == 0.0 {
                    return Err(domain(DomainKind::DivisionByZero));
                }
                num / den
            }
            Expr::Neg(a) => -a.evaluate(env)?,
            Expr::Pow(a, k) => {
                let base = a.evaluate(env)?;
                if base == 0.0 && *k < 0 {
                    return Err(domain(DomainKind::ZeroToNegativePower));
                }
                base.powi(*k)
            }
            Expr::Func(func, a) => {
                let x = a.evaluate(env)?;
                apply_func(*func, x).ok_or_else(|| domain(func_domain(*func)))?
            }
        })
    }

    /// Compiles against a fixed variable ordering.
    pub fn compile<S: AsRef<str>>(&self, vars: &[S]) -> Result<CompiledExpr, EvalError> {
        let mut c = CompiledExpr { ops: Vec::new(), sites: Vec::new(), depth: 0 };
        let mut depth = 0;
        c.emit(self, vars, &mut depth)?;
        Ok(c)
    }
}

#[derive(Debug, Clone, Copy)]
enum Op {
    Const(f64),
    Var(usize),
    Add,
    Sub,
    Mul,
    /// Index into `sites` for error reporting.
    Div(usize),
    Neg,
    Pow(i32, usize),
    Func(Func, usize),
}

/// Postfix program evaluated on positional points.
#[derive(Debug, Clone)]
pub struct CompiledExpr {
    ops: Vec<Op>,
    sites: Vec<String>,
    depth: usize,
}

const STACK_INLINE: usize = 64;

impl CompiledExpr {
    fn emit<S: AsRef<str>>(&mut self, e: &Expr, vars: &[S], depth: &mut usize) -> Result<(), EvalError> {
        let push = |c: &mut CompiledExpr, depth: &mut usize, op| {
            c.ops.push(op);
            *depth += 1;
            c.depth = c.depth.max(*depth);
        };
        match e {
            Expr::Const(v) => push(self, depth, Op::Const(*v)),
            Expr::Var(name) => {
                let idx =
                    vars.iter().position(|v| v.as_ref() == name).ok_or_else(|| EvalError::Unbound(name.clone()))?;
                push(self, depth, Op::Var(idx));
            }
            Expr::Add(a, b) | Expr::Sub(a, b) | Expr::Mul(a, b) | Expr::Div(a, b) => {
                self.emit(a, vars, depth)?;
                self.emit(b, vars, depth)?;
                *depth -= 1;
                let op = match e {
                    Expr::Add(..) => Op::Add,
                    Expr::Sub(..) => Op::Sub,
                    Expr::Mul(..) => Op::Mul,
                    _ => {
                        self.sites.push(e.to_string());
                        Op::Div(self.sites.len() - 1)
                    }
                };
                self.ops.push(op);
            }
            Expr::Neg(a) => {
                self.emit(a, vars, depth)?;
                self.ops.push(Op::Neg);
            }
            Expr::Pow(a, k) => {
                self.emit(a, vars, depth)?;
                self.sites.push(e.to_string());
                self.ops.push(Op::Pow(*k, self.sites.len() - 1));
            }
            Expr::Func(func, a) => {
                self.emit(a, vars, depth)?;
                self.sites.push(e.to_string());
                self.ops.push(Op::Func(*func, self.sites.len() - 1));
            }
        }
        Ok(())
    }

    /// Evaluates at `point`; the slice must cover every compiled variable.
    pub fn eval(&self, point: &[f64]) -> Result<f64, DomainError> {
        if self.depth <= STACK_INLINE {
            let mut stack = [0.0f64; STACK_INLINE];
            self.run(point, &mut stack)
        } else {
            let mut stack = vec![0.0f64; self.depth];
            self.run(point, &mut stack)
        }
    }

    /// Like [`eval`](Self::eval) but maps domain errors to `None`.
    pub fn eval_opt(&self, point: &[f64]) -> Option<f64> {
        self.eval(point).ok()
    }

    fn run(&self, point: &[f64], stack: &mut [f64]) -> Result<f64, DomainError> {
        let mut sp = 0usize;
        let fail = |kind, site: usize| DomainError { kind, subtree: self.sites[site].clone() };
        for op in &self.ops {
            match *op {
                Op::Const(v) => {
                    stack[sp] = v;
                    sp += 1;
                }
                Op::Var(i) => {
                    stack[sp] = point[i];
                    sp += 1;
                }
                Op::Add => {
                    sp -= 1;
                    stack[sp - 1] += stack[sp];
                }
                Op::Sub => {
                    sp -= 1;
                    stack[sp - 1] -= stack[sp];
                }
                Op::Mul => {
                    sp -= 1;
                    stack[sp - 1] *= stack[sp];
                }
                Op::Div(site) => {
                    sp -= 1;
                    if stack[sp] == 0.0 {
                        return Err(fail(DomainKind::DivisionByZero, site));
                    }
                    stack[sp - 1] /= stack[sp];
                }
                Op::Neg => stack[sp - 1] = -stack[sp - 1],
                Op::Pow(k, site) => {
                    let base = stack[sp - 1];
                    if base == 0.0 && k < 0 {
                        return Err(fail(DomainKind::ZeroToNegativePower, site));
                    }
                    stack[sp - 1] = base.powi(k);
                }
                Op::Func(func, site) => {
                    stack[sp - 1] = apply_func(func, stack[sp - 1]).ok_or_else(|| fail(func_domain(func), site))?;
                }
            }
        }
        Ok(stack[0])
    }
}

#[cfg(test)]
mod tests {
    use super::super::parse;
    use super::*;
    use std::f64::consts::FRAC_PI_2;

    fn env(pairs: &[(&str, f64)]) -> Env {
        pairs.iter().map(|(k, v)| (k.to_string(), *v)).collect()
    }

    #[test]
    fn sum_of_squares_at_point() {
        let e = parse("x^2 + y^2").unwrap();
        assert_eq!(e.evaluate(&env(&[("x", 1.0), ("y", 2.0)])).unwrap(), 5.0);
    }

    #[test]
    fn resolution_component_at_point() {
        let e = parse("q*sin(p*q)").unwrap();
        let v = e.evaluate(&env(&[("p", FRAC_PI_2), ("q", 1.0)])).unwrap();
        assert!((v - 1.0).abs() < 1e-15);
    }

    #[test]
    fn reciprocal_at_zero_is_domain_error() {
        let e = parse("1/x").unwrap();
        match e.evaluate(&env(&[("x", 0.0)])) {
            Err(EvalError::Domain(d)) => {
                assert_eq!(d.kind, DomainKind::DivisionByZero);
                assert_eq!(d.subtree, "1 / x");
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn domain_errors_carry_subtree() {
        let cases = [
            ("log(x - 1)", DomainKind::LogNonPositive, "log(x - 1)"),
            ("2 + sqrt(-x)", DomainKind::SqrtNegative, "sqrt(-x)"),
            ("(x - 1)^-2", DomainKind::ZeroToNegativePower, "(x - 1)^-2"),
        ];
        for (src, kind, subtree) in cases {
            let e = parse(src).unwrap();
            let err = e.evaluate(&env(&[("x", 1.0)])).unwrap_err();
            assert_eq!(err, EvalError::Domain(DomainError { kind, subtree: subtree.into() }));
            let compiled = e.compile(&["x"]).unwrap();
            assert_eq!(compiled.eval(&[1.0]).unwrap_err().kind, kind);
        }
    }

    #[test]
    fn unbound_variable() {
        let e = parse("x + z").unwrap();
        assert_eq!(e.evaluate(&env(&[("x", 1.0)])), Err(EvalError::Unbound("z".into())));
        assert!(matches!(e.compile(&["x"]), Err(EvalError::Unbound(_))));
    }

    #[test]
    fn compiled_matches_tree_walk() {
        let e = parse("exp(-x) * cos(y^3) / (1 + x^2) - sqrt(y) * log(x + 2)").unwrap();
        let c = e.compile(&["x", "y"]).unwrap();
        for &(x, y) in &[(0.3, 0.7), (1.9, 2.2), (-0.5, 0.01)] {
            let a = e.evaluate(&env(&[("x", x), ("y", y)])).unwrap();
            let b = c.eval(&[x, y]).unwrap();
            assert_eq!(a, b);
        }
    }

    #[test]
    fn deep_expressions_use_heap_stack() {
        // Right-nested sums push one value per level.
        let mut deep = Expr::Const(1.0);
        for _ in 0..100 {
            deep = Expr::var("x") * (Expr::var("x") + deep);
        }
        let c = deep.compile(&["x"]).unwrap();
        let direct = deep.evaluate(&env(&[("x", 0.5)])).unwrap();
        assert_eq!(c.eval(&[0.5]).unwrap(), direct);
    }
}
