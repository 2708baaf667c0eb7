//! Bounded bottom-up rewriter: constant folding plus identity rules.
//!
//! This is not a normal form. Two simplified trees may still denote the same
//! function; semantic comparison goes through [`super::equivalent`].

use super::eval::Env;
use super::{Expr, Func};

const MAX_PASSES: usize = 32;

impl Expr {
    /// Rewrites to a fixpoint. Every rule preserves the value wherever the
    /// input is defined.
    pub fn simplify(&self) -> Expr {
        let mut current = self.clone();
        for _ in 0..MAX_PASSES {
            let next = pass(&current);
            if next == current {
                return next;
            }
            current = next;
        }
        current
    }
}

fn pass(e: &Expr) -> Expr {
    match e {
        Expr::Const(_) | Expr::Var(_) => e.clone(),
        Expr::Add(a, b) => add(pass(a), pass(b)),
        Expr::Sub(a, b) => sub(pass(a), pass(b)),
        Expr::Mul(a, b) => mul(pass(a), pass(b)),
        Expr::Div(a, b) => div(pass(a), pass(b)),
        Expr::Neg(a) => neg(pass(a)),
        Expr::Pow(a, k) => pow(pass(a), *k),
        Expr::Func(f, a) => func(*f, pass(a)),
    }
}

/// Folds a closed node if it evaluates to a finite value.
fn fold(e: Expr) -> Expr {
    match e.evaluate(&Env::new()) {
        Ok(v) if v.is_finite() => Expr::Const(v),
        _ => e,
    }
}

fn both_const(a: &Expr, b: &Expr) -> bool {
    matches!((a, b), (Expr::Const(_), Expr::Const(_)))
}

fn add(a: Expr, b: Expr) -> Expr {
    if both_const(&a, &b) {
        return fold(a + b);
    }
    if a.is_zero() {
        return b;
    }
    if b.is_zero() {
        return a;
    }
    match (a, b) {
        (a, Expr::Neg(b)) => Expr::Sub(Box::new(a), b),
        (Expr::Neg(a), b) => Expr::Sub(Box::new(b), a),
        (a, b) => a + b,
    }
}

fn sub(a: Expr, b: Expr) -> Expr {
    if both_const(&a, &b) {
        return fold(a - b);
    }
    if b.is_zero() {
        return a;
    }
    if a.is_zero() {
        return -b;
    }
    if a == b {
        return Expr::zero();
    }
    match b {
        Expr::Neg(b) => Expr::Add(Box::new(a), b),
        b => a - b,
    }
}

fn mul(a: Expr, b: Expr) -> Expr {
    if both_const(&a, &b) {
        return fold(a * b);
    }
    if a.is_zero() || b.is_zero() {
        return Expr::zero();
    }
    if a.is_one() {
        return b;
    }
    if b.is_one() {
        return a;
    }
    if a.as_const() == Some(-1.0) {
        return -b;
    }
    if b.as_const() == Some(-1.0) {
        return -a;
    }
    if a == b {
        return a.pow(2);
    }
    match (a, b) {
        (Expr::Neg(a), Expr::Neg(b)) => Expr::Mul(a, b),
        (Expr::Neg(a), b) => -Expr::Mul(a, Box::new(b)),
        (a, Expr::Neg(b)) => -Expr::Mul(Box::new(a), b),
        // Constants move to the left and merge.
        (a, Expr::Const(c)) => Expr::Const(c) * a,
        (Expr::Const(c1), Expr::Mul(inner_a, inner_b)) if inner_a.as_const().is_some() => {
            let c2 = inner_a.as_const().unwrap_or(1.0);
            match fold(Expr::Const(c1) * c2) {
                Expr::Const(c) => Expr::Const(c) * *inner_b,
                _ => Expr::Const(c1) * Expr::Mul(inner_a, inner_b),
            }
        }
        (a, b) => a * b,
    }
}

fn div(a: Expr, b: Expr) -> Expr {
    if both_const(&a, &b) {
        return fold(a / b);
    }
    if a.is_zero() {
        return Expr::zero();
    }
    if b.is_one() {
        return a;
    }
    if a == b {
        return Expr::one();
    }
    a / b
}

fn neg(a: Expr) -> Expr {
    match a {
        Expr::Neg(inner) => *inner,
        Expr::Const(c) => Expr::Const(-c),
        Expr::Sub(x, y) => Expr::Sub(y, x),
        a => -a,
    }
}

fn pow(a: Expr, k: i32) -> Expr {
    if k == 0 {
        return Expr::one();
    }
    if k == 1 {
        return a;
    }
    match a {
        Expr::Const(_) => fold(a.pow(k)),
        Expr::Pow(base, j) => match j.checked_mul(k) {
            Some(jk) => Expr::Pow(base, jk),
            None => Expr::Pow(base, j).pow(k),
        },
        a => a.pow(k),
    }
}

fn func(f: Func, a: Expr) -> Expr {
    if let Expr::Const(_) = a {
        return fold(Expr::Func(f, Box::new(a)));
    }
    match (f, a) {
        (Func::Log, Expr::Func(Func::Exp, inner)) => *inner,
        (Func::Exp, Expr::Func(Func::Log, inner)) => *inner,
        (f, a) => Expr::Func(f, Box::new(a)),
    }
}
