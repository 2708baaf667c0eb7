//! Expression language over named real variables.
//!
//! Expressions are immutable trees. Exponents of [`Expr::Pow`] are integers;
//! fractional powers have to be spelled through `exp`/`log` or `sqrt`.
//! The printer emits the minimal parenthesization that [`parse`] reads back
//! into the identical tree, which is what makes textual round-trips exact.

mod diff;
mod equiv;
mod eval;
mod parse;
mod simplify;

use std::collections::{BTreeSet, HashMap};
use std::fmt;

pub use equiv::{equivalent, hybrid_close, EquivError, Equivalence, Interval, SampleBox, Sampler};
pub use eval::{CompiledExpr, DomainError, DomainKind, Env, EvalError};
pub use parse::{parse, ParseError};

/// Built-in unary functions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Func {
    Sin,
    Cos,
    Exp,
    Log,
    Sqrt,
}

impl Func {
    pub fn name(self) -> &'static str {
        match self {
            Func::Sin => "sin",
            Func::Cos => "cos",
            Func::Exp => "exp",
            Func::Log => "log",
            Func::Sqrt => "sqrt",
        }
    }

    pub fn from_name(name: &str) -> Option<Func> {
        Some(match name {
            "sin" => Func::Sin,
            "cos" => Func::Cos,
            "exp" => Func::Exp,
            "log" => Func::Log,
            "sqrt" => Func::Sqrt,
            _ => return None,
        })
    }
}

/// Symbolic expression tree.
#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Const(f64),
    Var(String),
    Add(Box<Expr>, Box<Expr>),
    Sub(Box<Expr>, Box<Expr>),
    Mul(Box<Expr>, Box<Expr>),
    Div(Box<Expr>, Box<Expr>),
    Neg(Box<Expr>),
    /// Integer power; negative exponents are allowed.
    Pow(Box<Expr>, i32),
    Func(Func, Box<Expr>),
}

/// Returns true if `name` is a valid variable identifier.
pub fn is_identifier(name: &str) -> bool {
    let mut chars = name.chars();
    match chars.next() {
        Some(c) if c.is_ascii_alphabetic() => {}
        _ => return false,
    }
    chars.all(|c| c.is_ascii_alphanumeric() || c == '_')
}

impl Expr {
    pub fn constant(value: f64) -> Expr {
        Expr::Const(value)
    }

    pub fn zero() -> Expr {
        Expr::Const(0.0)
    }

    pub fn one() -> Expr {
        Expr::Const(1.0)
    }

    pub fn var(name: impl Into<String>) -> Expr {
        Expr::Var(name.into())
    }

    pub fn pow(self, exponent: i32) -> Expr {
        Expr::Pow(Box::new(self), exponent)
    }

    pub fn sin(self) -> Expr {
        Expr::Func(Func::Sin, Box::new(self))
    }

    pub fn cos(self) -> Expr {
        Expr::Func(Func::Cos, Box::new(self))
    }

    pub fn exp(self) -> Expr {
        Expr::Func(Func::Exp, Box::new(self))
    }

    pub fn log(self) -> Expr {
        Expr::Func(Func::Log, Box::new(self))
    }

    pub fn sqrt(self) -> Expr {
        Expr::Func(Func::Sqrt, Box::new(self))
    }

    pub fn as_const(&self) -> Option<f64> {
        match self {
            Expr::Const(c) => Some(*c),
            _ => None,
        }
    }

    pub fn is_zero(&self) -> bool {
        matches!(self, Expr::Const(c) if *c == 0.0)
    }

    pub fn is_one(&self) -> bool {
        matches!(self, Expr::Const(c) if *c == 1.0)
    }

    /// Free variables in sorted order.
    pub fn free_vars(&self) -> BTreeSet<String> {
        let mut out = BTreeSet::new();
        self.collect_vars(&mut out);
        out
    }

    fn collect_vars(&self, out: &mut BTreeSet<String>) {
        match self {
            Expr::Const(_) => {}
            Expr::Var(name) => {
                out.insert(name.clone());
            }
            Expr::Add(a, b) | Expr::Sub(a, b) | Expr::Mul(a, b) | Expr::Div(a, b) => {
                a.collect_vars(out);
                b.collect_vars(out);
            }
            Expr::Neg(a) | Expr::Pow(a, _) | Expr::Func(_, a) => a.collect_vars(out),
        }
    }

    /// Number of nodes in the tree.
    pub fn size(&self) -> usize {
        match self {
            Expr::Const(_) | Expr::Var(_) => 1,
            Expr::Add(a, b) | Expr::Sub(a, b) | Expr::Mul(a, b) | Expr::Div(a, b) => 1 + a.size() + b.size(),
            Expr::Neg(a) | Expr::Pow(a, _) | Expr::Func(_, a) => 1 + a.size(),
        }
    }

    /// Simultaneous substitution of variables; unmapped variables are kept.
    pub fn substitute(&self, map: &HashMap<String, Expr>) -> Expr {
        match self {
            Expr::Const(c) => Expr::Const(*c),
            Expr::Var(name) => map.get(name).cloned().unwrap_or_else(|| self.clone()),
            Expr::Add(a, b) => Expr::Add(Box::new(a.substitute(map)), Box::new(b.substitute(map))),
            Expr::Sub(a, b) => Expr::Sub(Box::new(a.substitute(map)), Box::new(b.substitute(map))),
            Expr::Mul(a, b) => Expr::Mul(Box::new(a.substitute(map)), Box::new(b.substitute(map))),
            Expr::Div(a, b) => Expr::Div(Box::new(a.substitute(map)), Box::new(b.substitute(map))),
            Expr::Neg(a) => Expr::Neg(Box::new(a.substitute(map))),
            Expr::Pow(a, k) => Expr::Pow(Box::new(a.substitute(map)), *k),
            Expr::Func(f, a) => Expr::Func(*f, Box::new(a.substitute(map))),
        }
    }

    /// Binding strength used by the printer.
    fn precedence(&self) -> u8 {
        match self {
            Expr::Add(..) | Expr::Sub(..) => 1,
            Expr::Mul(..) | Expr::Div(..) => 2,
            Expr::Neg(_) => 3,
            Expr::Const(c) if c.is_sign_negative() => 3,
            Expr::Pow(..) => 4,
            Expr::Const(_) | Expr::Var(_) | Expr::Func(..) => 5,
        }
    }
}

fn write_operand(f: &mut fmt::Formatter<'_>, e: &Expr, min_prec: u8) -> fmt::Result {
    if e.precedence() < min_prec {
        write!(f, "({e})")
    } else {
        write!(f, "{e}")
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Const(c) => write!(f, "{c}"),
            Expr::Var(name) => f.write_str(name),
            Expr::Add(a, b) => {
                write_operand(f, a, 1)?;
                f.write_str(" + ")?;
                write_operand(f, b, 2)
            }
            Expr::Sub(a, b) => {
                write_operand(f, a, 1)?;
                f.write_str(" - ")?;
                write_operand(f, b, 2)
            }
            Expr::Mul(a, b) => {
                write_operand(f, a, 2)?;
                f.write_str(" * ")?;
                write_operand(f, b, 3)
            }
            Expr::Div(a, b) => {
                write_operand(f, a, 2)?;
                f.write_str(" / ")?;
                write_operand(f, b, 3)
            }
            Expr::Neg(a) => {
                f.write_str("-")?;
                // `-2` would read back as the literal Const(-2).
                if matches!(**a, Expr::Const(c) if !c.is_sign_negative()) {
                    write!(f, "({a})")
                } else {
                    write_operand(f, a, 3)
                }
            }
            Expr::Pow(a, k) => {
                write_operand(f, a, 5)?;
                write!(f, "^{k}")
            }
            Expr::Func(func, a) => write!(f, "{}({a})", func.name()),
        }
    }
}

macro_rules! binary_op {
    ($trait:ident, $method:ident, $variant:ident) => {
        impl std::ops::$trait for Expr {
            type Output = Expr;
            fn $method(self, rhs: Expr) -> Expr {
                Expr::$variant(Box::new(self), Box::new(rhs))
            }
        }

        impl std::ops::$trait<f64> for Expr {
            type Output = Expr;
            fn $method(self, rhs: f64) -> Expr {
                Expr::$variant(Box::new(self), Box::new(Expr::Const(rhs)))
            }
        }
    };
}

binary_op!(Add, add, Add);
binary_op!(Sub, sub, Sub);
binary_op!(Mul, mul, Mul);
binary_op!(Div, div, Div);

impl std::ops::Neg for Expr {
    type Output = Expr;
    fn neg(self) -> Expr {
        Expr::Neg(Box::new(self))
    }
}
