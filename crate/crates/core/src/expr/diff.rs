use super::{Expr, Func};

impl Expr {
    /// Exact partial derivative with respect to `var`, simplified.
    pub fn differentiate(&self, var: &str) -> Expr {
        self.derivative(var).simplify()
    }

    /// Raw derivative tree before simplification.
    pub fn derivative(&self, var: &str) -> Expr {
        match self {
            Expr::Const(_) => Expr::zero(),
            Expr::Var(name) => Expr::Const(if name == var { 1.0 } else { 0.0 }),
            Expr::Add(a, b) => a.derivative(var) + b.derivative(var),
            Expr::Sub(a, b) => a.derivative(var) - b.derivative(var),
            Expr::Mul(a, b) => a.derivative(var) * (**b).clone() + (**a).clone() * b.derivative(var),
            Expr::Div(a, b) => {
                let num = a.derivative(var) * (**b).clone() - (**a).clone() * b.derivative(var);
                num / (**b).clone().pow(2)
            }
            Expr::Neg(a) => -a.derivative(var),
            Expr::Pow(a, k) => Expr::Const(f64::from(*k)) * (**a).clone().pow(k - 1) * a.derivative(var),
            Expr::Func(f, a) => {
                let inner = (**a).clone();
                let outer = match f {
                    Func::Sin => inner.cos(),
                    Func::Cos => -inner.sin(),
                    Func::Exp => inner.exp(),
                    Func::Log => Expr::one() / inner,
                    Func::Sqrt => Expr::one() / (Expr::Const(2.0) * inner.sqrt()),
                };
                outer * a.derivative(var)
            }
        }
    }
}
