use nalgebra::DMatrix;

use crate::expr::Expr;

/// Pfaffian of the `n × n` antisymmetric matrix with entries `entry(i, j)`,
/// by expansion along the first remaining row. `n` must be even.
pub fn symbolic_pfaffian(n: usize, entry: &dyn Fn(usize, usize) -> Expr) -> Expr {
    debug_assert!(n.is_multiple_of(2));
    let idx: Vec<usize> = (0..n).collect();
    expand(&idx, entry).simplify()
}

fn expand(idx: &[usize], entry: &dyn Fn(usize, usize) -> Expr) -> Expr {
    if idx.is_empty() {
        return Expr::one();
    }
    let first = idx[0];
    let mut sum = Expr::zero();
    for (pos, &j) in idx.iter().enumerate().skip(1) {
        let a = entry(first, j);
        if a.is_zero() {
            continue;
        }
        let rest: Vec<usize> = idx[1..].iter().copied().filter(|&k| k != j).collect();
        let minor = expand(&rest, entry).simplify();
        if minor.is_zero() {
            continue;
        }
        let term = a * minor;
        sum = if pos % 2 == 1 { sum + term } else { sum - term };
    }
    sum
}

/// Largest dimension with the signed expansion; above it only `sqrt|det|`
/// is returned.
const EXPANSION_MAX_DIM: usize = 6;

/// Numeric Pfaffian of an antisymmetric matrix. Odd sizes give 0.
pub fn pfaffian_of(m: &DMatrix<f64>) -> f64 {
    let n = m.nrows();
    if n % 2 == 1 {
        return 0.0;
    }
    if n <= EXPANSION_MAX_DIM {
        let idx: Vec<usize> = (0..n).collect();
        numeric_expand(m, &idx)
    } else {
        m.clone().determinant().abs().sqrt()
    }
}

fn numeric_expand(m: &DMatrix<f64>, idx: &[usize]) -> f64 {
    match idx {
        [] => 1.0,
        [a, b] => m[(*a, *b)],
        _ => {
            let first = idx[0];
            let mut sum = 0.0;
            let mut rest = Vec::with_capacity(idx.len() - 2);
            for (pos, &j) in idx.iter().enumerate().skip(1) {
                let a = m[(first, j)];
                if a == 0.0 {
                    continue;
                }
                rest.clear();
                rest.extend(idx[1..].iter().copied().filter(|&k| k != j));
                let t = a * numeric_expand(m, &rest);
                if pos % 2 == 1 {
                    sum += t;
                } else {
                    sum -= t;
                }
            }
            sum
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn antisym(n: usize, upper: &[f64]) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(n, n);
        let mut it = upper.iter();
        for i in 0..n {
            for j in i + 1..n {
                let v = *it.next().unwrap();
                m[(i, j)] = v;
                m[(j, i)] = -v;
            }
        }
        m
    }

    #[test]
    fn four_by_four_formula() {
        let m = antisym(4, &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        // a01 a23 - a02 a13 + a03 a12
        assert_eq!(pfaffian_of(&m), 1.0 * 6.0 - 2.0 * 5.0 + 3.0 * 4.0);
    }

    #[test]
    fn square_is_determinant() {
        let upper: Vec<f64> = (0..15).map(|k| ((k * 7 % 11) as f64) - 5.0).collect();
        let m = antisym(6, &upper);
        let pf = pfaffian_of(&m);
        let det = m.clone().determinant();
        assert!((pf * pf - det).abs() <= 1e-9 * det.abs().max(1.0));
    }

    #[test]
    fn large_dimension_uses_magnitude() {
        let mut m = DMatrix::zeros(8, 8);
        for k in 0..4 {
            m[(2 * k, 2 * k + 1)] = -2.0;
            m[(2 * k + 1, 2 * k)] = 2.0;
        }
        assert!((pfaffian_of(&m) - 16.0).abs() < 1e-9);
    }

    #[test]
    fn symbolic_matches_numeric() {
        let e = symbolic_pfaffian(4, &|i, j| {
            let v = (i * 4 + j) as f64;
            Expr::Const(if i < j { v } else { -((j * 4 + i) as f64) })
        });
        let m = DMatrix::from_fn(4, 4, |i, j| match i.cmp(&j) {
            std::cmp::Ordering::Less => (i * 4 + j) as f64,
            std::cmp::Ordering::Greater => -((j * 4 + i) as f64),
            std::cmp::Ordering::Equal => 0.0,
        });
        assert_eq!(e.as_const(), Some(pfaffian_of(&m)));
    }
}
