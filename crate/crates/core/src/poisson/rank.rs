use nalgebra::DMatrix;
use serde::Serialize;

/// Singular-value cutoffs. A value counts toward the rank when it is at
/// least `max(rel * σ_max, abs)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RankConfig {
    pub rel: f64,
    pub abs: f64,
}

impl Default for RankConfig {
    fn default() -> Self {
        RankConfig { rel: 1e-8, abs: 1e-8 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PointRank {
    pub point: Vec<f64>,
    pub rank: usize,
    pub singular_values: Vec<f64>,
}

/// Numeric rank of an antisymmetric matrix, rounded down to even, with the
/// singular values in descending order.
pub fn numeric_rank(m: &DMatrix<f64>, cfg: &RankConfig) -> (usize, Vec<f64>) {
    if m.is_empty() {
        return (0, Vec::new());
    }
    let mut sv: Vec<f64> = m.clone().svd(false, false).singular_values.iter().copied().collect();
    sv.sort_by(|a, b| b.total_cmp(a));
    let cutoff = (cfg.rel * sv[0]).max(cfg.abs);
    let raw = sv.iter().filter(|&&s| s >= cutoff && s > 0.0).count();
    (raw & !1, sv)
}
