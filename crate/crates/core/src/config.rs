//! Run-wide numeric settings. Every threshold used by a verdict lives here.

use crate::obstruction::{LocusConfig, OdeConfig};
use crate::poisson::RankConfig;
use crate::resolution::SolverConfig;

#[derive(Debug, Clone, PartialEq)]
pub struct Config {
    pub seed: u64,
    /// Random samples per piece for the symplectic and morphism checks.
    pub samples: usize,
    /// Hybrid tolerance for identity checks.
    pub tol: f64,
    pub check_jacobi: bool,
    pub jacobi_samples: usize,
    pub jacobi_tol: f64,
    /// Target grid nodes per axis for coverage (one entry for all axes).
    pub coverage_nodes: Vec<usize>,
    pub solver: SolverConfig,
    /// Critical threshold on `|det J| / max(1, Π row norms)`.
    pub critical_tau: f64,
    /// Samples per piece for the regular-value consistency check.
    pub regular_samples: usize,
    pub rank: RankConfig,
    pub locus: LocusConfig,
    pub ode: OdeConfig,
}

impl Default for Config {
    fn default() -> Self {
        Config {
            seed: 42,
            samples: 10_000,
            tol: 1e-9,
            check_jacobi: true,
            jacobi_samples: 256,
            jacobi_tol: 1e-9,
            coverage_nodes: vec![21],
            solver: SolverConfig::default(),
            critical_tau: 1e-7,
            regular_samples: 2_000,
            rank: RankConfig::default(),
            locus: LocusConfig::default(),
            ode: OdeConfig::default(),
        }
    }
}
