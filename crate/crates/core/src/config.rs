//! Numerical thresholds shared by every stage of the tester.
//!
//! The underlying algorithm is stated for exact arithmetic. Every place where
//! the implementation has to decide "is this zero?" reads its threshold from
//! [`TesterConfig`], so the numerical meaning of a verdict is auditable from a
//! single struct.

use serde::{Deserialize, Serialize};

/// Projected gradient descent settings for equality-constrained QPs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PgdConfig {
    /// Step is `step_fraction / lambda_max(Q)` when `lambda_max(Q) > 0`, else 1.
    pub step_fraction: f64,
    pub max_iters: usize,
    /// Divergence is declared once `|eta_t| > divergence_factor * |eta_0|`.
    pub divergence_factor: f64,
    /// Convergence to zero is declared once `|eta_t| < convergence_factor * |eta_0|`.
    pub convergence_factor: f64,
    /// Fixed point: `|eta_{t+1} - eta_t| <= fixed_point_tol * |eta_t|`.
    pub fixed_point_tol: f64,
    /// A fixed point must keep `|eta_t| >= fixed_point_floor * |eta_0|`.
    pub fixed_point_floor: f64,
}

impl Default for PgdConfig {
    fn default() -> Self {
        Self {
            step_fraction: 0.9,
            max_iters: 10_000,
            divergence_factor: 1e8,
            convergence_factor: 1e-12,
            fixed_point_tol: 1e-12,
            fixed_point_floor: 1e-6,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TesterConfig {
    /// Relative singular/eigenvalue threshold for every rank decision.
    pub rank_tol: f64,
    /// Relative threshold for zero tests on gradients and ray products.
    pub tol_zero: f64,
    /// Samples with `|preactivation| <= boundary_tol` are snapped onto the boundary.
    pub boundary_tol: f64,
    /// Relative objective accuracy of the convex box QP.
    pub qp_tol: f64,
    /// Relative eigenvalue threshold separating negative / zero / positive curvature.
    pub spectral_tol: f64,
    /// Strict positivity threshold for unit-norm Pareto eigenvectors.
    pub pos_tol: f64,
    pub pgd: PgdConfig,
    /// Largest number of doubly-flat boundary points (K) for which all 2^K QPs are solved.
    pub max_doubly_flat: usize,
    /// Largest inequality count handled by the Pareto-spectrum enumeration.
    pub max_pareto_order: usize,
    pub seed: u64,
    /// Random unit directions probed for a negative first-order term after the
    /// structured tests pass. Diagnostic only.
    pub random_direction_samples: usize,
    /// Solve the sign-pattern QPs on the rayon pool.
    pub parallel_patterns: bool,
}

impl Default for TesterConfig {
    fn default() -> Self {
        Self {
            rank_tol: 1e-10,
            tol_zero: 1e-8,
            boundary_tol: 0.0,
            qp_tol: 1e-10,
            spectral_tol: 1e-9,
            pos_tol: 1e-9,
            pgd: PgdConfig::default(),
            max_doubly_flat: 16,
            max_pareto_order: 20,
            seed: 0,
            random_direction_samples: 64,
            parallel_patterns: false,
        }
    }
}

impl TesterConfig {
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_boundary_tol(mut self, tol: f64) -> Self {
        self.boundary_tol = tol;
        self
    }
}
