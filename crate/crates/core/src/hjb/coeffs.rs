//! Nodal PDE coefficients derived from the posterior at each grid node.

use rayon::prelude::*;

use crate::beliefs::{ArmModel, MultiArmIntegrator, PriorSpec};
use crate::lattice::{ArmCoefficients, GridSpec};

use super::Result;

/// `μ(s)`, `μ⁺(s)` and `μ⁻(s) = μ⁺(s) − μ(s)` at every node of a one-armed
/// grid, plus the diffusion coefficient `½σ²`.
#[derive(Debug, Clone)]
pub struct OneArmCoefficients {
    pub arm: ArmCoefficients,
    pub mu_plus: Vec<f64>,
    pub mu_minus: Vec<f64>,
}

impl OneArmCoefficients {
    pub fn new(grid: &GridSpec, prior: &PriorSpec, sigma: f64) -> Self {
        let xs = grid.x_axis(0).nodes();
        let qs = grid.q_axis().nodes();
        let nx = xs.len();
        let moments: Vec<_> = (0..grid.spatial_len())
            .into_par_iter()
            .map(|n| prior.posterior(sigma, xs[n % nx], qs[n / nx]))
            .collect();
        Self {
            arm: ArmCoefficients {
                drift_x: moments.iter().map(|m| m.mean).collect(),
                diffusion_x: 0.5 * sigma * sigma,
            },
            mu_plus: moments.iter().map(|m| m.mu_plus).collect(),
            mu_minus: moments.iter().map(|m| m.mu_minus).collect(),
        }
    }

    pub fn mean(&self) -> &[f64] {
        &self.arm.drift_x
    }

    pub fn len(&self) -> usize {
        self.mu_plus.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mu_plus.is_empty()
    }
}

/// Per-arm posterior means and `μ^max(s)` at every node of a `K`-armed grid.
#[derive(Debug, Clone)]
pub struct MultiArmCoefficients {
    pub arms: Vec<ArmCoefficients>,
    pub mu_max: Vec<f64>,
}

impl MultiArmCoefficients {
    pub fn new(
        grid: &GridSpec,
        priors: &[PriorSpec],
        model: &ArmModel,
        integrator: &MultiArmIntegrator,
    ) -> Result<Self> {
        let k = grid.arms();
        let len = grid.spatial_len();
        let xs: Vec<Vec<f64>> = grid.x_axes().iter().map(|a| a.nodes()).collect();
        let qs = grid.q_axis().nodes();
        let coords = |n: usize| -> (Vec<f64>, Vec<f64>) {
            (0..k)
                .map(|a| {
                    let (i, j) = grid.arm_indices(a, n);
                    (xs[a][i], qs[j])
                })
                .unzip()
        };
        let rows: Vec<(Vec<f64>, f64)> = (0..len)
            .into_par_iter()
            .map(|n| {
                let (x, q) = coords(n);
                integrator.moments(priors, model, &x, &q)
            })
            .collect::<std::result::Result<_, _>>()?;
        let arms = (0..k)
            .map(|a| ArmCoefficients {
                drift_x: rows.iter().map(|r| r.0[a]).collect(),
                diffusion_x: 0.5 * model.sigma(a).powi(2),
            })
            .collect();
        Ok(Self {
            arms,
            mu_max: rows.iter().map(|r| r.1).collect(),
        })
    }

    /// `μ^max − μ_k` per node.
    pub fn regret_source(&self, arm: usize) -> Vec<f64> {
        self.mu_max
            .iter()
            .zip(&self.arms[arm].drift_x)
            .map(|(m, mu)| (m - mu).max(0.0))
            .collect()
    }

    /// `ϖ = μ^max − max_k μ_k` per node.
    pub fn simple_regret(&self) -> Vec<f64> {
        (0..self.mu_max.len())
            .map(|n| {
                let best = self
                    .arms
                    .iter()
                    .map(|a| a.drift_x[n])
                    .fold(f64::NEG_INFINITY, f64::max);
                (self.mu_max[n] - best).max(0.0)
            })
            .collect()
    }
}
