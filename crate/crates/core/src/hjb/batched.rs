//! Optimal piecewise-constant (batched) policies.
//!
//! With batch length `Δt`, the value at the start of each batch is the
//! nodewise minimum over actions of the linear PDE solution over one batch:
//! `V_{k+1} = min{ S_Δt[V_k], V_k + Δt·μ⁺ }` for one arm, and the minimum
//! over `S_Δt^{(k)}` for `K` arms. Each `S_Δt` is computed with `Δt/dt`
//! implicit steps on the grid.

use std::time::Instant;

use crate::beliefs::MultiArmIntegrator;
use crate::lattice::sparse::solve_arm_implicit;
use crate::lattice::{GridSpec, ValueField};
use crate::policies::PiecewiseConstantTable;

use super::coeffs::{MultiArmCoefficients, OneArmCoefficients};
use super::{ProblemKind, ProblemSpec, Result, SchemeKind, SolveError, SolveOptions, SolveReport};

#[derive(Debug, Clone)]
pub struct BatchedSolution {
    pub table: PiecewiseConstantTable,
    /// Values at the batch boundaries `0, Δt, …, 1` in increasing time.
    pub values: Vec<ValueField>,
    pub report: SolveReport,
}

impl BatchedSolution {
    pub fn value_at_origin(&self) -> f64 {
        let k = self.values[0].grid.arms();
        self.values[0].interpolate(&vec![(0.0, 0.0); k])
    }
}

/// Number of grid steps per batch; the batch must tile `[0, 1]` exactly.
pub fn steps_per_batch(grid: &GridSpec, dt_batch: f64) -> Result<usize> {
    let nt = grid.nt();
    let r = (dt_batch * nt as f64).round() as usize;
    if r == 0 || (r as f64 * grid.dt() - dt_batch).abs() > 1e-9 || nt % r != 0 {
        return Err(SolveError::InvalidProblem(format!(
            "batch length {dt_batch} must be a multiple of dt = {} dividing the horizon",
            grid.dt()
        )));
    }
    Ok(r)
}

pub fn solve_batched(
    problem: &ProblemSpec,
    grid: &GridSpec,
    _opts: &SolveOptions,
) -> Result<BatchedSolution> {
    problem.validate()?;
    let ProblemKind::Batched { dt_batch } = problem.kind else {
        return Err(SolveError::InvalidProblem(
            "solve_batched needs a Batched problem".into(),
        ));
    };
    if grid.arms() != problem.arms.arms() || grid.is_stationary() {
        return Err(SolveError::InvalidProblem(
            "grid does not match the batched problem".into(),
        ));
    }
    let started = Instant::now();
    let r = steps_per_batch(grid, dt_batch)?;
    let batches = grid.nt() / r;
    let dt = grid.dt();
    let len = grid.spatial_len();

    // per-action generator coefficients, flow cost while acting, and the
    // flow cost of the static action (one arm only)
    let (arms, sources, stay_cost) = if grid.arms() == 1 {
        let c = OneArmCoefficients::new(grid, &problem.priors[0], problem.sigma());
        (vec![c.arm], vec![c.mu_minus], Some(c.mu_plus))
    } else {
        let c = MultiArmCoefficients::new(
            grid,
            &problem.priors,
            &problem.arms,
            &MultiArmIntegrator::default(),
        )?;
        let sources = (0..grid.arms()).map(|k| c.regret_source(k)).collect();
        (c.arms, sources, None)
    };

    let mut v = vec![0.0; len];
    let mut values = vec![ValueField::new(grid.clone(), grid.nt(), v.clone())?];
    let mut decisions = vec![Vec::new(); batches];
    for b in (0..batches).rev() {
        let mut branches: Vec<Vec<f64>> = arms
            .iter()
            .zip(&sources)
            .enumerate()
            .map(|(k, (c, s))| {
                let mut w = v.clone();
                for _ in 0..r {
                    let rhs: Vec<f64> = w.iter().zip(s).map(|(w, s)| w + dt * s).collect();
                    w = solve_arm_implicit(grid, k, c, None, dt, &rhs);
                }
                w
            })
            .collect();
        let mut dec = vec![0u8; len];
        if let Some(stay) = &stay_cost {
            // one arm: decision 1 = pull, 0 = stay
            let pull = branches.pop().expect("one branch");
            for n in 0..len {
                let idle = v[n] + r as f64 * dt * stay[n];
                if pull[n] <= idle {
                    dec[n] = 1;
                    v[n] = pull[n];
                } else {
                    v[n] = idle;
                }
            }
        } else {
            for n in 0..len {
                let mut best = (0u8, branches[0][n]);
                for (k, br) in branches.iter().enumerate().skip(1) {
                    if br[n] < best.1 {
                        best = (k as u8, br[n]);
                    }
                }
                dec[n] = best.0;
                v[n] = best.1;
            }
        }
        decisions[b] = dec;
        values.push(ValueField::new(grid.clone(), b * r, v.clone())?);
    }
    values.reverse();
    let batch_times = (0..batches).map(|b| b as f64 * dt_batch).collect();
    Ok(BatchedSolution {
        table: PiecewiseConstantTable::new(grid.clone(), batch_times, decisions)?,
        values,
        report: SolveReport {
            scheme: SchemeKind::Implicit,
            iterations: 0,
            max_residual: 0.0,
            wall_time: started.elapsed().as_secs_f64(),
        },
    })
}
