//! Stationary discounted problem `βV = μ⁺ + min{−μ + L V, 0}`.
//!
//! There is no time axis. The forward `q` difference still makes the system
//! block upper-triangular, so Howard iteration runs row by row from `q_max`
//! downwards; each row's iterates are checked to be nonincreasing.

use crate::beliefs::PriorSpec;
use crate::lattice::sparse::{thomas, LineScratch};
use crate::lattice::stencil::ArmPlane;
use crate::lattice::GridSpec;

use super::coeffs::OneArmCoefficients;
use super::{ProblemKind, ProblemSpec, Result, SchemeKind, SliceSink, Solution, SolveError, SolveOptions};

/// Relative slack allowed when checking that Howard iterates decrease.
const MONOTONE_SLACK: f64 = 1e-11;

pub fn solve_discounted(
    problem: &ProblemSpec,
    grid: &GridSpec,
    opts: &SolveOptions,
) -> Result<Solution> {
    problem.validate()?;
    let ProblemKind::Discounted { beta } = problem.kind else {
        return Err(SolveError::InvalidProblem(
            "solve_discounted needs a Discounted problem".into(),
        ));
    };
    if problem.arms.arms() != 1 || grid.arms() != 1 {
        return Err(SolveError::InvalidProblem(
            "the discounted solver handles one arm".into(),
        ));
    }
    let sigma = problem.sigma();
    if let PriorSpec::Gaussian { sd, .. } = problem.priors[0] {
        let q_max = grid.q_axis().max;
        let post_sd = (q_max / (sigma * sigma) + 1.0 / (sd * sd)).sqrt().recip();
        if post_sd >= 0.05 * sd {
            return Err(SolveError::InvalidProblem(format!(
                "q_max = {q_max} leaves posterior sd {post_sd:.4} ≥ 5% of the prior sd"
            )));
        }
    }
    let c = OneArmCoefficients::new(grid, &problem.priors[0], sigma);
    let plane = ArmPlane::new(grid, 0);
    let (nx, nq) = (plane.nx, plane.nq);
    let mean = c.mean();
    let diff = c.arm.diffusion_x;
    let mut sink = SliceSink::new(grid, opts);
    let mut v = vec![0.0; grid.spatial_len()];
    let mut controls: Vec<bool> = mean.iter().map(|&m| m >= 0.0).collect();
    let mut scratch = LineScratch::new(nx);
    let (mut iterations, mut max_residual) = (0usize, 0.0_f64);

    for j in (0..nq).rev() {
        let row = j * nx;
        let mut iters = 0;
        loop {
            iters += 1;
            for i in 0..nx {
                let n = row + i;
                if controls[n] {
                    let w = plane.weights(i, j, mean[n], diff);
                    scratch.lower[i] = -w.lower;
                    scratch.upper[i] = -w.upper;
                    scratch.diag[i] = beta + w.total();
                    let up = if w.q_up != 0.0 { w.q_up * v[n + nx] } else { 0.0 };
                    scratch.rhs[i] = c.mu_minus[n] + up;
                } else {
                    scratch.lower[i] = 0.0;
                    scratch.upper[i] = 0.0;
                    scratch.diag[i] = beta;
                    scratch.rhs[i] = c.mu_plus[n];
                }
            }
            thomas(
                &scratch.lower,
                &scratch.diag,
                &scratch.upper,
                &mut scratch.rhs,
                &mut scratch.tmp,
            );
            let mut change: f64 = 0.0;
            for i in 0..nx {
                let (new, old) = (scratch.rhs[i], v[row + i]);
                if iters > 1 {
                    let increase = new - old;
                    if increase > MONOTONE_SLACK * (1.0 + old.abs()) {
                        return Err(SolveError::NonMonotoneIterate { row: j, increase });
                    }
                    change = change.max(increase.abs());
                }
            }
            v[row..row + nx].copy_from_slice(&scratch.rhs[..nx]);

            let mut changed = false;
            let mut residual: f64 = 0.0;
            for i in 0..nx {
                let n = row + i;
                let w = plane.weights(i, j, mean[n], diff);
                let x = v[n];
                let mut lv = 0.0;
                if w.lower != 0.0 {
                    lv += w.lower * (v[n - 1] - x);
                }
                if w.upper != 0.0 {
                    lv += w.upper * (v[n + 1] - x);
                }
                if w.q_up != 0.0 {
                    lv += w.q_up * (v[n + nx] - x);
                }
                let g = lv - mean[n];
                residual = residual.max((beta * x - c.mu_plus[n] - g.min(0.0)).abs());
                let pull = g <= 0.0;
                if pull != controls[n] {
                    controls[n] = pull;
                    changed = true;
                }
            }
            if !changed || (iters > 1 && change < opts.howard_tol) {
                max_residual = max_residual.max(residual);
                break;
            }
            if iters >= opts.howard_max_iter {
                return Err(SolveError::HowardNonconvergence {
                    time_index: j,
                    iterations: iters,
                });
            }
        }
        iterations += iters;
    }
    sink.offer(0, &v)?;
    Ok(sink.finish(SchemeKind::Stationary, iterations, max_residual, None))
}
