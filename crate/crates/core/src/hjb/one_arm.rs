//! One-armed finite-horizon solvers: optimal risk (explicit, implicit Howard
//! and hybrid schemes) and the risk of a given policy.

use crate::lattice::sparse::{solve_arm_implicit, thomas, LineScratch};
use crate::lattice::stencil::{apply_generator, ArmPlane};
use crate::lattice::{GridSpec, LatticeError, ValueField};
use crate::policies::{BeliefContext, ControlTable, PolicySpec};

use super::coeffs::OneArmCoefficients;
use super::{
    multi_arm, ProblemKind, ProblemSpec, Result, Scheme, SliceSink, Solution,
    SolveError, SolveOptions,
};

/// Outcome of one backward step.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct StepStats {
    pub iterations: usize,
    pub residual: f64,
}

fn check_one_arm(grid: &GridSpec) -> Result<()> {
    if grid.arms() != 1 {
        return Err(SolveError::InvalidProblem(format!(
            "expected a one-armed grid, got {} arms",
            grid.arms()
        )));
    }
    if grid.is_stationary() {
        return Err(SolveError::InvalidProblem(
            "finite-horizon solve needs nt ≥ 1".into(),
        ));
    }
    Ok(())
}

/// Explicit steps are monotone only if `dt·(1/Δq + |μ|/Δx + σ²/Δx²) ≤ 1`
/// at every node, which can be stricter than `dt ≤ 0.5·min(Δx², Δq²)`.
pub(crate) fn check_explicit_stability(
    grid: &GridSpec,
    drifts: &[&[f64]],
    diffusions: &[f64],
    dt: f64,
) -> Result<()> {
    let bound = grid.cfl_bound();
    if dt > bound {
        return Err(LatticeError::CflViolation { dt, bound }.into());
    }
    for (arm, (drift, &diff)) in drifts.iter().zip(diffusions).enumerate() {
        let p = ArmPlane::new(grid, arm);
        let worst = drift.iter().fold(0.0_f64, |a, d| a.max(d.abs()));
        let rate = 1.0 / p.dq + worst / p.dx + 2.0 * diff / (p.dx * p.dx);
        if dt * rate > 1.0 {
            return Err(LatticeError::CflViolation {
                dt,
                bound: 1.0 / rate,
            }
            .into());
        }
    }
    Ok(())
}

/// One implicit step of the optimal-risk equation solved by Howard
/// iteration, row by row from `q_max` down. `controls` holds the warm start
/// and receives the converged pull decisions.
#[allow(clippy::too_many_arguments)]
pub(crate) fn howard_step_into(
    plane: &ArmPlane,
    c: &OneArmCoefficients,
    prev: &[f64],
    dt: f64,
    controls: &mut [bool],
    out: &mut [f64],
    scratch: &mut LineScratch,
    opts: &SolveOptions,
) -> std::result::Result<StepStats, usize> {
    let nx = plane.nx;
    let mean = c.mean();
    let diff = c.arm.diffusion_x;
    let mut stats = StepStats::default();
    for j in (0..plane.nq).rev() {
        let row = j * nx;
        let mut iters = 0;
        loop {
            iters += 1;
            for i in 0..nx {
                let n = row + i;
                if controls[n] {
                    let w = plane.weights(i, j, mean[n], diff).scaled(dt);
                    scratch.lower[i] = -w.lower;
                    scratch.upper[i] = -w.upper;
                    scratch.diag[i] = 1.0 + w.total();
                    let up = if w.q_up != 0.0 { w.q_up * out[n + nx] } else { 0.0 };
                    scratch.rhs[i] = prev[n] + dt * c.mu_minus[n] + up;
                } else {
                    scratch.lower[i] = 0.0;
                    scratch.upper[i] = 0.0;
                    scratch.diag[i] = 1.0;
                    scratch.rhs[i] = prev[n] + dt * c.mu_plus[n];
                }
            }
            thomas(
                &scratch.lower,
                &scratch.diag,
                &scratch.upper,
                &mut scratch.rhs,
                &mut scratch.tmp,
            );
            let change = if iters == 1 {
                f64::INFINITY
            } else {
                scratch.rhs[..nx]
                    .iter()
                    .zip(&out[row..row + nx])
                    .fold(0.0_f64, |a, (x, y)| a.max((x - y).abs()))
            };
            out[row..row + nx].copy_from_slice(&scratch.rhs[..nx]);

            let mut changed = false;
            let mut residual: f64 = 0.0;
            for i in 0..nx {
                let n = row + i;
                let v = out[n];
                let w = plane.weights(i, j, mean[n], diff);
                let mut lv = 0.0;
                if w.lower != 0.0 {
                    lv += w.lower * (out[n - 1] - v);
                }
                if w.upper != 0.0 {
                    lv += w.upper * (out[n + 1] - v);
                }
                if w.q_up != 0.0 {
                    lv += w.q_up * (out[n + nx] - v);
                }
                let g = lv - mean[n];
                let pull = g <= 0.0;
                residual = residual.max((v - prev[n] - dt * c.mu_plus[n] - dt * g.min(0.0)).abs());
                if pull != controls[n] {
                    changed = true;
                    controls[n] = pull;
                }
            }
            if !changed || change < opts.howard_tol {
                stats.residual = stats.residual.max(residual);
                break;
            }
            if iters >= opts.howard_max_iter {
                return Err(iters);
            }
        }
        stats.iterations += iters;
    }
    Ok(stats)
}

/// Explicit step `V = V⁺ + dt·(μ⁺ + min(0, −μ + L_h V⁺))`.
pub(crate) fn explicit_step_into(
    grid: &GridSpec,
    c: &OneArmCoefficients,
    prev: &[f64],
    dt: f64,
    controls: &mut [bool],
    out: &mut [f64],
) {
    let lv = apply_generator(grid, 0, prev, c.mean(), c.arm.diffusion_x);
    for n in 0..prev.len() {
        let g = lv[n] - c.mean()[n];
        controls[n] = g <= 0.0;
        out[n] = prev[n] + dt * (c.mu_plus[n] + g.min(0.0));
    }
}

/// Hybrid step: one implicit solve of the always-pull branch, then the
/// elementwise minimum with the no-pull branch `V⁺ + dt·μ⁺`.
pub(crate) fn hybrid_step_into(
    grid: &GridSpec,
    c: &OneArmCoefficients,
    prev: &[f64],
    dt: f64,
    controls: &mut [bool],
    out: &mut [f64],
) -> f64 {
    let rhs: Vec<f64> = prev
        .iter()
        .zip(&c.mu_minus)
        .map(|(p, m)| p + dt * m)
        .collect();
    let pull = solve_arm_implicit(grid, 0, &c.arm, None, dt, &rhs);
    let lv = apply_generator(grid, 0, &pull, c.mean(), c.arm.diffusion_x);
    let mut residual: f64 = 0.0;
    for n in 0..prev.len() {
        residual = residual.max((pull[n] - dt * lv[n] - rhs[n]).abs());
        let stay = prev[n] + dt * c.mu_plus[n];
        controls[n] = pull[n] <= stay;
        out[n] = pull[n].min(stay);
    }
    residual
}

fn previous_slice(slice: &ValueField) -> Result<usize> {
    if slice.time_index == 0 {
        return Err(SolveError::InvalidProblem(
            "cannot step backward from t = 0".into(),
        ));
    }
    Ok(slice.time_index - 1)
}

/// Single implicit Howard step from `slice` (at `t_{m+1}`) to `t_m`.
pub fn step_implicit_howard(
    slice: &ValueField,
    coeffs: &OneArmCoefficients,
    opts: &SolveOptions,
) -> Result<(ValueField, StepStats)> {
    let grid = &slice.grid;
    check_one_arm(grid)?;
    let m = previous_slice(slice)?;
    let plane = ArmPlane::new(grid, 0);
    let mut controls: Vec<bool> = coeffs.mean().iter().map(|&mu| mu >= 0.0).collect();
    let mut out = vec![0.0; slice.values.len()];
    let mut scratch = LineScratch::new(plane.nx);
    let stats = howard_step_into(
        &plane,
        coeffs,
        &slice.values,
        grid.dt(),
        &mut controls,
        &mut out,
        &mut scratch,
        opts,
    )
    .map_err(|iterations| SolveError::HowardNonconvergence {
        time_index: m,
        iterations,
    })?;
    Ok((ValueField::new(grid.clone(), m, out)?, stats))
}

/// Single hybrid step from `slice` to the previous time slice.
pub fn step_hybrid(slice: &ValueField, coeffs: &OneArmCoefficients) -> Result<ValueField> {
    let grid = &slice.grid;
    check_one_arm(grid)?;
    let m = previous_slice(slice)?;
    let mut controls = vec![false; slice.values.len()];
    let mut out = vec![0.0; slice.values.len()];
    hybrid_step_into(grid, coeffs, &slice.values, grid.dt(), &mut controls, &mut out);
    Ok(ValueField::new(grid.clone(), m, out)?)
}

/// Single explicit step from `slice` to the previous time slice.
pub fn step_explicit(slice: &ValueField, coeffs: &OneArmCoefficients) -> Result<ValueField> {
    let grid = &slice.grid;
    check_one_arm(grid)?;
    let m = previous_slice(slice)?;
    check_explicit_stability(grid, &[coeffs.mean()], &[coeffs.arm.diffusion_x], grid.dt())?;
    let mut controls = vec![false; slice.values.len()];
    let mut out = vec![0.0; slice.values.len()];
    explicit_step_into(grid, coeffs, &slice.values, grid.dt(), &mut controls, &mut out);
    Ok(ValueField::new(grid.clone(), m, out)?)
}

/// Minimal Bayes risk `V*` on `grid`, marching from `V = 0` at `t = 1`.
/// Multi-armed problems are forwarded to the `K`-armed solver.
pub fn solve_optimal(
    problem: &ProblemSpec,
    grid: &GridSpec,
    scheme: Scheme,
    opts: &SolveOptions,
) -> Result<Solution> {
    problem.validate()?;
    if problem.arms.arms() > 1 {
        return multi_arm::solve_multi_arm_optimal(problem, grid, scheme, opts);
    }
    check_one_arm(grid)?;
    let coeffs = OneArmCoefficients::new(grid, &problem.priors[0], problem.sigma());
    solve_optimal_with(&coeffs, grid, scheme, opts)
}

/// [`solve_optimal`] with precomputed coefficients.
pub fn solve_optimal_with(
    coeffs: &OneArmCoefficients,
    grid: &GridSpec,
    scheme: Scheme,
    opts: &SolveOptions,
) -> Result<Solution> {
    check_one_arm(grid)?;
    let nt = grid.nt();
    let dt = grid.dt();
    let len = grid.spatial_len();
    if scheme == Scheme::Explicit {
        check_explicit_stability(grid, &[coeffs.mean()], &[coeffs.arm.diffusion_x], dt)?;
    }
    let plane = ArmPlane::new(grid, 0);
    let mut scratch = LineScratch::new(plane.nx);
    let mut sink = SliceSink::new(grid, opts);
    let mut table = opts.record_controls.then(|| ControlTable::binary(grid.clone()));
    let mut controls: Vec<bool> = coeffs.mean().iter().map(|&mu| mu >= 0.0).collect();
    let mut prev = vec![0.0; len];
    let mut next = vec![0.0; len];
    let (mut iterations, mut max_residual) = (0, 0.0_f64);
    sink.offer(nt, &prev)?;
    for m in (0..nt).rev() {
        match scheme {
            Scheme::Implicit => {
                let s = howard_step_into(
                    &plane,
                    coeffs,
                    &prev,
                    dt,
                    &mut controls,
                    &mut next,
                    &mut scratch,
                    opts,
                )
                .map_err(|iterations| SolveError::HowardNonconvergence {
                    time_index: m,
                    iterations,
                })?;
                iterations += s.iterations;
                max_residual = max_residual.max(s.residual);
            }
            Scheme::Hybrid => {
                let r = hybrid_step_into(grid, coeffs, &prev, dt, &mut controls, &mut next);
                max_residual = max_residual.max(r);
            }
            Scheme::Explicit => explicit_step_into(grid, coeffs, &prev, dt, &mut controls, &mut next),
        }
        if let Some(t) = table.as_mut() {
            t.set_binary(m, &controls);
        }
        std::mem::swap(&mut prev, &mut next);
        sink.offer(m, &prev)?;
    }
    Ok(sink.finish(scheme.into(), iterations, max_residual, table))
}

/// Bayes risk `V_π` of a policy: `∂ₜV + μ⁺ + π·(−μ + L V) = 0`, `V(t=1) = 0`.
pub fn solve_policy_risk(
    problem: &ProblemSpec,
    grid: &GridSpec,
    scheme: Scheme,
    opts: &SolveOptions,
) -> Result<Solution> {
    problem.validate()?;
    let ProblemKind::PolicyRisk(policy) = &problem.kind else {
        return Err(SolveError::InvalidProblem(
            "solve_policy_risk needs a PolicyRisk problem".into(),
        ));
    };
    if problem.arms.arms() != 1 {
        return Err(SolveError::InvalidProblem(
            "policy-risk PDE is implemented for one arm".into(),
        ));
    }
    check_one_arm(grid)?;
    let coeffs = OneArmCoefficients::new(grid, &problem.priors[0], problem.sigma());
    let ctx = BeliefContext::gaussian(problem.priors.clone(), problem.arms.clone());
    solve_policy_risk_with(policy, &ctx, &coeffs, grid, scheme, opts)
}

/// [`solve_policy_risk`] with precomputed coefficients.
pub fn solve_policy_risk_with(
    policy: &PolicySpec,
    ctx: &BeliefContext,
    coeffs: &OneArmCoefficients,
    grid: &GridSpec,
    scheme: Scheme,
    opts: &SolveOptions,
) -> Result<Solution> {
    check_one_arm(grid)?;
    if let Some(reason) = policy.pde_unsupported_reason() {
        return Err(SolveError::UnsupportedPolicy(reason.into()));
    }
    let nt = grid.nt();
    let dt = grid.dt();
    let len = grid.spatial_len();
    if scheme == Scheme::Explicit {
        check_explicit_stability(grid, &[coeffs.mean()], &[coeffs.arm.diffusion_x], dt)?;
    }
    let time_invariant = policy.is_time_invariant();
    let mut pi = policy.pull_probability_grid(grid, ctx, nt.saturating_sub(1))?;
    let mut sink = SliceSink::new(grid, opts);
    let mut prev = vec![0.0; len];
    let mut max_residual = 0.0_f64;
    sink.offer(nt, &prev)?;
    for m in (0..nt).rev() {
        if !time_invariant {
            pi = policy.pull_probability_grid(grid, ctx, m)?;
        }
        let next = match scheme {
            Scheme::Explicit => {
                let lv = apply_generator(grid, 0, &prev, coeffs.mean(), coeffs.arm.diffusion_x);
                (0..len)
                    .map(|n| prev[n] + dt * (coeffs.mu_plus[n] + pi[n] * (lv[n] - coeffs.mean()[n])))
                    .collect()
            }
            Scheme::Implicit | Scheme::Hybrid => {
                let rhs: Vec<f64> = (0..len)
                    .map(|n| {
                        prev[n]
                            + dt * ((1.0 - pi[n]) * coeffs.mu_plus[n] + pi[n] * coeffs.mu_minus[n])
                    })
                    .collect();
                let v = solve_arm_implicit(grid, 0, &coeffs.arm, Some(&pi), dt, &rhs);
                let lv = apply_generator(grid, 0, &v, coeffs.mean(), coeffs.arm.diffusion_x);
                for n in 0..len {
                    max_residual = max_residual.max((v[n] - dt * pi[n] * lv[n] - rhs[n]).abs());
                }
                v
            }
        };
        prev = next;
        sink.offer(m, &prev)?;
    }
    Ok(sink.finish(scheme.into(), 0, max_residual, None))
}
