//! `K`-armed finite-horizon solvers.
//!
//! Action `k` samples arm `k`: it moves `(x_k, q_k)` through the generator
//! `L_k` and incurs the flow cost `source_k`. The optimal-risk problem uses
//! `source_k = μ^max − μ_k` with a zero terminal slice; best-arm
//! identification uses zero sources and the terminal simple regret
//! `ϖ = μ^max − max_k μ_k`. One step solves
//! `max_k { V − dt·L_k V − V⁺ − dt·source_k } = 0`.

use crate::beliefs::MultiArmIntegrator;
use crate::lattice::sparse::solve_arm_implicit;
use crate::lattice::stencil::{apply_generator, ArmPlane};
use crate::lattice::{CsrMatrix, GridSpec};
use crate::policies::ControlTable;

use super::coeffs::MultiArmCoefficients;
use super::one_arm::check_explicit_stability;
use super::{ProblemKind, ProblemSpec, Result, Scheme, SliceSink, Solution, SolveError, SolveOptions};

fn check_grid(problem: &ProblemSpec, grid: &GridSpec) -> Result<()> {
    if grid.arms() != problem.arms.arms() {
        return Err(SolveError::InvalidProblem(format!(
            "grid has {} arms but the problem has {}",
            grid.arms(),
            problem.arms.arms()
        )));
    }
    if grid.is_stationary() {
        return Err(SolveError::InvalidProblem(
            "finite-horizon solve needs nt ≥ 1".into(),
        ));
    }
    Ok(())
}

/// Minimal Bayes risk of the `K`-armed bandit.
pub fn solve_multi_arm_optimal(
    problem: &ProblemSpec,
    grid: &GridSpec,
    scheme: Scheme,
    opts: &SolveOptions,
) -> Result<Solution> {
    problem.validate()?;
    check_grid(problem, grid)?;
    let coeffs = MultiArmCoefficients::new(
        grid,
        &problem.priors,
        &problem.arms,
        &MultiArmIntegrator::default(),
    )?;
    let sources = (0..grid.arms()).map(|k| coeffs.regret_source(k)).collect();
    let terminal = vec![0.0; grid.spatial_len()];
    march(grid, &coeffs, sources, terminal, scheme, opts)
}

/// Minimal Bayes simple regret of best-arm identification.
pub fn solve_best_arm(
    problem: &ProblemSpec,
    grid: &GridSpec,
    scheme: Scheme,
    opts: &SolveOptions,
) -> Result<Solution> {
    problem.validate()?;
    if !matches!(problem.kind, ProblemKind::BestArm) || problem.arms.arms() < 2 {
        return Err(SolveError::InvalidProblem(
            "best-arm identification needs a BestArm problem with K ≥ 2".into(),
        ));
    }
    check_grid(problem, grid)?;
    let coeffs = MultiArmCoefficients::new(
        grid,
        &problem.priors,
        &problem.arms,
        &MultiArmIntegrator::default(),
    )?;
    let sources = vec![vec![0.0; grid.spatial_len()]; grid.arms()];
    let terminal = coeffs.simple_regret();
    march(grid, &coeffs, sources, terminal, scheme, opts)
}

fn generator_all(grid: &GridSpec, coeffs: &MultiArmCoefficients, v: &[f64]) -> Vec<Vec<f64>> {
    coeffs
        .arms
        .iter()
        .enumerate()
        .map(|(k, c)| apply_generator(grid, k, v, &c.drift_x, c.diffusion_x))
        .collect()
}

/// `argmin_k (source_k + L_k V)` with ties to the lowest index, and the
/// minimum itself.
#[inline]
fn best_action(sources: &[Vec<f64>], lv: &[Vec<f64>], n: usize) -> (u8, f64) {
    let mut best = (0u8, f64::INFINITY);
    for k in 0..sources.len() {
        let g = sources[k][n] + lv[k][n];
        if g < best.1 {
            best = (k as u8, g);
        }
    }
    best
}

fn assemble_mixed(
    grid: &GridSpec,
    coeffs: &MultiArmCoefficients,
    controls: &[u8],
    dt: f64,
) -> CsrMatrix {
    let len = grid.spatial_len();
    let planes: Vec<ArmPlane> = (0..grid.arms()).map(|k| ArmPlane::new(grid, k)).collect();
    let mut row_ptr = Vec::with_capacity(len + 1);
    let mut cols = Vec::with_capacity(4 * len);
    let mut vals = Vec::with_capacity(4 * len);
    row_ptr.push(0);
    for n in 0..len {
        let k = controls[n] as usize;
        let p = &planes[k];
        let (i, j) = grid.arm_indices(k, n);
        let c = &coeffs.arms[k];
        let w = p.weights(i, j, c.drift_x[n], c.diffusion_x).scaled(dt);
        if w.lower != 0.0 {
            cols.push(n - p.sx);
            vals.push(-w.lower);
        }
        cols.push(n);
        vals.push(1.0 + w.total());
        if w.upper != 0.0 {
            cols.push(n + p.sx);
            vals.push(-w.upper);
        }
        if w.q_up != 0.0 {
            cols.push(n + p.sq);
            vals.push(-w.q_up);
        }
        row_ptr.push(cols.len());
    }
    CsrMatrix::from_parts(row_ptr, cols, vals)
}

fn march(
    grid: &GridSpec,
    coeffs: &MultiArmCoefficients,
    sources: Vec<Vec<f64>>,
    terminal: Vec<f64>,
    scheme: Scheme,
    opts: &SolveOptions,
) -> Result<Solution> {
    let nt = grid.nt();
    let dt = grid.dt();
    let len = grid.spatial_len();
    let k = grid.arms();
    if scheme == Scheme::Explicit {
        let drifts: Vec<&[f64]> = coeffs.arms.iter().map(|a| a.drift_x.as_slice()).collect();
        let diffs: Vec<f64> = coeffs.arms.iter().map(|a| a.diffusion_x).collect();
        check_explicit_stability(grid, &drifts, &diffs, dt)?;
    }
    let mut sink = SliceSink::new(grid, opts);
    let mut table = opts.record_controls.then(|| ControlTable::arms(grid.clone()));
    let mut controls = vec![0u8; len];
    let mut prev = terminal;
    let (mut iterations, mut max_residual) = (0usize, 0.0_f64);
    sink.offer(nt, &prev)?;
    for m in (0..nt).rev() {
        let next = match scheme {
            Scheme::Explicit => {
                let lv = generator_all(grid, coeffs, &prev);
                (0..len)
                    .map(|n| {
                        let (a, g) = best_action(&sources, &lv, n);
                        controls[n] = a;
                        prev[n] + dt * g
                    })
                    .collect()
            }
            Scheme::Hybrid => {
                let branches: Vec<Vec<f64>> = (0..k)
                    .map(|a| {
                        let rhs: Vec<f64> = prev
                            .iter()
                            .zip(&sources[a])
                            .map(|(p, s)| p + dt * s)
                            .collect();
                        solve_arm_implicit(grid, a, &coeffs.arms[a], None, dt, &rhs)
                    })
                    .collect();
                (0..len)
                    .map(|n| {
                        let mut best = (0u8, branches[0][n]);
                        for (a, b) in branches.iter().enumerate().skip(1) {
                            if b[n] < best.1 {
                                best = (a as u8, b[n]);
                            }
                        }
                        controls[n] = best.0;
                        best.1
                    })
                    .collect()
            }
            Scheme::Implicit => {
                let mut v = prev.clone();
                let mut iters = 0;
                loop {
                    iters += 1;
                    let a = assemble_mixed(grid, coeffs, &controls, dt);
                    let b: Vec<f64> = (0..len)
                        .map(|n| prev[n] + dt * sources[controls[n] as usize][n])
                        .collect();
                    let before = v.clone();
                    a.gauss_seidel(&b, &mut v, opts.linear_tol, opts.linear_max_sweeps)?;
                    let change = v
                        .iter()
                        .zip(&before)
                        .fold(0.0_f64, |acc, (x, y)| acc.max((x - y).abs()));
                    let lv = generator_all(grid, coeffs, &v);
                    let mut changed = false;
                    let mut residual: f64 = 0.0;
                    for n in 0..len {
                        let (best, g) = best_action(&sources, &lv, n);
                        residual = residual.max((v[n] - prev[n] - dt * g).abs());
                        if best != controls[n] {
                            // keep the current action on exact ties to avoid cycling
                            let cur = sources[controls[n] as usize][n] + lv[controls[n] as usize][n];
                            if cur > g {
                                controls[n] = best;
                                changed = true;
                            }
                        }
                    }
                    if !changed || (iters > 1 && change < opts.howard_tol) {
                        max_residual = max_residual.max(residual);
                        break;
                    }
                    if iters >= opts.howard_max_iter {
                        return Err(SolveError::HowardNonconvergence {
                            time_index: m,
                            iterations: iters,
                        });
                    }
                }
                iterations += iters;
                v
            }
        };
        if let Some(t) = table.as_mut() {
            t.set_arms(m, &controls);
        }
        prev = next;
        sink.offer(m, &prev)?;
    }
    Ok(sink.finish(scheme.into(), iterations, max_residual, table))
}
