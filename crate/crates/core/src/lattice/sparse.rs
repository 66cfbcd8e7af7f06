//! Row-compressed operators, monotone step assembly and the linear solvers
//! used by the time-stepping schemes.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::stencil::ArmPlane;
use super::{GridSpec, LatticeError, Result};

/// Compressed sparse row matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix {
    n: usize,
    row_ptr: Vec<usize>,
    cols: Vec<usize>,
    vals: Vec<f64>,
    diag: Vec<usize>,
}

impl CsrMatrix {
    /// Builds a square matrix from rows of `(col, value)`; every row must
    /// contain its diagonal entry.
    pub fn from_rows(rows: impl IntoIterator<Item = Vec<(usize, f64)>>) -> Self {
        let mut row_ptr = vec![0];
        let mut cols = Vec::new();
        let mut vals = Vec::new();
        let mut diag = Vec::new();
        for (r, mut row) in rows.into_iter().enumerate() {
            row.sort_unstable_by_key(|e| e.0);
            let mut d = usize::MAX;
            for (c, v) in row {
                if c == r {
                    d = cols.len();
                }
                cols.push(c);
                vals.push(v);
            }
            assert!(d != usize::MAX, "row {r} has no diagonal entry");
            diag.push(d);
            row_ptr.push(cols.len());
        }
        Self {
            n: diag.len(),
            row_ptr,
            cols,
            vals,
            diag,
        }
    }

    /// Builds a matrix from raw CSR arrays; column indices within a row must
    /// be sorted and include the diagonal.
    pub fn from_parts(row_ptr: Vec<usize>, cols: Vec<usize>, vals: Vec<f64>) -> Self {
        let n = row_ptr.len() - 1;
        let diag = (0..n)
            .map(|r| {
                (row_ptr[r]..row_ptr[r + 1])
                    .find(|&e| cols[e] == r)
                    .unwrap_or_else(|| panic!("row {r} has no diagonal entry"))
            })
            .collect();
        Self {
            n,
            row_ptr,
            cols,
            vals,
            diag,
        }
    }

    pub fn identity(n: usize) -> Self {
        Self::from_rows((0..n).map(|r| vec![(r, 1.0)]))
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn nnz(&self) -> usize {
        self.vals.len()
    }

    pub fn row(&self, r: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let span = self.row_ptr[r]..self.row_ptr[r + 1];
        self.cols[span.clone()]
            .iter()
            .copied()
            .zip(self.vals[span].iter().copied())
    }

    pub fn diagonal(&self, r: usize) -> f64 {
        self.vals[self.diag[r]]
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        (0..self.n)
            .into_par_iter()
            .map(|r| self.row(r).map(|(c, v)| v * x[c]).sum())
            .collect()
    }

    pub fn residual(&self, x: &[f64], b: &[f64]) -> f64 {
        self.mul_vec(x)
            .iter()
            .zip(b)
            .map(|(ax, b)| (ax - b).abs())
            .fold(0.0, f64::max)
    }

    /// Positive diagonal, non-positive off-diagonals and weak diagonal
    /// dominance in every row.
    pub fn is_m_matrix(&self) -> bool {
        (0..self.n).all(|r| {
            let d = self.diagonal(r);
            let mut off = 0.0;
            for (c, v) in self.row(r) {
                if c != r {
                    if v > 0.0 {
                        return false;
                    }
                    off -= v;
                }
            }
            d > 0.0 && d >= off * (1.0 - 1e-14)
        })
    }

    /// All entries non-negative (a monotone explicit update).
    pub fn is_nonnegative(&self) -> bool {
        self.vals.iter().all(|&v| v >= 0.0)
    }

    /// Gauss–Seidel sweeps in descending row order until the largest update
    /// falls below `tol`; returns `(sweeps, residual)`.
    pub fn gauss_seidel(
        &self,
        b: &[f64],
        x: &mut [f64],
        tol: f64,
        max_sweeps: usize,
    ) -> Result<(usize, f64)> {
        for sweep in 1..=max_sweeps {
            let mut change: f64 = 0.0;
            for r in (0..self.n).rev() {
                let mut acc = b[r];
                let mut d = 0.0;
                for (c, v) in self.row(r) {
                    if c == r {
                        d = v;
                    } else {
                        acc -= v * x[c];
                    }
                }
                let new = acc / d;
                change = change.max((new - x[r]).abs());
                x[r] = new;
            }
            if change <= tol {
                return Ok((sweep, self.residual(x, b)));
            }
        }
        let residual = self.residual(x, b);
        Err(LatticeError::NotConverged {
            tol,
            sweeps: max_sweeps,
            residual,
        })
    }
}

/// Implicitness of a time step.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Theta {
    Explicit,
    Implicit,
}

/// Per-node PDE coefficients along one arm: drift `μ(s)` multiplying `∂ₓ`
/// and the constant `½σ²` multiplying `∂²ₓ`. The `q` drift is always one.
#[derive(Debug, Clone, PartialEq)]
pub struct ArmCoefficients {
    pub drift_x: Vec<f64>,
    pub diffusion_x: f64,
}

/// One assembled time step of `∂ₜV + π·L V + source = 0`.
///
/// Explicit: `V_m = matrix·V_{m+1} + rhs_offset`.
/// Implicit: `matrix·V_m = V_{m+1} + rhs_offset`.
#[derive(Debug, Clone)]
pub struct SparseStep {
    pub matrix: CsrMatrix,
    pub rhs_offset: Vec<f64>,
    pub theta: Theta,
}

impl SparseStep {
    pub fn apply(&self, prev: &[f64]) -> Result<Vec<f64>> {
        match self.theta {
            Theta::Explicit => {
                let mut v = self.matrix.mul_vec(prev);
                v.iter_mut().zip(&self.rhs_offset).for_each(|(v, o)| *v += o);
                Ok(v)
            }
            Theta::Implicit => {
                let b: Vec<f64> = prev.iter().zip(&self.rhs_offset).map(|(p, o)| p + o).collect();
                let mut x = prev.to_vec();
                self.matrix.gauss_seidel(&b, &mut x, 1e-13, 100_000)?;
                Ok(x)
            }
        }
    }
}

/// Assembles one step of `∂ₜV + weight·L V + source = 0` along `arm`.
///
/// `weight` is the per-node control intensity (`None` means one). The
/// explicit step is rejected when `dt` exceeds `0.5·min(Δx², Δq²)` or when
/// any diagonal entry of the update would turn negative.
pub fn assemble_generator(
    grid: &GridSpec,
    arm: usize,
    coeffs: &ArmCoefficients,
    weight: Option<&[f64]>,
    source: &[f64],
    theta: Theta,
    dt: f64,
) -> Result<SparseStep> {
    let len = grid.spatial_len();
    for v in [coeffs.drift_x.len(), source.len()] {
        if v != len {
            return Err(LatticeError::DimensionMismatch {
                expected: len,
                got: v,
            });
        }
    }
    let p = ArmPlane::new(grid, arm);
    let sign = match theta {
        Theta::Explicit => {
            let bound = grid.cfl_bound();
            if dt > bound {
                return Err(LatticeError::CflViolation { dt, bound });
            }
            1.0
        }
        Theta::Implicit => -1.0,
    };
    let mut worst_total: f64 = 0.0;
    let rows = (0..len).map(|n| {
        let (i, j) = grid.arm_indices(arm, n);
        let pi = weight.map_or(1.0, |w| w[n]);
        let w = p.weights(i, j, coeffs.drift_x[n], coeffs.diffusion_x).scaled(pi * dt);
        worst_total = worst_total.max(w.total());
        let mut row = vec![(n, 1.0 - sign * w.total())];
        if w.lower != 0.0 {
            row.push((n - p.sx, sign * w.lower));
        }
        if w.upper != 0.0 {
            row.push((n + p.sx, sign * w.upper));
        }
        if w.q_up != 0.0 {
            row.push((n + p.sq, sign * w.q_up));
        }
        row
    });
    let matrix = CsrMatrix::from_rows(rows.collect::<Vec<_>>());
    if theta == Theta::Explicit && worst_total > 1.0 {
        return Err(LatticeError::CflViolation {
            dt,
            bound: dt / worst_total,
        });
    }
    Ok(SparseStep {
        matrix,
        rhs_offset: source.iter().map(|s| s * dt).collect(),
        theta,
    })
}

/// Solves a tridiagonal system in place (Thomas algorithm, no pivoting;
/// valid for the diagonally dominant rows produced here).
///
/// `lower[0]` and `upper[n-1]` are ignored.
pub fn thomas(lower: &[f64], diag: &[f64], upper: &[f64], rhs: &mut [f64], scratch: &mut [f64]) {
    let n = diag.len();
    let mut beta = diag[0];
    rhs[0] /= beta;
    for i in 1..n {
        scratch[i] = upper[i - 1] / beta;
        beta = diag[i] - lower[i] * scratch[i];
        rhs[i] = (rhs[i] - lower[i] * rhs[i - 1]) / beta;
    }
    for i in (0..n - 1).rev() {
        rhs[i] -= scratch[i + 1] * rhs[i + 1];
    }
}

/// Reusable buffers for line solves on one plane.
#[derive(Debug, Clone, Default)]
pub struct LineScratch {
    pub lower: Vec<f64>,
    pub diag: Vec<f64>,
    pub upper: Vec<f64>,
    pub rhs: Vec<f64>,
    pub tmp: Vec<f64>,
}

impl LineScratch {
    pub fn new(nx: usize) -> Self {
        Self {
            lower: vec![0.0; nx],
            diag: vec![0.0; nx],
            upper: vec![0.0; nx],
            rhs: vec![0.0; nx],
            tmp: vec![0.0; nx],
        }
    }
}

/// Direct solve of `(I - dt·weight·L_h) V = rhs` on one contiguous
/// `(x, q)` plane (`x` fastest). The forward `q` difference makes the system
/// block upper-triangular, so rows are solved from `q_max` downwards with a
/// tridiagonal solve per row.
#[allow(clippy::too_many_arguments)]
pub fn solve_plane(
    plane: &ArmPlane,
    drift: &[f64],
    diffusion: f64,
    weight: Option<&[f64]>,
    dt: f64,
    rhs: &[f64],
    out: &mut [f64],
    scratch: &mut LineScratch,
) {
    let nx = plane.nx;
    for j in (0..plane.nq).rev() {
        let row = j * nx;
        for i in 0..nx {
            let n = row + i;
            let pi = weight.map_or(1.0, |w| w[n]);
            let w = plane.weights(i, j, drift[n], diffusion).scaled(pi * dt);
            scratch.lower[i] = -w.lower;
            scratch.upper[i] = -w.upper;
            scratch.diag[i] = 1.0 + w.total();
            scratch.rhs[i] = rhs[n] + if w.q_up != 0.0 { w.q_up * out[n + nx] } else { 0.0 };
        }
        thomas(
            &scratch.lower,
            &scratch.diag,
            &scratch.upper,
            &mut scratch.rhs,
            &mut scratch.tmp,
        );
        out[row..row + nx].copy_from_slice(&scratch.rhs);
    }
}

/// Enumerates the flat offsets of every `(x_k, q_k)` plane of `arm`.
pub fn plane_bases(grid: &GridSpec, arm: usize) -> Vec<usize> {
    let (sx, sq) = grid.strides(arm);
    let block = sq * grid.q_axis().n;
    let outer = grid.spatial_len() / block;
    (0..outer)
        .flat_map(|hi| (0..sx).map(move |lo| hi * block + lo))
        .collect()
}

/// Gathers the plane of `arm` starting at `base` into a contiguous buffer.
pub fn gather_plane(grid: &GridSpec, arm: usize, base: usize, src: &[f64], dst: &mut [f64]) {
    let (sx, sq) = grid.strides(arm);
    let nx = grid.x_axis(arm).n;
    for j in 0..grid.q_axis().n {
        for i in 0..nx {
            dst[j * nx + i] = src[base + i * sx + j * sq];
        }
    }
}

/// Direct solve of `(I - dt·weight·L_h^{(arm)}) V = rhs` over the whole
/// grid. Planes are independent and solved in parallel.
pub fn solve_arm_implicit(
    grid: &GridSpec,
    arm: usize,
    coeffs: &ArmCoefficients,
    weight: Option<&[f64]>,
    dt: f64,
    rhs: &[f64],
) -> Vec<f64> {
    let plane = ArmPlane::new(grid, arm);
    let size = plane.nx * plane.nq;
    let len = grid.spatial_len();
    let mut out = vec![0.0; len];
    if plane.sx == 1 {
        // planes are contiguous
        out.par_chunks_mut(size)
            .zip(rhs.par_chunks(size))
            .enumerate()
            .for_each_init(
                || LineScratch::new(plane.nx),
                |scratch, (p, (o, r))| {
                    let span = p * size..(p + 1) * size;
                    let w = weight.map(|w| &w[span.clone()]);
                    solve_plane(&plane, &coeffs.drift_x[span], coeffs.diffusion_x, w, dt, r, o, scratch);
                },
            );
        return out;
    }
    let bases = plane_bases(grid, arm);
    let solved: Vec<Vec<f64>> = bases
        .par_iter()
        .map_init(
            || LineScratch::new(plane.nx),
            |scratch, &base| {
                let mut d = vec![0.0; size];
                let mut r = vec![0.0; size];
                gather_plane(grid, arm, base, &coeffs.drift_x, &mut d);
                gather_plane(grid, arm, base, rhs, &mut r);
                let w = weight.map(|w| {
                    let mut buf = vec![0.0; size];
                    gather_plane(grid, arm, base, w, &mut buf);
                    buf
                });
                let mut o = vec![0.0; size];
                solve_plane(&plane, &d, coeffs.diffusion_x, w.as_deref(), dt, &r, &mut o, scratch);
                o
            },
        )
        .collect();
    for (&base, o) in bases.iter().zip(&solved) {
        for j in 0..plane.nq {
            for i in 0..plane.nx {
                out[base + i * plane.sx + j * plane.sq] = o[j * plane.nx + i];
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::Axis;

    fn small_grid(nx: usize, nq: usize, nt: usize) -> GridSpec {
        GridSpec::one_arm(
            Axis::new(-1.0, 1.0, nx).unwrap(),
            Axis::new(0.0, 1.0, nq).unwrap(),
            nt,
        )
        .unwrap()
    }

    #[test]
    fn zero_coefficients_give_identity() {
        let g = small_grid(5, 3, 10);
        let c = ArmCoefficients {
            drift_x: vec![0.0; 15],
            diffusion_x: 0.0,
        };
        let zero_q = vec![0.0; 15];
        let step = assemble_generator(&g, 0, &c, Some(&zero_q), &zero_q, Theta::Implicit, 0.1).unwrap();
        assert_eq!(step.matrix, CsrMatrix::identity(15));
    }

    #[test]
    fn implicit_pure_diffusion_is_m_matrix() {
        let g = small_grid(5, 2, 10);
        let c = ArmCoefficients {
            drift_x: vec![0.0; 10],
            diffusion_x: 0.5,
        };
        let step = assemble_generator(&g, 0, &c, None, &[0.0; 10], Theta::Implicit, 0.1).unwrap();
        assert!(step.matrix.is_m_matrix());
        // Δx = 0.5, ½σ² = 0.5 → neighbour weight 2, times dt
        let row: Vec<_> = step.matrix.row(2).collect();
        assert_eq!(row, vec![(1, -0.2), (2, 1.0 + 0.4 + 0.1 / 1.0), (3, -0.2), (7, -0.1)]);
    }

    #[test]
    fn explicit_guard() {
        let g = small_grid(5, 3, 10);
        let c = ArmCoefficients {
            drift_x: vec![0.0; 15],
            diffusion_x: 0.5,
        };
        let bound = g.cfl_bound();
        assert!(assemble_generator(&g, 0, &c, None, &[0.0; 15], Theta::Explicit, bound).is_ok());
        assert!(matches!(
            assemble_generator(&g, 0, &c, None, &[0.0; 15], Theta::Explicit, bound * 1.0001),
            Err(LatticeError::CflViolation { .. })
        ));
    }

    #[test]
    fn thomas_matches_dense_solution() {
        let lower = [0.0, -1.0, -0.5, -0.3];
        let diag = [3.0, 4.0, 2.5, 2.0];
        let upper = [-1.0, -2.0, -1.0, 0.0];
        let x = [1.0, -2.0, 0.5, 3.0];
        let mut b = [0.0; 4];
        for i in 0..4 {
            b[i] = diag[i] * x[i];
            if i > 0 {
                b[i] += lower[i] * x[i - 1];
            }
            if i < 3 {
                b[i] += upper[i] * x[i + 1];
            }
        }
        let mut tmp = [0.0; 4];
        thomas(&lower, &diag, &upper, &mut b, &mut tmp);
        for i in 0..4 {
            assert!((b[i] - x[i]).abs() < 1e-14);
        }
    }

    #[test]
    fn plane_solver_agrees_with_gauss_seidel() {
        let g = small_grid(9, 5, 4);
        let len = g.spatial_len();
        let drift: Vec<f64> = (0..len).map(|n| (n as f64 * 0.37).sin() * 2.0).collect();
        let weight: Vec<f64> = (0..len).map(|n| ((n * 7) % 5) as f64 / 4.0).collect();
        let c = ArmCoefficients {
            drift_x: drift,
            diffusion_x: 0.7,
        };
        let rhs: Vec<f64> = (0..len).map(|n| (n as f64).cos()).collect();
        let direct = solve_arm_implicit(&g, 0, &c, Some(&weight), 0.25, &rhs);
        let step = assemble_generator(&g, 0, &c, Some(&weight), &vec![0.0; len], Theta::Implicit, 0.25).unwrap();
        let mut x = vec![0.0; len];
        step.matrix.gauss_seidel(&rhs, &mut x, 1e-14, 10_000).unwrap();
        for (a, b) in direct.iter().zip(&x) {
            assert!((a - b).abs() < 1e-11, "{a} vs {b}");
        }
    }

    #[test]
    fn strided_planes_match_contiguous_solve() {
        let ax = Axis::new(-1.0, 1.0, 4).unwrap();
        let bx = Axis::new(-2.0, 2.0, 6).unwrap();
        let q = Axis::new(0.0, 1.0, 3).unwrap();
        let g = GridSpec::new(vec![ax, bx], q, 3).unwrap();
        let len = g.spatial_len();
        let drift: Vec<f64> = (0..len).map(|n| ((n as f64) * 0.11).cos()).collect();
        let c = ArmCoefficients {
            drift_x: drift,
            diffusion_x: 0.3,
        };
        let rhs: Vec<f64> = (0..len).map(|n| (n % 7) as f64).collect();
        let direct = solve_arm_implicit(&g, 1, &c, None, 0.2, &rhs);
        let step = assemble_generator(&g, 1, &c, None, &vec![0.0; len], Theta::Implicit, 0.2).unwrap();
        let mut x = vec![0.0; len];
        step.matrix.gauss_seidel(&rhs, &mut x, 1e-14, 10_000).unwrap();
        for (a, b) in direct.iter().zip(&x) {
            assert!((a - b).abs() < 1e-11);
        }
    }
}
