//! Rectangular grids over `(x, q)` per arm plus time, upwind stencils, sparse
//! operators and value-field serialization.
//!
//! Spatial nodes are stored row-major with `x₁` fastest, then `q₁`, then
//! `x₂`, `q₂` and so on. Every arm shares the same `q` axis.

pub mod io;
pub mod sparse;
pub mod stencil;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use sparse::{assemble_generator, ArmCoefficients, CsrMatrix, SparseStep, Theta};

/// Hard cap on the number of arms a tensor grid may have.
pub const MAX_ARMS: usize = 3;

#[derive(Debug, Error)]
pub enum LatticeError {
    #[error("axis needs max > min and finite bounds, got [{min}, {max}]")]
    InvalidBounds { min: f64, max: f64 },
    #[error("axis needs at least {needed} nodes, got {got}")]
    TooFewNodes { needed: usize, got: usize },
    #[error("q axis must start at 0, got {0}")]
    QAxisOrigin(f64),
    #[error("grid must have between 1 and {MAX_ARMS} arms, got {0}")]
    ArmCount(usize),
    #[error("explicit step dt = {dt} exceeds the stability bound {bound}")]
    CflViolation { dt: f64, bound: f64 },
    #[error("expected {expected} values, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("non-finite value at node {0}")]
    NonFinite(usize),
    #[error("linear solve did not reach tolerance {tol} within {sweeps} sweeps (residual {residual})")]
    NotConverged { tol: f64, sweeps: usize, residual: f64 },
    #[error("malformed value-field file: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, LatticeError>;

/// Uniform axis with `n` nodes from `min` to `max` inclusive.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Axis {
    pub min: f64,
    pub max: f64,
    pub n: usize,
}

impl Axis {
    pub fn new(min: f64, max: f64, n: usize) -> Result<Self> {
        let axis = Self { min, max, n };
        axis.validate(2)?;
        Ok(axis)
    }

    /// Axis with spacing as close as possible to `step` (rounded node count).
    pub fn with_step(min: f64, max: f64, step: f64) -> Result<Self> {
        let n = ((max - min) / step).round() as usize + 1;
        Self::new(min, max, n)
    }

    fn validate(&self, min_nodes: usize) -> Result<()> {
        if !(self.min.is_finite() && self.max.is_finite() && self.max > self.min) {
            return Err(LatticeError::InvalidBounds {
                min: self.min,
                max: self.max,
            });
        }
        if self.n < min_nodes {
            return Err(LatticeError::TooFewNodes {
                needed: min_nodes,
                got: self.n,
            });
        }
        Ok(())
    }

    #[inline]
    pub fn step(&self) -> f64 {
        (self.max - self.min) / (self.n - 1) as f64
    }

    #[inline]
    pub fn node(&self, i: usize) -> f64 {
        if i + 1 == self.n {
            self.max
        } else {
            self.min + i as f64 * self.step()
        }
    }

    pub fn nodes(&self) -> Vec<f64> {
        (0..self.n).map(|i| self.node(i)).collect()
    }

    /// Cell index `i ∈ [0, n-2]` and weight `w ∈ [0, 1]` with
    /// `v ≈ (1-w)·node(i) + w·node(i+1)`, clamped to the axis.
    #[inline]
    pub fn locate(&self, v: f64) -> (usize, f64) {
        let s = ((v - self.min) / self.step()).clamp(0.0, (self.n - 1) as f64);
        let i = (s.floor() as usize).min(self.n - 2);
        (i, s - i as f64)
    }

    /// Index of the node nearest to `v`, clamped.
    #[inline]
    pub fn nearest(&self, v: f64) -> usize {
        let s = ((v - self.min) / self.step()).round();
        s.clamp(0.0, (self.n - 1) as f64) as usize
    }

    pub fn contains(&self, v: f64) -> bool {
        v >= self.min && v <= self.max
    }
}

/// Spatial-temporal grid for a `K`-armed problem.
///
/// `nt = 0` marks a stationary (discounted) grid with no time axis;
/// otherwise `dt = 1/nt`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    x: Vec<Axis>,
    q: Axis,
    nt: usize,
}

impl GridSpec {
    pub fn new(x: Vec<Axis>, q: Axis, nt: usize) -> Result<Self> {
        if x.is_empty() || x.len() > MAX_ARMS {
            return Err(LatticeError::ArmCount(x.len()));
        }
        for a in &x {
            a.validate(3)?;
        }
        q.validate(2)?;
        if q.min != 0.0 {
            return Err(LatticeError::QAxisOrigin(q.min));
        }
        Ok(Self { x, q, nt })
    }

    pub fn one_arm(x: Axis, q: Axis, nt: usize) -> Result<Self> {
        Self::new(vec![x], q, nt)
    }

    pub fn stationary(x: Vec<Axis>, q: Axis) -> Result<Self> {
        Self::new(x, q, 0)
    }

    /// `x ∈ ±2.5σ` with `Δx = σ/1000`, `Δq = 1/500`, `Δt = 1/1000`.
    pub fn fine(sigma: f64) -> Result<Self> {
        Self::one_arm(
            Axis::new(-2.5 * sigma, 2.5 * sigma, 5001)?,
            Axis::new(0.0, 1.0, 501)?,
            1000,
        )
    }

    /// `x ∈ ±2.5σ` with `Δx = σ/200`, `Δq = 1/100`, `Δt = 1/200`.
    pub fn desk(sigma: f64) -> Result<Self> {
        Self::one_arm(
            Axis::new(-2.5 * sigma, 2.5 * sigma, 1001)?,
            Axis::new(0.0, 1.0, 101)?,
            200,
        )
    }

    /// Uniform `nx × nq × nt` grid over `x ∈ ±2.5σ`, `q ∈ [0, 1]`.
    pub fn uniform(sigma: f64, nx: usize, nq: usize, nt: usize) -> Result<Self> {
        Self::one_arm(
            Axis::new(-2.5 * sigma, 2.5 * sigma, nx)?,
            Axis::new(0.0, 1.0, nq)?,
            nt,
        )
    }

    pub fn arms(&self) -> usize {
        self.x.len()
    }

    pub fn x_axis(&self, arm: usize) -> &Axis {
        &self.x[arm]
    }

    pub fn x_axes(&self) -> &[Axis] {
        &self.x
    }

    pub fn q_axis(&self) -> &Axis {
        &self.q
    }

    pub fn nt(&self) -> usize {
        self.nt
    }

    pub fn is_stationary(&self) -> bool {
        self.nt == 0
    }

    /// Time increment `1/nt` (zero for stationary grids).
    pub fn dt(&self) -> f64 {
        if self.nt == 0 {
            0.0
        } else {
            1.0 / self.nt as f64
        }
    }

    pub fn time(&self, m: usize) -> f64 {
        if self.nt == 0 {
            0.0
        } else if m == self.nt {
            1.0
        } else {
            m as f64 * self.dt()
        }
    }

    /// Grid with a different number of time steps.
    pub fn with_nt(&self, nt: usize) -> Self {
        Self {
            nt,
            ..self.clone()
        }
    }

    pub fn spatial_len(&self) -> usize {
        self.x.iter().map(|a| a.n * self.q.n).product()
    }

    /// Strides `(x stride, q stride)` of an arm in the flat layout.
    pub fn strides(&self, arm: usize) -> (usize, usize) {
        let sx: usize = self.x[..arm].iter().map(|a| a.n * self.q.n).product();
        (sx, sx * self.x[arm].n)
    }

    /// `(i_x, j_q)` of `arm` at flat node `n`.
    #[inline]
    pub fn arm_indices(&self, arm: usize, node: usize) -> (usize, usize) {
        let (sx, _) = self.strides(arm);
        let r = node / sx;
        let nx = self.x[arm].n;
        (r % nx, (r / nx) % self.q.n)
    }

    /// Flat node from per-arm `(i_x, j_q)` pairs.
    pub fn node_index(&self, idx: &[(usize, usize)]) -> usize {
        let mut node = 0;
        let mut stride = 1;
        for (a, &(i, j)) in self.x.iter().zip(idx) {
            node += i * stride + j * stride * a.n;
            stride *= a.n * self.q.n;
        }
        node
    }

    /// Calls `f(node, &[(x_k, q_k)])` for every spatial node in layout order.
    pub fn for_each_node(&self, mut f: impl FnMut(usize, &[(f64, f64)])) {
        let k = self.arms();
        let xs: Vec<Vec<f64>> = self.x.iter().map(Axis::nodes).collect();
        let qs = self.q.nodes();
        let mut idx = vec![(0usize, 0usize); k];
        let mut coords = vec![(0.0, 0.0); k];
        for node in 0..self.spatial_len() {
            for a in 0..k {
                coords[a] = (xs[a][idx[a].0], qs[idx[a].1]);
            }
            f(node, &coords);
            for a in 0..k {
                idx[a].0 += 1;
                if idx[a].0 < self.x[a].n {
                    break;
                }
                idx[a].0 = 0;
                idx[a].1 += 1;
                if idx[a].1 < self.q.n {
                    break;
                }
                idx[a].1 = 0;
            }
        }
    }

    /// Largest stable explicit step `0.5·min(Δx², Δq²)` over all arms.
    pub fn cfl_bound(&self) -> f64 {
        let dq = self.q.step();
        self.x
            .iter()
            .map(|a| a.step().powi(2))
            .fold(dq * dq, f64::min)
            * 0.5
    }
}

/// Value function on the spatial grid at one time slice.
#[derive(Debug, Clone, PartialEq)]
pub struct ValueField {
    pub grid: GridSpec,
    pub time_index: usize,
    pub t: f64,
    pub values: Vec<f64>,
}

impl ValueField {
    pub fn new(grid: GridSpec, time_index: usize, values: Vec<f64>) -> Result<Self> {
        let expected = grid.spatial_len();
        if values.len() != expected {
            return Err(LatticeError::DimensionMismatch {
                expected,
                got: values.len(),
            });
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(LatticeError::NonFinite(i));
        }
        let t = grid.time(time_index);
        Ok(Self {
            grid,
            time_index,
            t,
            values,
        })
    }

    pub fn zeros(grid: GridSpec, time_index: usize) -> Self {
        let n = grid.spatial_len();
        let t = grid.time(time_index);
        Self {
            grid,
            time_index,
            t,
            values: vec![0.0; n],
        }
    }

    /// Field with `f(x, q)` sampled at every node of a one-armed grid.
    pub fn from_fn(grid: GridSpec, time_index: usize, f: impl Fn(f64, f64) -> f64) -> Self {
        let mut values = vec![0.0; grid.spatial_len()];
        grid.for_each_node(|n, c| values[n] = f(c[0].0, c[0].1));
        let t = grid.time(time_index);
        Self {
            grid,
            time_index,
            t,
            values,
        }
    }

    /// Value at one-arm node `(i, j)`.
    #[inline]
    pub fn at(&self, i: usize, j: usize) -> f64 {
        self.values[j * self.grid.x_axis(0).n + i]
    }

    /// Multilinear interpolation at per-arm `(x_k, q_k)`, clamped to the grid.
    pub fn interpolate(&self, point: &[(f64, f64)]) -> f64 {
        interpolate(&self.grid, &self.values, point)
    }
}

/// Multilinear interpolation of a nodal array, clamping out-of-grid points.
pub fn interpolate(grid: &GridSpec, values: &[f64], point: &[(f64, f64)]) -> f64 {
    let k = grid.arms();
    debug_assert_eq!(point.len(), k);
    if k == 1 {
        let ax = grid.x_axis(0);
        let (i, wx) = ax.locate(point[0].0);
        let (j, wq) = grid.q_axis().locate(point[0].1);
        let nx = ax.n;
        let base = j * nx + i;
        let v00 = values[base];
        let v10 = values[base + 1];
        let v01 = values[base + nx];
        let v11 = values[base + nx + 1];
        return (1.0 - wq) * ((1.0 - wx) * v00 + wx * v10) + wq * ((1.0 - wx) * v01 + wx * v11);
    }
    let mut cells = Vec::with_capacity(2 * k);
    for (a, &(x, q)) in point.iter().enumerate() {
        let (sx, sq) = grid.strides(a);
        let (i, wx) = grid.x_axis(a).locate(x);
        let (j, wq) = grid.q_axis().locate(q);
        cells.push((i * sx, sx, wx));
        cells.push((j * sq, sq, wq));
    }
    let dims = cells.len();
    let mut acc = 0.0;
    for corner in 0..(1usize << dims) {
        let mut w = 1.0;
        let mut node = 0;
        for (d, &(base, stride, frac)) in cells.iter().enumerate() {
            if corner >> d & 1 == 1 {
                w *= frac;
                node += base + stride;
            } else {
                w *= 1.0 - frac;
                node += base;
            }
        }
        if w != 0.0 {
            acc += w * values[node];
        }
    }
    acc
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn axis_geometry() {
        let a = Axis::new(-1.0, 1.0, 5).unwrap();
        assert_eq!(a.step(), 0.5);
        assert_eq!(a.nodes(), vec![-1.0, -0.5, 0.0, 0.5, 1.0]);
        assert_eq!(a.locate(0.25), (2, 0.5));
        assert_eq!(a.locate(5.0), (3, 1.0));
        assert_eq!(a.locate(-5.0), (0, 0.0));
        assert_eq!(a.nearest(0.3), 3);
        assert!(Axis::new(1.0, 1.0, 5).is_err());
    }

    #[test]
    fn fine_grid_spacing() {
        let g = GridSpec::fine(1.0).unwrap();
        assert!((g.x_axis(0).step() - 1e-3).abs() < 1e-15);
        assert!((g.q_axis().step() - 2e-3).abs() < 1e-15);
        assert!((g.dt() * g.nt() as f64 - 1.0).abs() < 1e-12);
        assert_eq!(g.x_axis(0).min, -2.5);
    }

    #[test]
    fn layout_and_strides() {
        let ax = Axis::new(-1.0, 1.0, 3).unwrap();
        let bx = Axis::new(-1.0, 1.0, 4).unwrap();
        let q = Axis::new(0.0, 1.0, 2).unwrap();
        let g = GridSpec::new(vec![ax, bx], q, 4).unwrap();
        assert_eq!(g.spatial_len(), 3 * 2 * 4 * 2);
        assert_eq!(g.strides(0), (1, 3));
        assert_eq!(g.strides(1), (6, 24));
        let n = g.node_index(&[(2, 1), (3, 0)]);
        assert_eq!(n, 2 + 3 + 3 * 6);
        assert_eq!(g.arm_indices(0, n), (2, 1));
        assert_eq!(g.arm_indices(1, n), (3, 0));
        let mut seen = 0;
        g.for_each_node(|node, c| {
            assert_eq!(node, seen);
            let (i0, j0) = g.arm_indices(0, node);
            assert_eq!(c[0], (ax.node(i0), q.node(j0)));
            let (i1, j1) = g.arm_indices(1, node);
            assert_eq!(c[1], (bx.node(i1), q.node(j1)));
            seen += 1;
        });
        assert_eq!(seen, g.spatial_len());
    }

    #[test]
    fn too_many_arms_rejected() {
        let ax = Axis::new(-1.0, 1.0, 3).unwrap();
        let q = Axis::new(0.0, 1.0, 2).unwrap();
        assert!(matches!(
            GridSpec::new(vec![ax; 4], q, 1),
            Err(LatticeError::ArmCount(4))
        ));
    }

    #[test]
    fn bilinear_is_exact_on_bilinear_functions() {
        let g = GridSpec::uniform(1.0, 11, 6, 10).unwrap();
        let f = |x: f64, q: f64| 1.0 + 2.0 * x - 3.0 * q + 0.5 * x * q;
        let field = ValueField::from_fn(g, 0, f);
        for &(x, q) in &[(0.13, 0.41), (-2.2, 0.93), (2.5, 1.0), (-2.5, 0.0)] {
            assert!((field.interpolate(&[(x, q)]) - f(x, q)).abs() < 1e-12);
        }
        // clamped outside the grid
        assert!((field.interpolate(&[(9.0, 2.0)]) - f(2.5, 1.0)).abs() < 1e-12);
    }

    #[test]
    fn multilinear_two_arms() {
        let ax = Axis::new(-1.0, 1.0, 5).unwrap();
        let q = Axis::new(0.0, 1.0, 3).unwrap();
        let g = GridSpec::new(vec![ax, ax], q, 2).unwrap();
        let f = |c: &[(f64, f64)]| c[0].0 - 2.0 * c[1].0 + c[0].1 * c[1].1;
        let mut v = vec![0.0; g.spatial_len()];
        g.for_each_node(|n, c| v[n] = f(c));
        let p = [(0.3, 0.2), (-0.7, 0.9)];
        assert!((interpolate(&g, &v, &p) - f(&p)).abs() < 1e-12);
    }

    #[test]
    fn value_field_rejects_non_finite() {
        let g = GridSpec::uniform(1.0, 3, 2, 1).unwrap();
        let mut v = vec![0.0; 6];
        v[4] = f64::NAN;
        assert!(matches!(
            ValueField::new(g.clone(), 0, v),
            Err(LatticeError::NonFinite(4))
        ));
        assert!(ValueField::new(g, 0, vec![0.0; 5]).is_err());
    }
}
