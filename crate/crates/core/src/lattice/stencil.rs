//! Upwind finite-difference stencils.
//!
//! The standalone derivative operators follow the textbook definitions
//! (one-sided differences at the edges of the `x` axis). The generator
//! weights used by the solvers instead drop the drift term when it points
//! out of the grid and drop the diffusion term on the boundary, which keeps
//! every assembled row an M-matrix row.

use super::{GridSpec, ValueField};

/// Non-negative neighbour weights of the discrete generator `L_h` at a node:
/// `L_h V = lower·(V_{i-1} - V) + upper·(V_{i+1} - V) + q_up·(V_{j+1} - V)`.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct GeneratorWeights {
    pub lower: f64,
    pub upper: f64,
    pub q_up: f64,
}

impl GeneratorWeights {
    #[inline]
    pub fn total(&self) -> f64 {
        self.lower + self.upper + self.q_up
    }

    #[inline]
    pub fn scaled(self, s: f64) -> Self {
        Self {
            lower: self.lower * s,
            upper: self.upper * s,
            q_up: self.q_up * s,
        }
    }
}

/// Geometry of one arm's `(x, q)` plane, cached for the inner loops.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ArmPlane {
    pub nx: usize,
    pub nq: usize,
    pub dx: f64,
    pub dq: f64,
    pub sx: usize,
    pub sq: usize,
}

impl ArmPlane {
    pub fn new(grid: &GridSpec, arm: usize) -> Self {
        let (sx, sq) = grid.strides(arm);
        Self {
            nx: grid.x_axis(arm).n,
            nq: grid.q_axis().n,
            dx: grid.x_axis(arm).step(),
            dq: grid.q_axis().step(),
            sx,
            sq,
        }
    }

    /// Generator weights for drift `drift` in `x`, diffusion coefficient
    /// `diffusion` (the `½σ²` multiplying `∂²ₓ`) and unit drift in `q`.
    #[inline]
    pub fn weights(&self, i: usize, j: usize, drift: f64, diffusion: f64) -> GeneratorWeights {
        let up_drift = drift.max(0.0) / self.dx;
        let down_drift = (-drift).max(0.0) / self.dx;
        let diff = diffusion / (self.dx * self.dx);
        let (lower, upper) = if i == 0 {
            (0.0, up_drift)
        } else if i + 1 == self.nx {
            (down_drift, 0.0)
        } else {
            (diff + down_drift, diff + up_drift)
        };
        let q_up = if j + 1 < self.nq { 1.0 / self.dq } else { 0.0 };
        GeneratorWeights { lower, upper, q_up }
    }
}

/// `L_h V` along `arm` at every node.
pub fn apply_generator(
    grid: &GridSpec,
    arm: usize,
    values: &[f64],
    drift: &[f64],
    diffusion: f64,
) -> Vec<f64> {
    let p = ArmPlane::new(grid, arm);
    let mut out = vec![0.0; values.len()];
    for (n, o) in out.iter_mut().enumerate() {
        let (i, j) = grid.arm_indices(arm, n);
        let w = p.weights(i, j, drift[n], diffusion);
        let v = values[n];
        let mut acc = 0.0;
        if w.lower != 0.0 {
            acc += w.lower * (values[n - p.sx] - v);
        }
        if w.upper != 0.0 {
            acc += w.upper * (values[n + p.sx] - v);
        }
        if w.q_up != 0.0 {
            acc += w.q_up * (values[n + p.sq] - v);
        }
        *o = acc;
    }
    out
}

/// Upwind first difference in `x`: forward where `drift ≥ 0`, backward
/// otherwise; the only available one-sided difference at the two ends.
pub fn upwind_first_x(field: &ValueField, drift: &[f64]) -> Vec<f64> {
    upwind_first_x_arm(field, 0, drift)
}

pub fn upwind_first_x_arm(field: &ValueField, arm: usize, drift: &[f64]) -> Vec<f64> {
    let g = &field.grid;
    let p = ArmPlane::new(g, arm);
    let v = &field.values;
    (0..v.len())
        .map(|n| {
            let (i, _) = g.arm_indices(arm, n);
            let forward = if i == 0 {
                true
            } else if i + 1 == p.nx {
                false
            } else {
                drift[n] >= 0.0
            };
            if forward {
                (v[n + p.sx] - v[n]) / p.dx
            } else {
                (v[n] - v[n - p.sx]) / p.dx
            }
        })
        .collect()
}

/// Central second difference in `x`, zero on boundary nodes.
pub fn second_x(field: &ValueField) -> Vec<f64> {
    second_x_arm(field, 0)
}

pub fn second_x_arm(field: &ValueField, arm: usize) -> Vec<f64> {
    let g = &field.grid;
    let p = ArmPlane::new(g, arm);
    let v = &field.values;
    (0..v.len())
        .map(|n| {
            let (i, _) = g.arm_indices(arm, n);
            if i == 0 || i + 1 == p.nx {
                0.0
            } else {
                (v[n + p.sx] - 2.0 * v[n] + v[n - p.sx]) / (p.dx * p.dx)
            }
        })
        .collect()
}

/// Forward difference in `q`, zero on the `q_max` row.
pub fn forward_q(field: &ValueField) -> Vec<f64> {
    forward_q_arm(field, 0)
}

pub fn forward_q_arm(field: &ValueField, arm: usize) -> Vec<f64> {
    let g = &field.grid;
    let p = ArmPlane::new(g, arm);
    let v = &field.values;
    (0..v.len())
        .map(|n| {
            let (_, j) = g.arm_indices(arm, n);
            if j + 1 == p.nq {
                0.0
            } else {
                (v[n + p.sq] - v[n]) / p.dq
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::Axis;

    fn grid(dx: f64, nx: usize, dq: f64, nq: usize) -> GridSpec {
        let x = Axis::new(0.0, dx * (nx - 1) as f64, nx).unwrap();
        let q = Axis::new(0.0, dq * (nq - 1) as f64, nq).unwrap();
        GridSpec::one_arm(x, q, 1).unwrap()
    }

    #[test]
    fn linear_and_constant_fields() {
        let g = grid(0.1, 21, 0.1, 5);
        let lin = ValueField::from_fn(g.clone(), 0, |x, _| x);
        let drift: Vec<f64> = (0..g.spatial_len()).map(|n| if n % 2 == 0 { 1.0 } else { -1.0 }).collect();
        for d in upwind_first_x(&lin, &drift) {
            assert!((d - 1.0).abs() < 1e-12);
        }
        for d in second_x(&lin) {
            assert!(d.abs() < 1e-9);
        }
        let c = ValueField::from_fn(g, 0, |_, _| 4.0);
        assert!(upwind_first_x(&c, &drift).iter().all(|&d| d == 0.0));
        assert!(second_x(&c).iter().all(|&d| d == 0.0));
        assert!(forward_q(&c).iter().all(|&d| d == 0.0));
    }

    #[test]
    fn forward_stencil_on_square() {
        // V = x² at x = 1 with Δx = 0.1: (1.21 - 1.00)/0.1
        let g = grid(0.1, 21, 0.1, 3);
        let f = ValueField::from_fn(g.clone(), 0, |x, _| x * x);
        let drift = vec![1.0; g.spatial_len()];
        let d = upwind_first_x(&f, &drift);
        assert!((d[10] - 2.1).abs() < 1e-12);
        let s = second_x(&f);
        for i in 1..20 {
            assert!((s[i] - 2.0).abs() < 1e-9);
        }
        assert_eq!(s[0], 0.0);
    }

    #[test]
    fn second_difference_at_kink() {
        let h = 0.25;
        let g = grid(h, 9, 0.5, 2);
        let f = ValueField::from_fn(g, 0, |x, _| (x - 1.0).abs());
        let s = second_x(&f);
        assert!((s[4] - 2.0 / h).abs() < 1e-12);
    }

    #[test]
    fn q_difference() {
        let g = grid(0.1, 3, 0.1, 11);
        let f = ValueField::from_fn(g.clone(), 0, |_, q| q);
        let d = forward_q(&f);
        for j in 0..10 {
            assert!((d[j * 3 + 1] - 1.0).abs() < 1e-12);
        }
        assert_eq!(d[10 * 3 + 1], 0.0);
        let f = ValueField::from_fn(g, 0, |_, q| q * q);
        let d = forward_q(&f);
        assert!((d[5 * 3] - 1.1).abs() < 1e-12);
    }

    #[test]
    fn boundary_weights_drop_outflow() {
        let p = ArmPlane::new(&grid(0.5, 5, 0.5, 3), 0);
        let w = p.weights(0, 0, -2.0, 1.0);
        assert_eq!(w.lower, 0.0);
        assert_eq!(w.upper, 0.0);
        assert_eq!(w.q_up, 2.0);
        let w = p.weights(4, 2, -2.0, 1.0);
        assert_eq!(w.lower, 4.0);
        assert_eq!(w.upper, 0.0);
        assert_eq!(w.q_up, 0.0);
        let w = p.weights(2, 1, 1.0, 0.5);
        assert_eq!(w.lower, 2.0);
        assert_eq!(w.upper, 4.0);
    }

    #[test]
    fn generator_exact_on_affine_interior() {
        let g = grid(0.1, 11, 0.1, 6);
        let f = ValueField::from_fn(g.clone(), 0, |x, q| 2.0 * x + 3.0 * q);
        let drift = vec![0.7; g.spatial_len()];
        let lv = apply_generator(&g, 0, &f.values, &drift, 0.5);
        for j in 0..5 {
            for i in 1..10 {
                assert!((lv[j * 11 + i] - (0.7 * 2.0 + 3.0)).abs() < 1e-9);
            }
        }
    }
}
