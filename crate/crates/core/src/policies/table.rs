//! Control tables: per-slice decisions recorded by a solver, and the batch
//! decisions of a piecewise-constant policy.

use std::sync::OnceLock;

use crate::lattice::{interpolate, GridSpec};

use super::{PolicyError, Result};

#[derive(Debug, Clone)]
enum Slice {
    /// One bit per node, set when pulling.
    Pull(Vec<u64>),
    /// Chosen arm per node.
    Arm(Vec<u8>),
}

/// Decisions of a finite-horizon solve at every node and time slice
/// `t_m = m·dt`, `m = 0..nt`. Slice `m` holds the control used on the step
/// from `t_{m+1}` back to `t_m`.
#[derive(Debug)]
pub struct ControlTable {
    grid: GridSpec,
    binary: bool,
    slices: Vec<Option<Slice>>,
    retirement: OnceLock<bool>,
}

impl Clone for ControlTable {
    fn clone(&self) -> Self {
        Self {
            grid: self.grid.clone(),
            binary: self.binary,
            slices: self.slices.clone(),
            retirement: OnceLock::new(),
        }
    }
}

impl ControlTable {
    /// Pull / no-pull table for a one-armed grid.
    pub fn binary(grid: GridSpec) -> Self {
        let nt = grid.nt();
        Self {
            grid,
            binary: true,
            slices: vec![None; nt],
            retirement: OnceLock::new(),
        }
    }

    /// Arm-index table for a `K`-armed grid.
    pub fn arms(grid: GridSpec) -> Self {
        let nt = grid.nt();
        Self {
            grid,
            binary: false,
            slices: vec![None; nt],
            retirement: OnceLock::new(),
        }
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn is_binary(&self) -> bool {
        self.binary
    }

    pub fn set_binary(&mut self, m: usize, pull: &[bool]) {
        let mut bits = vec![0u64; pull.len().div_ceil(64)];
        for (n, &p) in pull.iter().enumerate() {
            if p {
                bits[n / 64] |= 1 << (n % 64);
            }
        }
        self.slices[m] = Some(Slice::Pull(bits));
        self.retirement = OnceLock::new();
    }

    pub fn set_arms(&mut self, m: usize, arms: &[u8]) {
        self.slices[m] = Some(Slice::Arm(arms.to_vec()));
        self.retirement = OnceLock::new();
    }

    /// Whether slice `m` chose to pull (one arm) or a nonzero arm (`K` arms)
    /// at `node`. Unrecorded slices read as no-pull.
    #[inline]
    pub fn pull(&self, m: usize, node: usize) -> bool {
        match &self.slices[m] {
            Some(Slice::Pull(bits)) => bits[node / 64] >> (node % 64) & 1 == 1,
            Some(Slice::Arm(a)) => a[node] != 0,
            None => false,
        }
    }

    #[inline]
    pub fn arm(&self, m: usize, node: usize) -> u8 {
        match &self.slices[m] {
            Some(Slice::Pull(bits)) => (bits[node / 64] >> (node % 64) & 1) as u8,
            Some(Slice::Arm(a)) => a[node],
            None => 0,
        }
    }

    /// Nearest time slice to `t`, clamped to `[0, nt-1]`.
    #[inline]
    pub fn slice_for_time(&self, t: f64) -> usize {
        let nt = self.grid.nt();
        ((t * nt as f64).round().max(0.0) as usize).min(nt.saturating_sub(1))
    }

    /// Bilinear interpolation of the 0/1 pull indicator at the nearest
    /// slice, thresholded at one half.
    pub fn pull_probability(&self, x: f64, q: f64, t: f64) -> f64 {
        let m = self.slice_for_time(t);
        let ax = self.grid.x_axis(0);
        let (i, wx) = ax.locate(x);
        let (j, wq) = self.grid.q_axis().locate(q);
        let nx = ax.n;
        let base = j * nx + i;
        let b = |n: usize| if self.pull(m, n) { 1.0 } else { 0.0 };
        let v = (1.0 - wq) * ((1.0 - wx) * b(base) + wx * b(base + 1))
            + wq * ((1.0 - wx) * b(base + nx) + wx * b(base + nx + 1));
        if v >= 0.5 {
            1.0
        } else {
            0.0
        }
    }

    /// Arm chosen at the node nearest to `point` at the nearest slice.
    pub fn arm_at(&self, point: &[(f64, f64)], t: f64) -> u8 {
        let m = self.slice_for_time(t);
        let idx: Vec<(usize, usize)> = point
            .iter()
            .enumerate()
            .map(|(a, &(x, q))| (self.grid.x_axis(a).nearest(x), self.grid.q_axis().nearest(q)))
            .collect();
        self.arm(m, self.grid.node_index(&idx))
    }

    /// Fraction of nodes of slice `m` that pull.
    pub fn pull_fraction(&self, m: usize) -> f64 {
        let len = self.grid.spatial_len();
        (0..len).filter(|&n| self.pull(m, n)).count() as f64 / len as f64
    }

    /// Once a node stops pulling it never pulls at a later slice (one arm).
    pub fn is_retirement(&self) -> bool {
        *self.retirement.get_or_init(|| {
            if !self.binary || self.slices.iter().any(Option::is_none) {
                return false;
            }
            let len = self.grid.spatial_len();
            let nt = self.grid.nt();
            (0..len).all(|n| {
                let mut stopped = false;
                (0..nt).all(|m| {
                    let p = self.pull(m, n);
                    if stopped && p {
                        return false;
                    }
                    stopped |= !p;
                    true
                })
            })
        })
    }

    /// Nodes that violate retirement, as `(m, node)` pairs.
    pub fn retirement_violations(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        for n in 0..self.grid.spatial_len() {
            let mut stopped = false;
            for m in 0..self.grid.nt() {
                let p = self.pull(m, n);
                if stopped && p {
                    out.push((m, n));
                }
                stopped |= !p;
            }
        }
        out
    }
}

/// Decisions of an optimal batched policy: one decision array per batch,
/// taken at the batch start and held until the next one.
#[derive(Debug, Clone)]
pub struct PiecewiseConstantTable {
    grid: GridSpec,
    batch_times: Vec<f64>,
    decisions: Vec<Vec<u8>>,
}

impl PiecewiseConstantTable {
    pub fn new(grid: GridSpec, batch_times: Vec<f64>, decisions: Vec<Vec<u8>>) -> Result<Self> {
        if batch_times.is_empty() || batch_times.len() != decisions.len() {
            return Err(PolicyError::InvalidParameter(
                "one decision array per batch is required".into(),
            ));
        }
        if batch_times.windows(2).any(|w| w[1] <= w[0]) || *batch_times.last().unwrap() >= 1.0 {
            return Err(PolicyError::InvalidParameter(
                "batch times must increase strictly and stay below 1".into(),
            ));
        }
        let k = grid.arms().max(2) as u8;
        let len = grid.spatial_len();
        if decisions.iter().any(|d| d.len() != len || d.iter().any(|&a| a >= k)) {
            return Err(PolicyError::InvalidParameter(
                "decision arrays must cover the grid with valid actions".into(),
            ));
        }
        Ok(Self {
            grid,
            batch_times,
            decisions,
        })
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn batch_times(&self) -> &[f64] {
        &self.batch_times
    }

    pub fn batches(&self) -> usize {
        self.batch_times.len()
    }

    pub fn decisions(&self, batch: usize) -> &[u8] {
        &self.decisions[batch]
    }

    /// Index of the batch containing `t`.
    pub fn batch_index(&self, t: f64) -> usize {
        // tolerate round-off in t = j/n
        let tt = t + 1e-12;
        self.batch_times.partition_point(|&b| b <= tt).saturating_sub(1)
    }

    /// One-armed batch decision at `(x, q)`, bilinear then thresholded.
    pub fn pull_probability(&self, batch: usize, x: f64, q: f64) -> f64 {
        let d: Vec<f64> = self.decisions[batch].iter().map(|&a| a as f64).collect();
        let v = interpolate(&self.grid, &d, &[(x, q)]);
        if v >= 0.5 {
            1.0
        } else {
            0.0
        }
    }

    /// Arm chosen at the nearest node.
    pub fn arm_at(&self, batch: usize, point: &[(f64, f64)]) -> u8 {
        let idx: Vec<(usize, usize)> = point
            .iter()
            .enumerate()
            .map(|(a, &(x, q))| (self.grid.x_axis(a).nearest(x), self.grid.q_axis().nearest(q)))
            .collect();
        self.decisions[batch][self.grid.node_index(&idx)]
    }
}
