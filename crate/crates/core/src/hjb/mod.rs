//! Backward time-stepping and stationary solvers for the Bayes-risk PDEs.
//!
//! All finite-horizon problems start from a terminal slice at `t = 1` and
//! march to `t = 0`. With `t_m = m·dt`, one implicit step of the optimal
//! one-armed problem solves
//!
//! ```text
//! max{ V − V⁺ − dt·μ⁺ ,  V − dt·L_h V − V⁺ − dt·(μ⁺ − μ) } = 0
//! ```
//!
//! for the slice `V` at `t_m` given `V⁺` at `t_{m+1}`. The PDE coefficients
//! depend on `(x, q)` only, so nothing needs freezing inside a step.
//!
//! The upwind `q` difference only looks forward, which makes every implicit
//! system block upper-triangular in `q`: rows are solved from `q_max` down
//! with one tridiagonal solve (or one Howard iteration loop) per row.

pub mod batched;
pub mod coeffs;
pub mod discounted;
pub mod multi_arm;
pub mod one_arm;

use std::time::Instant;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::beliefs::{ArmModel, BeliefError, PriorSpec};
use crate::lattice::{GridSpec, LatticeError, ValueField};
use crate::policies::{ControlTable, PolicyError, PolicySpec};

pub use batched::{solve_batched, BatchedSolution};
pub use coeffs::{MultiArmCoefficients, OneArmCoefficients};
pub use discounted::solve_discounted;
pub use multi_arm::{solve_best_arm, solve_multi_arm_optimal};
pub use one_arm::{solve_optimal, solve_policy_risk, step_explicit, step_hybrid, step_implicit_howard};

#[derive(Debug, Error)]
pub enum SolveError {
    #[error("Howard iteration did not converge within {iterations} iterations at time index {time_index}")]
    HowardNonconvergence { time_index: usize, iterations: usize },
    #[error("policy iteration produced an increasing iterate (by {increase:e}) at row {row}")]
    NonMonotoneIterate { row: usize, increase: f64 },
    #[error("singular system: {0}")]
    SingularSystem(String),
    #[error("invalid problem: {0}")]
    InvalidProblem(String),
    #[error("PDE evaluation is not supported for this policy: {0}")]
    UnsupportedPolicy(String),
    #[error(transparent)]
    Lattice(#[from] LatticeError),
    #[error(transparent)]
    Belief(#[from] BeliefError),
    #[error(transparent)]
    Policy(#[from] PolicyError),
}

pub type Result<T> = std::result::Result<T, SolveError>;

/// Time discretization of the finite-horizon solvers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    Explicit,
    Implicit,
    Hybrid,
}

/// Scheme label recorded in a [`SolveReport`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SchemeKind {
    Explicit,
    Implicit,
    Hybrid,
    Stationary,
}

impl From<Scheme> for SchemeKind {
    fn from(s: Scheme) -> Self {
        match s {
            Scheme::Explicit => SchemeKind::Explicit,
            Scheme::Implicit => SchemeKind::Implicit,
            Scheme::Hybrid => SchemeKind::Hybrid,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolveReport {
    pub scheme: SchemeKind,
    /// Total Howard (policy) iterations over all steps and rows.
    pub iterations: usize,
    /// Largest sup-norm defect of the discrete equations over all steps.
    pub max_residual: f64,
    /// Seconds.
    pub wall_time: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolveOptions {
    /// Sup-norm value change that stops Howard iteration.
    pub howard_tol: f64,
    pub howard_max_iter: usize,
    /// Stopping tolerance of the Gauss–Seidel solves used for multi-arm
    /// Howard steps.
    pub linear_tol: f64,
    pub linear_max_sweeps: usize,
    /// Keep every `k`-th time slice in addition to `t = 0` and `t = 1`.
    pub keep_every: Option<usize>,
    /// Record the control chosen at every node and time slice.
    pub record_controls: bool,
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self {
            howard_tol: 1e-9,
            howard_max_iter: 100,
            linear_tol: 1e-10,
            linear_max_sweeps: 100_000,
            keep_every: None,
            record_controls: false,
        }
    }
}

impl SolveOptions {
    pub fn with_controls(mut self) -> Self {
        self.record_controls = true;
        self
    }

    pub fn keeping_every(mut self, k: usize) -> Self {
        self.keep_every = Some(k.max(1));
        self
    }

    fn keeps(&self, m: usize, nt: usize) -> bool {
        m == 0 || m == nt || self.keep_every.is_some_and(|k| m % k == 0)
    }
}

/// Which PDE to solve.
#[derive(Debug, Clone)]
pub enum ProblemKind {
    FiniteHorizonOptimal,
    PolicyRisk(PolicySpec),
    /// Batch length as a fraction of the horizon.
    Batched { dt_batch: f64 },
    Discounted { beta: f64 },
    BestArm,
}

#[derive(Debug, Clone)]
pub struct ProblemSpec {
    pub kind: ProblemKind,
    /// One independent prior per arm.
    pub priors: Vec<PriorSpec>,
    pub arms: ArmModel,
}

impl ProblemSpec {
    pub fn new(kind: ProblemKind, priors: Vec<PriorSpec>, arms: ArmModel) -> Result<Self> {
        let p = Self { kind, priors, arms };
        p.validate()?;
        Ok(p)
    }

    /// Finite-horizon optimal problem for one arm.
    pub fn one_arm(prior: PriorSpec, sigma: f64) -> Result<Self> {
        Self::new(
            ProblemKind::FiniteHorizonOptimal,
            vec![prior],
            ArmModel::one_arm(sigma)?,
        )
    }

    pub fn with_kind(&self, kind: ProblemKind) -> Result<Self> {
        Self::new(kind, self.priors.clone(), self.arms.clone())
    }

    pub fn validate(&self) -> Result<()> {
        if self.priors.len() != self.arms.arms() {
            return Err(BeliefError::ArmCountMismatch {
                priors: self.priors.len(),
                arms: self.arms.arms(),
            }
            .into());
        }
        for p in &self.priors {
            p.validate()?;
        }
        match &self.kind {
            ProblemKind::Discounted { beta } if !(beta.is_finite() && *beta > 0.0) => Err(
                SolveError::InvalidProblem(format!("discount rate must be positive, got {beta}")),
            ),
            ProblemKind::Batched { dt_batch } if !(*dt_batch > 0.0 && *dt_batch <= 1.0) => Err(
                SolveError::InvalidProblem(format!("batch length must lie in (0, 1], got {dt_batch}")),
            ),
            ProblemKind::BestArm if self.arms.arms() < 2 => Err(SolveError::InvalidProblem(
                "best-arm identification needs at least two arms".into(),
            )),
            _ => Ok(()),
        }
    }

    pub fn sigma(&self) -> f64 {
        self.arms.sigma(0)
    }
}

/// Retained slices, recorded controls and diagnostics of a solve.
#[derive(Debug, Clone)]
pub struct Solution {
    /// Retained slices in increasing time order; always contains `t = 0`
    /// and, for finite horizons, `t = 1`.
    pub slices: Vec<ValueField>,
    pub controls: Option<ControlTable>,
    pub report: SolveReport,
}

impl Solution {
    pub fn initial(&self) -> &ValueField {
        &self.slices[0]
    }

    pub fn slice(&self, time_index: usize) -> Option<&ValueField> {
        self.slices.iter().find(|s| s.time_index == time_index)
    }

    /// `V(0)` at the origin of the state space.
    pub fn value_at_origin(&self) -> f64 {
        let f = self.initial();
        let k = f.grid.arms();
        f.interpolate(&vec![(0.0, 0.0); k])
    }
}

/// Collects retained slices while marching backward.
pub(crate) struct SliceSink {
    grid: GridSpec,
    opts: SolveOptions,
    slices: Vec<ValueField>,
    started: Instant,
}

impl SliceSink {
    pub(crate) fn new(grid: &GridSpec, opts: &SolveOptions) -> Self {
        Self {
            grid: grid.clone(),
            opts: *opts,
            slices: Vec::new(),
            started: Instant::now(),
        }
    }

    pub(crate) fn offer(&mut self, m: usize, values: &[f64]) -> Result<()> {
        if self.opts.keeps(m, self.grid.nt()) {
            self.slices
                .push(ValueField::new(self.grid.clone(), m, values.to_vec())?);
        }
        Ok(())
    }

    pub(crate) fn finish(
        mut self,
        scheme: SchemeKind,
        iterations: usize,
        max_residual: f64,
        controls: Option<ControlTable>,
    ) -> Solution {
        self.slices.sort_by_key(|s| s.time_index);
        Solution {
            slices: self.slices,
            controls,
            report: SolveReport {
                scheme,
                iterations,
                max_residual,
                wall_time: self.started.elapsed().as_secs_f64(),
            },
        }
    }
}
