//! Numerical solvers for diffusion-asymptotic bandit experiments.
//!
//! The crate computes minimal Bayes risk, the Bayes risk of a given policy,
//! optimal batched (piecewise-constant) policies and least-favorable-prior
//! minimax solutions by solving Hamilton–Jacobi–Bellman equations with
//! monotone upwind finite differences. A fixed-horizon Monte-Carlo bandit
//! simulator validates the PDE numbers against finite-`n` regret.
//!
//! Module map:
//!
//! * [`beliefs`]: priors, posteriors and the payoff moments that enter the PDE
//!   coefficients.
//! * [`lattice`]: grids, stencils, sparse operators and value-field I/O.
//! * [`hjb`]: time-stepping and stationary solvers.
//! * [`policies`]: policy families, control tables and stopping boundaries.
//! * [`mc_sim`]: fixed-horizon bandit simulation.
//! * [`minimax`]: least-favorable prior search.

pub mod beliefs;
pub mod hjb;
pub mod lattice;
pub mod mc_sim;
pub mod minimax;
pub mod policies;

pub use beliefs::{ArmModel, PosteriorMoments, PriorSpec, ScoreSufficientStat};
pub use hjb::{ProblemKind, ProblemSpec, Scheme, SolveError, SolveOptions, SolveReport};
pub use lattice::{Axis, GridSpec, ValueField};
pub use mc_sim::RewardFamily;
pub use policies::{BeliefContext, PolicySpec};

/// Point in the one-armed state space: scaled cumulative reward `x`,
/// pull fraction `q` and time `t`.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct State {
    pub x: f64,
    pub q: f64,
    pub t: f64,
}

impl State {
    pub const ORIGIN: State = State { x: 0.0, q: 0.0, t: 0.0 };

    pub fn new(x: f64, q: f64, t: f64) -> Self {
        Self { x, q, t }
    }
}

/// State of a `K`-armed experiment: per-arm `(x_k, q_k)` plus time.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct MultiState {
    pub x: Vec<f64>,
    pub q: Vec<f64>,
    pub t: f64,
}

impl MultiState {
    pub fn origin(arms: usize) -> Self {
        Self {
            x: vec![0.0; arms],
            q: vec![0.0; arms],
            t: 0.0,
        }
    }

    pub fn arms(&self) -> usize {
        self.x.len()
    }
}
