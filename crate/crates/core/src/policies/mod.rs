//! Policy families, control tables extracted from solved value functions,
//! and stopping-boundary diagnostics.

pub mod boundary;
pub mod table;

use std::sync::Arc;

use rayon::prelude::*;
use thiserror::Error;

use crate::beliefs::{normal, ArmModel, BeliefError, MultiArmIntegrator, PriorSpec};
use crate::lattice::{GridSpec, LatticeError};
use crate::{MultiState, State};

pub use boundary::{extract_stopping_boundary, thompson_continuity_check, StoppingBoundary};
pub use table::{ControlTable, PiecewiseConstantTable};

#[derive(Debug, Error)]
pub enum PolicyError {
    #[error("invalid policy parameter: {0}")]
    InvalidParameter(String),
    #[error("state ({x}, {q}) lies outside the policy grid")]
    OutOfGrid { x: f64, q: f64 },
    #[error("policy expects {expected} arms, got {got}")]
    ArmMismatch { expected: usize, got: usize },
    #[error("{0}")]
    Unsupported(String),
    #[error(transparent)]
    Belief(#[from] BeliefError),
    #[error(transparent)]
    Lattice(#[from] LatticeError),
}

pub type Result<T> = std::result::Result<T, PolicyError>;

/// A policy rule mapping the sufficient state to a pull probability (one
/// arm) or a distribution over arms.
#[derive(Debug, Clone)]
pub enum PolicySpec {
    /// Controls recorded by a Howard / hybrid solve.
    OptimalFromValue(Arc<ControlTable>),
    /// Posterior probability that pulling is optimal under the exact
    /// likelihood of the reward family.
    Thompson,
    /// Thompson rule on the Gaussian (score-based) approximate posterior.
    ApproxThompson,
    /// `𝟙{x/q + √(2δ ln n / q) ≥ 0}`; `tuned` replaces `δ ln n` with
    /// `ln(1 + j (ln j)²)` at period `j`.
    Ucb { delta: f64, horizon: usize, tuned: bool },
    PiecewiseTable(Arc<PiecewiseConstantTable>),
    ConstantProb(f64),
}

impl PolicySpec {
    pub fn ucb(delta: f64, horizon: usize) -> Result<Self> {
        if !(delta.is_finite() && delta > 0.0) {
            return Err(PolicyError::InvalidParameter(format!(
                "UCB needs δ > 0, got {delta}"
            )));
        }
        if horizon == 0 {
            return Err(PolicyError::InvalidParameter("UCB needs n ≥ 1".into()));
        }
        Ok(PolicySpec::Ucb {
            delta,
            horizon,
            tuned: false,
        })
    }

    pub fn constant(p: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&p) {
            return Err(PolicyError::InvalidParameter(format!(
                "pull probability must lie in [0, 1], got {p}"
            )));
        }
        Ok(PolicySpec::ConstantProb(p))
    }

    pub fn name(&self) -> &'static str {
        match self {
            PolicySpec::OptimalFromValue(_) => "optimal",
            PolicySpec::Thompson => "thompson",
            PolicySpec::ApproxThompson => "approx_thompson",
            PolicySpec::Ucb { .. } => "ucb",
            PolicySpec::PiecewiseTable(_) => "batched",
            PolicySpec::ConstantProb(_) => "constant",
        }
    }

    /// Whether the rule ignores `t`.
    pub fn is_time_invariant(&self) -> bool {
        match self {
            PolicySpec::Thompson | PolicySpec::ApproxThompson | PolicySpec::ConstantProb(_) => true,
            PolicySpec::Ucb { tuned, .. } => !tuned,
            PolicySpec::OptimalFromValue(_) | PolicySpec::PiecewiseTable(_) => false,
        }
    }

    /// Deterministic rules that never resume pulling once they stop; a
    /// simulation may stop early after the first no-pull.
    pub fn is_retirement(&self) -> bool {
        match self {
            PolicySpec::Ucb { tuned, .. } => !tuned,
            PolicySpec::OptimalFromValue(t) => t.is_retirement(),
            PolicySpec::ConstantProb(p) => *p == 0.0,
            _ => false,
        }
    }

    /// Why the policy-risk PDE cannot evaluate this rule, if it cannot.
    pub fn pde_unsupported_reason(&self) -> Option<&'static str> {
        match self {
            PolicySpec::Ucb { .. } => Some("UCB is discontinuous in the state; use Monte Carlo"),
            PolicySpec::PiecewiseTable(_) => {
                Some("batched rules depend on the state at the batch start; use Monte Carlo")
            }
            _ => None,
        }
    }

    /// Pull probability of a one-armed policy at `s`.
    pub fn act(&self, s: &State, ctx: &BeliefContext) -> Result<f64> {
        if ctx.arms.arms() != 1 {
            return Err(PolicyError::ArmMismatch {
                expected: 1,
                got: ctx.arms.arms(),
            });
        }
        let sigma = ctx.arms.sigma(0);
        let p = match self {
            PolicySpec::Thompson => match ctx.likelihood {
                Likelihood::Gaussian => ctx.priors[0].prob_nonnegative(sigma, s.x, s.q),
                Likelihood::CenteredBernoulli { horizon } => {
                    bernoulli_prob_nonnegative(&ctx.priors[0], horizon, s.x, s.q)
                }
            },
            PolicySpec::ApproxThompson => ctx.priors[0].prob_nonnegative(sigma, s.x, s.q),
            PolicySpec::Ucb {
                delta,
                horizon,
                tuned,
            } => ucb_index(s.x, s.q, s.t, *delta, *horizon, *tuned)
                .map_or(1.0, |v| if v >= 0.0 { 1.0 } else { 0.0 }),
            PolicySpec::OptimalFromValue(table) => {
                ctx.check_grid(table.grid(), s.x, s.q)?;
                table.pull_probability(s.x, s.q, s.t)
            }
            PolicySpec::PiecewiseTable(table) => {
                ctx.check_grid(table.grid(), s.x, s.q)?;
                let b = table.batch_index(s.t);
                table.pull_probability(b, s.x, s.q)
            }
            PolicySpec::ConstantProb(p) => *p,
        };
        Ok(p.clamp(0.0, 1.0))
    }

    /// Distribution over arms of a `K`-armed policy at `s`.
    pub fn act_multi(&self, s: &MultiState, ctx: &BeliefContext) -> Result<Vec<f64>> {
        let k = ctx.arms.arms();
        if s.arms() != k {
            return Err(PolicyError::ArmMismatch {
                expected: k,
                got: s.arms(),
            });
        }
        let point: Vec<(f64, f64)> = s.x.iter().copied().zip(s.q.iter().copied()).collect();
        let one_hot = |a: usize| {
            let mut v = vec![0.0; k];
            v[a] = 1.0;
            v
        };
        match self {
            PolicySpec::Thompson | PolicySpec::ApproxThompson => Ok(ctx
                .integrator
                .best_arm_probabilities(&ctx.priors, &ctx.arms, &s.x, &s.q)?),
            PolicySpec::Ucb {
                delta,
                horizon,
                tuned,
            } => {
                let mut best = (0, f64::NEG_INFINITY);
                for a in 0..k {
                    match ucb_index(s.x[a], s.q[a], s.t, *delta, *horizon, *tuned) {
                        None => return Ok(one_hot(a)),
                        Some(v) if v > best.1 => best = (a, v),
                        Some(_) => {}
                    }
                }
                Ok(one_hot(best.0))
            }
            PolicySpec::OptimalFromValue(table) => {
                for &(x, q) in &point {
                    ctx.check_grid(table.grid(), x, q)?;
                }
                Ok(one_hot(table.arm_at(&point, s.t) as usize))
            }
            PolicySpec::PiecewiseTable(table) => {
                Ok(one_hot(table.arm_at(table.batch_index(s.t), &point) as usize))
            }
            PolicySpec::ConstantProb(_) => Err(PolicyError::Unsupported(
                "constant pull probability is defined for one arm".into(),
            )),
        }
    }

    /// `π(s)` at every node of a one-armed grid at time slice `m`.
    pub fn pull_probability_grid(
        &self,
        grid: &GridSpec,
        ctx: &BeliefContext,
        m: usize,
    ) -> Result<Vec<f64>> {
        if let PolicySpec::OptimalFromValue(table) = self {
            if table.grid().x_axes() == grid.x_axes() && table.grid().q_axis() == grid.q_axis() && table.grid().nt() == grid.nt() {
                return Ok((0..grid.spatial_len())
                    .map(|n| if table.pull(m, n) { 1.0 } else { 0.0 })
                    .collect());
            }
        }
        let xs = grid.x_axis(0).nodes();
        let qs = grid.q_axis().nodes();
        let nx = xs.len();
        let t = grid.time(m);
        (0..grid.spatial_len())
            .into_par_iter()
            .map(|n| self.act(&State::new(xs[n % nx], qs[n / nx], t), ctx))
            .collect()
    }
}

/// UCB index, `None` when `q = 0` (unexplored arm).
fn ucb_index(x: f64, q: f64, t: f64, delta: f64, horizon: usize, tuned: bool) -> Option<f64> {
    if q <= 0.0 {
        return None;
    }
    let n = horizon as f64;
    let log_term = if tuned {
        let j = (t * n).max(1.0);
        (1.0 + j * j.ln().powi(2)).ln()
    } else {
        delta * n.ln()
    };
    Some(x / q + (2.0 * log_term / q).sqrt())
}

/// `P(h ≥ 0 | data)` under ±1 rewards with `P(+1) = (1 + h/√n)/2`, where
/// `x = Σ Y/√n` over the `qn` pulls so far.
fn bernoulli_prob_nonnegative(prior: &PriorSpec, horizon: usize, x: f64, q: f64) -> f64 {
    let n = horizon as f64;
    let rn = n.sqrt();
    let pulls = (q * n).round();
    let plus = ((pulls + rn * x) / 2.0).round().clamp(0.0, pulls);
    let minus = pulls - plus;
    let loglik = |h: f64| -> f64 {
        let (a, b) = (1.0 + h / rn, 1.0 - h / rn);
        if a < 0.0 || b < 0.0 {
            return f64::NEG_INFINITY;
        }
        let lp = if plus > 0.0 { plus * a.ln() } else { 0.0 };
        let lm = if minus > 0.0 { minus * b.ln() } else { 0.0 };
        lp + lm
    };
    match prior {
        PriorSpec::Discrete { atoms } => {
            let logs: Vec<f64> = atoms
                .iter()
                .map(|&(h, p)| if p > 0.0 { p.ln() + loglik(h) } else { f64::NEG_INFINITY })
                .collect();
            let top = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let (mut pos, mut tot) = (0.0, 0.0);
            for (&(h, _), &l) in atoms.iter().zip(&logs) {
                let w = (l - top).exp();
                tot += w;
                if h >= 0.0 {
                    pos += w;
                }
            }
            pos / tot
        }
        PriorSpec::Gaussian { mean, sd } => {
            // trapezoid rule on the admissible range |h| ≤ √n
            let lo = (mean - 12.0 * sd).max(-rn);
            let hi = (mean + 12.0 * sd).min(rn);
            if hi <= lo {
                return if mean >= &0.0 { 1.0 } else { 0.0 };
            }
            let m = 4000;
            let step = (hi - lo) / m as f64;
            let logs: Vec<(f64, f64)> = (0..=m)
                .map(|i| {
                    let h = lo + i as f64 * step;
                    let z = (h - mean) / sd;
                    (h, -0.5 * z * z + loglik(h))
                })
                .collect();
            let top = logs.iter().map(|l| l.1).fold(f64::NEG_INFINITY, f64::max);
            let (mut pos, mut tot) = (0.0, 0.0);
            for (i, &(h, l)) in logs.iter().enumerate() {
                let w = (l - top).exp() * if i == 0 || i == m { 0.5 } else { 1.0 };
                tot += w;
                if h >= 0.0 {
                    pos += w;
                }
            }
            pos / tot
        }
    }
}

/// How observations enter the posterior used by Thompson sampling.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Likelihood {
    Gaussian,
    /// ±1 rewards over a horizon of `n` periods.
    CenteredBernoulli { horizon: usize },
}

/// Everything a policy needs besides the state.
#[derive(Debug, Clone)]
pub struct BeliefContext {
    pub priors: Vec<PriorSpec>,
    pub arms: ArmModel,
    pub likelihood: Likelihood,
    /// Clamp out-of-grid states before table lookups instead of failing.
    pub clamp_to_grid: bool,
    pub integrator: MultiArmIntegrator,
}

impl BeliefContext {
    pub fn gaussian(priors: Vec<PriorSpec>, arms: ArmModel) -> Self {
        Self {
            priors,
            arms,
            likelihood: Likelihood::Gaussian,
            clamp_to_grid: true,
            integrator: MultiArmIntegrator::default(),
        }
    }

    pub fn one_arm(prior: PriorSpec, sigma: f64) -> Result<Self> {
        Ok(Self::gaussian(vec![prior], ArmModel::one_arm(sigma)?))
    }

    pub fn with_likelihood(mut self, likelihood: Likelihood) -> Self {
        self.likelihood = likelihood;
        self
    }

    fn check_grid(&self, grid: &GridSpec, x: f64, q: f64) -> Result<()> {
        if self.clamp_to_grid {
            return Ok(());
        }
        let inside = grid.x_axes().iter().any(|a| a.contains(x)) && grid.q_axis().contains(q);
        if inside {
            Ok(())
        } else {
            Err(PolicyError::OutOfGrid { x, q })
        }
    }
}

/// `Φ(mean/sd)`-style Thompson probability for a Gaussian posterior.
pub fn gaussian_thompson(mean: f64, sd: f64) -> f64 {
    if sd <= 0.0 {
        return if mean >= 0.0 { 1.0 } else { 0.0 };
    }
    normal::cdf(mean / sd)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ctx() -> BeliefContext {
        BeliefContext::one_arm(PriorSpec::gaussian(0.0, 50.0).unwrap(), 5.0).unwrap()
    }

    #[test]
    fn thompson_at_origin_is_half() {
        let p = PolicySpec::Thompson.act(&State::ORIGIN, &ctx()).unwrap();
        assert!((p - 0.5).abs() < 1e-15);
    }

    #[test]
    fn ucb_example() {
        let pol = PolicySpec::ucb(7.8, 100).unwrap();
        let s = State::new(0.5, 0.25, 0.3);
        let idx = ucb_index(0.5, 0.25, 0.3, 7.8, 100, false).unwrap();
        // 2 + √(2·7.8·ln 100 / 0.25)
        assert!((idx - (2.0 + (2.0 * 7.8 * 100f64.ln() / 0.25).sqrt())).abs() < 1e-12);
        assert!((idx - 18.95).abs() < 0.01);
        assert_eq!(pol.act(&s, &ctx()).unwrap(), 1.0);
        assert_eq!(pol.act(&State::new(-100.0, 0.0, 0.5), &ctx()).unwrap(), 1.0);
        assert_eq!(pol.act(&State::new(-10.0, 0.5, 0.5), &ctx()).unwrap(), 0.0);
        assert!(PolicySpec::ucb(0.0, 10).is_err());
    }

    #[test]
    fn thompson_matches_approx_for_gaussian_rewards() {
        let c = ctx();
        for &(x, q) in &[(0.0, 0.0), (1.3, 0.2), (-4.0, 0.9)] {
            let s = State::new(x, q, q);
            assert_eq!(
                PolicySpec::Thompson.act(&s, &c).unwrap(),
                PolicySpec::ApproxThompson.act(&s, &c).unwrap()
            );
        }
    }

    #[test]
    fn bernoulli_thompson_close_to_gaussian_approximation() {
        let prior = PriorSpec::two_point(-1.0, 1.0, 0.5).unwrap();
        let n = 10_000;
        let c = BeliefContext::one_arm(prior.clone(), 1.0)
            .unwrap()
            .with_likelihood(Likelihood::CenteredBernoulli { horizon: n });
        // 5000 pulls with 40 more +1 than -1 outcomes
        let s = State::new(40.0 / 100.0, 0.5, 0.5);
        let exact = PolicySpec::Thompson.act(&s, &c).unwrap();
        let approx = PolicySpec::ApproxThompson.act(&s, &c).unwrap();
        assert!((exact - approx).abs() < 2e-3, "{exact} vs {approx}");
        assert!(exact > 0.5);
    }

    #[test]
    fn constant_policy_bounds() {
        assert!(PolicySpec::constant(1.5).is_err());
        assert_eq!(PolicySpec::constant(0.3).unwrap().act(&State::ORIGIN, &ctx()).unwrap(), 0.3);
    }

    #[test]
    fn multi_arm_ucb_explores_unpulled_first() {
        let arms = ArmModel::new(vec![1.0, 1.0]).unwrap();
        let c = BeliefContext::gaussian(vec![PriorSpec::gaussian(0.0, 1.0).unwrap(); 2], arms);
        let pol = PolicySpec::ucb(1.0, 100).unwrap();
        let s = MultiState {
            x: vec![0.5, 0.0],
            q: vec![0.1, 0.0],
            t: 0.1,
        };
        assert_eq!(pol.act_multi(&s, &c).unwrap(), vec![0.0, 1.0]);
        let p = PolicySpec::Thompson.act_multi(&MultiState::origin(2), &c).unwrap();
        assert!((p[0] - 0.5).abs() < 1e-10 && (p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }
}
