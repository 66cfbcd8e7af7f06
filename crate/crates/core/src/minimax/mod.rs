//! Least-favorable two-point prior and minimax value of the one-armed game.
//!
//! Nature picks a prior on `{μ̲, μ̄}`, the agent answers with the Bayes
//! policy, and nature shifts the support towards the peaks of the agent's
//! frequentist risk profile while moving mass towards the riskier side.
//! The search runs at `σ = 1`; [`rescale_lfp`] maps the result to other
//! noise levels.

use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::beliefs::{BeliefError, PriorSpec};
use crate::hjb::{self, ProblemKind, ProblemSpec, Scheme, SolveError, SolveOptions};
use crate::lattice::{GridSpec, LatticeError};
use crate::mc_sim::{self, RewardFamily, RiskProfile, SimConfig, SimError};
use crate::policies::{BeliefContext, PolicyError, PolicySpec};

#[derive(Debug, Error)]
pub enum MinimaxError {
    #[error("risk profile has no interior peak for μ < 0")]
    NoNegativePeak,
    #[error("risk profile has no interior peak for μ > 0")]
    NoPositivePeak,
    #[error("invalid search state: {0}")]
    InvalidState(String),
    #[error(transparent)]
    Solve(#[from] SolveError),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Belief(#[from] BeliefError),
    #[error(transparent)]
    Policy(#[from] PolicyError),
    #[error(transparent)]
    Lattice(#[from] LatticeError),
}

pub type Result<T> = std::result::Result<T, MinimaxError>;

/// Two-point prior with mass `p` on `mu_hi` and `1 - p` on `mu_lo`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LfpState {
    pub mu_lo: f64,
    pub mu_hi: f64,
    pub p: f64,
    pub iteration: usize,
}

impl LfpState {
    pub fn new(mu_lo: f64, mu_hi: f64, p: f64) -> Result<Self> {
        let s = Self {
            mu_lo,
            mu_hi,
            p,
            iteration: 0,
        };
        s.validate()?;
        Ok(s)
    }

    /// Starting point of the search.
    pub fn initial() -> Self {
        Self {
            mu_lo: -2.5,
            mu_hi: 2.5,
            p: 0.5,
            iteration: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.mu_lo < 0.0 && self.mu_hi > 0.0 && self.p > 0.0 && self.p < 1.0) {
            return Err(MinimaxError::InvalidState(format!(
                "need μ̲ < 0 < μ̄ and p in (0, 1), got ({}, {}, {})",
                self.mu_lo, self.mu_hi, self.p
            )));
        }
        Ok(())
    }

    pub fn prior(&self) -> Result<PriorSpec> {
        Ok(PriorSpec::two_point(self.mu_lo, self.mu_hi, self.p)?)
    }

    /// Same support and weights, ignoring the iteration counter.
    pub fn same_point(&self, other: &LfpState) -> bool {
        self.mu_lo == other.mu_lo && self.mu_hi == other.mu_hi && self.p == other.p
    }
}

/// Support points scale with `σ`; the weights do not.
pub fn rescale_lfp(lfp: &LfpState, sigma: f64) -> LfpState {
    LfpState {
        mu_lo: lfp.mu_lo * sigma,
        mu_hi: lfp.mu_hi * sigma,
        ..*lfp
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SearchConfig {
    /// Learning rates for `μ̲`, `μ̄` and `p`.
    pub rates: [f64; 3],
    /// Rounding unit of the support points.
    pub support_step: f64,
    /// Rounding unit of `p`.
    pub p_step: f64,
    pub max_iter: usize,
    pub mu_grid: Vec<f64>,
    pub sim: SimConfig,
    pub scheme: Scheme,
    /// Desk grid at `σ = 1` when absent.
    #[serde(skip)]
    pub grid: Option<GridSpec>,
}

impl Default for SearchConfig {
    fn default() -> Self {
        Self {
            rates: [0.1; 3],
            support_step: 0.05,
            p_step: 0.005,
            max_iter: 50,
            mu_grid: (-60..=60).map(|i| i as f64 / 10.0).collect(),
            sim: SimConfig::new(2000, 4000, 0x5eed),
            scheme: Scheme::Implicit,
            grid: None,
        }
    }
}

impl SearchConfig {
    pub fn grid(&self) -> Result<GridSpec> {
        match &self.grid {
            Some(g) => Ok(g.clone()),
            None => Ok(GridSpec::desk(1.0)?),
        }
    }
}

/// Risk peaks located on each side of zero.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Peaks {
    pub mu_left: f64,
    pub risk_left: f64,
    pub mu_right: f64,
    pub risk_right: f64,
}

impl Peaks {
    /// `|R^l − R^r| / min(R^l, R^r)`.
    pub fn gap(&self) -> f64 {
        (self.risk_left - self.risk_right).abs() / self.risk_left.min(self.risk_right)
    }
}

/// Highest interior local maximum of the 3-point moving average on each
/// side of zero, ties going to the larger `|μ|`.
pub fn find_peaks(profile: &RiskProfile) -> Result<Peaks> {
    let mu = &profile.mu_grid;
    let r = &profile.mean_regret;
    let n = r.len();
    let smooth: Vec<f64> = (0..n)
        .map(|i| {
            let lo = i.saturating_sub(1);
            let hi = (i + 1).min(n - 1);
            r[lo..=hi].iter().sum::<f64>() / (hi - lo + 1) as f64
        })
        .collect();
    let pick = |negative: bool| -> Option<(f64, f64)> {
        let mut best: Option<(f64, f64)> = None;
        for i in 1..n.saturating_sub(1) {
            if (mu[i] < 0.0) != negative || mu[i] == 0.0 {
                continue;
            }
            if smooth[i] < smooth[i - 1] || smooth[i] < smooth[i + 1] {
                continue;
            }
            let better = match best {
                None => true,
                Some((m, v)) => smooth[i] > v || (smooth[i] == v && mu[i].abs() > m.abs()),
            };
            if better {
                best = Some((mu[i], smooth[i]));
            }
        }
        best
    };
    let (mu_left, risk_left) = pick(true).ok_or(MinimaxError::NoNegativePeak)?;
    let (mu_right, risk_right) = pick(false).ok_or(MinimaxError::NoPositivePeak)?;
    Ok(Peaks {
        mu_left,
        risk_left,
        mu_right,
        risk_right,
    })
}

fn round_to(v: f64, step: f64) -> f64 {
    // dividing by an integral count keeps 1.7 as the nearest double
    let per_unit = (1.0 / step).round();
    if (per_unit * step - 1.0).abs() < 1e-12 {
        (v * per_unit).round() / per_unit
    } else {
        (v / step).round() * step
    }
}

/// Moves the state towards the observed peaks, then rounds it.
pub fn update_state(state: &LfpState, peaks: &Peaks, cfg: &SearchConfig) -> LfpState {
    let [a1, a2, a3] = cfg.rates;
    let mu_lo = state.mu_lo + a1 * (peaks.mu_left - state.mu_lo) / peaks.mu_left.abs();
    let mu_hi = state.mu_hi + a2 * (peaks.mu_right - state.mu_hi) / peaks.mu_right;
    let p = state.p
        + a3 * (peaks.risk_right - peaks.risk_left) / peaks.risk_left.min(peaks.risk_right);
    LfpState {
        mu_lo: round_to(mu_lo, cfg.support_step).min(-cfg.support_step),
        mu_hi: round_to(mu_hi, cfg.support_step).max(cfg.support_step),
        p: round_to(p, cfg.p_step).clamp(cfg.p_step, 1.0 - cfg.p_step),
        iteration: state.iteration + 1,
    }
}

/// Optimal policy under the two-point prior `state` at `σ = 1`.
pub fn bayes_policy(state: &LfpState, grid: &GridSpec, scheme: Scheme) -> Result<(f64, PolicySpec)> {
    let problem = ProblemSpec::one_arm(state.prior()?, 1.0)?;
    let sol = hjb::solve_optimal(&problem, grid, scheme, &SolveOptions::default().with_controls())?;
    let value = sol.value_at_origin();
    let table = sol.controls.expect("controls were requested");
    Ok((value, PolicySpec::OptimalFromValue(Arc::new(table))))
}

/// Diagnostics of one search step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub state: LfpState,
    pub bayes_value: f64,
    pub peaks: Peaks,
    pub next: LfpState,
}

/// One round of the game: Bayes response, risk profile, peaks, update.
pub fn lfp_iterate(state: &LfpState, cfg: &SearchConfig) -> Result<IterationRecord> {
    state.validate()?;
    let grid = cfg.grid()?;
    let (bayes_value, policy) = bayes_policy(state, &grid, cfg.scheme)?;
    let ctx = BeliefContext::one_arm(state.prior()?, 1.0)?;
    let profile = mc_sim::frequentist_profile(
        &policy,
        &ctx,
        &cfg.mu_grid,
        RewardFamily::gaussian(1.0)?,
        &cfg.sim,
    )?;
    let peaks = find_peaks(&profile)?;
    Ok(IterationRecord {
        state: *state,
        bayes_value,
        peaks,
        next: update_state(state, &peaks, cfg),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchOutcome {
    pub state: LfpState,
    /// The rounded state repeated before `max_iter` was reached.
    pub converged: bool,
    pub history: Vec<IterationRecord>,
}

/// Iterates until the rounded state repeats, calling `log` after each step.
pub fn search(
    start: &LfpState,
    cfg: &SearchConfig,
    mut log: impl FnMut(&IterationRecord),
) -> Result<SearchOutcome> {
    start.validate()?;
    let mut state = *start;
    let mut history = Vec::new();
    for _ in 0..cfg.max_iter {
        let rec = lfp_iterate(&state, cfg)?;
        log(&rec);
        let next = rec.next;
        history.push(rec);
        if next.same_point(&state) {
            return Ok(SearchOutcome {
                state: next,
                converged: true,
                history,
            });
        }
        state = next;
    }
    Ok(SearchOutcome {
        state,
        converged: false,
        history,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GameReport {
    /// `V*(0)` under the least-favorable prior.
    pub minimax_value: f64,
    pub lfp: LfpState,
    /// `|R^l − R^r| / min(R^l, R^r)` of the Bayes policy's risk profile.
    pub equilibrium_gap: f64,
    pub thompson_value: f64,
    pub thompson_ratio: f64,
}

/// Minimax value and Thompson comparison under `lfp` on `grid` (`σ = 1`).
pub fn evaluate_equilibrium(lfp: &LfpState, grid: &GridSpec, cfg: &SearchConfig) -> Result<GameReport> {
    lfp.validate()?;
    let (minimax_value, policy) = bayes_policy(lfp, grid, cfg.scheme)?;
    let prior = lfp.prior()?;
    let ts = ProblemSpec::one_arm(prior.clone(), 1.0)?.with_kind(ProblemKind::PolicyRisk(PolicySpec::Thompson))?;
    let thompson_value =
        hjb::solve_policy_risk(&ts, grid, Scheme::Implicit, &SolveOptions::default())?.value_at_origin();
    let ctx = BeliefContext::one_arm(prior, 1.0)?;
    let profile = mc_sim::frequentist_profile(
        &policy,
        &ctx,
        &cfg.mu_grid,
        RewardFamily::gaussian(1.0)?,
        &cfg.sim,
    )?;
    let equilibrium_gap = find_peaks(&profile)?.gap();
    Ok(GameReport {
        minimax_value,
        lfp: *lfp,
        equilibrium_gap,
        thompson_value,
        thompson_ratio: thompson_value / minimax_value,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn profile(mu: Vec<f64>, r: Vec<f64>) -> RiskProfile {
        let n = mu.len();
        RiskProfile {
            mu_grid: mu,
            mean_regret: r,
            iqr: vec![(0.0, 0.0); n],
            stderr: vec![0.0; n],
            reps: 1,
        }
    }

    #[test]
    fn rescale_composes() {
        let s = LfpState::new(-2.5, 1.7, 0.415).unwrap();
        assert_eq!(rescale_lfp(&s, 1.0), s);
        let r = rescale_lfp(&s, 5.0);
        assert_eq!((r.mu_lo, r.mu_hi, r.p), (-12.5, 8.5, 0.415));
        assert_eq!(rescale_lfp(&rescale_lfp(&s, 2.0), 2.0), rescale_lfp(&s, 4.0));
    }

    #[test]
    fn peaks_and_symmetric_update() {
        let mu: Vec<f64> = (-6..=6).map(|i| i as f64 * 0.5).collect();
        let r: Vec<f64> = mu.iter().map(|&m: &f64| (-(m.abs() - 1.5).powi(2)).exp()).collect();
        let pk = find_peaks(&profile(mu, r)).unwrap();
        assert_eq!((pk.mu_left, pk.mu_right), (-1.5, 1.5));
        let cfg = SearchConfig::default();
        let s = LfpState::new(-1.5, 1.5, 0.4).unwrap();
        let next = update_state(&s, &pk, &cfg);
        assert_eq!((next.mu_lo, next.mu_hi, next.p), (-1.5, 1.5, 0.4));
        assert_eq!(next.iteration, 1);
    }

    #[test]
    fn monotone_side_is_an_error() {
        let mu: Vec<f64> = (-4..=4).map(|i| i as f64).collect();
        let r = vec![4.0, 3.0, 2.0, 1.0, 0.0, 1.0, 2.0, 1.0, 0.5];
        assert!(matches!(
            find_peaks(&profile(mu.clone(), r)),
            Err(MinimaxError::NoNegativePeak)
        ));
        let r = vec![0.5, 1.0, 2.0, 1.0, 0.0, 1.0, 2.0, 3.0, 4.0];
        assert!(matches!(
            find_peaks(&profile(mu, r)),
            Err(MinimaxError::NoPositivePeak)
        ));
    }

    #[test]
    fn zero_iterations_return_start() {
        let cfg = SearchConfig {
            max_iter: 0,
            ..SearchConfig::default()
        };
        let out = search(&LfpState::initial(), &cfg, |_| {}).unwrap();
        assert_eq!(out.state, LfpState::initial());
        assert!(!out.converged);
    }
}
