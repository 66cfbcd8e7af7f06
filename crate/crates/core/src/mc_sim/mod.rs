//! Fixed-horizon bandit simulation under the local scaling `μ_n = μ/√n`.
//!
//! Regret is reported in scaled-reward units, so a never-pull rule facing
//! `μ > 0` accumulates `μ` over the horizon.

pub mod rng;
pub mod stats;

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::beliefs::{parametric_sufficient_update, PriorSpec, ScoreSufficientStat};
use crate::lattice::io::fmt_sig;
use crate::policies::{BeliefContext, PolicyError, PolicySpec};
use crate::{MultiState, State};

use rng::RepStreams;
pub use stats::Summary;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("μ = {mu} gives |μ|/√n > 1, outside the ±1 reward family at n = {horizon}")]
    InvalidMu { mu: f64, horizon: usize },
    #[error("invalid simulation setting: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Policy(#[from] PolicyError),
}

pub type Result<T> = std::result::Result<T, SimError>;

/// Reward distribution of one arm with mean `μ/√n`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum RewardFamily {
    GaussianShift { sigma: f64 },
    /// `±1` with `P(+1) = (1 + μ/√n)/2`; unit variance at `μ = 0`.
    CenteredBernoulli,
}

impl RewardFamily {
    pub fn gaussian(sigma: f64) -> Result<Self> {
        if !(sigma.is_finite() && sigma > 0.0) {
            return Err(SimError::InvalidConfig(format!("reward sd must be positive, got {sigma}")));
        }
        Ok(RewardFamily::GaussianShift { sigma })
    }

    fn check_mu(&self, mu: f64, horizon: usize) -> Result<()> {
        if let RewardFamily::CenteredBernoulli = self {
            if !(mu.abs() <= (horizon as f64).sqrt()) {
                return Err(SimError::InvalidMu { mu, horizon });
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Estimator {
    /// Expected per-period regret given the action probability.
    #[default]
    MeanGap,
    /// Realized reward shortfall against the best arm's draw.
    RealizedReward,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimConfig {
    /// Horizon `n` that sets the local scaling.
    pub horizon: usize,
    pub reps: usize,
    pub seed: u64,
    #[serde(default)]
    pub estimator: Estimator,
    /// Weight period `j` by `exp(-β j/n)`.
    #[serde(default)]
    pub discount: Option<f64>,
    /// Simulated periods; defaults to the horizon.
    #[serde(default)]
    pub periods: Option<usize>,
}

impl SimConfig {
    pub fn new(horizon: usize, reps: usize, seed: u64) -> Self {
        Self {
            horizon,
            reps,
            seed,
            estimator: Estimator::MeanGap,
            discount: None,
            periods: None,
        }
    }

    pub fn with_estimator(mut self, estimator: Estimator) -> Self {
        self.estimator = estimator;
        self
    }

    pub fn discounted(mut self, beta: f64, periods: usize) -> Self {
        self.discount = Some(beta);
        self.periods = Some(periods);
        self
    }

    pub fn periods(&self) -> usize {
        self.periods.unwrap_or(self.horizon)
    }

    pub fn validate(&self) -> Result<()> {
        if self.horizon == 0 {
            return Err(SimError::InvalidConfig("horizon must be at least 1".into()));
        }
        if self.reps == 0 {
            return Err(SimError::InvalidConfig("at least one replication is needed".into()));
        }
        if let Some(b) = self.discount {
            if !(b.is_finite() && b > 0.0) {
                return Err(SimError::InvalidConfig(format!("discount rate must be positive, got {b}")));
            }
        }
        if self.periods == Some(0) {
            return Err(SimError::InvalidConfig("periods must be at least 1".into()));
        }
        Ok(())
    }

    fn weight(&self, j: usize) -> f64 {
        match self.discount {
            Some(beta) => (-beta * j as f64 / self.horizon as f64).exp(),
            None => 1.0,
        }
    }

    /// `Σ_{j ≥ from} w_j`.
    fn weight_tail(&self, from: usize) -> f64 {
        let end = self.periods();
        match self.discount {
            None => end.saturating_sub(from) as f64,
            Some(beta) => {
                let r = (-beta / self.horizon as f64).exp();
                if from >= end {
                    return 0.0;
                }
                r.powi(from as i32) * (1.0 - r.powi((end - from) as i32)) / (1.0 - r)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicationResult {
    pub cumulative_regret: f64,
    /// One arm: periods that pulled. `K` arms: periods spent on an arm
    /// whose mean is below the best.
    pub pulls: usize,
    pub seed: u64,
    pub rep: u64,
}

/// Simulates one replication with fixed local parameters `mu` (one per arm).
///
/// `families` holds one reward family per arm. A one-armed experiment
/// compares the risky arm against a safe arm paying zero.
pub fn run_episode(
    policy: &PolicySpec,
    ctx: &BeliefContext,
    mu: &[f64],
    families: &[RewardFamily],
    cfg: &SimConfig,
    rep: u64,
) -> Result<ReplicationResult> {
    cfg.validate()?;
    let k = ctx.arms.arms();
    if mu.len() != k || families.len() != k {
        return Err(SimError::InvalidConfig(format!(
            "{k} arms need {k} means and reward families, got {} and {}",
            mu.len(),
            families.len()
        )));
    }
    for (f, &m) in families.iter().zip(mu) {
        f.check_mu(m, cfg.horizon)?;
    }
    let mut streams = RepStreams::new(cfg.seed, rep, k);
    if k == 1 {
        one_arm_episode(policy, ctx, mu[0], families[0], cfg, &mut streams, rep)
    } else {
        multi_arm_episode(policy, ctx, mu, families, cfg, &mut streams, rep)
    }
}

#[inline]
fn draw(family: RewardFamily, mu: f64, rn: f64, streams: &mut RepStreams, arm: usize) -> f64 {
    match family {
        RewardFamily::GaussianShift { sigma } => mu / rn + sigma * streams.normal(arm),
        RewardFamily::CenteredBernoulli => {
            if streams.uniform(arm) < 0.5 * (1.0 + mu / rn) {
                1.0
            } else {
                -1.0
            }
        }
    }
}

fn one_arm_episode(
    policy: &PolicySpec,
    ctx: &BeliefContext,
    mu: f64,
    family: RewardFamily,
    cfg: &SimConfig,
    streams: &mut RepStreams,
    rep: u64,
) -> Result<ReplicationResult> {
    let n = cfg.horizon;
    let nf = n as f64;
    let rn = nf.sqrt();
    let best = if mu >= 0.0 { 1.0 } else { 0.0 };
    let early_exit = cfg.estimator == Estimator::MeanGap && policy.is_retirement();
    let mut stat = ScoreSufficientStat::default();
    let (mut regret, mut pulls) = (0.0, 0usize);
    for j in 0..cfg.periods() {
        let s = State::new(stat.x, stat.q, j as f64 / nf);
        let p = policy.act(&s, ctx)?;
        if early_exit && p == 0.0 {
            regret += mu / nf * best * cfg.weight_tail(j);
            break;
        }
        let pull = streams.uniform_action() < p;
        let y = draw(family, mu, rn, streams, 0);
        let w = cfg.weight(j);
        regret += w * match cfg.estimator {
            Estimator::MeanGap => mu / nf * (best - p),
            Estimator::RealizedReward => y / rn * (best - if pull { 1.0 } else { 0.0 }),
        };
        if pull {
            pulls += 1;
            stat = match family {
                RewardFamily::GaussianShift { .. } => ScoreSufficientStat {
                    x: stat.x + y / rn,
                    q: stat.q + 1.0 / nf,
                },
                RewardFamily::CenteredBernoulli => parametric_sufficient_update(stat, y, 1.0, n),
            };
        }
    }
    Ok(ReplicationResult {
        cumulative_regret: regret,
        pulls,
        seed: cfg.seed,
        rep,
    })
}

fn multi_arm_episode(
    policy: &PolicySpec,
    ctx: &BeliefContext,
    mu: &[f64],
    families: &[RewardFamily],
    cfg: &SimConfig,
    streams: &mut RepStreams,
    rep: u64,
) -> Result<ReplicationResult> {
    let k = mu.len();
    let nf = cfg.horizon as f64;
    let rn = nf.sqrt();
    let top = mu.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let best_arm = mu.iter().position(|&m| m == top).unwrap_or(0);
    let mut s = MultiState::origin(k);
    let mut ys = vec![0.0; k];
    let (mut regret, mut pulls) = (0.0, 0usize);
    for j in 0..cfg.periods() {
        s.t = j as f64 / nf;
        let probs = policy.act_multi(&s, ctx)?;
        let u = streams.uniform_action();
        let mut arm = k - 1;
        let mut acc = 0.0;
        for (a, &p) in probs.iter().enumerate() {
            acc += p;
            if u < acc {
                arm = a;
                break;
            }
        }
        for (a, y) in ys.iter_mut().enumerate() {
            *y = draw(families[a], mu[a], rn, streams, a);
        }
        let w = cfg.weight(j);
        regret += w * match cfg.estimator {
            Estimator::MeanGap => {
                probs.iter().zip(mu).map(|(p, m)| p * (top - m)).sum::<f64>() / nf
            }
            Estimator::RealizedReward => (ys[best_arm] - ys[arm]) / rn,
        };
        if mu[arm] < top {
            pulls += 1;
        }
        let (x, q) = match families[arm] {
            RewardFamily::GaussianShift { .. } => (s.x[arm] + ys[arm] / rn, s.q[arm] + 1.0 / nf),
            RewardFamily::CenteredBernoulli => {
                let st = parametric_sufficient_update(
                    ScoreSufficientStat { x: s.x[arm], q: s.q[arm] },
                    ys[arm],
                    1.0,
                    cfg.horizon,
                );
                (st.x, st.q)
            }
        };
        s.x[arm] = x;
        s.q[arm] = q;
    }
    Ok(ReplicationResult {
        cumulative_regret: regret,
        pulls,
        seed: cfg.seed,
        rep,
    })
}

/// Monte-Carlo Bayes risk: each replication draws its local parameters from
/// `priors` (one per arm) and runs one episode.
pub fn bayes_risk_mc(
    policy: &PolicySpec,
    ctx: &BeliefContext,
    priors: &[PriorSpec],
    families: &[RewardFamily],
    cfg: &SimConfig,
) -> Result<Summary> {
    cfg.validate()?;
    let regrets = (0..cfg.reps as u64)
        .into_par_iter()
        .map(|rep| {
            let mut streams = RepStreams::new(cfg.seed, rep, 0);
            let mu: Vec<f64> = priors.iter().map(|p| p.sample(&mut streams.prior)).collect();
            // Bernoulli draws need |μ| ≤ √n; clamp the rare prior tail
            let lim = (cfg.horizon as f64).sqrt();
            let mu: Vec<f64> = mu
                .iter()
                .zip(families)
                .map(|(&m, f)| match f {
                    RewardFamily::CenteredBernoulli => m.clamp(-lim, lim),
                    RewardFamily::GaussianShift { .. } => m,
                })
                .collect();
            run_episode(policy, ctx, &mu, families, cfg, rep).map(|r| r.cumulative_regret)
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(Summary::from_sample(&regrets))
}

/// Frequentist regret of a one-armed policy at each `μ` in `mu_grid`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RiskProfile {
    pub mu_grid: Vec<f64>,
    pub mean_regret: Vec<f64>,
    pub iqr: Vec<(f64, f64)>,
    pub stderr: Vec<f64>,
    pub reps: usize,
}

impl RiskProfile {
    /// CSV with columns `mu,mean,p25,p75,stderr`.
    pub fn write_csv<W: Write>(&self, mut w: W, comment: Option<&str>) -> std::io::Result<()> {
        if let Some(c) = comment {
            writeln!(w, "# {c}")?;
        }
        writeln!(w, "mu,mean,p25,p75,stderr")?;
        for i in 0..self.mu_grid.len() {
            writeln!(
                w,
                "{},{},{},{},{}",
                fmt_sig(self.mu_grid[i]),
                fmt_sig(self.mean_regret[i]),
                fmt_sig(self.iqr[i].0),
                fmt_sig(self.iqr[i].1),
                fmt_sig(self.stderr[i])
            )?;
        }
        Ok(())
    }
}

/// Replication `r` uses the same random streams at every `μ`, so the
/// profile is smooth in `μ` up to policy discontinuities.
pub fn frequentist_profile(
    policy: &PolicySpec,
    ctx: &BeliefContext,
    mu_grid: &[f64],
    family: RewardFamily,
    cfg: &SimConfig,
) -> Result<RiskProfile> {
    cfg.validate()?;
    if mu_grid.is_empty() {
        return Err(SimError::InvalidConfig("the μ grid is empty".into()));
    }
    let reps = cfg.reps;
    let regrets = (0..mu_grid.len() * reps)
        .into_par_iter()
        .map(|idx| {
            let (i, rep) = (idx / reps, idx % reps);
            run_episode(policy, ctx, &[mu_grid[i]], &[family], cfg, rep as u64)
                .map(|r| r.cumulative_regret)
        })
        .collect::<Result<Vec<f64>>>()?;
    let mut profile = RiskProfile {
        mu_grid: mu_grid.to_vec(),
        mean_regret: Vec::with_capacity(mu_grid.len()),
        iqr: Vec::with_capacity(mu_grid.len()),
        stderr: Vec::with_capacity(mu_grid.len()),
        reps,
    };
    for chunk in regrets.chunks(reps) {
        let s = Summary::from_sample(chunk);
        profile.mean_regret.push(s.mean);
        profile.iqr.push((s.p25, s.p75));
        profile.stderr.push(s.stderr);
    }
    Ok(profile)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ctx() -> BeliefContext {
        BeliefContext::one_arm(PriorSpec::gaussian(0.0, 1.0).unwrap(), 1.0).unwrap()
    }

    #[test]
    fn never_and_always_pull_closed_forms() {
        let cfg = SimConfig::new(50, 1, 3);
        let g = [RewardFamily::gaussian(1.0).unwrap()];
        let never = PolicySpec::constant(0.0).unwrap();
        let r = run_episode(&never, &ctx(), &[1.3], &g, &cfg, 0).unwrap();
        assert!((r.cumulative_regret - 1.3).abs() < 1e-12);
        assert_eq!(r.pulls, 0);
        let always = PolicySpec::constant(1.0).unwrap();
        let r = run_episode(&always, &ctx(), &[-0.7], &g, &cfg, 0).unwrap();
        assert!((r.cumulative_regret - 0.7).abs() < 1e-12);
        assert_eq!(r.pulls, 50);
        let r = run_episode(&PolicySpec::Thompson, &ctx(), &[0.0], &g, &cfg, 0).unwrap();
        assert_eq!(r.cumulative_regret, 0.0);
    }

    #[test]
    fn bernoulli_range_is_checked() {
        let cfg = SimConfig::new(4, 1, 0);
        let err = run_episode(
            &PolicySpec::Thompson,
            &ctx(),
            &[2.5],
            &[RewardFamily::CenteredBernoulli],
            &cfg,
            0,
        );
        assert!(matches!(err, Err(SimError::InvalidMu { .. })));
    }

    #[test]
    fn discount_tail_matches_sum() {
        let cfg = SimConfig::new(20, 1, 0).discounted(0.7, 60);
        let direct: f64 = (13..60).map(|j| cfg.weight(j)).sum();
        assert!((cfg.weight_tail(13) - direct).abs() < 1e-12);
    }

    #[test]
    fn early_exit_matches_full_simulation() {
        let ctx = ctx();
        let ucb = PolicySpec::ucb(1.0, 200).unwrap();
        let cfg = SimConfig::new(200, 1, 9);
        let g = [RewardFamily::gaussian(1.0).unwrap()];
        for rep in 0..20 {
            let fast = run_episode(&ucb, &ctx, &[0.4], &g, &cfg, rep).unwrap();
            let mut regret = 0.0;
            let mut s = State::ORIGIN;
            let mut streams = RepStreams::new(9, rep, 1);
            for j in 0..200 {
                s.t = j as f64 / 200.0;
                let p = ucb.act(&s, &ctx).unwrap();
                streams.uniform_action();
                let y = 0.4 / 200f64.sqrt() + streams.normal(0);
                regret += 0.4 / 200.0 * (1.0 - p);
                if p == 1.0 {
                    s.x += y / 200f64.sqrt();
                    s.q += 1.0 / 200.0;
                }
            }
            assert!((fast.cumulative_regret - regret).abs() < 1e-12, "rep {rep}");
        }
    }
}
