//! Priors on the scaled mean reward, posteriors given the sufficient state,
//! and the payoff moments `μ(s)`, `σ(s)`, `μ⁺(s)` and `μ^max(s)` used as PDE
//! coefficients.

pub mod normal;
pub mod quadrature;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use quadrature::StdNormalRule;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BeliefError {
    #[error("gaussian prior needs a positive finite sd, got {0}")]
    InvalidPriorSd(f64),
    #[error("gaussian prior mean must be finite, got {0}")]
    InvalidPriorMean(f64),
    #[error("discrete prior has no atoms")]
    EmptyPrior,
    #[error("discrete prior probabilities sum to {0}, expected 1")]
    ProbabilitySum(f64),
    #[error("discrete prior atom {index} has invalid probability {prob}")]
    NegativeProbability { index: usize, prob: f64 },
    #[error("discrete prior atoms must be finite and strictly increasing (atom {index})")]
    UnsortedAtoms { index: usize },
    #[error("reward sd must be positive and finite, got {0}")]
    InvalidSigma(f64),
    #[error("arm model needs at least one arm")]
    NoArms,
    #[error("pull fraction must be non-negative, got {0}")]
    NegativeQ(f64),
    #[error("every posterior weight underflowed")]
    AllWeightsUnderflow,
    #[error("gaussian quadrature for E[max] supports at most 3 gaussian arms, got {0}")]
    UnsupportedK(usize),
    #[error("{priors} priors supplied for {arms} arms")]
    ArmCountMismatch { priors: usize, arms: usize },
}

pub type Result<T> = std::result::Result<T, BeliefError>;

/// Prior on the scaled mean reward `μ`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum PriorSpec {
    Gaussian { mean: f64, sd: f64 },
    /// Atoms `(μ_i, p_i)`, sorted strictly increasing in `μ_i`.
    Discrete { atoms: Vec<(f64, f64)> },
}

impl PriorSpec {
    pub fn gaussian(mean: f64, sd: f64) -> Result<Self> {
        let p = PriorSpec::Gaussian { mean, sd };
        p.validate()?;
        Ok(p)
    }

    pub fn discrete(atoms: Vec<(f64, f64)>) -> Result<Self> {
        let p = PriorSpec::Discrete { atoms };
        p.validate()?;
        Ok(p)
    }

    /// Mass `1 - p_hi` at `lo` and `p_hi` at `hi`.
    pub fn two_point(lo: f64, hi: f64, p_hi: f64) -> Result<Self> {
        Self::discrete(vec![(lo, 1.0 - p_hi), (hi, p_hi)])
    }

    pub fn degenerate(value: f64) -> Self {
        PriorSpec::Discrete {
            atoms: vec![(value, 1.0)],
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            PriorSpec::Gaussian { mean, sd } => {
                if !mean.is_finite() {
                    return Err(BeliefError::InvalidPriorMean(*mean));
                }
                if !(sd.is_finite() && *sd > 0.0) {
                    return Err(BeliefError::InvalidPriorSd(*sd));
                }
                Ok(())
            }
            PriorSpec::Discrete { atoms } => {
                if atoms.is_empty() {
                    return Err(BeliefError::EmptyPrior);
                }
                let mut total = 0.0;
                for (index, &(mu, prob)) in atoms.iter().enumerate() {
                    if !(prob.is_finite() && prob >= 0.0) {
                        return Err(BeliefError::NegativeProbability { index, prob });
                    }
                    if !mu.is_finite() || (index > 0 && mu <= atoms[index - 1].0) {
                        return Err(BeliefError::UnsortedAtoms { index });
                    }
                    total += prob;
                }
                if (total - 1.0).abs() > 1e-12 {
                    return Err(BeliefError::ProbabilitySum(total));
                }
                Ok(())
            }
        }
    }

    pub fn mean(&self) -> f64 {
        match self {
            PriorSpec::Gaussian { mean, .. } => *mean,
            PriorSpec::Discrete { atoms } => atoms.iter().map(|(m, p)| m * p).sum(),
        }
    }

    pub fn sd(&self) -> f64 {
        match self {
            PriorSpec::Gaussian { sd, .. } => *sd,
            PriorSpec::Discrete { atoms } => {
                let m = self.mean();
                atoms
                    .iter()
                    .map(|(v, p)| p * (v - m) * (v - m))
                    .sum::<f64>()
                    .sqrt()
            }
        }
    }

    /// Largest `|μ|` in the support, `None` for unbounded priors.
    pub fn support_bound(&self) -> Option<f64> {
        match self {
            PriorSpec::Gaussian { .. } => None,
            PriorSpec::Discrete { atoms } => {
                Some(atoms.iter().map(|(m, _)| m.abs()).fold(0.0, f64::max))
            }
        }
    }

    /// Prior with every support point (or mean and sd) multiplied by `factor > 0`.
    pub fn scaled(&self, factor: f64) -> Self {
        match self {
            PriorSpec::Gaussian { mean, sd } => PriorSpec::Gaussian {
                mean: mean * factor,
                sd: sd * factor,
            },
            PriorSpec::Discrete { atoms } => PriorSpec::Discrete {
                atoms: atoms.iter().map(|&(m, p)| (m * factor, p)).collect(),
            },
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match self {
            PriorSpec::Gaussian { mean, sd } => {
                let z: f64 = StandardNormal.sample(rng);
                mean + sd * z
            }
            PriorSpec::Discrete { atoms } => {
                let u: f64 = rng.gen();
                let mut acc = 0.0;
                for &(m, p) in atoms {
                    acc += p;
                    if u < acc {
                        return m;
                    }
                }
                atoms[atoms.len() - 1].0
            }
        }
    }

    /// Posterior moments at `(x, q)` for rewards with sd `sigma`.
    pub fn posterior(&self, sigma: f64, x: f64, q: f64) -> PosteriorMoments {
        match self {
            PriorSpec::Gaussian { mean, sd } => gaussian_posterior(*mean, *sd, sigma, x, q),
            PriorSpec::Discrete { atoms } => discrete_moments(atoms, sigma, x, q),
        }
    }

    /// Posterior probability `P(μ ≥ 0 | x, q)`.
    pub fn prob_nonnegative(&self, sigma: f64, x: f64, q: f64) -> f64 {
        match self {
            PriorSpec::Gaussian { mean, sd } => {
                let m = gaussian_posterior(*mean, *sd, sigma, x, q);
                normal::cdf(m.mean / m.sd.unwrap_or(f64::MIN_POSITIVE))
            }
            PriorSpec::Discrete { atoms } => {
                let shift = max_log_weight(atoms, sigma, x, q);
                let (mut pos, mut total) = (0.0, 0.0);
                for &(mu, p) in atoms {
                    let w = weight(mu, p, sigma, x, q, shift);
                    total += w;
                    if mu >= 0.0 {
                        pos += w;
                    }
                }
                pos / total
            }
        }
    }
}

/// Posterior summaries. `sd` is only reported for Gaussian posteriors.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PosteriorMoments {
    /// `μ(s) = E[μ | s]`.
    pub mean: f64,
    /// `σ(s)`.
    pub sd: Option<f64>,
    /// `μ⁺(s) = E[max(μ, 0) | s]`.
    pub mu_plus: f64,
    /// `E[max(-μ, 0) | s] = μ⁺(s) - μ(s)`, evaluated without cancellation.
    pub mu_minus: f64,
}

/// Conjugate posterior of a `N(μ₀, ν²)` prior after observing the
/// scaled cumulative reward `x` over pull fraction `q`.
pub fn gaussian_posterior(mu0: f64, nu: f64, sigma: f64, x: f64, q: f64) -> PosteriorMoments {
    let s2 = sigma * sigma;
    let precision = q / s2 + 1.0 / (nu * nu);
    let mean = (x / s2 + mu0 / (nu * nu)) / precision;
    let sd = precision.sqrt().recip();
    PosteriorMoments {
        mean,
        sd: Some(sd),
        mu_plus: normal::gaussian_positive_part(mean, sd),
        mu_minus: normal::gaussian_positive_part(-mean, sd),
    }
}

#[inline]
fn log_weight(mu: f64, p: f64, sigma: f64, x: f64, q: f64) -> f64 {
    if p <= 0.0 {
        return f64::NEG_INFINITY;
    }
    let s2 = sigma * sigma;
    p.ln() + mu * x / s2 - q * mu * mu / (2.0 * s2)
}

#[inline]
fn max_log_weight(atoms: &[(f64, f64)], sigma: f64, x: f64, q: f64) -> f64 {
    atoms
        .iter()
        .map(|&(mu, p)| log_weight(mu, p, sigma, x, q))
        .fold(f64::NEG_INFINITY, f64::max)
}

#[inline]
fn weight(mu: f64, p: f64, sigma: f64, x: f64, q: f64, shift: f64) -> f64 {
    (log_weight(mu, p, sigma, x, q) - shift).exp()
}

fn discrete_moments(atoms: &[(f64, f64)], sigma: f64, x: f64, q: f64) -> PosteriorMoments {
    let shift = max_log_weight(atoms, sigma, x, q);
    let (mut total, mut mean, mut plus, mut minus) = (0.0, 0.0, 0.0, 0.0);
    for &(mu, p) in atoms {
        let w = weight(mu, p, sigma, x, q, shift);
        total += w;
        mean += w * mu;
        plus += w * mu.max(0.0);
        minus += w * (-mu).max(0.0);
    }
    PosteriorMoments {
        mean: mean / total,
        sd: None,
        mu_plus: plus / total,
        mu_minus: minus / total,
    }
}

/// Posterior over a finite-support prior, `w_i ∝ p_i exp(μ_i x/σ² - q μ_i²/(2σ²))`.
///
/// Returns the normalized weights alongside the moments. At `q = 0` the
/// weights are the prior probabilities.
pub fn discrete_posterior(
    prior: &PriorSpec,
    sigma: f64,
    x: f64,
    q: f64,
) -> Result<(Vec<f64>, PosteriorMoments)> {
    let PriorSpec::Discrete { atoms } = prior else {
        panic!("discrete_posterior called with a gaussian prior");
    };
    if q < 0.0 {
        return Err(BeliefError::NegativeQ(q));
    }
    if q == 0.0 && x == 0.0 {
        let w: Vec<f64> = atoms.iter().map(|a| a.1).collect();
        return Ok((w, discrete_moments(atoms, sigma, 0.0, 0.0)));
    }
    let shift = max_log_weight(atoms, sigma, x, q);
    let mut w: Vec<f64> = atoms
        .iter()
        .map(|&(mu, p)| weight(mu, p, sigma, x, q, shift))
        .collect();
    let total: f64 = w.iter().sum();
    if !(total.is_finite() && total > 0.0) {
        return Err(BeliefError::AllWeightsUnderflow);
    }
    w.iter_mut().for_each(|v| *v /= total);
    Ok((w, discrete_moments(atoms, sigma, x, q)))
}

/// Reward standard deviations `σ_k`, one per arm.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArmModel {
    sigma: Vec<f64>,
}

impl ArmModel {
    pub fn new(sigma: Vec<f64>) -> Result<Self> {
        if sigma.is_empty() {
            return Err(BeliefError::NoArms);
        }
        if let Some(&s) = sigma.iter().find(|s| !(s.is_finite() && **s > 0.0)) {
            return Err(BeliefError::InvalidSigma(s));
        }
        Ok(Self { sigma })
    }

    pub fn one_arm(sigma: f64) -> Result<Self> {
        Self::new(vec![sigma])
    }

    pub fn arms(&self) -> usize {
        self.sigma.len()
    }

    pub fn sigma(&self, arm: usize) -> f64 {
        self.sigma[arm]
    }

    pub fn sigmas(&self) -> &[f64] {
        &self.sigma
    }
}

/// `(x, q)` of the normalized score process in a parametric model.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ScoreSufficientStat {
    pub x: f64,
    pub q: f64,
}

/// One pull's contribution: `x += σ² ψ(Y)/√n`, `q += 1/n`.
pub fn parametric_sufficient_update(
    stat: ScoreSufficientStat,
    score_value: f64,
    sigma: f64,
    horizon: usize,
) -> ScoreSufficientStat {
    let n = horizon as f64;
    ScoreSufficientStat {
        x: stat.x + sigma * sigma * score_value / n.sqrt(),
        q: stat.q + 1.0 / n,
    }
}

/// Per-arm posterior used by the multi-arm integrators.
#[derive(Debug, Clone, PartialEq)]
enum ArmPosterior {
    Gaussian { mean: f64, sd: f64 },
    Atoms(Vec<(f64, f64)>),
}

impl ArmPosterior {
    fn new(prior: &PriorSpec, sigma: f64, x: f64, q: f64) -> Self {
        match prior {
            PriorSpec::Gaussian { mean, sd } => {
                let m = gaussian_posterior(*mean, *sd, sigma, x, q);
                ArmPosterior::Gaussian {
                    mean: m.mean,
                    sd: m.sd.unwrap_or(0.0),
                }
            }
            PriorSpec::Discrete { atoms } => {
                let shift = max_log_weight(atoms, sigma, x, q);
                let mut w: Vec<(f64, f64)> = atoms
                    .iter()
                    .map(|&(mu, p)| (mu, weight(mu, p, sigma, x, q, shift)))
                    .filter(|a| a.1 > 0.0)
                    .collect();
                let total: f64 = w.iter().map(|a| a.1).sum();
                w.iter_mut().for_each(|a| a.1 /= total);
                ArmPosterior::Atoms(w)
            }
        }
    }

    fn mean(&self) -> f64 {
        match self {
            ArmPosterior::Gaussian { mean, .. } => *mean,
            ArmPosterior::Atoms(a) => a.iter().map(|(m, p)| m * p).sum(),
        }
    }
}

/// Calls `f(weight, values)` for every joint choice of atoms across the
/// discrete arms; gaussian arms get `NaN` placeholders.
fn for_each_atom_combo(post: &[ArmPosterior], mut f: impl FnMut(f64, &[f64])) {
    let k = post.len();
    let mut idx = vec![0usize; k];
    let mut values = vec![f64::NAN; k];
    loop {
        let mut w = 1.0;
        for (a, p) in post.iter().enumerate() {
            if let ArmPosterior::Atoms(atoms) = p {
                let (v, pa) = atoms[idx[a]];
                values[a] = v;
                w *= pa;
            }
        }
        f(w, &values);
        // odometer increment over discrete arms
        let mut a = 0;
        loop {
            if a == k {
                return;
            }
            if let ArmPosterior::Atoms(atoms) = &post[a] {
                idx[a] += 1;
                if idx[a] < atoms.len() {
                    break;
                }
                idx[a] = 0;
            }
            a += 1;
        }
    }
}

/// Evaluates `E[max_k μ_k | s]` and arm-selection probabilities for
/// independent per-arm priors.
///
/// Gaussian arms are integrated with a tensor Gauss–Hermite rule over all
/// but one of them; the last gaussian arm is integrated in closed form via
/// `E[max(M, Z)] = M + E[(Z - M)⁺]`. Discrete arms are enumerated.
#[derive(Debug, Clone)]
pub struct MultiArmIntegrator {
    rule: StdNormalRule,
}

impl Default for MultiArmIntegrator {
    fn default() -> Self {
        Self::new(StdNormalRule::DEFAULT_NODES)
    }
}

impl MultiArmIntegrator {
    pub fn new(nodes_per_dim: usize) -> Self {
        Self {
            rule: StdNormalRule::new(nodes_per_dim),
        }
    }

    fn posteriors(
        &self,
        priors: &[PriorSpec],
        arms: &ArmModel,
        x: &[f64],
        q: &[f64],
    ) -> Result<Vec<ArmPosterior>> {
        if priors.len() != arms.arms() || x.len() != arms.arms() || q.len() != arms.arms() {
            return Err(BeliefError::ArmCountMismatch {
                priors: priors.len(),
                arms: arms.arms(),
            });
        }
        let gaussians = priors
            .iter()
            .filter(|p| matches!(p, PriorSpec::Gaussian { .. }))
            .count();
        if gaussians > 3 {
            return Err(BeliefError::UnsupportedK(gaussians));
        }
        if let Some(&bad) = q.iter().find(|&&v| v < 0.0) {
            return Err(BeliefError::NegativeQ(bad));
        }
        Ok(priors
            .iter()
            .enumerate()
            .map(|(k, p)| ArmPosterior::new(p, arms.sigma(k), x[k], q[k]))
            .collect())
    }

    /// Per-arm posterior means and `μ^max(s)`.
    pub fn moments(
        &self,
        priors: &[PriorSpec],
        arms: &ArmModel,
        x: &[f64],
        q: &[f64],
    ) -> Result<(Vec<f64>, f64)> {
        let post = self.posteriors(priors, arms, x, q)?;
        let means = post.iter().map(ArmPosterior::mean).collect();
        let gauss: Vec<(f64, f64)> = post
            .iter()
            .filter_map(|p| match p {
                ArmPosterior::Gaussian { mean, sd } => Some((*mean, *sd)),
                ArmPosterior::Atoms(_) => None,
            })
            .collect();
        let mut total = 0.0;
        for_each_atom_combo(&post, |w, values| {
            let c = values
                .iter()
                .filter(|v| !v.is_nan())
                .fold(f64::NEG_INFINITY, |a, &b| a.max(b));
            total += w * self.expected_max_gaussians(c, &gauss);
        });
        Ok((means, total))
    }

    /// `E[max(c, G_1, …, G_m)]` for independent gaussians `(mean, sd)`.
    fn expected_max_gaussians(&self, c: f64, gauss: &[(f64, f64)]) -> f64 {
        let Some((&(m_last, s_last), rest)) = gauss.split_last() else {
            return c;
        };
        let inner = |floor: f64| {
            if floor == f64::NEG_INFINITY {
                m_last
            } else {
                floor + normal::gaussian_positive_part(m_last - floor, s_last)
            }
        };
        match rest {
            [] => inner(c),
            [(m1, s1)] => self.rule.expect(|z| inner(c.max(m1 + s1 * z))),
            [(m1, s1), (m2, s2)] => self.rule.expect(|z1| {
                let v1 = c.max(m1 + s1 * z1);
                self.rule.expect(|z2| inner(v1.max(m2 + s2 * z2)))
            }),
            _ => unreachable!("at most three gaussian arms"),
        }
    }

    /// Posterior probability that each arm has the largest mean.
    pub fn best_arm_probabilities(
        &self,
        priors: &[PriorSpec],
        arms: &ArmModel,
        x: &[f64],
        q: &[f64],
    ) -> Result<Vec<f64>> {
        let post = self.posteriors(priors, arms, x, q)?;
        let k = post.len();
        let mut probs = vec![0.0; k];
        for_each_atom_combo(&post, |w, values| {
            if w == 0.0 {
                return;
            }
            let cdf_at = |j: usize, v: f64| -> f64 {
                match &post[j] {
                    ArmPosterior::Gaussian { mean, sd } => {
                        if *sd > 0.0 {
                            normal::cdf((v - mean) / sd)
                        } else if v >= *mean {
                            1.0
                        } else {
                            0.0
                        }
                    }
                    ArmPosterior::Atoms(_) => {
                        if v >= values[j] {
                            1.0
                        } else {
                            0.0
                        }
                    }
                }
            };
            let discrete_floor = values
                .iter()
                .filter(|v| !v.is_nan())
                .fold(f64::NEG_INFINITY, |a, &b| a.max(b));
            for arm in 0..k {
                let p = match &post[arm] {
                    ArmPosterior::Atoms(_) => {
                        let v = values[arm];
                        let ties = values.iter().filter(|&&u| u == v).count() as f64;
                        (0..k)
                            .filter(|&j| j != arm)
                            .map(|j| match &post[j] {
                                ArmPosterior::Atoms(_) => {
                                    if values[j] <= v {
                                        1.0
                                    } else {
                                        0.0
                                    }
                                }
                                _ => cdf_at(j, v),
                            })
                            .product::<f64>()
                            / ties
                    }
                    ArmPosterior::Gaussian { mean, sd } => {
                        let f = |z: f64| -> f64 {
                            let v = mean + sd * z;
                            (0..k)
                                .filter(|&j| j != arm)
                                .map(|j| cdf_at(j, v))
                                .product()
                        };
                        if discrete_floor == f64::NEG_INFINITY {
                            self.rule.expect(f)
                        } else {
                            // integrand has a jump at the largest atom; integrate
                            // the standard normal density over z ≥ z0 directly
                            let z0 = if *sd > 0.0 {
                                ((discrete_floor - mean) / sd).max(-12.0)
                            } else if *mean >= discrete_floor {
                                -12.0
                            } else {
                                12.0
                            };
                            simpson(|z| normal::pdf(z) * f(z), z0, 12.0_f64.max(z0), 1024)
                        }
                    }
                };
                probs[arm] += w * p;
            }
        });
        let total: f64 = probs.iter().sum();
        if total > 0.0 {
            probs.iter_mut().for_each(|p| *p /= total);
        }
        Ok(probs)
    }
}

fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, intervals: usize) -> f64 {
    if b <= a {
        return 0.0;
    }
    let n = intervals + intervals % 2;
    let h = (b - a) / n as f64;
    let mut s = f(a) + f(b);
    for i in 1..n {
        let w = if i % 2 == 1 { 4.0 } else { 2.0 };
        s += w * f(a + i as f64 * h);
    }
    s * h / 3.0
}

/// Per-arm posterior means and `μ^max(s) = E[max_k μ_k | s]` with the
/// default 64-node rule.
pub fn multiarm_moments(
    priors: &[PriorSpec],
    arms: &ArmModel,
    x: &[f64],
    q: &[f64],
) -> Result<(Vec<f64>, f64)> {
    MultiArmIntegrator::default().moments(priors, arms, x, q)
}
