//! Experiment configuration (TOML). Every table rejects unknown keys and
//! every field has a default, so an empty file runs the default experiment.

use std::path::{Path, PathBuf};

use banditpde::minimax::{LfpState, SearchConfig};
use banditpde::{ArmModel, Axis, GridSpec, PriorSpec, Scheme, SolveOptions};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub output_dir: PathBuf,
    /// Worker threads; 0 lets the runtime decide.
    pub threads: usize,
    pub problem: ProblemConfig,
    /// One prior per arm.
    pub priors: Vec<PriorSpec>,
    pub arms: ArmsConfig,
    pub grid: GridConfig,
    pub solver: SolverConfig,
    pub policy: PolicyConfig,
    pub mc: McConfig,
    pub sweep: SweepConfig,
    pub minimax: MinimaxConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            seed: 20_240_601,
            output_dir: PathBuf::from("out"),
            threads: 0,
            problem: ProblemConfig::default(),
            priors: vec![PriorSpec::Gaussian { mean: 0.0, sd: 50.0 }],
            arms: ArmsConfig::default(),
            grid: GridConfig::default(),
            solver: SolverConfig::default(),
            policy: PolicyConfig::default(),
            mc: McConfig::default(),
            sweep: SweepConfig::default(),
            minimax: MinimaxConfig::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ProblemVariant {
    #[default]
    Optimal,
    PolicyRisk,
    Batched,
    Discounted,
    BestArm,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProblemConfig {
    pub kind: ProblemVariant,
    pub dt_batch: f64,
    pub beta: f64,
}

impl Default for ProblemConfig {
    fn default() -> Self {
        Self {
            kind: ProblemVariant::Optimal,
            dt_batch: 0.25,
            beta: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ArmsConfig {
    /// Reward sd per arm; a single value is shared by all arms.
    pub sigma: Vec<f64>,
}

impl Default for ArmsConfig {
    fn default() -> Self {
        Self { sigma: vec![5.0] }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum GridPreset {
    /// `Δx = σ/1000`, `Δq = 1/500`, `Δt = 1/1000`.
    #[default]
    Fine,
    /// `Δx = σ/200`, `Δq = 1/100`, `Δt = 1/200`.
    Desk,
    Custom,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridConfig {
    pub preset: GridPreset,
    /// Half-width of each x axis in units of that arm's σ (custom grids).
    pub x_halfwidth: f64,
    pub nx: usize,
    pub nq: usize,
    pub nt: usize,
}

impl Default for GridConfig {
    fn default() -> Self {
        Self {
            preset: GridPreset::Fine,
            x_halfwidth: 2.5,
            nx: 1001,
            nq: 101,
            nt: 200,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SchemeName {
    Explicit,
    Implicit,
    Hybrid,
}

impl From<SchemeName> for Scheme {
    fn from(s: SchemeName) -> Self {
        match s {
            SchemeName::Explicit => Scheme::Explicit,
            SchemeName::Implicit => Scheme::Implicit,
            SchemeName::Hybrid => Scheme::Hybrid,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverConfig {
    pub scheme: SchemeName,
    pub howard_tol: f64,
    pub howard_max_iter: usize,
    /// Also write every k-th time slice as a binary value field.
    pub keep_every: Option<usize>,
}

impl Default for SolverConfig {
    fn default() -> Self {
        let d = SolveOptions::default();
        Self {
            scheme: SchemeName::Implicit,
            howard_tol: d.howard_tol,
            howard_max_iter: d.howard_max_iter,
            keep_every: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum PolicyName {
    #[default]
    Thompson,
    ApproxThompson,
    Ucb,
    Constant,
    Optimal,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PolicyConfig {
    pub kind: PolicyName,
    pub delta: f64,
    pub tuned: bool,
    /// Pull probability of the constant rule.
    pub p: f64,
}

impl Default for PolicyConfig {
    fn default() -> Self {
        Self {
            kind: PolicyName::Thompson,
            delta: 7.8,
            tuned: false,
            p: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct McConfig {
    pub reps: usize,
    pub horizons: Vec<usize>,
    pub realized_reward: bool,
}

impl Default for McConfig {
    fn default() -> Self {
        Self {
            reps: 5000,
            horizons: vec![200, 500, 1000, 2500, 5000],
            realized_reward: false,
        }
    }
}

/// Prior sd and reward sd values swept by `eval-policy`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepConfig {
    pub nu: Vec<f64>,
    pub sigma: Vec<f64>,
    /// Also estimate each policy risk by Monte Carlo at this horizon.
    pub mc_horizon: Option<usize>,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            nu: vec![50.0],
            sigma: vec![5.0],
            mc_horizon: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MinimaxConfig {
    pub start: [f64; 3],
    pub rates: [f64; 3],
    pub support_step: f64,
    pub p_step: f64,
    pub max_iter: usize,
    pub mu_min: f64,
    pub mu_max: f64,
    pub mu_step: f64,
    pub horizon: usize,
    pub reps: usize,
    pub scheme: SchemeName,
    /// Grid for the Bayes responses inside the search (σ = 1).
    pub search_grid: GridConfig,
}

impl Default for MinimaxConfig {
    fn default() -> Self {
        let s = SearchConfig::default();
        let i = LfpState::initial();
        Self {
            start: [i.mu_lo, i.mu_hi, i.p],
            rates: s.rates,
            support_step: s.support_step,
            p_step: s.p_step,
            max_iter: s.max_iter,
            mu_min: -6.0,
            mu_max: 6.0,
            mu_step: 0.1,
            horizon: s.sim.horizon,
            reps: s.sim.reps,
            scheme: SchemeName::Implicit,
            search_grid: GridConfig {
                preset: GridPreset::Desk,
                ..GridConfig::default()
            },
        }
    }
}

impl ExperimentConfig {
    pub fn load(path: Option<&Path>) -> Result<(Self, String), CliError> {
        let text = match path {
            Some(p) => std::fs::read_to_string(p)
                .map_err(|e| CliError::Config(format!("{}: {e}", p.display())))?,
            None => String::new(),
        };
        let cfg = Self::parse(&text)?;
        Ok((cfg, text))
    }

    /// Parses and validates; errors carry the offending key and line.
    pub fn parse(text: &str) -> Result<Self, CliError> {
        let cfg: Self = toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn apply_env(&mut self) -> Result<(), CliError> {
        if let Ok(dir) = std::env::var("BANDITPDE_OUTPUT_DIR") {
            if !dir.is_empty() {
                self.output_dir = PathBuf::from(dir);
            }
        }
        if let Ok(t) = std::env::var("BANDITPDE_THREADS") {
            self.threads = t
                .parse()
                .map_err(|_| CliError::Config(format!("BANDITPDE_THREADS must be a count, got {t:?}")))?;
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let bad = |m: String| Err(CliError::Config(m));
        if self.priors.is_empty() {
            return bad("priors: at least one prior is required".into());
        }
        for (k, p) in self.priors.iter().enumerate() {
            p.validate()
                .map_err(|e| CliError::Config(format!("priors[{k}]: {e}")))?;
        }
        if self.arms.sigma.is_empty() || self.arms.sigma.iter().any(|s| !(s.is_finite() && *s > 0.0)) {
            return bad("arms.sigma: reward sds must be positive".into());
        }
        if self.arms.sigma.len() != 1 && self.arms.sigma.len() != self.priors.len() {
            return bad(format!(
                "arms.sigma: expected 1 or {} values, got {}",
                self.priors.len(),
                self.arms.sigma.len()
            ));
        }
        if self.mc.reps == 0 {
            return bad("mc.reps: must be at least 1".into());
        }
        if self.mc.horizons.iter().any(|&n| n == 0) {
            return bad("mc.horizons: horizons must be at least 1".into());
        }
        if self.minimax.reps == 0 || self.minimax.horizon == 0 {
            return bad("minimax: reps and horizon must be at least 1".into());
        }
        if !(self.minimax.mu_step > 0.0 && self.minimax.mu_min < 0.0 && self.minimax.mu_max > 0.0) {
            return bad("minimax: need mu_min < 0 < mu_max and mu_step > 0".into());
        }
        for g in [&self.grid, &self.minimax.search_grid] {
            if g.preset == GridPreset::Custom && (g.nx < 3 || g.nq < 2 || !(g.x_halfwidth > 0.0)) {
                return bad("grid: custom grids need nx ≥ 3, nq ≥ 2 and x_halfwidth > 0".into());
            }
        }
        Ok(())
    }

    /// SHA-256 of the resolved configuration, ignoring where and how wide it runs.
    pub fn hash(&self) -> String {
        let resolved = Self {
            output_dir: PathBuf::new(),
            threads: 0,
            ..self.clone()
        };
        let canonical = toml::to_string(&resolved).expect("configuration serializes");
        let digest = Sha256::digest(canonical.as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn arm_model(&self) -> Result<ArmModel, CliError> {
        let k = self.priors.len();
        let sigma = if self.arms.sigma.len() == 1 {
            vec![self.arms.sigma[0]; k]
        } else {
            self.arms.sigma.clone()
        };
        ArmModel::new(sigma).map_err(|e| CliError::Config(format!("arms: {e}")))
    }

    pub fn solve_options(&self) -> SolveOptions {
        SolveOptions {
            howard_tol: self.solver.howard_tol,
            howard_max_iter: self.solver.howard_max_iter,
            keep_every: self.solver.keep_every,
            ..SolveOptions::default()
        }
    }

    pub fn search_config(&self) -> Result<SearchConfig, CliError> {
        let m = &self.minimax;
        let steps = ((m.mu_max - m.mu_min) / m.mu_step).round() as i64;
        let mu_grid = (0..=steps)
            .map(|i| ((m.mu_min + i as f64 * m.mu_step) * 1e9).round() / 1e9)
            .collect();
        let mut sim = banditpde::mc_sim::SimConfig::new(m.horizon, m.reps, self.seed);
        if self.mc.realized_reward {
            sim = sim.with_estimator(banditpde::mc_sim::Estimator::RealizedReward);
        }
        Ok(SearchConfig {
            rates: m.rates,
            support_step: m.support_step,
            p_step: m.p_step,
            max_iter: m.max_iter,
            mu_grid,
            sim,
            scheme: m.scheme.into(),
            grid: Some(build_grid(&m.search_grid, &[1.0])?),
        })
    }
}

/// Grid for arms with reward sds `sigma`.
pub fn build_grid(g: &GridConfig, sigma: &[f64]) -> Result<GridSpec, CliError> {
    let axes = |nx: usize, half: f64| -> Result<Vec<Axis>, CliError> {
        sigma
            .iter()
            .map(|s| Axis::new(-half * s, half * s, nx).map_err(CliError::from))
            .collect()
    };
    let spec = match g.preset {
        GridPreset::Fine => GridSpec::new(axes(5001, 2.5)?, Axis::new(0.0, 1.0, 501)?, 1000),
        GridPreset::Desk => GridSpec::new(axes(1001, 2.5)?, Axis::new(0.0, 1.0, 101)?, 200),
        GridPreset::Custom => GridSpec::new(axes(g.nx, g.x_halfwidth)?, Axis::new(0.0, 1.0, g.nq)?, g.nt),
    };
    Ok(spec?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_gives_default_experiment() {
        let c = ExperimentConfig::parse("").unwrap();
        assert_eq!(c.priors, vec![PriorSpec::Gaussian { mean: 0.0, sd: 50.0 }]);
        assert_eq!(c.arms.sigma, vec![5.0]);
        let g = build_grid(&c.grid, &[5.0]).unwrap();
        assert!((g.x_axis(0).step() - 5.0 / 1000.0).abs() < 1e-12);
        assert!((g.q_axis().step() - 1.0 / 500.0).abs() < 1e-12);
        assert!((g.dt() - 1.0 / 1000.0).abs() < 1e-15);
    }

    #[test]
    fn unknown_keys_and_bad_values_are_rejected() {
        let e = ExperimentConfig::parse("[solver]\nschem = \"implicit\"\n").unwrap_err();
        assert!(e.to_string().contains("schem"), "{e}");
        let e = ExperimentConfig::parse("[solver]\nscheme = \"crank\"\n").unwrap_err();
        assert!(e.to_string().contains("crank") || e.to_string().contains("variant"), "{e}");
        assert!(ExperimentConfig::parse("[mc]\nreps = 0\n").is_err());
        assert!(ExperimentConfig::parse("[[priors]]\nkind = \"gaussian\"\nmean = 0\nsd = -1\n").is_err());
    }

    #[test]
    fn hash_is_stable_and_sensitive() {
        let a = ExperimentConfig::parse("seed = 1").unwrap();
        let b = ExperimentConfig::parse("seed = 1\n").unwrap();
        let c = ExperimentConfig::parse("seed = 2").unwrap();
        assert_eq!(a.hash(), b.hash());
        assert_ne!(a.hash(), c.hash());
        assert_eq!(a.hash().len(), 64);
        let d = ExperimentConfig::parse("seed = 1\noutput_dir = \"elsewhere\"\nthreads = 3").unwrap();
        assert_eq!(a.hash(), d.hash());
    }

    #[test]
    fn discrete_priors_parse() {
        let c = ExperimentConfig::parse(
            "[[priors]]\nkind = \"discrete\"\natoms = [[-2.5, 0.585], [1.7, 0.415]]\n[arms]\nsigma = [1.0]\n",
        )
        .unwrap();
        let PriorSpec::Discrete { atoms } = &c.priors[0] else {
            panic!("expected a discrete prior");
        };
        assert_eq!(atoms.len(), 2);
        assert_eq!(atoms[1], (1.7, 0.415));
    }
}
