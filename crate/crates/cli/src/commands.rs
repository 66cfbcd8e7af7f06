use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use banditpde::hjb::{self, ProblemKind, Solution};
use banditpde::lattice::io::{fmt_sig, write_binary, write_csv};
use banditpde::mc_sim::{self, Estimator, RewardFamily, SimConfig, Summary};
use banditpde::minimax::{self, rescale_lfp, GameReport, LfpState};
use banditpde::policies::{extract_stopping_boundary, ControlTable};
use banditpde::{BeliefContext, GridSpec, PolicySpec, PriorSpec, ProblemSpec, Scheme, SolveReport};
use serde::Serialize;

use crate::config::{build_grid, ExperimentConfig, PolicyName, ProblemVariant};
use crate::error::CliError;

/// Shared state of one command run.
pub struct Run {
    pub cfg: ExperimentConfig,
    pub command: &'static str,
    hash: String,
}

#[derive(Serialize)]
struct SolveSummary<'a> {
    command: &'a str,
    config_sha256: &'a str,
    problem: ProblemVariant,
    scheme: banditpde::hjb::SchemeKind,
    value_at_origin: f64,
    iterations: usize,
    max_residual: f64,
}

impl Run {
    pub fn new(cfg: ExperimentConfig, command: &'static str) -> Self {
        let hash = cfg.hash();
        Self { cfg, command, hash }
    }

    fn comment(&self) -> String {
        format!("banditpde {} config_sha256={}", self.command, self.hash)
    }

    fn out(&self, name: &str) -> Result<BufWriter<File>, CliError> {
        fs::create_dir_all(&self.cfg.output_dir)?;
        Ok(BufWriter::new(File::create(self.path(name))?))
    }

    fn path(&self, name: &str) -> PathBuf {
        self.cfg.output_dir.join(name)
    }

    fn write_json<T: Serialize>(&self, name: &str, value: &T) -> Result<(), CliError> {
        let mut w = self.out(name)?;
        serde_json::to_writer_pretty(&mut w, value)?;
        writeln!(w)?;
        w.flush()?;
        Ok(())
    }

    fn problem(&self, kind: ProblemKind) -> Result<ProblemSpec, CliError> {
        Ok(ProblemSpec::new(kind, self.cfg.priors.clone(), self.cfg.arm_model()?)?)
    }

    fn grid(&self) -> Result<GridSpec, CliError> {
        build_grid(&self.cfg.grid, self.cfg.arm_model()?.sigmas())
    }

    fn scheme(&self) -> Scheme {
        self.cfg.solver.scheme.into()
    }

    fn summary(&self, value: f64, report: &SolveReport) -> Result<(), CliError> {
        eprintln!(
            "{}: V(0) = {} ({} Howard iterations, {:.1}s)",
            self.command,
            fmt_sig(value),
            report.iterations,
            report.wall_time
        );
        println!("{}", fmt_sig(value));
        self.write_json(
            "report.json",
            &SolveSummary {
                command: self.command,
                config_sha256: &self.hash,
                problem: self.cfg.problem.kind,
                scheme: report.scheme,
                value_at_origin: value,
                iterations: report.iterations,
                max_residual: report.max_residual,
            },
        )
    }

    fn write_solution(&self, sol: &Solution) -> Result<(), CliError> {
        let comment = self.comment();
        for field in &sol.slices {
            let mut w = self.out(&format!("value_m{:05}.bin", field.time_index))?;
            write_binary(field, &mut w)?;
            w.flush()?;
        }
        let mut w = self.out("value_t0.csv")?;
        write_csv(sol.initial(), &mut w, Some(&comment))?;
        w.flush()?;
        if let Some(table) = &sol.controls {
            self.write_controls(table)?;
        }
        Ok(())
    }

    fn write_controls(&self, table: &ControlTable) -> Result<(), CliError> {
        let comment = self.comment();
        if table.is_binary() {
            let b = extract_stopping_boundary(table)?;
            let mut w = self.out("policy_boundary.csv")?;
            b.write_csv(&mut w, Some(&comment))?;
            w.flush()?;
            return Ok(());
        }
        let grid = table.grid();
        let k = grid.arms();
        let mut w = self.out("policy_map_t0.csv")?;
        writeln!(w, "# {comment}")?;
        let header: Vec<String> = (1..=k).map(|a| format!("x{a},q{a}")).collect();
        writeln!(w, "{},arm", header.join(","))?;
        let mut result = Ok(());
        grid.for_each_node(|n, point| {
            if result.is_err() {
                return;
            }
            let coords: Vec<String> = point
                .iter()
                .map(|&(x, q)| format!("{},{}", fmt_sig(x), fmt_sig(q)))
                .collect();
            result = writeln!(w, "{},{}", coords.join(","), table.arm(0, n));
        });
        result?;
        w.flush()?;
        Ok(())
    }

    /// Solves the optimal problem and returns its value and control table.
    fn optimal(&self, grid: &GridSpec) -> Result<(f64, ControlTable, SolveReport), CliError> {
        let problem = self.problem(ProblemKind::FiniteHorizonOptimal)?;
        let opts = self.cfg.solve_options().with_controls();
        let sol = hjb::solve_optimal(&problem, grid, self.scheme(), &opts)?;
        let v = sol.value_at_origin();
        let table = sol.controls.expect("controls were requested");
        Ok((v, table, sol.report))
    }

    fn policy(&self, horizon: usize, table: Option<&Arc<ControlTable>>) -> Result<PolicySpec, CliError> {
        let p = &self.cfg.policy;
        Ok(match p.kind {
            PolicyName::Thompson => PolicySpec::Thompson,
            PolicyName::ApproxThompson => PolicySpec::ApproxThompson,
            PolicyName::Ucb => PolicySpec::Ucb {
                delta: p.delta,
                horizon,
                tuned: p.tuned,
            },
            PolicyName::Constant => PolicySpec::constant(p.p)?,
            PolicyName::Optimal => PolicySpec::OptimalFromValue(Arc::clone(
                table.expect("optimal policies need a solved table"),
            )),
        })
    }
}

pub fn solve(run: &Run) -> Result<(), CliError> {
    let grid = run.grid()?;
    let opts = run.cfg.solve_options().with_controls();
    match run.cfg.problem.kind {
        ProblemVariant::Optimal => {
            let problem = run.problem(ProblemKind::FiniteHorizonOptimal)?;
            let sol = hjb::solve_optimal(&problem, &grid, run.scheme(), &opts)?;
            run.write_solution(&sol)?;
            run.summary(sol.value_at_origin(), &sol.report)
        }
        ProblemVariant::PolicyRisk => {
            let table = if run.cfg.policy.kind == PolicyName::Optimal {
                Some(Arc::new(run.optimal(&grid)?.1))
            } else {
                None
            };
            let policy = run.policy(grid.nt().max(1), table.as_ref())?;
            if let Some(reason) = policy.pde_unsupported_reason() {
                return Err(CliError::Config(format!(
                    "{} cannot be evaluated by the PDE ({reason})",
                    policy.name()
                )));
            }
            let problem = run.problem(ProblemKind::PolicyRisk(policy))?;
            let sol = hjb::solve_policy_risk(&problem, &grid, run.scheme(), &run.cfg.solve_options())?;
            run.write_solution(&sol)?;
            run.summary(sol.value_at_origin(), &sol.report)
        }
        ProblemVariant::Batched => batched(run),
        ProblemVariant::Discounted => discounted(run),
        ProblemVariant::BestArm => best_arm(run),
    }
}

pub fn batched(run: &Run) -> Result<(), CliError> {
    let grid = run.grid()?;
    let problem = run.problem(ProblemKind::Batched {
        dt_batch: run.cfg.problem.dt_batch,
    })?;
    let sol = hjb::solve_batched(&problem, &grid, &run.cfg.solve_options())?;
    let comment = run.comment();
    let mut w = run.out("value_t0.csv")?;
    write_csv(&sol.values[0], &mut w, Some(&comment))?;
    w.flush()?;
    let table = &sol.table;
    let mut w = run.out("batch_decisions.csv")?;
    writeln!(w, "# {comment}")?;
    if grid.arms() == 1 {
        // smallest pulling x per (batch, q) row, as in the stopping boundary
        writeln!(w, "batch_start,q,x_boundary")?;
        let xs = grid.x_axis(0).nodes();
        let nx = xs.len();
        for (b, &t) in table.batch_times().iter().enumerate() {
            let d = table.decisions(b);
            for (j, q) in grid.q_axis().nodes().into_iter().enumerate() {
                let row = &d[j * nx..(j + 1) * nx];
                let x = match row.iter().position(|&a| a == 1) {
                    None => f64::INFINITY,
                    Some(0) if row.iter().all(|&a| a == 1) => f64::NEG_INFINITY,
                    Some(i) => xs[i],
                };
                writeln!(w, "{},{},{}", fmt_sig(t), fmt_sig(q), fmt_sig(x))?;
            }
        }
    } else {
        writeln!(w, "batch_start,node,arm")?;
        for (b, &t) in table.batch_times().iter().enumerate() {
            for (n, a) in table.decisions(b).iter().enumerate() {
                writeln!(w, "{},{n},{a}", fmt_sig(t))?;
            }
        }
    }
    w.flush()?;
    run.summary(sol.value_at_origin(), &sol.report)
}

pub fn discounted(run: &Run) -> Result<(), CliError> {
    let grid = run.grid()?.with_nt(0);
    let problem = run.problem(ProblemKind::Discounted {
        beta: run.cfg.problem.beta,
    })?;
    let sol = hjb::solve_discounted(&problem, &grid, &run.cfg.solve_options())?;
    run.write_solution(&sol)?;
    run.summary(sol.value_at_origin(), &sol.report)
}

pub fn best_arm(run: &Run) -> Result<(), CliError> {
    let grid = run.grid()?;
    let problem = run.problem(ProblemKind::BestArm)?;
    let opts = run.cfg.solve_options().with_controls();
    let sol = hjb::solve_best_arm(&problem, &grid, run.scheme(), &opts)?;
    run.write_solution(&sol)?;
    run.summary(sol.value_at_origin(), &sol.report)
}

fn families(run: &Run) -> Result<Vec<RewardFamily>, CliError> {
    run.cfg
        .arm_model()?
        .sigmas()
        .iter()
        .map(|&s| RewardFamily::gaussian(s).map_err(CliError::from))
        .collect()
}

fn sim_config(run: &Run, horizon: usize) -> SimConfig {
    let mut sim = SimConfig::new(horizon, run.cfg.mc.reps, run.cfg.seed);
    if run.cfg.mc.realized_reward {
        sim = sim.with_estimator(Estimator::RealizedReward);
    }
    sim
}

fn opt_field(v: Option<f64>) -> String {
    v.map(fmt_sig).unwrap_or_default()
}

/// PDE risk of the configured policy, `None` when the PDE cannot evaluate it.
fn policy_pde_risk(
    run: &Run,
    grid: &GridSpec,
    policy: &PolicySpec,
    optimal_value: Option<f64>,
) -> Result<Option<f64>, CliError> {
    if let PolicySpec::OptimalFromValue(_) = policy {
        return Ok(optimal_value);
    }
    if policy.pde_unsupported_reason().is_some() || run.cfg.priors.len() != 1 {
        return Ok(None);
    }
    let problem = run.problem(ProblemKind::PolicyRisk(policy.clone()))?;
    let sol = hjb::solve_policy_risk(&problem, grid, run.scheme(), &run.cfg.solve_options())?;
    Ok(Some(sol.value_at_origin()))
}

pub fn eval_policy(run: &Run) -> Result<(), CliError> {
    let sweep = &run.cfg.sweep;
    if sweep.nu.is_empty() || sweep.sigma.is_empty() {
        return Err(CliError::Config("sweep: nu and sigma need at least one value".into()));
    }
    if run.cfg.priors.len() != 1 {
        return Err(CliError::Config("eval-policy sweeps one-armed problems".into()));
    }
    let mean = run.cfg.priors[0].mean();
    let mut w = run.out("policy_comparison.csv")?;
    writeln!(w, "# {}", run.comment())?;
    writeln!(w, "nu,sigma,optimal,policy_pde,ratio,mc_mean,mc_stderr")?;
    for &nu in &sweep.nu {
        for &sigma in &sweep.sigma {
            let mut sub = run.cfg.clone();
            sub.priors = vec![PriorSpec::gaussian(mean, nu).map_err(|e| CliError::Config(format!("sweep.nu: {e}")))?];
            sub.arms.sigma = vec![sigma];
            sub.validate()?;
            let r = Run::new(sub, run.command);
            let grid = r.grid()?;
            let (v_opt, table, _) = r.optimal(&grid)?;
            let table = Arc::new(table);
            let horizon = sweep.mc_horizon.unwrap_or(grid.nt().max(1));
            let policy = r.policy(horizon, Some(&table))?;
            let pde = policy_pde_risk(&r, &grid, &policy, Some(v_opt))?;
            let mc = match sweep.mc_horizon {
                Some(n) => Some(mc_sim::bayes_risk_mc(
                    &policy,
                    &BeliefContext::one_arm(r.cfg.priors[0].clone(), sigma)?,
                    &r.cfg.priors,
                    &families(&r)?,
                    &sim_config(&r, n),
                )?),
                None => None,
            };
            if pde.is_none() && mc.is_none() {
                return Err(CliError::Config(format!(
                    "{} cannot be evaluated by the PDE; set sweep.mc_horizon for a Monte-Carlo estimate",
                    policy.name()
                )));
            }
            let risk = pde.or(mc.map(|s| s.mean));
            writeln!(
                w,
                "{},{},{},{},{},{},{}",
                fmt_sig(nu),
                fmt_sig(sigma),
                fmt_sig(v_opt),
                opt_field(pde),
                opt_field(risk.map(|v| v / v_opt)),
                opt_field(mc.map(|s| s.mean)),
                opt_field(mc.map(|s| s.stderr)),
            )?;
            eprintln!("eval-policy: nu={nu} sigma={sigma} V*={} V_pi={}", fmt_sig(v_opt), opt_field(risk));
        }
    }
    w.flush()?;
    Ok(())
}

pub fn simulate(run: &Run) -> Result<(), CliError> {
    if run.cfg.mc.horizons.is_empty() {
        return Err(CliError::Config("mc.horizons: at least one horizon is required".into()));
    }
    let grid = run.grid()?;
    let needs_table = run.cfg.policy.kind == PolicyName::Optimal;
    let (v_opt, table) = if needs_table {
        let (v, t, _) = run.optimal(&grid)?;
        (Some(v), Some(Arc::new(t)))
    } else {
        (None, None)
    };
    let ctx = BeliefContext::gaussian(run.cfg.priors.clone(), run.cfg.arm_model()?);
    let fams = families(run)?;
    let first = run.policy(run.cfg.mc.horizons[0], table.as_ref())?;
    let asymptote = policy_pde_risk(run, &grid, &first, v_opt)?;
    let mut rows: Vec<(usize, Summary)> = Vec::new();
    for &n in &run.cfg.mc.horizons {
        let policy = run.policy(n, table.as_ref())?;
        let s = mc_sim::bayes_risk_mc(&policy, &ctx, &run.cfg.priors, &fams, &sim_config(run, n))?;
        eprintln!("simulate: n={n} mean={} stderr={}", fmt_sig(s.mean), fmt_sig(s.stderr));
        rows.push((n, s));
    }
    let mut w = run.out("bayes_risk_mc.csv")?;
    writeln!(w, "# {}", run.comment())?;
    writeln!(w, "n,mean,p25,p75,stderr,asymptote")?;
    for (n, s) in rows {
        writeln!(
            w,
            "{n},{},{},{},{},{}",
            fmt_sig(s.mean),
            fmt_sig(s.p25),
            fmt_sig(s.p75),
            fmt_sig(s.stderr),
            opt_field(asymptote)
        )?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Serialize)]
struct MinimaxOutput<'a> {
    config_sha256: &'a str,
    converged: bool,
    iterations: usize,
    report: GameReport,
    /// Least-favorable prior rescaled to the configured reward sd.
    lfp_rescaled: LfpState,
    sigma: f64,
}

pub fn minimax(run: &Run) -> Result<(), CliError> {
    let m = &run.cfg.minimax;
    let start = LfpState::new(m.start[0], m.start[1], m.start[2])?;
    let search = run.cfg.search_config()?;
    let log_path = run.path("lfp_iterations.jsonl");
    let mut log = run.out("lfp_iterations.jsonl")?;
    let mut log_err = None;
    let outcome = minimax::search(&start, &search, |rec| {
        let line = serde_json::to_string(rec).map_err(CliError::from).and_then(|s| {
            writeln!(log, "{s}")?;
            log.flush()?;
            Ok(())
        });
        eprintln!(
            "minimax: iteration {} -> ({}, {}, {})",
            rec.next.iteration, rec.next.mu_lo, rec.next.mu_hi, rec.next.p
        );
        if let Err(e) = line {
            log_err.get_or_insert(e);
        }
    })?;
    if let Some(e) = log_err {
        return Err(e);
    }
    drop(log);
    let grid = build_grid(&run.cfg.grid, &[1.0])?;
    let report = minimax::evaluate_equilibrium(&outcome.state, &grid, &search)?;
    let sigma = run.cfg.arm_model()?.sigma(0);
    println!("{}", fmt_sig(report.minimax_value));
    eprintln!("minimax: log written to {}", display(&log_path));
    run.write_json(
        "game_report.json",
        &MinimaxOutput {
            config_sha256: &run.hash,
            converged: outcome.converged,
            iterations: outcome.history.len(),
            lfp_rescaled: rescale_lfp(&outcome.state, sigma),
            report,
            sigma,
        },
    )
}

fn display(p: &Path) -> String {
    p.display().to_string()
}
