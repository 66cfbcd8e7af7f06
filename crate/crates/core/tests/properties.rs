use banditpde::beliefs::{discrete_posterior, gaussian_posterior};
use banditpde::hjb::{self, OneArmCoefficients};
use banditpde::lattice::stencil::{second_x, upwind_first_x};
use banditpde::lattice::{assemble_generator, ArmCoefficients, Theta};
use banditpde::{
    ArmModel, BeliefContext, GridSpec, MultiState, PolicySpec, PriorSpec, ProblemKind, ProblemSpec, Scheme,
    SolveOptions, State, ValueField,
};
use proptest::prelude::*;

fn gaussian_prior() -> impl Strategy<Value = PriorSpec> {
    (-3.0..3.0f64, 0.2..3.0f64).prop_map(|(m, s)| PriorSpec::gaussian(m, s).unwrap())
}

fn discrete_prior() -> impl Strategy<Value = PriorSpec> {
    prop::collection::vec((-4.0..4.0f64, 0.05..1.0f64), 1..5).prop_map(|mut atoms| {
        atoms.sort_by(|a, b| a.0.total_cmp(&b.0));
        atoms.dedup_by(|a, b| a.0 - b.0 < 1e-6);
        let total: f64 = atoms.iter().map(|a| a.1).sum();
        PriorSpec::discrete(atoms.into_iter().map(|(m, p)| (m, p / total)).collect()).unwrap()
    })
}

fn any_prior() -> impl Strategy<Value = PriorSpec> {
    prop_oneof![gaussian_prior(), discrete_prior()]
}

proptest! {
    #[test]
    fn instantaneous_regrets_are_nonnegative(
        prior in any_prior(),
        sigma in 0.2..5.0f64,
        x in -20.0..20.0f64,
        q in 0.0..1.0f64,
    ) {
        let m = prior.posterior(sigma, x, q);
        let slack = 1e-12 * (1.0 + m.mean.abs());
        prop_assert!(m.mu_plus >= m.mean.max(0.0) - slack, "{m:?}");
        prop_assert!(m.mu_minus >= 0.0 && m.mu_plus >= 0.0, "{m:?}");
        prop_assert!((m.mu_plus - m.mu_minus - m.mean).abs() <= slack.max(1e-12 * m.mu_plus), "{m:?}");
    }

    #[test]
    fn gaussian_posterior_orders(
        mu0 in -3.0..3.0f64,
        nu in 0.1..10.0f64,
        sigma in 0.2..5.0f64,
        x in -10.0..10.0f64,
        dx in 0.0..5.0f64,
        q in 0.0..1.0f64,
        dq in 1e-3..1.0f64,
    ) {
        let a = gaussian_posterior(mu0, nu, sigma, x, q);
        prop_assert!(gaussian_posterior(mu0, nu, sigma, x + dx, q).mean >= a.mean);
        prop_assert!(gaussian_posterior(mu0, nu, sigma, x, q + dq).sd.unwrap() < a.sd.unwrap());
    }

    #[test]
    fn two_atom_posterior_concentrates(a in -3.0..-0.1f64, b in 0.1..3.0f64, p in 0.05..0.95f64, pick_b in any::<bool>()) {
        let prior = PriorSpec::two_point(a, b, p).unwrap();
        let q = 1e6;
        let target = if pick_b { b } else { a };
        let (w, _) = discrete_posterior(&prior, 1.0, target * q, q).unwrap();
        let on_target = if pick_b { w[1] } else { w[0] };
        prop_assert!(on_target > 1.0 - 1e-9, "{w:?}");
    }
}

#[test]
fn gaussian_posterior_matches_fine_discretization() {
    let (mu0, nu, sigma) = (0.2, 1.0, 1.0);
    let atoms_n = 10_000;
    let raw: Vec<(f64, f64)> = (0..atoms_n)
        .map(|i| {
            let z = -8.0 + 16.0 * (i as f64 + 0.5) / atoms_n as f64;
            (mu0 + nu * z, (-0.5 * z * z).exp())
        })
        .collect();
    let total: f64 = raw.iter().map(|a| a.1).sum();
    let prior = PriorSpec::discrete(raw.into_iter().map(|(m, w)| (m, w / total)).collect()).unwrap();
    for i in 0..10 {
        for j in 0..10 {
            let x = -2.0 + 4.0 * i as f64 / 9.0;
            let q = j as f64 / 9.0;
            let g = gaussian_posterior(mu0, nu, sigma, x, q);
            let (_, d) = discrete_posterior(&prior, sigma, x, q).unwrap();
            assert!((g.mean - d.mean).abs() < 1e-3, "({x}, {q})");
            assert!((g.mu_plus - d.mu_plus).abs() < 1e-3, "({x}, {q})");
        }
    }
}

fn small_grid(nt: usize) -> GridSpec {
    GridSpec::uniform(1.0, 5, 4, nt).unwrap()
}

proptest! {
    #[test]
    fn explicit_step_is_monotone(
        prior in any_prior(),
        values in prop::collection::vec(0.0..1.0f64, 20),
        node in 0usize..20,
        bump in 1e-6..1.0f64,
    ) {
        let grid = small_grid(4000);
        let c = OneArmCoefficients::new(&grid, &prior, 1.0);
        let base = ValueField::new(grid.clone(), grid.nt(), values.clone()).unwrap();
        let mut raised = values.clone();
        raised[node] += bump;
        let raised = ValueField::new(grid.clone(), grid.nt(), raised).unwrap();
        let a = hjb::step_explicit(&base, &c).unwrap();
        let b = hjb::step_explicit(&raised, &c).unwrap();
        for (u, v) in a.values.iter().zip(&b.values) {
            prop_assert!(v >= u);
        }
    }

    #[test]
    fn implicit_matrices_are_m_matrices(
        drift in prop::collection::vec(-50.0..50.0f64, 20),
        diffusion in 0.0..20.0f64,
        nt in 1usize..1000,
    ) {
        let grid = small_grid(nt);
        let coeffs = ArmCoefficients { drift_x: drift, diffusion_x: diffusion };
        let step = assemble_generator(&grid, 0, &coeffs, None, &[0.0; 20], Theta::Implicit, grid.dt()).unwrap();
        prop_assert!(step.matrix.is_m_matrix());
    }

    #[test]
    fn stencils_are_exact_on_low_order_polynomials(
        a in -5.0..5.0f64,
        b in -5.0..5.0f64,
        c in -5.0..5.0f64,
        drift in prop::collection::vec(-3.0..3.0f64, 20),
    ) {
        let grid = small_grid(1);
        let affine = ValueField::from_fn(grid.clone(), 0, |x, _| a + b * x);
        for d in upwind_first_x(&affine, &drift) {
            prop_assert!((d - b).abs() < 1e-9);
        }
        let quad = ValueField::from_fn(grid.clone(), 0, |x, _| a + b * x + c * x * x);
        let nx = grid.x_axis(0).n;
        for (n, d) in second_x(&quad).into_iter().enumerate() {
            let i = n % nx;
            if i > 0 && i + 1 < nx {
                prop_assert!((d - 2.0 * c).abs() < 1e-9);
            }
        }
    }
}

fn solve_all(prior: &PriorSpec, sigma: f64, grid: &GridSpec, scheme: Scheme) -> hjb::Solution {
    let p = ProblemSpec::one_arm(prior.clone(), sigma).unwrap();
    hjb::solve_optimal(&p, grid, scheme, &SolveOptions::default().keeping_every(1)).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn optimal_value_is_between_zero_and_never_pull(prior in any_prior(), sigma in 0.5..3.0f64) {
        let grid = GridSpec::uniform(sigma, 61, 21, 40).unwrap();
        let sol = solve_all(&prior, sigma, &grid, Scheme::Implicit);
        let c = OneArmCoefficients::new(&grid, &prior, sigma);
        for s in &sol.slices {
            let t = grid.time(s.time_index);
            for (n, &v) in s.values.iter().enumerate() {
                prop_assert!(v >= 0.0);
                prop_assert!(v <= (1.0 - t) * c.mu_plus[n] + 1e-12);
            }
        }
    }

    #[test]
    fn optimal_value_decreases_in_time(prior in any_prior(), sigma in 0.5..3.0f64) {
        let grid = GridSpec::uniform(sigma, 61, 21, 40).unwrap();
        let sol = solve_all(&prior, sigma, &grid, Scheme::Implicit);
        for w in sol.slices.windows(2) {
            for (early, late) in w[0].values.iter().zip(&w[1].values) {
                prop_assert!(late <= early, "{late} > {early}");
            }
        }
    }

    #[test]
    fn explicit_and_implicit_agree_at_the_origin(prior in any_prior()) {
        let grid = GridSpec::uniform(1.0, 21, 11, 200).unwrap();
        let e = solve_all(&prior, 1.0, &grid, Scheme::Explicit).value_at_origin();
        let i = solve_all(&prior, 1.0, &grid, Scheme::Implicit).value_at_origin();
        let tol = 2.0 * (grid.x_axis(0).step() + grid.dt());
        prop_assert!((e - i).abs() <= tol, "{e} vs {i}");
    }

    #[test]
    fn batched_value_dominates_optimal_value(prior in any_prior(), batches in prop::sample::select(vec![1usize, 2, 4, 8])) {
        let grid = GridSpec::uniform(1.0, 81, 21, 40).unwrap();
        let v = solve_all(&prior, 1.0, &grid, Scheme::Implicit);
        let p = ProblemSpec::one_arm(prior, 1.0)
            .unwrap()
            .with_kind(ProblemKind::Batched { dt_batch: 1.0 / batches as f64 })
            .unwrap();
        let b = hjb::solve_batched(&p, &grid, &SolveOptions::default()).unwrap();
        for (vb, vs) in b.values[0].values.iter().zip(&v.initial().values) {
            prop_assert!(*vb >= vs - 1e-8, "{vb} < {vs}");
        }
    }
}

proptest! {
    #[test]
    fn thompson_rules_coincide_for_gaussian_rewards(
        prior in gaussian_prior(),
        sigma in 0.2..5.0f64,
        x in -5.0..5.0f64,
        q in 0.0..1.0f64,
        t in 0.0..1.0f64,
    ) {
        let ctx = BeliefContext::one_arm(prior, sigma).unwrap();
        let s = State::new(x, q, t);
        let a = PolicySpec::Thompson.act(&s, &ctx).unwrap();
        let b = PolicySpec::ApproxThompson.act(&s, &ctx).unwrap();
        prop_assert!((a - b).abs() < 1e-12);
    }

    #[test]
    fn actions_are_probabilities(
        prior in any_prior(),
        x in -10.0..10.0f64,
        q in 0.0..1.0f64,
        t in 0.0..1.0f64,
        delta in 0.1..15.0f64,
        p in 0.0..=1.0f64,
    ) {
        let ctx = BeliefContext::one_arm(prior, 1.0).unwrap();
        let s = State::new(x, q, t);
        for policy in [
            PolicySpec::Thompson,
            PolicySpec::ApproxThompson,
            PolicySpec::ucb(delta, 1000).unwrap(),
            PolicySpec::constant(p).unwrap(),
        ] {
            let a = policy.act(&s, &ctx).unwrap();
            prop_assert!((0.0..=1.0).contains(&a));
        }
    }

    #[test]
    fn arm_distributions_sum_to_one(
        k in 2usize..=3,
        means in prop::collection::vec(-2.0..2.0f64, 3),
        xs in prop::collection::vec(-3.0..3.0f64, 3),
        qs in prop::collection::vec(0.0..1.0f64, 3),
        delta in 0.1..15.0f64,
    ) {
        let priors: Vec<PriorSpec> = means[..k].iter().map(|&m| PriorSpec::gaussian(m, 1.0).unwrap()).collect();
        let ctx = BeliefContext::gaussian(priors, ArmModel::new(vec![1.0; k]).unwrap());
        let s = MultiState { x: xs[..k].to_vec(), q: qs[..k].to_vec(), t: 0.3 };
        for policy in [PolicySpec::Thompson, PolicySpec::ucb(delta, 500).unwrap()] {
            let d = policy.act_multi(&s, &ctx).unwrap();
            prop_assert_eq!(d.len(), k);
            prop_assert!(d.iter().all(|p| (0.0..=1.0).contains(p)));
            prop_assert!((d.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        }
    }
}
