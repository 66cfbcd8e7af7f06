use std::sync::Arc;

use banditpde::hjb;
use banditpde::policies::{extract_stopping_boundary, thompson_continuity_check, ControlTable};
use banditpde::{BeliefContext, GridSpec, PolicySpec, PriorSpec, ProblemSpec, Scheme, SolveOptions, State};

fn optimal_table(prior: PriorSpec, sigma: f64, grid: &GridSpec) -> ControlTable {
    let p = ProblemSpec::one_arm(prior, sigma).unwrap();
    hjb::solve_optimal(&p, grid, Scheme::Implicit, &SolveOptions::default().with_controls())
        .unwrap()
        .controls
        .unwrap()
}

#[test]
fn good_arm_boundary_is_minus_infinity() {
    let grid = GridSpec::uniform(1.0, 51, 11, 10).unwrap();
    let b = extract_stopping_boundary(&optimal_table(PriorSpec::degenerate(3.0), 1.0, &grid)).unwrap();
    for m in 0..grid.nt() {
        for j in 0..grid.q_axis().n {
            assert_eq!(b.at(m, j), f64::NEG_INFINITY);
        }
    }
}

#[test]
fn default_boundary_explores_below_zero_and_rises_in_time() {
    let grid = GridSpec::desk(5.0).unwrap();
    let table = optimal_table(PriorSpec::gaussian(0.0, 50.0).unwrap(), 5.0, &grid);
    let b = extract_stopping_boundary(&table).unwrap();
    let nq = grid.q_axis().n;
    for j in 0..nq {
        for m in 1..grid.nt() {
            assert!(b.at(m, j) >= b.at(m - 1, j), "q node {j}, slice {m}");
        }
    }
    assert!((0..nq).any(|j| b.at(0, j).is_finite() && b.at(0, j) < 0.0));

    let ctx = BeliefContext::one_arm(PriorSpec::gaussian(0.0, 50.0).unwrap(), 5.0).unwrap();
    let policy = PolicySpec::OptimalFromValue(Arc::new(table));
    for (q, t) in [(0.1, 0.1), (0.5, 0.5), (0.9, 0.9)] {
        assert_eq!(policy.act(&State::new(10.0, q, t), &ctx).unwrap(), 1.0);
    }
}

#[test]
fn continuity_diagnostic() {
    let grid = GridSpec::desk(5.0).unwrap();
    let flat = thompson_continuity_check(&PriorSpec::gaussian(0.0, 1e-9).unwrap(), 5.0, &grid);
    assert!(flat < 1e-6, "{flat}");
    let defaults = thompson_continuity_check(&PriorSpec::gaussian(0.0, 50.0).unwrap(), 5.0, &grid);
    assert!(defaults.is_finite() && defaults > 0.0);
}

#[test]
fn ucb_needs_positive_delta_and_horizon() {
    assert!(PolicySpec::ucb(0.0, 100).is_err());
    assert!(PolicySpec::ucb(7.8, 0).is_err());
    assert!(PolicySpec::constant(1.5).is_err());
}
