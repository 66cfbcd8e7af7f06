use banditpde::hjb;
use banditpde::minimax::{self, rescale_lfp, LfpState, SearchConfig};
use banditpde::{GridSpec, PriorSpec, ProblemSpec, Scheme, SolveOptions};
use proptest::prelude::*;

/// Slack for the comparison of two solves on the same grid.
const VALUE_TOL: f64 = 1e-3;

fn value(prior: PriorSpec, sigma: f64, grid: &GridSpec) -> f64 {
    let p = ProblemSpec::one_arm(prior, sigma).unwrap();
    hjb::solve_optimal(&p, grid, Scheme::Implicit, &SolveOptions::default())
        .unwrap()
        .value_at_origin()
}

fn minimax_value() -> f64 {
    value(PriorSpec::two_point(-2.5, 1.7, 0.415).unwrap(), 1.0, &GridSpec::desk(1.0).unwrap())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(5))]
    #[test]
    fn other_two_point_priors_are_less_favorable(
        lo in -4.0..-0.5f64,
        hi in 0.5..4.0f64,
        p in 0.1..0.9f64,
    ) {
        let v = value(PriorSpec::two_point(lo, hi, p).unwrap(), 1.0, &GridSpec::desk(1.0).unwrap());
        prop_assert!(v <= minimax_value() + VALUE_TOL, "({lo}, {hi}, {p}): {v}");
    }
}

#[test]
fn search_leaves_the_symmetric_start_toward_the_negative_side() {
    let rec = minimax::lfp_iterate(&LfpState::initial(), &SearchConfig::default()).unwrap();
    let next = rec.next;
    assert!(next.mu_lo.abs() > next.mu_hi.abs(), "{next:?}");
    assert!(next.p < 0.5, "{next:?}");
}

#[test]
fn minimax_policy_is_scale_equivariant() {
    let lfp = LfpState::new(-2.5, 1.7, 0.415).unwrap();
    let tables: Vec<_> = [1.0, 5.0]
        .iter()
        .map(|&sigma| {
            let s = rescale_lfp(&lfp, sigma);
            let p = ProblemSpec::one_arm(s.prior().unwrap(), sigma).unwrap();
            hjb::solve_optimal(&p, &GridSpec::desk(sigma).unwrap(), Scheme::Implicit, &SolveOptions::default().with_controls())
                .unwrap()
                .controls
                .unwrap()
        })
        .collect();
    let grid = GridSpec::desk(1.0).unwrap();
    let mut differ = 0;
    for m in 0..grid.nt() {
        for n in 0..grid.spatial_len() {
            differ += (tables[0].pull(m, n) != tables[1].pull(m, n)) as usize;
        }
    }
    assert_eq!(differ, 0);
}

#[test]
fn scaled_least_favorable_value_scales_with_sigma() {
    let lfp = LfpState::new(-2.5, 1.7, 0.415).unwrap();
    let v1 = value(lfp.prior().unwrap(), 1.0, &GridSpec::desk(1.0).unwrap());
    let v5 = value(rescale_lfp(&lfp, 5.0).prior().unwrap(), 5.0, &GridSpec::desk(5.0).unwrap());
    assert!((v5 - 5.0 * v1).abs() < 1e-9 * v5, "{v1} {v5}");
}
