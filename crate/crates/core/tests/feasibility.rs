//! FIR feasibility across kinds, the inclusion chain, and monotonicity in the horizon.

mod common;

use clparam::examples::{car_following, random_stable, uncontrollable_mode};
use clparam::param::{
    build_constraints, check_feasibility, lift_solution, max_constraint_mismatch, ParameterizationKind,
};
use clparam::synth::{synthesize, H2Problem};
use clparam::Error;
use common::{solve, unit_points};
use proptest::prelude::*;
use ParameterizationKind::*;

/// The 0.5 mode is neither reachable nor observable: only the state-to-state
/// block has to carry it, so only the state-based kind is infeasible. Its
/// least-squares residual is the truncated tail of the hidden mode and halves
/// with every extra lag.
#[test]
fn hidden_mode_blocks_only_the_state_based_kind() {
    let plant = uncontrollable_mode();
    let mut previous: Option<f64> = None;
    for t in 1..=20 {
        for kind in [Iop, MixedI, MixedII] {
            let d = check_feasibility(&build_constraints(kind, &plant, t).unwrap());
            assert!(d.feasible, "{kind} at T={t}: residual {:e}", d.min_residual);
        }
        let slp = check_feasibility(&build_constraints(Slp, &plant, t).unwrap());
        assert!(!slp.feasible && slp.min_residual > 1e-7, "T={t}: residual {:e}", slp.min_residual);
        assert!(!slp.blocking_constraints.is_empty());
        if let Some(prev) = previous.filter(|_| t > 2) {
            let ratio = slp.min_residual / prev;
            assert!((ratio - 0.5).abs() < 0.01, "T={t}: ratio {ratio}");
        }
        previous = Some(slp.min_residual);
    }
}

#[test]
fn infeasible_synthesis_reports_residual() {
    let err = synthesize(&H2Problem::new(uncontrollable_mode(), Slp, 5)).unwrap_err();
    assert!(matches!(err, Error::Infeasible { residual, .. } if residual > 1e-4));
    assert!(err.to_string().contains("infeasible"));
}

#[test]
fn zero_horizon_is_rejected() {
    let err = synthesize(&H2Problem::new(car_following(), Iop, 0)).unwrap_err();
    assert!(format!("{err:?}").contains("HorizonTooShort"));
}

#[test]
fn optimal_norm_does_not_increase_with_horizon() {
    let plant = car_following();
    let mut previous = f64::INFINITY;
    for t in 8..=20 {
        let h2 = solve(&plant, Iop, t).h2_norm;
        assert!(h2 <= previous * (1.0 + 1e-9), "T={t}: {h2} after {previous}");
        previous = h2;
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(20))]

    /// State-based solutions map into every larger parameterization.
    #[test]
    fn slp_solutions_lift_along_the_chain(seed in any::<u64>(), extra in 0usize..3) {
        let plant = random_stable(seed, 3, 1, 1);
        let t = 6 + extra;
        let points = unit_points(seed ^ 0x5eed, 32);
        let slp = solve(&plant, Slp, t);
        for to in [Iop, MixedI, MixedII] {
            let lifted = lift_solution(Slp, to, &slp.blocks, &plant).unwrap();
            let m = max_constraint_mismatch(to, &plant, &lifted, &points).unwrap();
            prop_assert!(m < 1e-8, "{to}: {m:e}");
            prop_assert!(check_feasibility(&build_constraints(to, &plant, t).unwrap()).feasible);
        }
        for from in [MixedI, MixedII] {
            let sol = solve(&plant, from, t);
            let lifted = lift_solution(from, Iop, &sol.blocks, &plant).unwrap();
            prop_assert!(max_constraint_mismatch(Iop, &plant, &lifted, &points).unwrap() < 1e-8);
        }
    }

    #[test]
    fn longer_horizons_never_cost_more(seed in any::<u64>()) {
        let plant = random_stable(seed, 2, 1, 1);
        for kind in ParameterizationKind::PRIMARY {
            let short = solve(&plant, kind, 4).h2_norm;
            let long = solve(&plant, kind, 7).h2_norm;
            prop_assert!(long <= short * (1.0 + 1e-9), "{kind}: {long} > {short}");
        }
    }
}
