//! Designs around an initial stable controller: the wrapped plant, the
//! explicit coprime factors and the responses generated by a Youla parameter.

mod common;

use clparam::closedloop::internal_stability;
use clparam::examples::random_prestabilizable;
use clparam::lti::{frequency_grid, unit_point, FirTransferMatrix, Mat, StateSpaceModel, C64};
use clparam::param::{max_constraint_mismatch, BlockName, ParameterizationKind};
use clparam::realize::realize;
use clparam::robust::{coprime_from_k0, prestabilize, youla_controller, youla_to_blocks};
use clparam::Error;
use common::{solve, unit_points};
use nalgebra::dmatrix;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn grid() -> Vec<C64> {
    frequency_grid(64).into_iter().map(unit_point).collect()
}

fn random_q(seed: u64, horizon: usize) -> StateSpaceModel {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let coeffs: Vec<f64> = (0..=horizon).map(|_| rng.gen_range(-0.5..=0.5)).collect();
    FirTransferMatrix::scalar(&coeffs).unwrap().to_state_space()
}

#[test]
fn scalar_unstable_plant_is_wrapped_and_redesigned() {
    let plant = StateSpaceModel::strictly_proper(dmatrix![2.0], dmatrix![1.0], dmatrix![1.0]).unwrap();
    let k0 = StateSpaceModel::static_gain(dmatrix![-2.0]);
    let wrapped = prestabilize(&plant, &k0).unwrap();
    assert!(wrapped.plant.is_stable().unwrap());
    for kind in ParameterizationKind::PRIMARY {
        let sol = solve(&wrapped.plant, kind, 4);
        let k1 = realize(kind, &sol.blocks, &wrapped.plant).unwrap().model;
        let k = wrapped.compose(&k1).unwrap();
        assert!(internal_stability(&plant, &k).unwrap().internally_stable, "{kind}");
    }
}

#[test]
fn initial_controller_must_be_stable_and_stabilizing() {
    let plant = StateSpaceModel::strictly_proper(dmatrix![2.0], dmatrix![1.0], dmatrix![1.0]).unwrap();
    let weak = StateSpaceModel::static_gain(dmatrix![-0.5]);
    assert!(matches!(prestabilize(&plant, &weak), Err(Error::K0NotStabilizing { .. })));
    let unstable = StateSpaceModel::new(dmatrix![1.5], dmatrix![1.0], dmatrix![0.0], dmatrix![-2.0]).unwrap();
    assert!(matches!(prestabilize(&plant, &unstable), Err(Error::K0NotStable { .. })));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(10))]

    #[test]
    fn coprime_factors_satisfy_bezout_and_reproduce_the_plant(seed in any::<u64>()) {
        let (plant, k0) = random_prestabilizable(seed, 3);
        let f = coprime_from_k0(&plant, &k0).unwrap();
        prop_assert!(f.is_stable().unwrap());
        prop_assert!(f.bezout_residual(&grid()).unwrap() < 1e-8);
        prop_assert!(f.plant_mismatch(&plant, &grid()).unwrap() < 1e-8);
    }

    #[test]
    fn youla_parameters_generate_valid_responses(seed in any::<u64>(), horizon in 0usize..5) {
        let (plant, k0) = random_prestabilizable(seed, 3);
        let f = coprime_from_k0(&plant, &k0).unwrap();
        let q = random_q(seed, horizon);
        let blocks = youla_to_blocks(&f, &q, &plant).unwrap();
        let points = unit_points(seed, 32);
        for kind in ParameterizationKind::PRIMARY {
            let m = max_constraint_mismatch(kind, &plant, &blocks, &points).unwrap();
            prop_assert!(m < 1e-7, "{kind}: {m:e}");
        }
        for (_, model) in blocks.iter() {
            prop_assert!(model.has_stable_transfer().unwrap());
        }
        let k = youla_controller(&f, &q).unwrap();
        let uy = blocks.require(BlockName::Uy).unwrap();
        let yy = blocks.require(BlockName::Yy).unwrap();
        for z in grid() {
            let ratio = uy.eval(z).unwrap() * yy.eval(z).unwrap().try_inverse().unwrap();
            let gap = (k.eval(z).unwrap() - &ratio).iter().map(|v| v.norm()).fold(0.0, f64::max);
            prop_assert!(gap < 1e-7 * ratio.norm().max(1.0), "{gap:e}");
        }
        let verdict = internal_stability(&plant, &k).unwrap();
        prop_assert!(verdict.certifying_groups_stable());
    }
}

#[test]
fn zero_youla_parameter_returns_the_initial_controller() {
    let (plant, k0) = random_prestabilizable(5, 3);
    let f = coprime_from_k0(&plant, &k0).unwrap();
    let k = youla_controller(&f, &StateSpaceModel::static_gain(Mat::zeros(1, 1))).unwrap();
    for z in grid() {
        assert!((k.eval(z).unwrap() - k0.eval(z).unwrap()).norm() < 1e-10);
    }
}
