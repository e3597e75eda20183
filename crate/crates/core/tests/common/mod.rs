#![allow(dead_code)]

use clparam::lti::{unit_point, StateSpaceModel, C64};
use clparam::param::ParameterizationKind;
use clparam::synth::{synthesize, H2Problem, SynthesisResult};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Points on the unit circle at seeded random angles.
pub fn unit_points(seed: u64, count: usize) -> Vec<C64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| unit_point(rng.gen_range(0.0..std::f64::consts::TAU)))
        .collect()
}

pub fn solve(plant: &StateSpaceModel, kind: ParameterizationKind, horizon: usize) -> SynthesisResult {
    synthesize(&H2Problem::new(plant.clone(), kind, horizon))
        .unwrap_or_else(|e| panic!("{kind} at T={horizon}: {e}"))
}

pub fn rel_diff(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(1e-300)
}
