//! Built-in problem instances.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::lti::{block_diag, observable_dim, reachable_dim, spectral_radius, FirTransferMatrix, Mat, StateSpaceModel};
use crate::param::{BlockName, BlockSet};
use crate::Result;
use nalgebra::dmatrix;

/// Car-following parameters and sampling time.
pub const CAR_FOLLOWING_ALPHA: [f64; 3] = [0.94, 1.5, 0.9];
pub const CAR_FOLLOWING_DT: f64 = 0.1;

/// `x⁺ = (I + dt·A) x + dt·B u`, `y = C x`.
pub fn forward_euler(a: &Mat, b: &Mat, c: &Mat, dt: f64) -> Result<StateSpaceModel> {
    let n = a.nrows();
    StateSpaceModel::strictly_proper(Mat::identity(n, n) + a * dt, b * dt, c.clone())
}

/// Continuous-time two-vehicle car-following model `(A, B, C)`.
pub fn car_following_continuous(alpha: [f64; 3]) -> (Mat, Mat, Mat) {
    let p1 = dmatrix![0.0, -1.0; alpha[0], -alpha[1]];
    let p2 = dmatrix![0.0, 1.0; 0.0, alpha[2]];
    let b1 = dmatrix![0.0; 1.0];
    let c1 = dmatrix![1.0, 0.0];
    let mut a = Mat::zeros(4, 4);
    a.view_mut((0, 0), (2, 2)).copy_from(&p1);
    a.view_mut((2, 0), (2, 2)).copy_from(&p2);
    a.view_mut((2, 2), (2, 2)).copy_from(&p1);
    (a, block_diag(&b1, &b1), block_diag(&c1, &c1))
}

/// Discretized car-following plant: 4 states, 2 inputs, 2 outputs.
pub fn car_following() -> StateSpaceModel {
    let (a, b, c) = car_following_continuous(CAR_FOLLOWING_ALPHA);
    forward_euler(&a, &b, &c, CAR_FOLLOWING_DT).expect("car-following dimensions are consistent")
}

/// `A = diag(0.5, 1)`, `B = [0; 1]`, `C = [0 1]`: the 0.5 mode is
/// uncontrollable and unobservable.
pub fn uncontrollable_mode() -> StateSpaceModel {
    StateSpaceModel::strictly_proper(
        dmatrix![0.5, 0.0; 0.0, 1.0],
        dmatrix![0.0; 1.0],
        dmatrix![0.0, 1.0],
    )
    .expect("consistent dimensions")
}

/// Scalar integrator `A = 0, B = 1, C = 1`.
pub fn slp_counterexample_plant() -> StateSpaceModel {
    StateSpaceModel::strictly_proper(dmatrix![0.0], dmatrix![1.0], dmatrix![1.0])
        .expect("consistent dimensions")
}

/// Slightly inexact four-block SLP solution for [`slp_counterexample_plant`]
/// whose four-block controller fails to stabilize.
pub fn slp_counterexample_blocks() -> BlockSet {
    let fir = |c: &[f64]| FirTransferMatrix::scalar(c).expect("scalar coefficients");
    BlockSet::new()
        .with(BlockName::Xx, fir(&[0.0, 1.0, 1.0, 7.0, -24.0, -180.0]))
        .with(BlockName::Ux, fir(&[0.0, 1.0, 7.0, -24.0, -180.0, 0.0]))
        .with(BlockName::Xy, fir(&[0.0, 0.999, 6.996, -24.004, -180.0, 0.0]))
        .with(BlockName::Uy, fir(&[1.0, 7.0, -24.0, -180.0, 0.0, 0.0]))
}

/// 3-state SISO plant with integer entries drawn uniformly from `−5..=5`.
pub fn random_integer(seed: u64) -> StateSpaceModel {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut draw = |r: usize, c: usize| Mat::from_fn(r, c, |_, _| f64::from(rng.gen_range(-5i32..=5)));
    let a = draw(3, 3);
    let b = draw(3, 1);
    let c = draw(1, 3);
    StateSpaceModel::strictly_proper(a, b, c).expect("consistent dimensions")
}

fn uniform(rng: &mut ChaCha8Rng, r: usize, c: usize, half_width: f64) -> Mat {
    Mat::from_fn(r, c, |_, _| rng.gen_range(-half_width..=half_width))
}

fn scaled_to_radius(a: Mat, radius: f64) -> Mat {
    let rho = spectral_radius(&a).unwrap_or(1.0).max(1e-3);
    a * (radius / rho)
}

fn is_minimal(a: &Mat, b: &Mat, c: &Mat) -> bool {
    let n = a.nrows();
    reachable_dim(a, b) == n && observable_dim(a, c) == n
}

/// Random reachable and observable plant with spectral radius in `[0.3, 0.9]`.
pub fn random_stable(seed: u64, states: usize, inputs: usize, outputs: usize) -> StateSpaceModel {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    loop {
        let radius = rng.gen_range(0.3..=0.9);
        let a = scaled_to_radius(uniform(&mut rng, states, states, 1.0), radius);
        let b = uniform(&mut rng, states, inputs, 1.0);
        let c = uniform(&mut rng, outputs, states, 1.0);
        if is_minimal(&a, &b, &c) {
            return StateSpaceModel::strictly_proper(a, b, c).expect("consistent dimensions");
        }
    }
}

/// Random unstable SISO plant together with a static gain that stabilizes it.
///
/// The plant is `A = A_s − B K₀ C` with `A_s` stable, so `A + B K₀ C = A_s`.
pub fn random_prestabilizable(seed: u64, states: usize) -> (StateSpaceModel, StateSpaceModel) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    loop {
        let radius = rng.gen_range(0.3..=0.8);
        let a_s = scaled_to_radius(uniform(&mut rng, states, states, 1.0), radius);
        let b = uniform(&mut rng, states, 1, 1.0);
        let c = uniform(&mut rng, 1, states, 1.0);
        let k0 = uniform(&mut rng, 1, 1, 3.0);
        let a = &a_s - &b * &k0 * &c;
        let unstable = spectral_radius(&a).is_ok_and(|r| r > 1.05);
        if unstable && is_minimal(&a, &b, &c) {
            let plant = StateSpaceModel::strictly_proper(a, b, c).expect("consistent dimensions");
            return (plant, StateSpaceModel::static_gain(k0));
        }
    }
}
