//! Discrete-time LTI building blocks: state-space models, FIR transfer
//! matrices, spectra, norms, frequency sampling and time-domain rollout.

mod fir;
mod freq;
mod sim;
mod spectrum;
mod statespace;

pub use fir::{fir_multiply, h2_norm_squared, FirTransferMatrix};
pub use freq::{
    frequency_grid, hinf_norm, sigma_max, unit_point, FrequencyEvaluator, FrequencySample,
    HinfNorm, Sampler, TransferMatrix, DEFAULT_GRID,
};
pub use sim::{simulate, Disturbances, Trajectory};
pub use spectrum::{
    eigenvalues, is_schur_stable, observable_dim, reachable_dim, spectral_radius,
    STABILITY_MARGIN,
};
pub use statespace::{block_diag, hstack, ss_cascade, ss_inverse, ss_parallel_sub, vstack, StateSpaceModel};

use nalgebra::{Complex, DMatrix};

/// Real dense matrix.
pub type Mat = DMatrix<f64>;
/// Complex dense matrix.
pub type CMat = DMatrix<Complex<f64>>;
/// Complex scalar.
pub type C64 = Complex<f64>;

pub(crate) fn to_complex(m: &Mat) -> CMat {
    m.map(|v| C64::new(v, 0.0))
}

pub(crate) fn check_finite(m: &Mat, what: &'static str) -> crate::Result<()> {
    if m.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(crate::Error::NonFinite(what))
    }
}
