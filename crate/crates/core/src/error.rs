use thiserror::Error;

/// Errors raised across the crate.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("feedthrough matrix is not invertible (condition number {condition:.3e})")]
    NonInvertibleFeedthrough { condition: f64 },

    #[error("system is not stable (spectral radius {spectral_radius:.6})")]
    UnstableSystem { spectral_radius: f64 },

    #[error("plant must be strictly proper (D = 0)")]
    PlantNotStrictlyProper,

    #[error("plant is not open-loop stable (spectral radius {spectral_radius:.6})")]
    PlantUnstable { spectral_radius: f64 },

    #[error("plant output matrix is not the identity")]
    NotStateFeedback,

    #[error("HorizonTooShort: horizon {got} is below the minimum {min}")]
    HorizonTooShort { got: usize, min: usize },

    #[error("lift from {from} to {to} is not supported")]
    UnsupportedDirection { from: String, to: String },

    #[error("infeasible: least-squares residual {residual:.3e} (relative {relative:.3e})")]
    Infeasible { residual: f64, relative: f64 },

    #[error("cost is unbounded below along {flat_directions} flat direction(s) of the constraint nullspace")]
    RankDeficientHessianOnNullspace { flat_directions: usize },

    #[error("leading coefficient of the output block is not the identity (deviation {deviation:.3e})")]
    Y0NotIdentity { deviation: f64 },

    #[error("first coefficient of the state block is not the identity (deviation {deviation:.3e})")]
    R1NotIdentity { deviation: f64 },

    #[error("precondition violated: {0}")]
    PreconditionViolated(String),

    #[error("initial controller is not stable (spectral radius {spectral_radius:.6})")]
    K0NotStable { spectral_radius: f64 },

    #[error("initial controller does not stabilize the plant (closed-loop spectral radius {spectral_radius:.6})")]
    K0NotStabilizing { spectral_radius: f64 },

    #[error("Youla parameter is not stable (spectral radius {spectral_radius:.6})")]
    QUnstable { spectral_radius: f64 },

    #[error("invalid weight: {0}")]
    InvalidWeight(String),

    #[error("eigenvalue iteration did not converge")]
    EigenNoConvergence,

    #[error("missing block {0}")]
    MissingBlock(String),

    #[error("parse error: {0}")]
    Parse(String),
}

pub type Result<T> = std::result::Result<T, Error>;
