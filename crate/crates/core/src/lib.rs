//! Closed-loop parameterizations of stabilizing controllers for
//! discrete-time LTI plants: constraint construction, H2 synthesis over FIR
//! responses, controller realization and numerical-robustness certificates.

pub mod error;
pub mod examples;
pub mod cli;
pub mod closedloop;
pub mod lti;
pub mod param;
pub mod realize;
pub mod record;
pub mod robust;
pub mod synth;

mod linalg;

pub use error::{Error, Result};
