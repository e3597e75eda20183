//! Controllers recovered from FIR closed-loop responses: shift-register
//! realizations and transfer-matrix recovery by state-space composition.

use std::fmt;

use crate::lti::{observable_dim, reachable_dim, FirTransferMatrix, Mat, StateSpaceModel};
use crate::param::{BlockName, BlockSet, ParameterizationKind};
use crate::{Error, Result};

/// Largest tolerated deviation of a leading coefficient from the identity.
pub const LEADING_COEFF_TOL: f64 = 1e-8;

/// How a controller was constructed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Construction {
    /// Explicit block shift-register form.
    ShiftRegister,
    /// Series/parallel/inverse composition of FIR realizations.
    Composition,
}

/// Which transfer-matrix formula maps responses to a controller.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RecoveryFormula {
    /// `Φuy − Φux Φxx⁻¹ Φxy`.
    FourBlockSlp,
    /// `Φuy (I + C Φxy)⁻¹`.
    SlpAlternative,
    /// `Φux Φxx⁻¹` (state feedback, `C = I`).
    StateFeedback,
    /// `Φuy Φyy⁻¹`.
    OutputRatio,
    /// `Φuu⁻¹ Φuy`.
    InputRatio,
}

impl RecoveryFormula {
    pub fn default_for(kind: ParameterizationKind) -> Self {
        match kind {
            ParameterizationKind::Slp => Self::FourBlockSlp,
            ParameterizationKind::Iop
            | ParameterizationKind::MixedI
            | ParameterizationKind::SimplifiedStablePlant => Self::OutputRatio,
            ParameterizationKind::MixedII => Self::InputRatio,
            ParameterizationKind::SimplifiedStateFeedback => Self::StateFeedback,
        }
    }
}

impl RecoveryFormula {
    pub const ALL: [RecoveryFormula; 5] = [
        Self::FourBlockSlp,
        Self::SlpAlternative,
        Self::StateFeedback,
        Self::OutputRatio,
        Self::InputRatio,
    ];

    /// Short command-line name.
    pub fn name(self) -> &'static str {
        match self {
            Self::FourBlockSlp => "four-block",
            Self::SlpAlternative => "slp-alternative",
            Self::StateFeedback => "state-feedback",
            Self::OutputRatio => "output-ratio",
            Self::InputRatio => "input-ratio",
        }
    }
}

impl std::str::FromStr for RecoveryFormula {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        let norm = s.trim().to_ascii_lowercase().replace('_', "-");
        Self::ALL
            .into_iter()
            .find(|f| f.name() == norm)
            .ok_or_else(|| Error::Parse(format!("unknown controller form '{s}'")))
    }
}

impl fmt::Display for RecoveryFormula {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::FourBlockSlp => "Phi_uy - Phi_ux Phi_xx^-1 Phi_xy",
            Self::SlpAlternative => "Phi_uy (I + C Phi_xy)^-1",
            Self::StateFeedback => "Phi_ux Phi_xx^-1",
            Self::OutputRatio => "Phi_uy Phi_yy^-1",
            Self::InputRatio => "Phi_uu^-1 Phi_uy",
        })
    }
}

/// A controller together with where it came from.
#[derive(Debug, Clone)]
pub struct ControllerRealization {
    pub model: StateSpaceModel,
    pub kind: ParameterizationKind,
    pub horizon: usize,
    pub formula: RecoveryFormula,
    pub construction: Construction,
}

/// Reachable/observable subspace sizes of a realization (no reduction applied).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RealizationDiagnostics {
    pub states: usize,
    pub reachable: usize,
    pub observable: usize,
}

impl ControllerRealization {
    pub fn states(&self) -> usize {
        self.model.states()
    }

    pub fn diagnostics(&self) -> RealizationDiagnostics {
        RealizationDiagnostics {
            states: self.model.states(),
            reachable: reachable_dim(self.model.a(), self.model.b()),
            observable: observable_dim(self.model.a(), self.model.c()),
        }
    }
}

/// Block down-shift with `k × k` identities on the sub-diagonal, and the
/// matching first-block selector `[I; 0; …; 0]`.
fn shift_pair(k: usize, blocks: usize) -> (Mat, Mat) {
    let q = k * blocks;
    let mut z = Mat::zeros(q, q);
    for i in 1..blocks {
        z.view_mut((i * k, (i - 1) * k), (k, k)).fill_with_identity();
    }
    let mut sel = Mat::zeros(q, k);
    if blocks > 0 {
        sel.view_mut((0, 0), (k, k)).fill_with_identity();
    }
    (z, sel)
}

/// `[H_from … H_to]` side by side.
fn row_of_coeffs(h: &FirTransferMatrix, from: usize, to: usize) -> Mat {
    let cols = h.cols();
    let count = (to + 1).saturating_sub(from);
    let mut out = Mat::zeros(h.rows(), cols * count);
    for (slot, k) in (from..=to).enumerate() {
        out.view_mut((0, slot * cols), (h.rows(), cols)).copy_from(&h.coeff(k));
    }
    out
}

fn identity_deviation(m: &Mat) -> f64 {
    (m - Mat::identity(m.nrows(), m.ncols())).amax()
}

fn check_shape(h: &FirTransferMatrix, rows: usize, cols: usize, name: BlockName) -> Result<()> {
    if (h.rows(), h.cols()) != (rows, cols) {
        return Err(Error::DimensionMismatch(format!(
            "{name} is {}x{}, expected {rows}x{cols}",
            h.rows(),
            h.cols()
        )));
    }
    Ok(())
}

/// Shift-register realization of `Φuy Φyy⁻¹` with `p·T` states.
pub fn realize_iop(phi_uy: &FirTransferMatrix, phi_yy: &FirTransferMatrix) -> Result<ControllerRealization> {
    let p = phi_yy.rows();
    check_shape(phi_yy, p, p, BlockName::Yy)?;
    check_shape(phi_uy, phi_uy.rows(), p, BlockName::Uy)?;
    let deviation = identity_deviation(&phi_yy.coeff(0));
    if deviation > LEADING_COEFF_TOL {
        return Err(Error::Y0NotIdentity { deviation });
    }
    let t = phi_uy.horizon().max(phi_yy.horizon());
    let (z, sel) = shift_pair(p, t);
    let y_hat = row_of_coeffs(phi_yy, 1, t);
    let u_hat = row_of_coeffs(phi_uy, 1, t);
    let u0 = phi_uy.coeff(0);
    let model = StateSpaceModel::new(&z - &sel * &y_hat, -sel, &u0 * &y_hat - u_hat, u0)?;
    Ok(ControllerRealization {
        model,
        kind: ParameterizationKind::Iop,
        horizon: t,
        formula: RecoveryFormula::OutputRatio,
        construction: Construction::ShiftRegister,
    })
}

/// Shift-register realization of `Φuy − Φux Φxx⁻¹ Φxy` with `n(T−1) + p·T`
/// states. `Û`/`U_0` here are the `Φuy` coefficients.
pub fn realize_slp(
    phi_uy: &FirTransferMatrix,
    phi_ux: &FirTransferMatrix,
    phi_xx: &FirTransferMatrix,
    phi_xy: &FirTransferMatrix,
) -> Result<ControllerRealization> {
    let n = phi_xx.rows();
    let p = phi_xy.cols();
    let m = phi_uy.rows();
    check_shape(phi_xx, n, n, BlockName::Xx)?;
    check_shape(phi_xy, n, p, BlockName::Xy)?;
    check_shape(phi_ux, m, n, BlockName::Ux)?;
    check_shape(phi_uy, m, p, BlockName::Uy)?;
    let t = [phi_uy, phi_ux, phi_xx, phi_xy]
        .iter()
        .map(|h| h.horizon())
        .max()
        .unwrap_or(0);
    if t < 2 {
        return Err(Error::HorizonTooShort { got: t, min: 2 });
    }
    let deviation = identity_deviation(&phi_xx.coeff(1));
    if deviation > LEADING_COEFF_TOL {
        return Err(Error::R1NotIdentity { deviation });
    }
    let (zn, sel_n) = shift_pair(n, t - 1);
    let (zp, sel_p) = shift_pair(p, t);
    let r_hat = row_of_coeffs(phi_xx, 2, t);
    let m_hat = row_of_coeffs(phi_ux, 2, t);
    let n_hat = row_of_coeffs(phi_xy, 1, t);
    let u_hat = row_of_coeffs(phi_uy, 1, t);
    let m1 = phi_ux.coeff(1);
    let (qn, qp) = (n * (t - 1), p * t);
    let mut a = Mat::zeros(qn + qp, qn + qp);
    a.view_mut((0, 0), (qn, qn)).copy_from(&(&zn - &sel_n * &r_hat));
    a.view_mut((0, qn), (qn, qp)).copy_from(&(-&sel_n * &n_hat));
    a.view_mut((qn, qn), (qp, qp)).copy_from(&zp);
    let mut b = Mat::zeros(qn + qp, p);
    b.view_mut((qn, 0), (qp, p)).copy_from(&sel_p);
    let mut c = Mat::zeros(m, qn + qp);
    c.view_mut((0, 0), (m, qn)).copy_from(&(m_hat - &m1 * &r_hat));
    c.view_mut((0, qn), (m, qp)).copy_from(&(u_hat - &m1 * &n_hat));
    let model = StateSpaceModel::new(a, b, c, phi_uy.coeff(0))?;
    Ok(ControllerRealization {
        model,
        kind: ParameterizationKind::Slp,
        horizon: t,
        formula: RecoveryFormula::FourBlockSlp,
        construction: Construction::ShiftRegister,
    })
}

/// Shift-register realization of the state-feedback controller `Φux Φxx⁻¹`
/// with `n(T−1)` states.
pub fn realize_state_feedback(
    phi_ux: &FirTransferMatrix,
    phi_xx: &FirTransferMatrix,
) -> Result<ControllerRealization> {
    let n = phi_xx.rows();
    check_shape(phi_xx, n, n, BlockName::Xx)?;
    check_shape(phi_ux, phi_ux.rows(), n, BlockName::Ux)?;
    let t = phi_ux.horizon().max(phi_xx.horizon());
    if t < 1 {
        return Err(Error::HorizonTooShort { got: t, min: 1 });
    }
    let deviation = identity_deviation(&phi_xx.coeff(1));
    if deviation > LEADING_COEFF_TOL {
        return Err(Error::R1NotIdentity { deviation });
    }
    let (zn, sel_n) = shift_pair(n, t - 1);
    let r_hat = row_of_coeffs(phi_xx, 2, t);
    let m_hat = row_of_coeffs(phi_ux, 2, t);
    let m1 = phi_ux.coeff(1);
    let model = StateSpaceModel::new(&zn - &sel_n * &r_hat, -sel_n, &m1 * &r_hat - m_hat, m1)?;
    Ok(ControllerRealization {
        model,
        kind: ParameterizationKind::SimplifiedStateFeedback,
        horizon: t,
        formula: RecoveryFormula::StateFeedback,
        construction: Construction::ShiftRegister,
    })
}

/// Controller from any block set by composing FIR realizations.
pub fn recover_controller_tf(
    formula: RecoveryFormula,
    blocks: &BlockSet,
    plant: &StateSpaceModel,
) -> Result<StateSpaceModel> {
    use BlockName::*;
    let ss = |name: BlockName| blocks.require(name).map(FirTransferMatrix::to_state_space);
    let shifted = |name: BlockName| -> Result<StateSpaceModel> {
        Ok(blocks.require(name)?.shift_forward()?.to_state_space())
    };
    match formula {
        RecoveryFormula::OutputRatio => ss(Uy)?.cascade(&ss(Yy)?.inverse()?),
        RecoveryFormula::InputRatio => ss(Uu)?.inverse()?.cascade(&ss(Uy)?),
        RecoveryFormula::StateFeedback => shifted(Ux)?.cascade(&shifted(Xx)?.inverse()?),
        RecoveryFormula::FourBlockSlp => {
            let gain = shifted(Ux)?.cascade(&shifted(Xx)?.inverse()?)?;
            ss(Uy)?.parallel_sub(&gain.cascade(&ss(Xy)?)?)
        }
        RecoveryFormula::SlpAlternative => {
            let p = plant.outputs();
            let denom = ss(Xy)?.premul(plant.c())?.add_constant(&Mat::identity(p, p))?;
            ss(Uy)?.cascade(&denom.inverse()?)
        }
    }
}

/// Default controller for a solved block set: the shift-register form where
/// one exists, composition otherwise.
pub fn realize(
    kind: ParameterizationKind,
    blocks: &BlockSet,
    plant: &StateSpaceModel,
) -> Result<ControllerRealization> {
    use BlockName::*;
    let horizon = blocks.horizon();
    match kind {
        ParameterizationKind::Iop
        | ParameterizationKind::MixedI
        | ParameterizationKind::SimplifiedStablePlant => {
            let mut r = realize_iop(blocks.require(Uy)?, blocks.require(Yy)?)?;
            r.kind = kind;
            Ok(r)
        }
        ParameterizationKind::Slp => realize_slp(
            blocks.require(Uy)?,
            blocks.require(Ux)?,
            blocks.require(Xx)?,
            blocks.require(Xy)?,
        ),
        ParameterizationKind::SimplifiedStateFeedback => {
            realize_state_feedback(blocks.require(Ux)?, blocks.require(Xx)?)
        }
        ParameterizationKind::MixedII => Ok(ControllerRealization {
            model: recover_controller_tf(RecoveryFormula::InputRatio, blocks, plant)?,
            kind,
            horizon,
            formula: RecoveryFormula::InputRatio,
            construction: Construction::Composition,
        }),
    }
}
