//! Pointwise check of the affine identities in the frequency domain.

use super::{BlockName, BlockResponses, ParameterizationKind};
use crate::lti::{to_complex, CMat, StateSpaceModel, C64};
use crate::{Error, Result};

/// Residual matrices of each defining identity of `kind`, evaluated at `z`.
/// Requires `z` not to be an eigenvalue of `A`.
pub fn constraint_mismatch(
    kind: ParameterizationKind,
    plant: &StateSpaceModel,
    blocks: &dyn BlockResponses,
    z: C64,
) -> Result<Vec<CMat>> {
    use BlockName::*;
    let n = plant.states();
    let (a, b, c) = (to_complex(plant.a()), to_complex(plant.b()), to_complex(plant.c()));
    let zi_a = CMat::identity(n, n) * z - &a;
    let res = zi_a
        .clone()
        .lu()
        .solve(&CMat::identity(n, n))
        .ok_or_else(|| Error::PreconditionViolated(format!("z = {z} is a plant pole")))?;
    let g = &c * &res * &b;
    let eye = |k: usize| CMat::identity(k, k);
    let (ip, im, inn) = (eye(plant.outputs()), eye(plant.inputs()), eye(n));
    let get = |name: BlockName| {
        blocks
            .response(name, z)
            .ok_or_else(|| Error::MissingBlock(name.label().to_string()))
    };
    let slp_row = |x: &CMat, u: &CMat, rhs: &CMat| &zi_a * x - &b * u - rhs;
    let slp_col = |x: &CMat, y: &CMat, rhs: &CMat| x * &zi_a - y * &c - rhs;
    Ok(match kind {
        ParameterizationKind::Slp => {
            let (xx, xy, ux, uy) = (get(Xx)?, get(Xy)?, get(Ux)?, get(Uy)?);
            vec![
                slp_row(&xx, &ux, &inn),
                slp_row(&xy, &uy, &CMat::zeros(n, plant.outputs())),
                slp_col(&xx, &xy, &inn),
                slp_col(&ux, &uy, &CMat::zeros(plant.inputs(), n)),
            ]
        }
        ParameterizationKind::Iop => {
            let (yy, yu, uy, uu) = (get(Yy)?, get(Yu)?, get(Uy)?, get(Uu)?);
            vec![
                &yy - &g * &uy - &ip,
                &yu - &g * &uu,
                &yu - &yy * &g,
                &uu - &uy * &g - &im,
            ]
        }
        ParameterizationKind::MixedI => {
            let (yx, yy, ux, uy) = (get(Yx)?, get(Yy)?, get(Ux)?, get(Uy)?);
            vec![
                &yx - &g * &ux - &c * &res,
                &yy - &g * &uy - &ip,
                slp_col(&yx, &yy, &CMat::zeros(plant.outputs(), n)),
                slp_col(&ux, &uy, &CMat::zeros(plant.inputs(), n)),
            ]
        }
        ParameterizationKind::MixedII => {
            let (xy, xu, uy, uu) = (get(Xy)?, get(Xu)?, get(Uy)?, get(Uu)?);
            vec![
                slp_row(&xy, &uy, &CMat::zeros(n, plant.outputs())),
                slp_row(&xu, &uu, &CMat::zeros(n, plant.inputs())),
                &xu - &xy * &g - &res * &b,
                &uu - &uy * &g - &im,
            ]
        }
        ParameterizationKind::SimplifiedStablePlant => {
            let (yy, uy) = (get(Yy)?, get(Uy)?);
            vec![&yy - &g * &uy - &ip]
        }
        ParameterizationKind::SimplifiedStateFeedback => {
            let (xx, ux) = (get(Xx)?, get(Ux)?);
            vec![slp_row(&xx, &ux, &inn)]
        }
    })
}

/// Largest entry magnitude of [`constraint_mismatch`] over a set of points.
pub fn max_constraint_mismatch(
    kind: ParameterizationKind,
    plant: &StateSpaceModel,
    blocks: &dyn BlockResponses,
    points: &[C64],
) -> Result<f64> {
    let mut worst = 0.0f64;
    for z in points {
        for m in constraint_mismatch(kind, plant, blocks, *z)? {
            worst = m.iter().map(|v| v.norm()).fold(worst, f64::max);
        }
    }
    Ok(worst)
}
