//! Pre-stabilization with a known stable controller, the doubly-coprime
//! factorization it induces, and the Youla map back to closed-loop responses.

use crate::closedloop::{assemble_closed_loop, ClosedLoopMaps};
use crate::lti::{spectral_radius, CMat, Mat, StateSpaceModel, C64, STABILITY_MARGIN};
use crate::param::{BlockName, ModelBlocks};
use crate::{Error, Result};

use super::{input_resolvent, output_resolvent};

/// Plant wrapped by an initial controller `K0`: `Ĝ = (I − G K0)⁻¹ G`.
#[derive(Debug, Clone)]
pub struct Prestabilized {
    pub plant: StateSpaceModel,
    pub initial_controller: StateSpaceModel,
}

impl Prestabilized {
    /// `K0 + K1` for a controller `K1` designed on the wrapped plant.
    pub fn compose(&self, k1: &StateSpaceModel) -> Result<StateSpaceModel> {
        self.initial_controller.parallel_add(k1)
    }

    /// `K − K0`: the wrapped-plant controller that composes back to `K`.
    pub fn strip(&self, k: &StateSpaceModel) -> Result<StateSpaceModel> {
        k.parallel_sub(&self.initial_controller)
    }
}

fn initial_loop(plant: &StateSpaceModel, k0: &StateSpaceModel) -> Result<ClosedLoopMaps> {
    let own = spectral_radius(k0.a())?;
    if own >= 1.0 - STABILITY_MARGIN {
        return Err(Error::K0NotStable { spectral_radius: own });
    }
    let maps = assemble_closed_loop(plant, k0)?;
    let closed = spectral_radius(maps.a_cl())?;
    if closed >= 1.0 - STABILITY_MARGIN {
        return Err(Error::K0NotStabilizing { spectral_radius: closed });
    }
    Ok(maps)
}

/// Checks `K0` and returns the wrapped plant, realized on the closed-loop state.
pub fn prestabilize(plant: &StateSpaceModel, k0: &StateSpaceModel) -> Result<Prestabilized> {
    let maps = initial_loop(plant, k0)?;
    Ok(Prestabilized {
        plant: maps.yu(),
        initial_controller: k0.clone(),
    })
}

/// Eight stable factors with `G = N_r M_r⁻¹ = M_l⁻¹ N_l` and
/// `[U_l, −V_l; −N_l, M_l] [M_r, V_r; N_r, U_r] = I`.
#[derive(Debug, Clone)]
pub struct CoprimeFactorization {
    pub u_l: StateSpaceModel,
    pub v_l: StateSpaceModel,
    pub n_l: StateSpaceModel,
    pub m_l: StateSpaceModel,
    pub u_r: StateSpaceModel,
    pub v_r: StateSpaceModel,
    pub n_r: StateSpaceModel,
    pub m_r: StateSpaceModel,
}

fn at(g: &StateSpaceModel, z: C64) -> Result<CMat> {
    g.eval(z)
        .ok_or_else(|| Error::PreconditionViolated(format!("z = {z} is a pole of a factor")))
}

fn blocks2(tl: &CMat, tr: &CMat, bl: &CMat, br: &CMat) -> CMat {
    let (r0, c0) = tl.shape();
    let mut out = CMat::zeros(r0 + bl.nrows(), c0 + tr.ncols());
    out.view_mut((0, 0), tl.shape()).copy_from(tl);
    out.view_mut((0, c0), tr.shape()).copy_from(tr);
    out.view_mut((r0, 0), bl.shape()).copy_from(bl);
    out.view_mut((r0, c0), br.shape()).copy_from(br);
    out
}

fn max_entry(m: &CMat) -> f64 {
    m.iter().map(|v| v.norm()).fold(0.0, f64::max)
}

impl CoprimeFactorization {
    fn factors(&self) -> [&StateSpaceModel; 8] {
        [&self.u_l, &self.v_l, &self.n_l, &self.m_l, &self.u_r, &self.v_r, &self.n_r, &self.m_r]
    }

    /// All eight factors have stable transfer matrices.
    pub fn is_stable(&self) -> Result<bool> {
        for f in self.factors() {
            if !f.has_stable_transfer()? {
                return Ok(false);
            }
        }
        Ok(true)
    }

    /// Largest entry of the Bezout product minus the identity over `points`.
    pub fn bezout_residual(&self, points: &[C64]) -> Result<f64> {
        let mut worst = 0.0f64;
        for &z in points {
            let left = blocks2(&at(&self.u_l, z)?, &-at(&self.v_l, z)?, &-at(&self.n_l, z)?, &at(&self.m_l, z)?);
            let right = blocks2(&at(&self.m_r, z)?, &at(&self.v_r, z)?, &at(&self.n_r, z)?, &at(&self.u_r, z)?);
            let k = left.nrows();
            worst = worst.max(max_entry(&(left * right - CMat::identity(k, k))));
        }
        Ok(worst)
    }

    /// Largest gap between `G` and both `N_r M_r⁻¹` and `M_l⁻¹ N_l` over `points`.
    pub fn plant_mismatch(&self, plant: &StateSpaceModel, points: &[C64]) -> Result<f64> {
        let mut worst = 0.0f64;
        for &z in points {
            let g = at(plant, z)?;
            let singular = || Error::PreconditionViolated(format!("factor is singular at z = {z}"));
            let right = at(&self.n_r, z)? * at(&self.m_r, z)?.try_inverse().ok_or_else(singular)?;
            let left = at(&self.m_l, z)?.try_inverse().ok_or_else(singular)? * at(&self.n_l, z)?;
            worst = worst.max(max_entry(&(&right - &g))).max(max_entry(&(&left - &g)));
        }
        Ok(worst)
    }
}

/// Factorization built from the closed loop with a stable stabilizing `K0`:
/// `M_l = (I − G K0)⁻¹`, `N_l = G (I − K0 G)⁻¹`, `M_r = −(I − K0 G)⁻¹`,
/// `N_r = −N_l`, `U_l = −I`, `V_l = −K0`, `U_r = I`, `V_r = K0`.
pub fn coprime_from_k0(plant: &StateSpaceModel, k0: &StateSpaceModel) -> Result<CoprimeFactorization> {
    let maps = initial_loop(plant, k0)?;
    let (m, p) = (plant.inputs(), plant.outputs());
    let yu = maps.yu();
    Ok(CoprimeFactorization {
        u_l: StateSpaceModel::static_gain(-Mat::identity(m, m)),
        v_l: k0.neg(),
        n_l: yu.clone(),
        m_l: maps.yy(),
        u_r: StateSpaceModel::identity(p),
        v_r: k0.clone(),
        n_r: yu.neg(),
        m_r: maps.uu().neg(),
    })
}

fn check_parameter(f: &CoprimeFactorization, q: &StateSpaceModel) -> Result<()> {
    let (m, p) = (f.v_r.outputs(), f.u_r.outputs());
    if (q.outputs(), q.inputs()) != (m, p) {
        return Err(Error::DimensionMismatch(format!(
            "Youla parameter is {}x{}, expected {m}x{p}",
            q.outputs(),
            q.inputs()
        )));
    }
    let radius = spectral_radius(q.a())?;
    if radius >= 1.0 - STABILITY_MARGIN {
        return Err(Error::QUnstable { spectral_radius: radius });
    }
    Ok(())
}

/// `(U_r − N_r Q, V_r − M_r Q)`.
fn numerators(f: &CoprimeFactorization, q: &StateSpaceModel) -> Result<(StateSpaceModel, StateSpaceModel)> {
    check_parameter(f, q)?;
    Ok((
        f.u_r.parallel_sub(&f.n_r.cascade(q)?)?,
        f.v_r.parallel_sub(&f.m_r.cascade(q)?)?,
    ))
}

/// `K = (V_r − M_r Q)(U_r − N_r Q)⁻¹`.
pub fn youla_controller(f: &CoprimeFactorization, q: &StateSpaceModel) -> Result<StateSpaceModel> {
    let (wy, wu) = numerators(f, q)?;
    wu.cascade(&wy.inverse()?)
}

/// All nine closed-loop responses generated by the Youla parameter `Q`.
pub fn youla_to_blocks(
    f: &CoprimeFactorization,
    q: &StateSpaceModel,
    plant: &StateSpaceModel,
) -> Result<ModelBlocks> {
    use BlockName::*;
    let (wy, wu) = numerators(f, q)?;
    let n = plant.states();
    let m = plant.inputs();
    let yy = wy.cascade(&f.m_l)?;
    let uy = wu.cascade(&f.m_l)?;
    let yu = wy.cascade(&f.n_l)?;
    let uu = wu.cascade(&f.n_l)?.add_constant(&Mat::identity(m, m))?;
    let resolvent = StateSpaceModel::strictly_proper(plant.a().clone(), Mat::identity(n, n), Mat::identity(n, n))?;
    let to_state = input_resolvent(plant)?;
    let from_state = output_resolvent(plant)?;
    let ux = uy.cascade(&from_state)?;
    let xy = to_state.cascade(&uy)?;
    let xx = resolvent.parallel_add(&to_state.cascade(&ux)?)?;
    let xu = to_state.cascade(&uu)?;
    let yx = yy.cascade(&from_state)?;
    let mut out = ModelBlocks::new();
    for (name, model) in [(Xx, xx), (Xy, xy), (Xu, xu), (Yx, yx), (Yy, yy), (Yu, yu), (Ux, ux), (Uy, uy), (Uu, uu)] {
        out.insert(name, model);
    }
    Ok(out)
}
