use nalgebra::DVector;

use super::statespace::StateSpaceModel;
use crate::{Error, Result};

/// Additive signals injected at the plant state, the measurement and the
/// actuator. Missing samples count as zero.
#[derive(Debug, Clone, Default)]
pub struct Disturbances {
    pub state: Vec<DVector<f64>>,
    pub measurement: Vec<DVector<f64>>,
    pub actuation: Vec<DVector<f64>>,
}

/// Sampled closed-loop signals for `t = 0..=horizon`.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub x: Vec<DVector<f64>>,
    pub y: Vec<DVector<f64>>,
    pub u: Vec<DVector<f64>>,
    pub xi: Vec<DVector<f64>>,
}

fn sample(seq: &[DVector<f64>], t: usize, len: usize, what: &str) -> Result<DVector<f64>> {
    match seq.get(t) {
        None => Ok(DVector::zeros(len)),
        Some(v) if v.len() == len => Ok(v.clone()),
        Some(v) => Err(Error::DimensionMismatch(format!(
            "{what} sample at t={t} has length {}, expected {len}",
            v.len()
        ))),
    }
}

/// Rolls out the plant/controller interconnection from `x0` with the
/// controller state starting at zero.
pub fn simulate(
    plant: &StateSpaceModel,
    controller: &StateSpaceModel,
    x0: &DVector<f64>,
    horizon: usize,
    disturbances: &Disturbances,
) -> Result<Trajectory> {
    let xi0 = DVector::zeros(controller.states());
    simulate_from(plant, controller, x0, &xi0, horizon, disturbances)
}

/// As [`simulate`] with an explicit controller initial state.
pub fn simulate_from(
    plant: &StateSpaceModel,
    controller: &StateSpaceModel,
    x0: &DVector<f64>,
    xi0: &DVector<f64>,
    horizon: usize,
    disturbances: &Disturbances,
) -> Result<Trajectory> {
    let (n, m, p) = (plant.states(), plant.inputs(), plant.outputs());
    if !plant.is_strictly_proper() {
        return Err(Error::PlantNotStrictlyProper);
    }
    if controller.inputs() != p || controller.outputs() != m {
        return Err(Error::DimensionMismatch(format!(
            "controller is {}x{}, plant needs {m}x{p}",
            controller.outputs(),
            controller.inputs()
        )));
    }
    if x0.len() != n || xi0.len() != controller.states() {
        return Err(Error::DimensionMismatch("initial state length".into()));
    }
    let mut traj = Trajectory {
        x: Vec::with_capacity(horizon + 1),
        y: Vec::with_capacity(horizon + 1),
        u: Vec::with_capacity(horizon + 1),
        xi: Vec::with_capacity(horizon + 1),
    };
    let mut x = x0.clone();
    let mut xi = xi0.clone();
    for t in 0..=horizon {
        let y = plant.c() * &x + sample(&disturbances.measurement, t, p, "measurement")?;
        let u = controller.c() * &xi
            + controller.d() * &y
            + sample(&disturbances.actuation, t, m, "actuation")?;
        let x_next =
            plant.a() * &x + plant.b() * &u + sample(&disturbances.state, t, n, "state")?;
        let xi_next = controller.a() * &xi + controller.b() * &y;
        traj.x.push(std::mem::replace(&mut x, x_next));
        traj.xi.push(std::mem::replace(&mut xi, xi_next));
        traj.y.push(y);
        traj.u.push(u);
    }
    Ok(traj)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lti::Mat;
    use nalgebra::{dmatrix, dvector};

    #[test]
    fn open_loop_free_response() {
        let a = dmatrix![0.5, 0.1; 0.0, 0.8];
        let plant = StateSpaceModel::strictly_proper(a.clone(), dmatrix![0.0; 1.0], dmatrix![1.0, 0.0])
            .unwrap();
        let k = StateSpaceModel::zero(1, 1);
        let tr = simulate(&plant, &k, &dvector![1.0, 0.0], 6, &Disturbances::default()).unwrap();
        let mut expect = dvector![1.0, 0.0];
        for x in &tr.x {
            assert!((x - &expect).norm() < 1e-15);
            expect = &a * expect;
        }
    }

    #[test]
    fn zero_initial_conditions_give_zero_trajectory() {
        let plant = StateSpaceModel::strictly_proper(
            dmatrix![1.2, 1.0; 0.0, 0.3],
            dmatrix![0.0; 1.0],
            dmatrix![1.0, 0.0],
        )
        .unwrap();
        let k = StateSpaceModel::new(dmatrix![0.5], dmatrix![1.0], dmatrix![2.0], dmatrix![-1.0])
            .unwrap();
        let tr = simulate(&plant, &k, &dvector![0.0, 0.0], 20, &Disturbances::default()).unwrap();
        assert!(tr.x.iter().chain(&tr.y).chain(&tr.u).all(|v| v.norm() == 0.0));
    }

    #[test]
    fn dimension_checks() {
        let plant =
            StateSpaceModel::strictly_proper(Mat::zeros(1, 1), dmatrix![1.0], dmatrix![1.0]).unwrap();
        let k = StateSpaceModel::zero(2, 1);
        assert!(simulate(&plant, &k, &dvector![0.0], 3, &Disturbances::default()).is_err());
    }
}
