//! The nine disturbance-to-signal maps of a plant/controller interconnection
//! and the internal-stability tests built on them.
//!
//! Plant: `x⁺ = A x + B u + δx`, `y = C x + δy`.
//! Controller: `ξ⁺ = A_k ξ + B_k y`, `u = C_k ξ + D_k y + δu`.

use std::fmt;

use crate::lti::{hstack, spectral_radius, vstack, Mat, StateSpaceModel, STABILITY_MARGIN};
use crate::{Error, Result};

/// Loop signal observed by a map.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Signal {
    State,
    Output,
    Input,
}

/// Disturbance channel driving a map.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Disturbance {
    State,
    Output,
    Input,
}

impl Signal {
    pub const ALL: [Signal; 3] = [Signal::State, Signal::Output, Signal::Input];
    fn index(self) -> usize {
        self as usize
    }
    pub fn symbol(self) -> &'static str {
        match self {
            Signal::State => "x",
            Signal::Output => "y",
            Signal::Input => "u",
        }
    }
}

impl Disturbance {
    pub const ALL: [Disturbance; 3] = [Disturbance::State, Disturbance::Output, Disturbance::Input];
    fn index(self) -> usize {
        self as usize
    }
    pub fn symbol(self) -> &'static str {
        match self {
            Disturbance::State => "dx",
            Disturbance::Output => "dy",
            Disturbance::Input => "du",
        }
    }
}

/// A two-disturbance, two-signal group of maps.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct MapGroup {
    pub disturbances: [Disturbance; 2],
    pub signals: [Signal; 2],
}

impl MapGroup {
    /// The nine groups, disturbance pairs outermost.
    pub fn all() -> Vec<MapGroup> {
        let pairs_d = [
            [Disturbance::State, Disturbance::Output],
            [Disturbance::State, Disturbance::Input],
            [Disturbance::Output, Disturbance::Input],
        ];
        let pairs_s = [
            [Signal::State, Signal::Output],
            [Signal::State, Signal::Input],
            [Signal::Output, Signal::Input],
        ];
        pairs_d
            .iter()
            .flat_map(|d| pairs_s.iter().map(move |s| MapGroup { disturbances: *d, signals: *s }))
            .collect()
    }

    /// Groups whose stability alone is equivalent to internal stability:
    /// the disturbance pair excites both the plant state and the controller
    /// (`δy` plus one of `δx`, `δu`), and the signal pair sees both
    /// (`u` plus one of `x`, `y`).
    pub fn is_certifying(&self) -> bool {
        self.disturbances.contains(&Disturbance::Output)
            && self.disturbances.iter().any(|d| *d != Disturbance::Output)
            && self.signals.contains(&Signal::Input)
            && self.signals.iter().any(|s| *s != Signal::Input)
    }
}

impl fmt::Display for MapGroup {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "({},{})->({},{})",
            self.disturbances[0].symbol(),
            self.disturbances[1].symbol(),
            self.signals[0].symbol(),
            self.signals[1].symbol()
        )
    }
}

/// The nine closed-loop maps on a shared state matrix.
#[derive(Debug, Clone)]
pub struct ClosedLoopMaps {
    a_cl: Mat,
    out_rows: [Mat; 3],
    in_cols: [Mat; 3],
    feedthrough: [[Mat; 3]; 3],
}

impl ClosedLoopMaps {
    pub fn a_cl(&self) -> &Mat {
        &self.a_cl
    }

    /// Map from one disturbance to one signal.
    pub fn map(&self, signal: Signal, disturbance: Disturbance) -> StateSpaceModel {
        StateSpaceModel::new(
            self.a_cl.clone(),
            self.in_cols[disturbance.index()].clone(),
            self.out_rows[signal.index()].clone(),
            self.feedthrough[signal.index()][disturbance.index()].clone(),
        )
        .expect("closed-loop blocks are consistent")
    }

    /// Stacked map `[d1, d2] -> [s1; s2]`.
    pub fn group(&self, group: &MapGroup) -> StateSpaceModel {
        self.stacked(&group.signals, &group.disturbances)
    }

    pub fn stacked(&self, signals: &[Signal], disturbances: &[Disturbance]) -> StateSpaceModel {
        let rows: usize = signals.iter().map(|s| self.out_rows[s.index()].nrows()).sum();
        let cols: usize = disturbances.iter().map(|d| self.in_cols[d.index()].ncols()).sum();
        let nc = self.a_cl.nrows();
        let mut b = Mat::zeros(nc, cols);
        let mut c = Mat::zeros(rows, nc);
        let mut d = Mat::zeros(rows, cols);
        let mut r0 = 0;
        for s in signals {
            let cs = &self.out_rows[s.index()];
            c.view_mut((r0, 0), cs.shape()).copy_from(cs);
            let mut c0 = 0;
            for dist in disturbances {
                let bd = &self.in_cols[dist.index()];
                let dd = &self.feedthrough[s.index()][dist.index()];
                d.view_mut((r0, c0), dd.shape()).copy_from(dd);
                c0 += bd.ncols();
            }
            r0 += cs.nrows();
        }
        let mut c0 = 0;
        for dist in disturbances {
            let bd = &self.in_cols[dist.index()];
            b.view_mut((0, c0), bd.shape()).copy_from(bd);
            c0 += bd.ncols();
        }
        StateSpaceModel::new(self.a_cl.clone(), b, c, d).expect("closed-loop blocks are consistent")
    }

    pub fn xx(&self) -> StateSpaceModel {
        self.map(Signal::State, Disturbance::State)
    }
    pub fn xy(&self) -> StateSpaceModel {
        self.map(Signal::State, Disturbance::Output)
    }
    pub fn xu(&self) -> StateSpaceModel {
        self.map(Signal::State, Disturbance::Input)
    }
    pub fn yx(&self) -> StateSpaceModel {
        self.map(Signal::Output, Disturbance::State)
    }
    pub fn yy(&self) -> StateSpaceModel {
        self.map(Signal::Output, Disturbance::Output)
    }
    pub fn yu(&self) -> StateSpaceModel {
        self.map(Signal::Output, Disturbance::Input)
    }
    pub fn ux(&self) -> StateSpaceModel {
        self.map(Signal::Input, Disturbance::State)
    }
    pub fn uy(&self) -> StateSpaceModel {
        self.map(Signal::Input, Disturbance::Output)
    }
    pub fn uu(&self) -> StateSpaceModel {
        self.map(Signal::Input, Disturbance::Input)
    }
}

fn check_interconnection(plant: &StateSpaceModel, controller: &StateSpaceModel) -> Result<()> {
    if !plant.is_strictly_proper() {
        return Err(Error::PlantNotStrictlyProper);
    }
    if controller.inputs() != plant.outputs() || controller.outputs() != plant.inputs() {
        return Err(Error::DimensionMismatch(format!(
            "controller is {}x{}, plant needs {}x{}",
            controller.outputs(),
            controller.inputs(),
            plant.inputs(),
            plant.outputs()
        )));
    }
    Ok(())
}

/// Closed-loop state matrix `[[A + B D_k C, B C_k], [B_k C, A_k]]`.
pub fn closed_loop_matrix(plant: &StateSpaceModel, controller: &StateSpaceModel) -> Result<Mat> {
    check_interconnection(plant, controller)?;
    let (a, b, c) = (plant.a(), plant.b(), plant.c());
    let (ak, bk, ck, dk) = (controller.a(), controller.b(), controller.c(), controller.d());
    let (n, q) = (plant.states(), controller.states());
    let mut a_cl = Mat::zeros(n + q, n + q);
    a_cl.view_mut((0, 0), (n, n)).copy_from(&(a + b * dk * c));
    a_cl.view_mut((0, n), (n, q)).copy_from(&(b * ck));
    a_cl.view_mut((n, 0), (q, n)).copy_from(&(bk * c));
    a_cl.view_mut((n, n), (q, q)).copy_from(ak);
    Ok(a_cl)
}

/// Assembles the nine maps in state-space form.
pub fn assemble_closed_loop(
    plant: &StateSpaceModel,
    controller: &StateSpaceModel,
) -> Result<ClosedLoopMaps> {
    let a_cl = closed_loop_matrix(plant, controller)?;
    let (b, c) = (plant.b(), plant.c());
    let (bk, ck, dk) = (controller.b(), controller.c(), controller.d());
    let (n, m, p, q) = (
        plant.states(),
        plant.inputs(),
        plant.outputs(),
        controller.states(),
    );

    let stack_rows = |top: Mat, bottom: Mat| vstack(&top, &bottom);
    let stack_cols = |left: Mat, right: Mat| hstack(&left, &right);

    let out_rows = [
        stack_cols(Mat::identity(n, n), Mat::zeros(n, q)),
        stack_cols(c.clone(), Mat::zeros(p, q)),
        stack_cols(dk * c, ck.clone()),
    ];
    let in_cols = [
        stack_rows(Mat::identity(n, n), Mat::zeros(q, n)),
        stack_rows(b * dk, bk.clone()),
        stack_rows(b.clone(), Mat::zeros(q, m)),
    ];
    let feedthrough = [
        [Mat::zeros(n, n), Mat::zeros(n, p), Mat::zeros(n, m)],
        [Mat::zeros(p, n), Mat::identity(p, p), Mat::zeros(p, m)],
        [Mat::zeros(m, n), dk.clone(), Mat::identity(m, m)],
    ];
    Ok(ClosedLoopMaps {
        a_cl,
        out_rows,
        in_cols,
        feedthrough,
    })
}

/// Stability of one group of maps.
#[derive(Debug, Clone, PartialEq)]
pub struct GroupVerdict {
    pub group: MapGroup,
    pub stable: bool,
    pub certifying: bool,
    /// Group stability equals internal stability.
    pub agrees: bool,
}

/// Internal stability together with the per-group picture.
#[derive(Debug, Clone, PartialEq)]
pub struct StabilityVerdict {
    pub internally_stable: bool,
    pub spectral_radius: f64,
    pub per_group: Vec<GroupVerdict>,
    pub certifying_groups: Vec<MapGroup>,
}

impl StabilityVerdict {
    /// Groups whose stability differs from internal stability.
    pub fn discrepancies(&self) -> Vec<MapGroup> {
        self.per_group
            .iter()
            .filter(|g| !g.agrees)
            .map(|g| g.group)
            .collect()
    }

    /// True when every certifying group is stable.
    pub fn certifying_groups_stable(&self) -> bool {
        self.per_group
            .iter()
            .filter(|g| g.certifying)
            .all(|g| g.stable)
    }
}

/// Eigenvalue test on the closed-loop matrix plus pole tests on the nine groups.
pub fn internal_stability(
    plant: &StateSpaceModel,
    controller: &StateSpaceModel,
) -> Result<StabilityVerdict> {
    let maps = assemble_closed_loop(plant, controller)?;
    let radius = spectral_radius(maps.a_cl())?;
    let internally_stable = radius < 1.0 - STABILITY_MARGIN;
    let mut per_group = Vec::with_capacity(9);
    for group in MapGroup::all() {
        let stable = internally_stable || maps.group(&group).has_stable_transfer()?;
        per_group.push(GroupVerdict {
            group,
            stable,
            certifying: group.is_certifying(),
            agrees: stable == internally_stable,
        });
    }
    Ok(StabilityVerdict {
        internally_stable,
        spectral_radius: radius,
        certifying_groups: MapGroup::all().into_iter().filter(|g| g.is_certifying()).collect(),
        per_group,
    })
}

/// For open-loop stable plants: stability of `δy → u` alone.
pub fn stable_plant_check(plant: &StateSpaceModel, controller: &StateSpaceModel) -> Result<bool> {
    let radius = plant.spectral_radius()?;
    if radius >= 1.0 - STABILITY_MARGIN {
        return Err(Error::PlantUnstable {
            spectral_radius: radius,
        });
    }
    assemble_closed_loop(plant, controller)?.uy().has_stable_transfer()
}

/// For `C = I`: stability of `δx → (x, u)`.
pub fn state_feedback_check(plant: &StateSpaceModel, controller: &StateSpaceModel) -> Result<bool> {
    let n = plant.states();
    if plant.c() != &Mat::identity(n, n) {
        return Err(Error::NotStateFeedback);
    }
    assemble_closed_loop(plant, controller)?
        .stacked(&[Signal::State, Signal::Input], &[Disturbance::State])
        .has_stable_transfer()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lti::{frequency_grid, unit_point, CMat, C64};
    use nalgebra::dmatrix;

    fn max_err(a: &CMat, b: &CMat) -> f64 {
        (a - b).iter().map(|v| v.norm()).fold(0.0, f64::max)
    }

    fn stable_plant() -> StateSpaceModel {
        StateSpaceModel::strictly_proper(
            dmatrix![0.5, 0.2; -0.1, 0.3],
            dmatrix![1.0; 0.5],
            dmatrix![1.0, -1.0],
        )
        .unwrap()
    }

    fn dynamic_controller() -> StateSpaceModel {
        StateSpaceModel::new(dmatrix![0.2], dmatrix![1.0], dmatrix![-0.3], dmatrix![0.4]).unwrap()
    }

    #[test]
    fn four_certifying_groups() {
        let blue: Vec<String> = MapGroup::all()
            .into_iter()
            .filter(|g| g.is_certifying())
            .map(|g| g.to_string())
            .collect();
        assert_eq!(
            blue,
            vec!["(dx,dy)->(x,u)", "(dx,dy)->(y,u)", "(dy,du)->(x,u)", "(dy,du)->(y,u)"]
        );
    }

    #[test]
    fn open_loop_maps_with_zero_controller() {
        let g = stable_plant();
        let maps = assemble_closed_loop(&g, &StateSpaceModel::zero(1, 1)).unwrap();
        let z = unit_point(0.4);
        assert!(maps.uy().eval(z).unwrap().iter().all(|v| v.norm() == 0.0));
        assert!(max_err(&maps.yy().eval(z).unwrap(), &CMat::identity(1, 1)) < 1e-15);
        let open = StateSpaceModel::strictly_proper(g.a().clone(), Mat::identity(2, 2), g.c().clone())
            .unwrap();
        assert!(max_err(&maps.yx().eval(z).unwrap(), &open.eval(z).unwrap()) < 1e-14);
        let v = internal_stability(&g, &StateSpaceModel::zero(1, 1)).unwrap();
        assert!(v.internally_stable && v.per_group.iter().all(|g| g.stable));
    }

    #[test]
    fn blocks_match_algebraic_formulas() {
        let g = stable_plant();
        let k = dynamic_controller();
        let maps = assemble_closed_loop(&g, &k).unwrap();
        for w in frequency_grid(32) {
            let z = unit_point(w * 0.99 + 0.005);
            let gz = g.eval(z).unwrap();
            let kz = k.eval(z).unwrap();
            let n = g.states();
            let mut res = crate::lti::to_complex(g.a()).map(|v| -v);
            for i in 0..n {
                res[(i, i)] += z;
            }
            let bkc = crate::lti::to_complex(&(g.b() * Mat::identity(1, 1))) * &kz * crate::lti::to_complex(g.c());
            let xx = (res - bkc).try_inverse().unwrap();
            let b = crate::lti::to_complex(g.b());
            let c = crate::lti::to_complex(g.c());
            let yu = &c * &xx * &b;
            let uu = &kz * &c * &xx * &b + CMat::identity(1, 1);
            assert!(max_err(&maps.xx().eval(z).unwrap(), &xx) < 1e-10);
            assert!(max_err(&maps.yu().eval(z).unwrap(), &yu) < 1e-10);
            assert!(max_err(&maps.uu().eval(z).unwrap(), &uu) < 1e-10);
            let yy = maps.yy().eval(z).unwrap();
            let uy = maps.uy().eval(z).unwrap();
            assert!(max_err(&(yy - &gz * uy), &CMat::identity(1, 1)) < 1e-10);
        }
    }

    #[test]
    fn feedthrough_structure() {
        let maps = assemble_closed_loop(&stable_plant(), &dynamic_controller()).unwrap();
        assert_eq!(maps.yy().d(), &Mat::identity(1, 1));
        assert_eq!(maps.uu().d(), &Mat::identity(1, 1));
        assert_eq!(maps.uy().d(), &dmatrix![0.4]);
        assert!(maps.xx().is_strictly_proper() && maps.yu().is_strictly_proper());
    }

    #[test]
    fn rejects_improper_plant() {
        let g = StateSpaceModel::new(dmatrix![0.5], dmatrix![1.0], dmatrix![1.0], dmatrix![1.0])
            .unwrap();
        assert!(matches!(
            assemble_closed_loop(&g, &StateSpaceModel::zero(1, 1)),
            Err(Error::PlantNotStrictlyProper)
        ));
    }

    #[test]
    fn hidden_controller_mode_is_invisible_to_plant_side_group() {
        // Second input is not actuated; the unstable controller mode drives
        // only that input, so (dx,dy)->(x,y) stays stable while the loop is not.
        let g = StateSpaceModel::strictly_proper(
            dmatrix![0.5, 0.0; 0.0, 1.0],
            dmatrix![0.0, 0.0; 1.0, 0.0],
            dmatrix![0.0, 1.0],
        )
        .unwrap();
        let k = StateSpaceModel::new(dmatrix![2.0], dmatrix![1.0], dmatrix![0.0; 1.0], dmatrix![-1.0; 0.0])
            .unwrap();
        let v = internal_stability(&g, &k).unwrap();
        assert!(!v.internally_stable);
        let xy = v
            .per_group
            .iter()
            .find(|gv| gv.group.to_string() == "(dx,dy)->(x,y)")
            .unwrap();
        assert!(xy.stable && !xy.agrees);
        assert!(v.per_group.iter().filter(|g| g.certifying).all(|g| !g.stable));
    }

    #[test]
    fn specialised_checks() {
        let g = stable_plant();
        assert!(stable_plant_check(&g, &StateSpaceModel::zero(1, 1)).unwrap());
        let unstable = StateSpaceModel::strictly_proper(dmatrix![2.0], dmatrix![1.0], dmatrix![1.0])
            .unwrap();
        assert!(matches!(
            stable_plant_check(&unstable, &StateSpaceModel::zero(1, 1)),
            Err(Error::PlantUnstable { .. })
        ));
        assert!(!state_feedback_check(&unstable, &StateSpaceModel::zero(1, 1)).unwrap());
        assert!(state_feedback_check(&unstable, &StateSpaceModel::static_gain(dmatrix![-2.0])).unwrap());
        assert!(matches!(
            state_feedback_check(&g, &StateSpaceModel::zero(1, 1)),
            Err(Error::NotStateFeedback)
        ));
        let _ = C64::new(0.0, 0.0);
    }
}
