use nalgebra::DMatrix;

use super::spectrum::{eigenvalues, is_hidden_mode, spectral_radius, STABILITY_MARGIN};
use super::{check_finite, to_complex, CMat, Mat, C64};
use crate::{Error, Result};

/// Largest feedthrough condition number accepted by [`ss_inverse`].
const MAX_FEEDTHROUGH_CONDITION: f64 = 1e12;

/// Realization `x⁺ = A x + B u`, `y = C x + D u`.
#[derive(Debug, Clone, PartialEq)]
pub struct StateSpaceModel {
    a: Mat,
    b: Mat,
    c: Mat,
    d: Mat,
}

impl StateSpaceModel {
    pub fn new(a: Mat, b: Mat, c: Mat, d: Mat) -> Result<Self> {
        let n = a.nrows();
        if a.ncols() != n {
            return Err(Error::DimensionMismatch(format!(
                "A is {}x{}, expected square",
                a.nrows(),
                a.ncols()
            )));
        }
        if b.nrows() != n || c.ncols() != n {
            return Err(Error::DimensionMismatch(format!(
                "B has {} rows and C has {} columns, expected {n}",
                b.nrows(),
                c.ncols()
            )));
        }
        if d.nrows() != c.nrows() || d.ncols() != b.ncols() {
            return Err(Error::DimensionMismatch(format!(
                "D is {}x{}, expected {}x{}",
                d.nrows(),
                d.ncols(),
                c.nrows(),
                b.ncols()
            )));
        }
        check_finite(&a, "A")?;
        check_finite(&b, "B")?;
        check_finite(&c, "C")?;
        check_finite(&d, "D")?;
        Ok(Self { a, b, c, d })
    }

    /// Model with `D = 0`.
    pub fn strictly_proper(a: Mat, b: Mat, c: Mat) -> Result<Self> {
        let d = Mat::zeros(c.nrows(), b.ncols());
        Self::new(a, b, c, d)
    }

    /// Memoryless gain `y = D u`.
    pub fn static_gain(d: Mat) -> Self {
        let (p, m) = d.shape();
        Self {
            a: Mat::zeros(0, 0),
            b: Mat::zeros(0, m),
            c: Mat::zeros(p, 0),
            d,
        }
    }

    pub fn zero(outputs: usize, inputs: usize) -> Self {
        Self::static_gain(Mat::zeros(outputs, inputs))
    }

    pub fn identity(size: usize) -> Self {
        Self::static_gain(Mat::identity(size, size))
    }

    pub fn a(&self) -> &Mat {
        &self.a
    }
    pub fn b(&self) -> &Mat {
        &self.b
    }
    pub fn c(&self) -> &Mat {
        &self.c
    }
    pub fn d(&self) -> &Mat {
        &self.d
    }
    pub fn states(&self) -> usize {
        self.a.nrows()
    }
    pub fn inputs(&self) -> usize {
        self.b.ncols()
    }
    pub fn outputs(&self) -> usize {
        self.c.nrows()
    }

    pub fn is_strictly_proper(&self) -> bool {
        self.d.iter().all(|v| *v == 0.0)
    }

    /// `C (zI − A)⁻¹ B + D`, by an LU solve. Returns `None` when `z` is an eigenvalue of `A`.
    pub fn eval(&self, z: C64) -> Option<CMat> {
        let n = self.states();
        let mut out = to_complex(&self.d);
        if n == 0 {
            return Some(out);
        }
        let mut shifted = to_complex(&self.a).map(|v| -v);
        for i in 0..n {
            shifted[(i, i)] += z;
        }
        let x = shifted.lu().solve(&to_complex(&self.b))?;
        if x.iter().any(|v| !v.re.is_finite() || !v.im.is_finite()) {
            return None;
        }
        out += to_complex(&self.c) * x;
        Some(out)
    }

    /// Impulse-response coefficient `k`: `D` for `k = 0`, `C A^{k-1} B` after.
    pub fn markov(&self, k: usize) -> Mat {
        if k == 0 {
            return self.d.clone();
        }
        let mut v = self.b.clone();
        for _ in 1..k {
            v = &self.a * v;
        }
        &self.c * v
    }

    /// The first `len` impulse-response coefficients.
    pub fn impulse_response(&self, len: usize) -> Vec<Mat> {
        let mut out = Vec::with_capacity(len);
        if len == 0 {
            return out;
        }
        out.push(self.d.clone());
        let mut v = self.b.clone();
        for _ in 1..len {
            out.push(&self.c * &v);
            v = &self.a * v;
        }
        out
    }

    pub fn spectral_radius(&self) -> Result<f64> {
        spectral_radius(&self.a)
    }

    /// True when every eigenvalue of `A` lies strictly inside the stability margin.
    pub fn is_stable(&self) -> Result<bool> {
        Ok(self.spectral_radius()? < 1.0 - STABILITY_MARGIN)
    }

    /// Eigenvalues of `A` on or outside the stability margin that are both
    /// reachable from the input and visible at the output.
    pub fn unstable_poles(&self) -> Result<Vec<C64>> {
        let eig = eigenvalues(&self.a)?;
        Ok(eig
            .into_iter()
            .filter(|l| l.norm() >= 1.0 - STABILITY_MARGIN)
            .filter(|l| !is_hidden_mode(&self.a, &self.b, &self.c, *l))
            .collect())
    }

    /// Transfer-function stability: no unstable eigenvalue survives the
    /// reachability/observability filter.
    pub fn has_stable_transfer(&self) -> Result<bool> {
        if self.spectral_radius()? < 1.0 - STABILITY_MARGIN {
            return Ok(true);
        }
        Ok(self.unstable_poles()?.is_empty())
    }

    /// `G1 G2`.
    pub fn cascade(&self, rhs: &Self) -> Result<Self> {
        ss_cascade(self, rhs)
    }

    /// `G1 + G2`.
    pub fn parallel_add(&self, rhs: &Self) -> Result<Self> {
        self.parallel(rhs, 1.0)
    }

    /// `G1 − G2`.
    pub fn parallel_sub(&self, rhs: &Self) -> Result<Self> {
        ss_parallel_sub(self, rhs)
    }

    fn parallel(&self, rhs: &Self, sign: f64) -> Result<Self> {
        if self.inputs() != rhs.inputs() || self.outputs() != rhs.outputs() {
            return Err(Error::DimensionMismatch(format!(
                "parallel connection of {}x{} and {}x{} systems",
                self.outputs(),
                self.inputs(),
                rhs.outputs(),
                rhs.inputs()
            )));
        }
        let a = block_diag(&self.a, &rhs.a);
        let b = vstack(&self.b, &rhs.b);
        let c = hstack(&self.c, &(&rhs.c * sign));
        let d = &self.d + &rhs.d * sign;
        Self::new(a, b, c, d)
    }

    pub fn inverse(&self) -> Result<Self> {
        ss_inverse(self)
    }

    /// `−G`.
    pub fn neg(&self) -> Self {
        Self {
            a: self.a.clone(),
            b: self.b.clone(),
            c: -&self.c,
            d: -&self.d,
        }
    }

    /// `M G` for a constant matrix `M`.
    pub fn premul(&self, m: &Mat) -> Result<Self> {
        if m.ncols() != self.outputs() {
            return Err(Error::DimensionMismatch(format!(
                "premultiplier has {} columns, system has {} outputs",
                m.ncols(),
                self.outputs()
            )));
        }
        Self::new(self.a.clone(), self.b.clone(), m * &self.c, m * &self.d)
    }

    /// `G M` for a constant matrix `M`.
    pub fn postmul(&self, m: &Mat) -> Result<Self> {
        if m.nrows() != self.inputs() {
            return Err(Error::DimensionMismatch(format!(
                "postmultiplier has {} rows, system has {} inputs",
                m.nrows(),
                self.inputs()
            )));
        }
        Self::new(self.a.clone(), &self.b * m, self.c.clone(), &self.d * m)
    }

    /// `G + D0` for a constant matrix `D0`.
    pub fn add_constant(&self, d0: &Mat) -> Result<Self> {
        if d0.shape() != self.d.shape() {
            return Err(Error::DimensionMismatch("constant term shape".into()));
        }
        Self::new(
            self.a.clone(),
            self.b.clone(),
            self.c.clone(),
            &self.d + d0,
        )
    }

    /// `z G` for strictly proper `G`: realization `(A, B, C A, C B)`.
    pub fn shift_forward(&self) -> Result<Self> {
        if !self.is_strictly_proper() {
            return Err(Error::PreconditionViolated(
                "forward shift of a system with nonzero feedthrough is improper".into(),
            ));
        }
        Self::new(
            self.a.clone(),
            self.b.clone(),
            &self.c * &self.a,
            &self.c * &self.b,
        )
    }

    /// `[G1, G2]` (inputs concatenated).
    pub fn hconcat(&self, rhs: &Self) -> Result<Self> {
        if self.outputs() != rhs.outputs() {
            return Err(Error::DimensionMismatch("horizontal concatenation".into()));
        }
        Self::new(
            block_diag(&self.a, &rhs.a),
            block_diag(&self.b, &rhs.b),
            hstack(&self.c, &rhs.c),
            hstack(&self.d, &rhs.d),
        )
    }

    /// `[G1; G2]` (outputs stacked).
    pub fn vconcat(&self, rhs: &Self) -> Result<Self> {
        if self.inputs() != rhs.inputs() {
            return Err(Error::DimensionMismatch("vertical concatenation".into()));
        }
        Self::new(
            block_diag(&self.a, &rhs.a),
            vstack(&self.b, &rhs.b),
            block_diag(&self.c, &rhs.c),
            vstack(&self.d, &rhs.d),
        )
    }
}

/// Series connection `y = G1 G2 u`.
pub fn ss_cascade(g1: &StateSpaceModel, g2: &StateSpaceModel) -> Result<StateSpaceModel> {
    if g1.inputs() != g2.outputs() {
        return Err(Error::DimensionMismatch(format!(
            "cascade: left system has {} inputs, right system has {} outputs",
            g1.inputs(),
            g2.outputs()
        )));
    }
    let (n1, n2) = (g1.states(), g2.states());
    let mut a = Mat::zeros(n1 + n2, n1 + n2);
    a.view_mut((0, 0), (n1, n1)).copy_from(&g1.a);
    a.view_mut((0, n1), (n1, n2)).copy_from(&(&g1.b * &g2.c));
    a.view_mut((n1, n1), (n2, n2)).copy_from(&g2.a);
    let b = vstack(&(&g1.b * &g2.d), &g2.b);
    let c = hstack(&g1.c, &(&g1.d * &g2.c));
    let d = &g1.d * &g2.d;
    StateSpaceModel::new(a, b, c, d)
}

/// Parallel connection `y = (G1 − G2) u`.
pub fn ss_parallel_sub(g1: &StateSpaceModel, g2: &StateSpaceModel) -> Result<StateSpaceModel> {
    g1.parallel(g2, -1.0)
}

/// Realization of `G⁻¹`: `(A − B D⁻¹ C, −B D⁻¹, D⁻¹ C, D⁻¹)`.
pub fn ss_inverse(g: &StateSpaceModel) -> Result<StateSpaceModel> {
    let (p, m) = g.d.shape();
    if p != m {
        return Err(Error::DimensionMismatch(format!(
            "inverse of a {p}x{m} system"
        )));
    }
    let condition = condition_number(&g.d);
    // NaN counts as singular.
    if condition.is_nan() || condition >= MAX_FEEDTHROUGH_CONDITION {
        return Err(Error::NonInvertibleFeedthrough { condition });
    }
    let d_inv = g
        .d
        .clone()
        .try_inverse()
        .ok_or(Error::NonInvertibleFeedthrough { condition })?;
    let b_dinv = &g.b * &d_inv;
    StateSpaceModel::new(
        &g.a - &b_dinv * &g.c,
        -b_dinv,
        &d_inv * &g.c,
        d_inv,
    )
}

fn condition_number(d: &Mat) -> f64 {
    if d.is_empty() {
        return 1.0;
    }
    let sv = d.clone().singular_values();
    let max = sv.max();
    let min = sv.min();
    if min == 0.0 {
        f64::INFINITY
    } else {
        max / min
    }
}

pub fn block_diag(x: &Mat, y: &Mat) -> Mat {
    let mut out = DMatrix::zeros(x.nrows() + y.nrows(), x.ncols() + y.ncols());
    out.view_mut((0, 0), x.shape()).copy_from(x);
    out.view_mut((x.nrows(), x.ncols()), y.shape()).copy_from(y);
    out
}

pub fn hstack(x: &Mat, y: &Mat) -> Mat {
    debug_assert_eq!(x.nrows(), y.nrows());
    let mut out = DMatrix::zeros(x.nrows(), x.ncols() + y.ncols());
    out.view_mut((0, 0), x.shape()).copy_from(x);
    out.view_mut((0, x.ncols()), y.shape()).copy_from(y);
    out
}

pub fn vstack(x: &Mat, y: &Mat) -> Mat {
    debug_assert_eq!(x.ncols(), y.ncols());
    let mut out = DMatrix::zeros(x.nrows() + y.nrows(), x.ncols());
    out.view_mut((0, 0), x.shape()).copy_from(x);
    out.view_mut((x.nrows(), 0), y.shape()).copy_from(y);
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lti::frequency_grid;
    use nalgebra::dmatrix;

    fn max_err(a: &CMat, b: &CMat) -> f64 {
        (a - b).iter().map(|v| v.norm()).fold(0.0, f64::max)
    }

    fn random_model(seed: u64, n: usize, p: usize, m: usize) -> StateSpaceModel {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let mut gen = |r: usize, c: usize| Mat::from_fn(r, c, |_, _| rng.gen_range(-1.0..1.0));
        let a = gen(n, n) * 0.4;
        StateSpaceModel::new(a, gen(n, m), gen(p, n), gen(p, m)).unwrap()
    }

    #[test]
    fn rejects_inconsistent_dimensions() {
        let r = StateSpaceModel::new(
            Mat::zeros(2, 2),
            Mat::zeros(3, 1),
            Mat::zeros(1, 2),
            Mat::zeros(1, 1),
        );
        assert!(matches!(r, Err(Error::DimensionMismatch(_))));
    }

    #[test]
    fn cascade_with_identity_keeps_response() {
        let g = random_model(1, 2, 2, 2);
        let k = g.cascade(&StateSpaceModel::identity(2)).unwrap();
        for w in frequency_grid(16) {
            let z = crate::lti::unit_point(w);
            assert!(max_err(&g.eval(z).unwrap(), &k.eval(z).unwrap()) < 1e-12);
        }
    }

    #[test]
    fn cascade_of_two_delays_is_double_delay() {
        let delay = StateSpaceModel::strictly_proper(
            dmatrix![0.0],
            dmatrix![1.0],
            dmatrix![1.0],
        )
        .unwrap();
        let g = delay.cascade(&delay).unwrap();
        for w in frequency_grid(16) {
            let z = crate::lti::unit_point(w);
            let expect = (z * z).inv();
            assert!((g.eval(z).unwrap()[(0, 0)] - expect).norm() < 1e-12);
        }
    }

    #[test]
    fn compositions_match_pointwise_algebra() {
        let g1 = random_model(2, 2, 2, 3);
        let g2 = random_model(3, 2, 3, 2);
        let g3 = random_model(4, 2, 2, 3);
        let cas = g1.cascade(&g2).unwrap();
        let dif = g1.parallel_sub(&g3).unwrap();
        let zero = g1.parallel_sub(&g1).unwrap();
        let mut rng_w = frequency_grid(32);
        rng_w.iter_mut().for_each(|w| *w = *w * 0.97 + 0.013);
        for w in rng_w {
            let z = crate::lti::unit_point(w);
            let (r1, r2, r3) = (g1.eval(z).unwrap(), g2.eval(z).unwrap(), g3.eval(z).unwrap());
            assert!(max_err(&cas.eval(z).unwrap(), &(&r1 * &r2)) < 1e-10);
            assert!(max_err(&dif.eval(z).unwrap(), &(&r1 - &r3)) < 1e-10);
            assert!(zero.eval(z).unwrap().iter().all(|v| v.norm() < 1e-12));
        }
    }

    #[test]
    fn static_difference_is_constant() {
        let g = StateSpaceModel::static_gain(dmatrix![2.0])
            .parallel_sub(&StateSpaceModel::static_gain(dmatrix![1.0]))
            .unwrap();
        assert_eq!(g.eval(C64::new(0.3, 0.7)).unwrap()[(0, 0)], C64::new(1.0, 0.0));
    }

    #[test]
    fn inverse_of_static_and_dynamic_models() {
        let inv = StateSpaceModel::static_gain(dmatrix![2.0]).inverse().unwrap();
        assert_eq!(inv.d()[(0, 0)], 0.5);

        let mut g = random_model(5, 2, 1, 1);
        g.d = dmatrix![1.0];
        let gi = g.inverse().unwrap();
        for w in frequency_grid(32) {
            let z = crate::lti::unit_point(w);
            let prod = g.eval(z).unwrap()[(0, 0)] * gi.eval(z).unwrap()[(0, 0)];
            assert!((prod - C64::new(1.0, 0.0)).norm() < 1e-10);
        }
    }

    #[test]
    fn inverse_rejects_strictly_proper() {
        let g = StateSpaceModel::strictly_proper(dmatrix![0.5], dmatrix![1.0], dmatrix![1.0])
            .unwrap();
        assert!(matches!(
            g.inverse(),
            Err(Error::NonInvertibleFeedthrough { .. })
        ));
    }

    #[test]
    fn shift_forward_multiplies_by_z() {
        let g = random_model(6, 3, 2, 2);
        let g = StateSpaceModel::strictly_proper(g.a.clone(), g.b.clone(), g.c.clone()).unwrap();
        let zg = g.shift_forward().unwrap();
        let z = crate::lti::unit_point(0.77);
        let lhs = zg.eval(z).unwrap();
        let rhs = g.eval(z).unwrap() * z;
        assert!(max_err(&lhs, &rhs) < 1e-12);
    }

    #[test]
    fn hidden_unstable_mode_keeps_transfer_stable() {
        // Unstable mode at 2 unreachable from the input.
        let g = StateSpaceModel::strictly_proper(
            dmatrix![2.0, 0.0; 0.0, 0.5],
            dmatrix![0.0; 1.0],
            dmatrix![1.0, 1.0],
        )
        .unwrap();
        assert!(!g.is_stable().unwrap());
        assert!(g.has_stable_transfer().unwrap());
    }

    #[test]
    fn markov_parameters_match_impulse_response() {
        let g = random_model(7, 3, 2, 1);
        let h = g.impulse_response(5);
        for (k, hk) in h.iter().enumerate() {
            assert!((hk - g.markov(k)).norm() < 1e-14);
        }
    }
}
