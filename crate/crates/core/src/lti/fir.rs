use super::statespace::StateSpaceModel;
use super::{check_finite, CMat, Mat, C64};
use crate::{Error, Result};

/// `H(z) = Σ_{k=0}^{T} H_k z^{-k}`.
#[derive(Debug, Clone, PartialEq)]
pub struct FirTransferMatrix {
    rows: usize,
    cols: usize,
    coeffs: Vec<Mat>,
}

impl FirTransferMatrix {
    /// Builds from `H_0..H_T`; at least one coefficient is required.
    pub fn new(coeffs: Vec<Mat>) -> Result<Self> {
        let first = coeffs
            .first()
            .ok_or_else(|| Error::DimensionMismatch("FIR needs at least one coefficient".into()))?;
        let (rows, cols) = first.shape();
        for (k, h) in coeffs.iter().enumerate() {
            if h.shape() != (rows, cols) {
                return Err(Error::DimensionMismatch(format!(
                    "coefficient {k} is {}x{}, expected {rows}x{cols}",
                    h.nrows(),
                    h.ncols()
                )));
            }
            check_finite(h, "FIR coefficient")?;
        }
        Ok(Self { rows, cols, coeffs })
    }

    pub fn zeros(rows: usize, cols: usize, horizon: usize) -> Self {
        Self {
            rows,
            cols,
            coeffs: vec![Mat::zeros(rows, cols); horizon + 1],
        }
    }

    pub fn identity(size: usize) -> Self {
        Self {
            rows: size,
            cols: size,
            coeffs: vec![Mat::identity(size, size)],
        }
    }

    /// Scalar FIR from its coefficient list.
    pub fn scalar(coeffs: &[f64]) -> Result<Self> {
        Self::new(coeffs.iter().map(|c| Mat::from_element(1, 1, *c)).collect())
    }

    pub fn rows(&self) -> usize {
        self.rows
    }
    pub fn cols(&self) -> usize {
        self.cols
    }
    pub fn horizon(&self) -> usize {
        self.coeffs.len() - 1
    }
    pub fn coeffs(&self) -> &[Mat] {
        &self.coeffs
    }

    /// Coefficient `k`, zero beyond the horizon.
    pub fn coeff(&self, k: usize) -> Mat {
        self.coeffs
            .get(k)
            .cloned()
            .unwrap_or_else(|| Mat::zeros(self.rows, self.cols))
    }

    pub fn coeff_mut(&mut self, k: usize) -> &mut Mat {
        &mut self.coeffs[k]
    }

    pub fn is_strictly_proper(&self) -> bool {
        self.coeffs[0].iter().all(|v| *v == 0.0)
    }

    /// Zero-padded copy with the given horizon (must not drop nonzero terms).
    pub fn with_horizon(&self, horizon: usize) -> Self {
        let mut coeffs = self.coeffs.clone();
        coeffs.resize(horizon + 1, Mat::zeros(self.rows, self.cols));
        Self {
            rows: self.rows,
            cols: self.cols,
            coeffs,
        }
    }

    /// Evaluation at a point of the complex plane (Horner in `z⁻¹`).
    pub fn eval(&self, z: C64) -> CMat {
        let zi = z.inv();
        let mut acc = CMat::zeros(self.rows, self.cols);
        for h in self.coeffs.iter().rev() {
            acc = acc * zi + h.map(|v| C64::new(v, 0.0));
        }
        acc
    }

    pub fn add(&self, rhs: &Self) -> Result<Self> {
        self.combine(rhs, 1.0)
    }

    pub fn sub(&self, rhs: &Self) -> Result<Self> {
        self.combine(rhs, -1.0)
    }

    fn combine(&self, rhs: &Self, sign: f64) -> Result<Self> {
        if (self.rows, self.cols) != (rhs.rows, rhs.cols) {
            return Err(Error::DimensionMismatch(format!(
                "FIR sum of {}x{} and {}x{}",
                self.rows, self.cols, rhs.rows, rhs.cols
            )));
        }
        let t = self.horizon().max(rhs.horizon());
        let coeffs = (0..=t)
            .map(|k| self.coeff(k) + rhs.coeff(k) * sign)
            .collect();
        Ok(Self {
            rows: self.rows,
            cols: self.cols,
            coeffs,
        })
    }

    /// `M H`.
    pub fn premul(&self, m: &Mat) -> Result<Self> {
        if m.ncols() != self.rows {
            return Err(Error::DimensionMismatch("FIR premultiplier".into()));
        }
        Ok(Self {
            rows: m.nrows(),
            cols: self.cols,
            coeffs: self.coeffs.iter().map(|h| m * h).collect(),
        })
    }

    /// `H M`.
    pub fn postmul(&self, m: &Mat) -> Result<Self> {
        if m.nrows() != self.cols {
            return Err(Error::DimensionMismatch("FIR postmultiplier".into()));
        }
        Ok(Self {
            rows: self.rows,
            cols: m.ncols(),
            coeffs: self.coeffs.iter().map(|h| h * m).collect(),
        })
    }

    /// `H + D0` (constant added to the lag-0 coefficient).
    pub fn add_constant(&self, d0: &Mat) -> Result<Self> {
        if d0.shape() != (self.rows, self.cols) {
            return Err(Error::DimensionMismatch("FIR constant term".into()));
        }
        let mut out = self.clone();
        out.coeffs[0] += d0;
        Ok(out)
    }

    /// `z H` for strictly proper `H`.
    pub fn shift_forward(&self) -> Result<Self> {
        if !self.is_strictly_proper() {
            return Err(Error::PreconditionViolated(
                "forward shift of an FIR with nonzero lag-0 term".into(),
            ));
        }
        let mut coeffs: Vec<Mat> = self.coeffs[1..].to_vec();
        if coeffs.is_empty() {
            coeffs.push(Mat::zeros(self.rows, self.cols));
        }
        Ok(Self {
            rows: self.rows,
            cols: self.cols,
            coeffs,
        })
    }

    /// `z⁻¹ H`.
    pub fn delay(&self) -> Self {
        let mut coeffs = Vec::with_capacity(self.coeffs.len() + 1);
        coeffs.push(Mat::zeros(self.rows, self.cols));
        coeffs.extend(self.coeffs.iter().cloned());
        Self {
            rows: self.rows,
            cols: self.cols,
            coeffs,
        }
    }

    /// Largest absolute coefficient entry.
    pub fn max_abs(&self) -> f64 {
        self.coeffs
            .iter()
            .flat_map(|h| h.iter())
            .fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Shift-register realization on the input side:
    /// `A = Z` (block down-shift), `B = [I; 0; …]`, `C = [H_1 … H_T]`, `D = H_0`.
    pub fn to_state_space(&self) -> StateSpaceModel {
        let (p, m, t) = (self.rows, self.cols, self.horizon());
        let q = m * t;
        let mut a = Mat::zeros(q, q);
        for k in 1..t {
            a.view_mut((k * m, (k - 1) * m), (m, m))
                .fill_with_identity();
        }
        let mut b = Mat::zeros(q, m);
        if t > 0 {
            b.view_mut((0, 0), (m, m)).fill_with_identity();
        }
        let mut c = Mat::zeros(p, q);
        for k in 1..=t {
            c.view_mut((0, (k - 1) * m), (p, m))
                .copy_from(&self.coeffs[k]);
        }
        StateSpaceModel::new(a, b, c, self.coeffs[0].clone())
            .expect("shift-register realization is dimensionally consistent")
    }
}

/// Product of two FIR transfer matrices (coefficient convolution).
pub fn fir_multiply(lhs: &FirTransferMatrix, rhs: &FirTransferMatrix) -> Result<FirTransferMatrix> {
    if lhs.cols != rhs.rows {
        return Err(Error::DimensionMismatch(format!(
            "FIR product of {}x{} and {}x{}",
            lhs.rows, lhs.cols, rhs.rows, rhs.cols
        )));
    }
    let t = lhs.horizon() + rhs.horizon();
    let mut coeffs = vec![Mat::zeros(lhs.rows, rhs.cols); t + 1];
    for (i, hi) in lhs.coeffs.iter().enumerate() {
        for (j, gj) in rhs.coeffs.iter().enumerate() {
            coeffs[i + j] += hi * gj;
        }
    }
    Ok(FirTransferMatrix {
        rows: lhs.rows,
        cols: rhs.cols,
        coeffs,
    })
}

/// `Σ_k Trace(H_kᵀ H_k)`, starting at `k = 0` when `include_feedthrough`.
pub fn h2_norm_squared(h: &FirTransferMatrix, include_feedthrough: bool) -> f64 {
    let start = usize::from(!include_feedthrough);
    h.coeffs
        .iter()
        .skip(start)
        .map(|c| c.norm_squared())
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lti::{frequency_grid, unit_point};
    use rand::{Rng, SeedableRng};

    fn random_fir(seed: u64, rows: usize, cols: usize, t: usize) -> FirTransferMatrix {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        FirTransferMatrix::new(
            (0..=t)
                .map(|_| Mat::from_fn(rows, cols, |_, _| rng.gen_range(-1.0..1.0)))
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn identity_is_neutral() {
        let g = random_fir(1, 2, 2, 3);
        let prod = fir_multiply(&FirTransferMatrix::identity(2), &g).unwrap();
        assert_eq!(prod, g);
    }

    #[test]
    fn scalar_polynomial_product() {
        let a = FirTransferMatrix::scalar(&[1.0, 1.0]).unwrap();
        let b = FirTransferMatrix::scalar(&[1.0, -1.0]).unwrap();
        let c = fir_multiply(&a, &b).unwrap();
        let vals: Vec<f64> = c.coeffs().iter().map(|m| m[(0, 0)]).collect();
        assert_eq!(vals, vec![1.0, 0.0, -1.0]);
    }

    #[test]
    fn product_matches_pointwise_product() {
        let a = random_fir(2, 2, 3, 3);
        let b = random_fir(3, 3, 2, 3);
        let c = fir_multiply(&a, &b).unwrap();
        for w in frequency_grid(64) {
            let z = unit_point(w);
            let err = (c.eval(z) - a.eval(z) * b.eval(z)).iter().map(|v| v.norm()).fold(0.0, f64::max);
            assert!(err < 1e-10);
        }
    }

    #[test]
    fn h2_of_simple_firs() {
        assert_eq!(h2_norm_squared(&FirTransferMatrix::zeros(2, 2, 3), true), 0.0);
        let h = FirTransferMatrix::scalar(&[1.0, 1.0]).unwrap();
        assert_eq!(h2_norm_squared(&h, true), 2.0);
        assert_eq!(h2_norm_squared(&h, false), 1.0);
    }

    #[test]
    fn realization_reproduces_coefficients() {
        let h = random_fir(4, 2, 3, 5);
        let ss = h.to_state_space();
        assert_eq!(ss.states(), 3 * 5);
        for (k, hk) in ss.impulse_response(8).iter().enumerate() {
            assert!((hk - h.coeff(k)).norm() < 1e-15);
        }
    }

    #[test]
    fn forward_shift_and_delay_are_inverse() {
        let h = random_fir(5, 2, 2, 4).delay();
        assert_eq!(h.shift_forward().unwrap(), random_fir(5, 2, 2, 4));
    }

    #[test]
    fn mismatched_shapes_are_rejected() {
        let a = random_fir(6, 2, 3, 1);
        assert!(fir_multiply(&a, &a).is_err());
        assert!(FirTransferMatrix::new(vec![Mat::zeros(1, 1), Mat::zeros(2, 1)]).is_err());
    }
}
