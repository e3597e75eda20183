//! Orthogonal factorization of equality constraints `E x = f`.

use nalgebra::{ColPivQR, DVector, QR};

use crate::lti::Mat;

/// Relative pivot threshold below which a constraint row is redundant.
pub const RANK_TOL: f64 = 1e-10;

/// Column-pivoted QR of `Eᵀ`: `Eᵀ Π = Q R`. The leading `rank` pivots select
/// an independent subset of the rows of `E`.
pub struct ConstraintFactor {
    /// Full orthogonal factor, `nv × nv`.
    q: Mat,
    /// Leading `rank × rank` upper-triangular block.
    r11: Mat,
    /// Trailing `rank × (rows − rank)` block.
    r12: Mat,
    /// Row indices of `E` in pivot order.
    order: Vec<usize>,
    rank: usize,
}

impl ConstraintFactor {
    pub fn new(e: &Mat) -> Self {
        let (rows, nv) = e.shape();
        if rows == 0 {
            return Self {
                q: Mat::identity(nv, nv),
                r11: Mat::zeros(0, 0),
                r12: Mat::zeros(0, 0),
                order: Vec::new(),
                rank: 0,
            };
        }
        let qr = ColPivQR::new(e.transpose());
        let r = qr.r();
        let mut order_row = Mat::from_fn(1, rows, |_, j| j as f64);
        qr.p().permute_columns(&mut order_row);
        let order: Vec<usize> = order_row.iter().map(|v| *v as usize).collect();
        let diag_len = r.nrows().min(r.ncols());
        let lead = if diag_len > 0 { r[(0, 0)].abs() } else { 0.0 };
        let rank = if lead == 0.0 {
            0
        } else {
            (0..diag_len)
                .take_while(|&k| r[(k, k)].abs() > RANK_TOL * lead)
                .count()
        };
        let mut qt = Mat::identity(nv, nv);
        qr.q_tr_mul(&mut qt);
        let q = qt.transpose();
        let r11 = r.view((0, 0), (rank, rank)).into_owned();
        let r12 = r.view((0, rank), (rank, rows - rank)).into_owned();
        Self {
            q,
            r11,
            r12,
            order,
            rank,
        }
    }

    /// Rows of `E` kept as independent constraints.
    pub fn selected_rows(&self) -> &[usize] {
        &self.order[..self.rank]
    }

    /// Orthonormal basis of `{x : E x = 0}`.
    pub fn nullspace(&self) -> Mat {
        let nv = self.q.nrows();
        self.q.view((0, self.rank), (nv, nv - self.rank)).into_owned()
    }

    fn q1(&self) -> Mat {
        self.q.view((0, 0), (self.q.nrows(), self.rank)).into_owned()
    }

    /// Minimum-norm `x` satisfying the selected rows exactly.
    pub fn particular(&self, f: &DVector<f64>) -> DVector<f64> {
        let fs = DVector::from_iterator(self.rank, self.selected_rows().iter().map(|&i| f[i]));
        let y = self
            .r11
            .transpose()
            .solve_lower_triangular(&fs)
            .unwrap_or_else(|| DVector::zeros(self.rank));
        self.q1() * y
    }

    /// Multipliers for the selected rows solving `Eₛᵀ λ = −v` in the least-squares sense.
    pub fn multipliers(&self, v: &DVector<f64>) -> DVector<f64> {
        let rhs = -(self.q1().transpose() * v);
        self.r11
            .solve_upper_triangular(&rhs)
            .unwrap_or_else(|| DVector::zeros(self.rank))
    }

    /// Least-squares residual `min_x ‖E x − f‖` together with the residual vector.
    pub fn least_squares_residual(&self, f: &DVector<f64>) -> (f64, DVector<f64>) {
        let rows = self.order.len();
        if self.rank == 0 {
            return (f.norm(), f.clone());
        }
        // range(E) = Π · range(R₁ᵀ), with R₁ = [R11 R12].
        let mut r1t = Mat::zeros(rows, self.rank);
        r1t.view_mut((0, 0), (self.rank, self.rank))
            .copy_from(&self.r11.transpose());
        r1t.view_mut((self.rank, 0), (rows - self.rank, self.rank))
            .copy_from(&self.r12.transpose());
        let basis = QR::new(r1t).q();
        let fp = DVector::from_iterator(rows, self.order.iter().map(|&i| f[i]));
        let resid_p = &fp - &basis * (basis.transpose() * &fp);
        let mut resid = DVector::zeros(rows);
        for (k, &i) in self.order.iter().enumerate() {
            resid[i] = resid_p[k];
        }
        (resid.norm(), resid)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::{dmatrix, dvector};

    #[test]
    fn redundant_rows_are_pruned() {
        let e = dmatrix![1.0, 1.0, 0.0; 2.0, 2.0, 0.0; 0.0, 1.0, 1.0];
        let f = dvector![1.0, 2.0, 3.0];
        let fac = ConstraintFactor::new(&e);
        assert_eq!(fac.selected_rows().len(), 2);
        let x = fac.particular(&f);
        assert!((&e * &x - &f).norm() < 1e-12);
        let z = fac.nullspace();
        assert_eq!(z.ncols(), 1);
        assert!((&e * &z).norm() < 1e-12);
        assert!(fac.least_squares_residual(&f).0 < 1e-12);
    }

    #[test]
    fn inconsistent_rows_report_least_squares_residual() {
        // x = 1 and x = 3: least-squares residual is sqrt(2).
        let e = dmatrix![1.0; 1.0];
        let f = dvector![1.0, 3.0];
        let fac = ConstraintFactor::new(&e);
        let (r, _) = fac.least_squares_residual(&f);
        assert!((r - 2f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn empty_constraint_set() {
        let fac = ConstraintFactor::new(&Mat::zeros(0, 3));
        assert_eq!(fac.nullspace(), Mat::identity(3, 3));
    }
}
