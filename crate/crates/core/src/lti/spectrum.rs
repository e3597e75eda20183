use nalgebra::linalg::balancing::balance_parlett_reinsch;
use nalgebra::Schur;

use super::{to_complex, CMat, Mat, C64};
use crate::{Error, Result};

/// Margin below one used for the strict stability inequality.
pub const STABILITY_MARGIN: f64 = 1e-9;

/// Relative tolerance of the reachability/observability rank tests on a mode.
const HIDDEN_MODE_TOL: f64 = 1e-8;

/// Relative singular-value threshold for subspace rank decisions.
const RANK_TOL: f64 = 1e-10;

/// Eigenvalues of a real square matrix (balancing, Hessenberg reduction and
/// shifted QR iterations).
pub fn eigenvalues(a: &Mat) -> Result<Vec<C64>> {
    if a.nrows() != a.ncols() {
        return Err(Error::DimensionMismatch("eigenvalues of a non-square matrix".into()));
    }
    if a.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("eigenvalue input"));
    }
    let n = a.nrows();
    if n == 0 {
        return Ok(Vec::new());
    }
    let max_iter = 200 * n + 1000;
    let mut balanced = a.clone();
    balance_parlett_reinsch(&mut balanced);
    let schur = Schur::try_new(balanced, f64::EPSILON, max_iter)
        .or_else(|| Schur::try_new(a.clone(), f64::EPSILON, max_iter))
        .or_else(|| Schur::try_new(scrambled(a), f64::EPSILON, max_iter));
    if let Some(schur) = schur {
        return Ok(schur.complex_eigenvalues().iter().copied().collect());
    }
    // The deflation test is relative to the diagonal, so clusters at zero can
    // stall every variant above; a real shift moves them away.
    let shift = 1.0 + a.norm();
    let shifted = scrambled(a) + Mat::identity(n, n) * shift;
    let schur = Schur::try_new(shifted, f64::EPSILON, max_iter).ok_or(Error::EigenNoConvergence)?;
    Ok(schur
        .complex_eigenvalues()
        .iter()
        .map(|l| l - C64::new(shift, 0.0))
        .collect())
}

/// `Q A Qᵀ` for a fixed pseudo-random orthogonal `Q`. Exact zero patterns
/// such as shift registers can stall the shifted QR iteration; a generic
/// orthogonal similarity removes them without moving the spectrum.
fn scrambled(a: &Mat) -> Mat {
    let n = a.nrows();
    let mut state = 0x9e37_79b9_7f4a_7c15u64;
    let seed = Mat::from_fn(n, n, |_, _| {
        state ^= state << 13;
        state ^= state >> 7;
        state ^= state << 17;
        (state >> 11) as f64 / (1u64 << 53) as f64 - 0.5
    });
    let q = seed.qr().q();
    &q * a * q.transpose()
}

/// Largest eigenvalue magnitude.
///
/// The eigenvalue estimate is intersected with the power bound
/// `ρ(A) ≤ ‖A^k‖^{1/k}`, which is sharper for defective (e.g. nilpotent)
/// matrices whose computed eigenvalues scatter around a repeated root.
pub fn spectral_radius(a: &Mat) -> Result<f64> {
    let eig = eigenvalues(a)?;
    let from_eig = eig.iter().map(|l| l.norm()).fold(0.0, f64::max);
    Ok(from_eig.min(power_bound(a)))
}

fn power_bound(a: &Mat) -> f64 {
    let n = a.nrows();
    if n == 0 {
        return 0.0;
    }
    let mut p = a.clone();
    let mut k = 1usize;
    let mut best = f64::INFINITY;
    loop {
        let norm = p.norm();
        if !norm.is_finite() {
            break;
        }
        best = best.min(norm.powf(1.0 / k as f64));
        if norm == 0.0 || k >= 2 * n {
            break;
        }
        p = &p * &p;
        k *= 2;
    }
    best
}

/// Schur stability with the crate-wide margin.
pub fn is_schur_stable(a: &Mat) -> Result<bool> {
    Ok(spectral_radius(a)? < 1.0 - STABILITY_MARGIN)
}

/// True when the mode at `lambda` fails the reachability or the
/// observability rank test.
pub(crate) fn is_hidden_mode(a: &Mat, b: &Mat, c: &Mat, lambda: C64) -> bool {
    let n = a.nrows();
    if n == 0 {
        return true;
    }
    let scale = a.norm().max(1.0);
    let tol = HIDDEN_MODE_TOL * scale;
    let mut shifted: CMat = to_complex(a).map(|v| -v);
    for i in 0..n {
        shifted[(i, i)] += lambda;
    }
    let mut ctrb = CMat::zeros(n, n + b.ncols());
    ctrb.view_mut((0, 0), (n, n)).copy_from(&shifted);
    ctrb.view_mut((0, n), (n, b.ncols())).copy_from(&to_complex(b));
    let mut obsv = CMat::zeros(n + c.nrows(), n);
    obsv.view_mut((0, 0), (n, n)).copy_from(&shifted);
    obsv.view_mut((n, 0), (c.nrows(), n)).copy_from(&to_complex(c));
    smallest_of_n(ctrb, n) < tol || smallest_of_n(obsv, n) < tol
}

fn smallest_of_n(m: CMat, n: usize) -> f64 {
    let mut sv: Vec<f64> = m.singular_values().iter().copied().collect();
    sv.sort_by(|x, y| y.total_cmp(x));
    if sv.len() < n {
        0.0
    } else {
        sv[n - 1]
    }
}

/// Dimension of the reachable subspace of `(A, B)` by an orthogonal staircase.
pub fn reachable_dim(a: &Mat, b: &Mat) -> usize {
    let n = a.nrows();
    if n == 0 || b.ncols() == 0 {
        return 0;
    }
    let tol = RANK_TOL * a.norm().max(b.norm()).max(1.0);
    let mut basis = Mat::zeros(n, 0);
    let mut frontier = b.clone();
    while basis.ncols() < n {
        let mut residual = frontier.clone();
        for _ in 0..2 {
            if basis.ncols() > 0 {
                residual -= &basis * (basis.transpose() * &residual);
            }
        }
        let svd = residual.svd(true, false);
        let u = svd.u.expect("left vectors requested");
        let keep: Vec<usize> = (0..svd.singular_values.len())
            .filter(|&i| svd.singular_values[i] > tol)
            .collect();
        if keep.is_empty() {
            break;
        }
        let fresh = Mat::from_fn(n, keep.len(), |r, j| u[(r, keep[j])]);
        let mut next = Mat::zeros(n, basis.ncols() + fresh.ncols());
        next.view_mut((0, 0), basis.shape()).copy_from(&basis);
        next.view_mut((0, basis.ncols()), fresh.shape()).copy_from(&fresh);
        basis = next;
        frontier = a * fresh;
    }
    basis.ncols().min(n)
}

/// Dimension of the observable subspace of `(A, C)`.
pub fn observable_dim(a: &Mat, c: &Mat) -> usize {
    reachable_dim(&a.transpose(), &c.transpose())
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::dmatrix;
    use proptest::prelude::*;

    #[test]
    fn zero_matrix_has_zero_radius() {
        assert_eq!(spectral_radius(&Mat::zeros(4, 4)).unwrap(), 0.0);
    }

    #[test]
    fn diagonal_with_unit_mode() {
        let r = spectral_radius(&dmatrix![0.5, 0.0; 0.0, 1.0]).unwrap();
        assert!((r - 1.0).abs() < 1e-14);
    }

    #[test]
    fn companion_of_unstable_pair() {
        // z² − 1.9044 z + 1.18 has roots 0.9522 ± 0.5226i.
        let a = dmatrix![1.9044, -1.18; 1.0, 0.0];
        let expected = (0.9522f64.powi(2) + 0.5226f64.powi(2)).sqrt();
        assert!((spectral_radius(&a).unwrap() - expected).abs() < 1e-3);
        assert!((spectral_radius(&a).unwrap() - 1.18f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn nilpotent_integer_matrix_has_zero_radius() {
        let mut a = Mat::zeros(6, 6);
        for i in 1..6 {
            a[(i, i - 1)] = 1.0;
        }
        a[(0, 5)] = 0.0;
        a[(0, 3)] = 0.0;
        assert_eq!(spectral_radius(&a).unwrap(), 0.0);
    }

    #[test]
    fn rejects_non_finite() {
        assert!(matches!(
            spectral_radius(&dmatrix![f64::NAN]),
            Err(Error::NonFinite(_))
        ));
    }

    #[test]
    fn staircase_dimensions() {
        let a = dmatrix![0.5, 0.0; 0.0, 1.0];
        let b = dmatrix![0.0; 1.0];
        let c = dmatrix![0.0, 1.0];
        assert_eq!(reachable_dim(&a, &b), 1);
        assert_eq!(observable_dim(&a, &c), 1);
        assert_eq!(reachable_dim(&a, &dmatrix![1.0; 1.0]), 2);
    }

    #[test]
    fn hidden_mode_detection() {
        let a = dmatrix![0.5, 0.0; 0.0, 1.0];
        let b = dmatrix![0.0; 1.0];
        let c = dmatrix![0.0, 1.0];
        assert!(is_hidden_mode(&a, &b, &c, C64::new(0.5, 0.0)));
        assert!(!is_hidden_mode(&a, &b, &c, C64::new(1.0, 0.0)));
    }

    proptest! {
        #[test]
        fn triangular_radius_is_max_diagonal(
            diag in proptest::collection::vec(-3.0f64..3.0, 1..7),
            upper in proptest::collection::vec(-2.0f64..2.0, 21),
        ) {
            let n = diag.len();
            let mut a = Mat::zeros(n, n);
            let mut it = upper.iter();
            for i in 0..n {
                a[(i, i)] = diag[i];
                for j in i + 1..n {
                    a[(i, j)] = *it.next().unwrap();
                }
            }
            let expected = diag.iter().map(|d| d.abs()).fold(0.0, f64::max);
            let r = spectral_radius(&a).unwrap();
            prop_assert!((r - expected).abs() < 1e-12, "{} vs {}", r, expected);
        }
    }
}
