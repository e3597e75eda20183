use nalgebra::Hessenberg;

use super::fir::FirTransferMatrix;
use super::statespace::StateSpaceModel;
use super::{to_complex, CMat, Mat, C64};
use crate::{Error, Result};

/// Default number of grid points for peak-gain searches.
pub const DEFAULT_GRID: usize = 2048;

const GOLDEN_ITERATIONS: usize = 80;

/// One point of a frequency response.
#[derive(Debug, Clone, PartialEq)]
pub struct FrequencySample {
    pub omega: f64,
    pub value: CMat,
}

/// Peak gain and where it occurs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HinfNorm {
    pub value: f64,
    pub omega: f64,
}

/// `e^{jω}`.
pub fn unit_point(omega: f64) -> C64 {
    C64::from_polar(1.0, omega)
}

/// Uniform grid on `[0, π]`; real-coefficient systems are conjugate
/// symmetric so the negative half adds nothing.
pub fn frequency_grid(points: usize) -> Vec<f64> {
    match points {
        0 => Vec::new(),
        1 => vec![0.0],
        n => (0..n)
            .map(|i| std::f64::consts::PI * i as f64 / (n - 1) as f64)
            .collect(),
    }
}

/// Largest singular value.
pub fn sigma_max(m: &CMat) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    if m.nrows() == 1 || m.ncols() == 1 {
        return m.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt();
    }
    m.clone().singular_values().max()
}

/// Objects with a frequency response.
pub trait TransferMatrix {
    fn shape(&self) -> (usize, usize);
    /// Error when the peak gain is undefined (unstable dynamics).
    fn ensure_stable(&self) -> Result<()>;
    /// Precomputed evaluator for repeated sampling.
    fn sampler(&self) -> Sampler<'_>;

    fn sample(&self, omega: f64) -> FrequencySample {
        FrequencySample {
            omega,
            value: self.sampler().eval(unit_point(omega)),
        }
    }
}

/// Repeated-evaluation handle.
pub enum Sampler<'a> {
    Fir(&'a FirTransferMatrix),
    StateSpace(FrequencyEvaluator),
}

impl Sampler<'_> {
    /// Value at `z`; entries are non-finite when `z` hits a pole.
    pub fn eval(&self, z: C64) -> CMat {
        match self {
            Sampler::Fir(h) => h.eval(z),
            Sampler::StateSpace(e) => e.eval(z).unwrap_or_else(|| {
                CMat::from_element(e.d.nrows(), e.d.ncols(), C64::new(f64::INFINITY, 0.0))
            }),
        }
    }
}

impl TransferMatrix for FirTransferMatrix {
    fn shape(&self) -> (usize, usize) {
        (self.rows(), self.cols())
    }
    fn ensure_stable(&self) -> Result<()> {
        Ok(())
    }
    fn sampler(&self) -> Sampler<'_> {
        Sampler::Fir(self)
    }
}

impl TransferMatrix for StateSpaceModel {
    fn shape(&self) -> (usize, usize) {
        (self.outputs(), self.inputs())
    }
    fn ensure_stable(&self) -> Result<()> {
        if self.has_stable_transfer()? {
            Ok(())
        } else {
            Err(Error::UnstableSystem {
                spectral_radius: self.spectral_radius()?,
            })
        }
    }
    fn sampler(&self) -> Sampler<'_> {
        Sampler::StateSpace(FrequencyEvaluator::new(self))
    }
}

/// State-space evaluator in Hessenberg coordinates: each point costs one
/// O(n²) Hessenberg solve of `(zI − H) X = Qᵀ B`.
#[derive(Debug, Clone)]
pub struct FrequencyEvaluator {
    h: Mat,
    b: Mat,
    c: Mat,
    d: Mat,
}

impl FrequencyEvaluator {
    pub fn new(g: &StateSpaceModel) -> Self {
        if g.states() == 0 {
            return Self {
                h: Mat::zeros(0, 0),
                b: g.b().clone(),
                c: g.c().clone(),
                d: g.d().clone(),
            };
        }
        let (q, h) = Hessenberg::new(g.a().clone()).unpack();
        Self {
            b: q.transpose() * g.b(),
            c: g.c() * &q,
            h,
            d: g.d().clone(),
        }
    }

    pub fn eval(&self, z: C64) -> Option<CMat> {
        let mut out = to_complex(&self.d);
        if self.h.nrows() == 0 {
            return Some(out);
        }
        let x = hessenberg_solve(&self.h, z, &self.b)?;
        out += to_complex(&self.c) * x;
        Some(out)
    }
}

/// Solves `(zI − H) X = R` for upper-Hessenberg `H` by Gaussian elimination
/// with adjacent-row pivoting.
fn hessenberg_solve(h: &Mat, z: C64, rhs: &Mat) -> Option<CMat> {
    let n = h.nrows();
    let mut m = CMat::from_fn(n, n, |i, j| {
        if i > j + 1 {
            C64::new(0.0, 0.0)
        } else if i == j {
            z - h[(i, j)]
        } else {
            C64::new(-h[(i, j)], 0.0)
        }
    });
    let mut x = to_complex(rhs);
    let k_rhs = x.ncols();
    for k in 0..n.saturating_sub(1) {
        if m[(k + 1, k)].norm() > m[(k, k)].norm() {
            m.swap_rows(k, k + 1);
            x.swap_rows(k, k + 1);
        }
        let pivot = m[(k, k)];
        if pivot.norm() == 0.0 {
            continue;
        }
        let l = m[(k + 1, k)] / pivot;
        if l.norm() == 0.0 {
            continue;
        }
        m[(k + 1, k)] = C64::new(0.0, 0.0);
        for j in k + 1..n {
            let v = m[(k, j)];
            m[(k + 1, j)] -= l * v;
        }
        for j in 0..k_rhs {
            let v = x[(k, j)];
            x[(k + 1, j)] -= l * v;
        }
    }
    for i in (0..n).rev() {
        let pivot = m[(i, i)];
        if pivot.norm() == 0.0 {
            return None;
        }
        for j in 0..k_rhs {
            let mut s = x[(i, j)];
            for l in i + 1..n {
                s -= m[(i, l)] * x[(l, j)];
            }
            x[(i, j)] = s / pivot;
        }
    }
    if x.iter().any(|v| !v.re.is_finite() || !v.im.is_finite()) {
        return None;
    }
    Some(x)
}

/// Peak of `σ_max(G(e^{jω}))`: uniform grid on `[0, π]` followed by a
/// golden-section refinement around the best grid point.
pub fn hinf_norm<T: TransferMatrix + ?Sized>(g: &T, grid_size: usize) -> Result<HinfNorm> {
    g.ensure_stable()?;
    let sampler = g.sampler();
    let gain = |w: f64| sigma_max(&sampler.eval(unit_point(w)));
    let grid = frequency_grid(grid_size.max(2));
    let mut best = HinfNorm {
        value: f64::NEG_INFINITY,
        omega: 0.0,
    };
    let mut best_idx = 0;
    for (i, w) in grid.iter().enumerate() {
        let v = gain(*w);
        if v > best.value {
            best = HinfNorm { value: v, omega: *w };
            best_idx = i;
        }
    }
    if !best.value.is_finite() {
        return Err(Error::UnstableSystem {
            spectral_radius: f64::INFINITY,
        });
    }
    let lo = grid[best_idx.saturating_sub(1)];
    let hi = grid[(best_idx + 1).min(grid.len() - 1)];
    let refined = golden_max(&gain, lo, hi);
    if refined.value > best.value {
        best = refined;
    }
    Ok(best)
}

fn golden_max(f: &dyn Fn(f64) -> f64, mut lo: f64, mut hi: f64) -> HinfNorm {
    let ratio = (5f64.sqrt() - 1.0) / 2.0;
    let mut x1 = hi - ratio * (hi - lo);
    let mut x2 = lo + ratio * (hi - lo);
    let mut f1 = f(x1);
    let mut f2 = f(x2);
    for _ in 0..GOLDEN_ITERATIONS {
        if f1 < f2 {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + ratio * (hi - lo);
            f2 = f(x2);
        } else {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - ratio * (hi - lo);
            f1 = f(x1);
        }
    }
    if f1 >= f2 {
        HinfNorm { value: f1, omega: x1 }
    } else {
        HinfNorm { value: f2, omega: x2 }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::dmatrix;
    use rand::{Rng, SeedableRng};

    #[test]
    fn static_gain_peak() {
        let g = StateSpaceModel::static_gain(dmatrix![3.0]);
        assert!((hinf_norm(&g, 64).unwrap().value - 3.0).abs() < 1e-14);
    }

    #[test]
    fn pure_delay_is_all_pass() {
        let h = FirTransferMatrix::scalar(&[0.0, 1.0]).unwrap();
        assert!((hinf_norm(&h, DEFAULT_GRID).unwrap().value - 1.0).abs() < 1e-14);
    }

    #[test]
    fn first_order_lowpass_peak_at_dc() {
        // 1 / (z − 0.5) peaks at ω = 0 with gain 2.
        let g = StateSpaceModel::strictly_proper(dmatrix![0.5], dmatrix![1.0], dmatrix![1.0])
            .unwrap();
        let n = hinf_norm(&g, 256).unwrap();
        assert!((n.value - 2.0).abs() < 1e-12);
        assert!(n.omega.abs() < 1e-6);
    }

    #[test]
    fn lightly_damped_peak_needs_refinement() {
        // Resonant pair at radius 0.999 between grid points.
        let r: f64 = 0.999;
        let th: f64 = 1.0001;
        let a = dmatrix![2.0 * r * th.cos(), -r * r; 1.0, 0.0];
        let g = StateSpaceModel::strictly_proper(a.clone(), dmatrix![1.0; 0.0], dmatrix![0.0, 1.0])
            .unwrap();
        let coarse = hinf_norm(&g, 32).unwrap();
        let fine = hinf_norm(&g, 200_000).unwrap();
        assert!((coarse.value - fine.value).abs() / fine.value < 1e-3);
    }

    #[test]
    fn unstable_system_rejected() {
        let g = StateSpaceModel::strictly_proper(dmatrix![1.5], dmatrix![1.0], dmatrix![1.0])
            .unwrap();
        assert!(matches!(
            hinf_norm(&g, 64),
            Err(Error::UnstableSystem { .. })
        ));
    }

    #[test]
    fn hessenberg_evaluator_matches_dense_solve() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(9);
        let mut gen = |r: usize, c: usize| Mat::from_fn(r, c, |_, _| rng.gen_range(-1.0..1.0));
        let g = StateSpaceModel::new(gen(7, 7) * 0.3, gen(7, 2), gen(3, 7), gen(3, 2)).unwrap();
        let e = FrequencyEvaluator::new(&g);
        for w in frequency_grid(16) {
            let z = unit_point(w);
            let err = (e.eval(z).unwrap() - g.eval(z).unwrap())
                .iter()
                .map(|v| v.norm())
                .fold(0.0, f64::max);
            assert!(err < 1e-12);
        }
    }
}
