//! Affine expressions over the stacked coefficient vector, and matrix/FIR
//! containers of them.

use crate::lti::Mat;

/// `Σ coef_i · x[var_i] + constant`, terms sorted by variable index.
#[derive(Debug, Clone, Default, PartialEq)]
pub(crate) struct Affine {
    pub terms: Vec<(usize, f64)>,
    pub constant: f64,
}

impl Affine {
    pub fn var(index: usize) -> Self {
        Self {
            terms: vec![(index, 1.0)],
            constant: 0.0,
        }
    }

    pub fn constant(c: f64) -> Self {
        Self {
            terms: Vec::new(),
            constant: c,
        }
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty() && self.constant == 0.0
    }

    /// `self + s · other`.
    pub fn add_scaled(&mut self, other: &Affine, s: f64) {
        if s == 0.0 || other.is_zero() {
            return;
        }
        self.constant += s * other.constant;
        if other.terms.is_empty() {
            return;
        }
        if self.terms.is_empty() {
            self.terms = other.terms.iter().map(|(i, c)| (*i, c * s)).collect();
            return;
        }
        let mut merged = Vec::with_capacity(self.terms.len() + other.terms.len());
        let (mut a, mut b) = (0, 0);
        while a < self.terms.len() || b < other.terms.len() {
            let take_a = b >= other.terms.len()
                || (a < self.terms.len() && self.terms[a].0 < other.terms[b].0);
            let take_b = a >= self.terms.len()
                || (b < other.terms.len() && other.terms[b].0 < self.terms[a].0);
            if take_a {
                merged.push(self.terms[a]);
                a += 1;
            } else if take_b {
                let (i, c) = other.terms[b];
                merged.push((i, c * s));
                b += 1;
            } else {
                let (i, c) = self.terms[a];
                let v = c + s * other.terms[b].1;
                if v != 0.0 {
                    merged.push((i, v));
                }
                a += 1;
                b += 1;
            }
        }
        self.terms = merged;
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        self.constant + self.terms.iter().map(|(i, c)| c * x[*i]).sum::<f64>()
    }
}

/// Dense matrix of affine expressions (row-major).
#[derive(Debug, Clone, PartialEq)]
pub(crate) struct AffineMat {
    pub rows: usize,
    pub cols: usize,
    data: Vec<Affine>,
}

impl AffineMat {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![Affine::default(); rows * cols],
        }
    }

    pub fn from_const(m: &Mat) -> Self {
        let mut out = Self::zeros(m.nrows(), m.ncols());
        for i in 0..m.nrows() {
            for j in 0..m.ncols() {
                out.data[i * m.ncols() + j] = Affine::constant(m[(i, j)]);
            }
        }
        out
    }

    pub fn get(&self, i: usize, j: usize) -> &Affine {
        &self.data[i * self.cols + j]
    }

    pub fn get_mut(&mut self, i: usize, j: usize) -> &mut Affine {
        &mut self.data[i * self.cols + j]
    }

    pub fn is_zero(&self) -> bool {
        self.data.iter().all(Affine::is_zero)
    }

    /// `M · self`.
    pub fn premul(&self, m: &Mat) -> Self {
        assert_eq!(m.ncols(), self.rows, "affine premultiplier shape");
        let mut out = Self::zeros(m.nrows(), self.cols);
        for i in 0..m.nrows() {
            for k in 0..self.rows {
                let s = m[(i, k)];
                if s == 0.0 {
                    continue;
                }
                for j in 0..self.cols {
                    let src = self.get(k, j).clone();
                    out.get_mut(i, j).add_scaled(&src, s);
                }
            }
        }
        out
    }

    /// `self · M`.
    pub fn postmul(&self, m: &Mat) -> Self {
        assert_eq!(m.nrows(), self.cols, "affine postmultiplier shape");
        let mut out = Self::zeros(self.rows, m.ncols());
        for i in 0..self.rows {
            for k in 0..self.cols {
                let src = self.get(i, k).clone();
                if src.is_zero() {
                    continue;
                }
                for j in 0..m.ncols() {
                    let s = m[(k, j)];
                    if s != 0.0 {
                        out.get_mut(i, j).add_scaled(&src, s);
                    }
                }
            }
        }
        out
    }

    /// `self + s · other`.
    pub fn add_scaled(&mut self, other: &AffineMat, s: f64) {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols), "affine sum shape");
        for (a, b) in self.data.iter_mut().zip(other.data.iter()) {
            a.add_scaled(b, s);
        }
    }

    pub fn add_const(&mut self, m: &Mat) {
        for i in 0..self.rows {
            for j in 0..self.cols {
                self.get_mut(i, j).constant += m[(i, j)];
            }
        }
    }

    pub fn eval(&self, x: &[f64]) -> Mat {
        Mat::from_fn(self.rows, self.cols, |i, j| self.get(i, j).eval(x))
    }
}

/// FIR transfer matrix with affine coefficients at lags `0..=horizon`.
#[derive(Debug, Clone, PartialEq)]
pub(crate) struct AffineFir {
    pub rows: usize,
    pub cols: usize,
    pub lags: Vec<AffineMat>,
}

impl AffineFir {
    pub fn zeros(rows: usize, cols: usize, horizon: usize) -> Self {
        Self {
            rows,
            cols,
            lags: vec![AffineMat::zeros(rows, cols); horizon + 1],
        }
    }

    pub fn horizon(&self) -> usize {
        self.lags.len() - 1
    }

    pub fn lag(&self, k: usize) -> AffineMat {
        self.lags
            .get(k)
            .cloned()
            .unwrap_or_else(|| AffineMat::zeros(self.rows, self.cols))
    }

    pub fn premul(&self, m: &Mat) -> Self {
        Self {
            rows: m.nrows(),
            cols: self.cols,
            lags: self.lags.iter().map(|l| l.premul(m)).collect(),
        }
    }

    pub fn postmul(&self, m: &Mat) -> Self {
        Self {
            rows: self.rows,
            cols: m.ncols(),
            lags: self.lags.iter().map(|l| l.postmul(m)).collect(),
        }
    }

    /// `self + s · other`, horizon extended as needed.
    pub fn add_scaled(&self, other: &AffineFir, s: f64) -> Self {
        let t = self.horizon().max(other.horizon());
        let lags = (0..=t)
            .map(|k| {
                let mut l = self.lag(k);
                l.add_scaled(&other.lag(k), s);
                l
            })
            .collect();
        Self {
            rows: self.rows,
            cols: self.cols,
            lags,
        }
    }

    /// Adds a constant to the lag-0 coefficient.
    pub fn add_const(mut self, m: &Mat) -> Self {
        self.lags[0].add_const(m);
        self
    }

    /// `z · self`; the lag-0 coefficient must be identically zero.
    pub fn shift_forward(&self) -> Self {
        assert!(self.lags[0].is_zero(), "forward shift of a proper affine FIR");
        let mut lags: Vec<AffineMat> = self.lags[1..].to_vec();
        if lags.is_empty() {
            lags.push(AffineMat::zeros(self.rows, self.cols));
        }
        Self {
            rows: self.rows,
            cols: self.cols,
            lags,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::dmatrix;

    #[test]
    fn merge_keeps_sorted_unique_terms() {
        let mut a = Affine::var(3);
        a.add_scaled(&Affine::var(1), 2.0);
        a.add_scaled(&Affine::var(3), -1.0);
        a.add_scaled(&Affine::constant(4.0), 0.5);
        assert_eq!(a.terms, vec![(1, 2.0)]);
        assert_eq!(a.constant, 2.0);
    }

    #[test]
    fn matrix_products_evaluate_consistently() {
        let mut x = AffineMat::zeros(2, 2);
        for i in 0..2 {
            for j in 0..2 {
                *x.get_mut(i, j) = Affine::var(i * 2 + j);
            }
        }
        let m = dmatrix![1.0, 2.0; 3.0, 4.0];
        let vals = [0.5, -1.0, 2.0, 3.0];
        let xv = x.eval(&vals);
        assert_eq!(x.premul(&m).eval(&vals), &m * &xv);
        assert_eq!(x.postmul(&m).eval(&vals), &xv * &m);
    }
}
