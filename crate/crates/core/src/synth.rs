//! H2 synthesis over FIR closed-loop responses as an equality-constrained
//! least-squares problem.

use nalgebra::{DVector, SymmetricEigen};

use crate::linalg::ConstraintFactor;
use crate::lti::{Mat, StateSpaceModel};
use crate::param::{
    build_constraints, BlockSet, CoefficientProgram, CostWeight, ParameterizationKind,
    DEFAULT_FEASIBILITY_TOL,
};
use crate::{Error, Result};

/// Relative eigenvalue threshold below which a reduced-Hessian direction is flat.
const FLAT_TOL: f64 = 1e-12;

/// Weighted H2 synthesis instance.
#[derive(Debug, Clone)]
pub struct H2Problem {
    pub plant: StateSpaceModel,
    /// Output weight; `n × n` for the state-feedback kind, `p × p` otherwise.
    pub output_weight: Mat,
    /// Input weight, `m × m`.
    pub input_weight: Mat,
    pub kind: ParameterizationKind,
    pub horizon: usize,
}

impl H2Problem {
    /// Identity weights.
    pub fn new(plant: StateSpaceModel, kind: ParameterizationKind, horizon: usize) -> Self {
        let q = match kind {
            ParameterizationKind::SimplifiedStateFeedback => plant.states(),
            _ => plant.outputs(),
        };
        let m = plant.inputs();
        Self {
            plant,
            output_weight: Mat::identity(q, q),
            input_weight: Mat::identity(m, m),
            kind,
            horizon,
        }
    }

    pub fn with_weights(mut self, output_weight: Mat, input_weight: Mat) -> Result<Self> {
        self.output_weight = output_weight;
        self.input_weight = input_weight;
        self.validate()?;
        Ok(self)
    }

    /// Checks shapes, symmetry, `Q ⪰ 0` and `R ≻ 0`.
    pub fn validate(&self) -> Result<()> {
        let q_dim = match self.kind {
            ParameterizationKind::SimplifiedStateFeedback => self.plant.states(),
            _ => self.plant.outputs(),
        };
        check_weight(&self.output_weight, q_dim, "output weight", false)?;
        check_weight(&self.input_weight, self.plant.inputs(), "input weight", true)?;
        Ok(())
    }

    fn weight(&self, w: CostWeight) -> &Mat {
        match w {
            CostWeight::Output => &self.output_weight,
            CostWeight::Input => &self.input_weight,
        }
    }
}

fn check_weight(w: &Mat, dim: usize, what: &str, definite: bool) -> Result<()> {
    if w.shape() != (dim, dim) {
        return Err(Error::InvalidWeight(format!(
            "{what} is {}x{}, expected {dim}x{dim}",
            w.nrows(),
            w.ncols()
        )));
    }
    if w.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidWeight(format!("{what} has non-finite entries")));
    }
    let scale = w.norm().max(1.0);
    if (w - w.transpose()).norm() > 1e-10 * scale {
        return Err(Error::InvalidWeight(format!("{what} is not symmetric")));
    }
    if dim == 0 {
        return Ok(());
    }
    let eig = SymmetricEigen::new(w.clone()).eigenvalues;
    let min = eig.min();
    if definite && min <= 1e-12 * scale {
        return Err(Error::InvalidWeight(format!(
            "{what} is not positive definite (min eigenvalue {min:e})"
        )));
    }
    if !definite && min < -1e-12 * scale {
        return Err(Error::InvalidWeight(format!(
            "{what} is not positive semidefinite (min eigenvalue {min:e})"
        )));
    }
    Ok(())
}

/// Symmetric square root of a PSD matrix.
fn psd_sqrt(w: &Mat) -> Mat {
    let eig = SymmetricEigen::new(w.clone());
    let d = eig.eigenvalues.map(|l| l.max(0.0).sqrt());
    &eig.eigenvectors * Mat::from_diagonal(&d) * eig.eigenvectors.transpose()
}

/// `½ xᵀ H x + gᵀ x + c`.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadraticForm {
    pub hessian: Mat,
    pub linear: DVector<f64>,
    pub constant: f64,
}

impl QuadraticForm {
    pub fn value(&self, x: &DVector<f64>) -> f64 {
        0.5 * x.dot(&(&self.hessian * x)) + self.linear.dot(x) + self.constant
    }

    pub fn gradient(&self, x: &DVector<f64>) -> DVector<f64> {
        &self.hessian * x + &self.linear
    }
}

/// Weighted sum of squared coefficients of every cost block, as a quadratic
/// form in the program's unknowns.
pub fn assemble_cost(problem: &H2Problem, program: &CoefficientProgram) -> Result<QuadraticForm> {
    if program.kind != problem.kind || program.horizon != problem.horizon {
        return Err(Error::PreconditionViolated(format!(
            "program is {} at T={}, problem is {} at T={}",
            program.kind, program.horizon, problem.kind, problem.horizon
        )));
    }
    problem.validate()?;
    let nv = program.num_vars();
    let mut h = Mat::zeros(nv, nv);
    let mut g = DVector::zeros(nv);
    let mut constant = 0.0;
    let roots = [
        (CostWeight::Output, psd_sqrt(problem.weight(CostWeight::Output))),
        (CostWeight::Input, psd_sqrt(problem.weight(CostWeight::Input))),
    ];
    for term in &program.cost_terms {
        let root = &roots.iter().find(|(w, _)| *w == term.weight).expect("both weights").1;
        if root.ncols() != term.rows() {
            return Err(Error::DimensionMismatch(format!(
                "weight is {}x{}, cost block '{}' has {} rows",
                root.nrows(),
                root.ncols(),
                term.description,
                term.rows()
            )));
        }
        for lag in &term.expr.lags {
            let weighted = lag.premul(root);
            for i in 0..weighted.rows {
                for j in 0..weighted.cols {
                    let a = weighted.get(i, j);
                    constant += a.constant * a.constant;
                    for &(p, cp) in &a.terms {
                        g[p] += 2.0 * a.constant * cp;
                        for &(q, cq) in &a.terms {
                            h[(p, q)] += 2.0 * cp * cq;
                        }
                    }
                }
            }
        }
    }
    Ok(QuadraticForm {
        hessian: h,
        linear: g,
        constant,
    })
}

/// Optimal FIR closed-loop responses and solver diagnostics.
#[derive(Debug, Clone)]
pub struct SynthesisResult {
    pub kind: ParameterizationKind,
    pub horizon: usize,
    pub blocks: BlockSet,
    pub solution: DVector<f64>,
    /// Weighted sum of squared coefficients at the optimum.
    pub cost_squared: f64,
    pub h2_norm: f64,
    /// `‖H x + g + Eᵀ λ‖`.
    pub kkt_residual: f64,
    /// `‖E x − f‖`.
    pub constraint_residual: f64,
    /// Reduced-Hessian directions with zero curvature; the minimum-norm point is returned along them.
    pub flat_directions: usize,
}

/// Minimizes the quadratic form subject to the program's equalities by the
/// nullspace method.
pub fn solve_equality_qp(cost: &QuadraticForm, program: &CoefficientProgram) -> Result<SynthesisResult> {
    solve_equality_qp_with(cost, program, DEFAULT_FEASIBILITY_TOL)
}

pub fn solve_equality_qp_with(
    cost: &QuadraticForm,
    program: &CoefficientProgram,
    feasibility_tol: f64,
) -> Result<SynthesisResult> {
    let nv = program.num_vars();
    if cost.hessian.shape() != (nv, nv) || cost.linear.len() != nv {
        return Err(Error::DimensionMismatch(format!(
            "quadratic form has {} variables, program has {nv}",
            cost.linear.len()
        )));
    }
    let factor = ConstraintFactor::new(&program.e);
    let scale = program.f.norm().max(1.0);
    let xp = factor.particular(&program.f);
    if program.residual(&xp).norm() / scale >= feasibility_tol {
        let (residual, _) = factor.least_squares_residual(&program.f);
        if residual / scale >= feasibility_tol {
            return Err(Error::Infeasible {
                residual,
                relative: residual / scale,
            });
        }
    }
    let z = factor.nullspace();
    let hz = &cost.hessian * &z;
    let reduced = z.transpose() * &hz;
    let reduced = (&reduced + reduced.transpose()) * 0.5;
    let rhs = z.transpose() * cost.gradient(&xp);
    let (w, flat_directions) = solve_reduced(&reduced, &rhs)?;
    let x = &xp + &z * &w;
    let grad = cost.gradient(&x);
    let lambda = factor.multipliers(&grad);
    let mut lagrangian = grad.clone();
    for (k, &row) in factor.selected_rows().iter().enumerate() {
        lagrangian += program.e.row(row).transpose() * lambda[k];
    }
    let constraint_residual = program.residual(&x).norm();
    let cost_squared = weighted_cost(cost, &x);
    Ok(SynthesisResult {
        kind: program.kind,
        horizon: program.horizon,
        blocks: program.extract_blocks(&x)?,
        solution: x,
        cost_squared,
        h2_norm: cost_squared.sqrt(),
        kkt_residual: lagrangian.norm(),
        constraint_residual,
        flat_directions,
    })
}

fn weighted_cost(cost: &QuadraticForm, x: &DVector<f64>) -> f64 {
    cost.value(x).max(0.0)
}

/// Solves `H w = −r` on the nullspace, minimum-norm along flat directions.
fn solve_reduced(h: &Mat, r: &DVector<f64>) -> Result<(DVector<f64>, usize)> {
    let k = h.nrows();
    if k == 0 {
        return Ok((DVector::zeros(0), 0));
    }
    if let Some(chol) = h.clone().cholesky() {
        let diag_min = chol.l_dirty().diagonal().min();
        let diag_max = chol.l_dirty().diagonal().max();
        if diag_max > 0.0 && diag_min * diag_min > FLAT_TOL * diag_max * diag_max * 1e3 {
            let mut w = chol.solve(&(-r));
            let correction = chol.solve(&(-(h * &w) - r));
            w += correction;
            return Ok((w, 0));
        }
    }
    let eig = SymmetricEigen::new(h.clone());
    let top = eig.eigenvalues.amax();
    let mut w = DVector::zeros(k);
    let mut flat = 0;
    let r_scale = r.norm().max(1.0);
    for (i, &lambda) in eig.eigenvalues.iter().enumerate() {
        let v = eig.eigenvectors.column(i);
        let coef = v.dot(r);
        if lambda <= FLAT_TOL * top || top == 0.0 {
            flat += 1;
            if coef.abs() > 1e-9 * r_scale {
                return Err(Error::RankDeficientHessianOnNullspace {
                    flat_directions: flat,
                });
            }
        } else {
            w -= v * (coef / lambda);
        }
    }
    Ok((w, flat))
}

/// Builds the constraints, assembles the cost and solves.
pub fn synthesize(problem: &H2Problem) -> Result<SynthesisResult> {
    synthesize_with(problem, DEFAULT_FEASIBILITY_TOL)
}

pub fn synthesize_with(problem: &H2Problem, feasibility_tol: f64) -> Result<SynthesisResult> {
    problem.validate()?;
    let program = build_constraints(problem.kind, &problem.plant, problem.horizon)?;
    let cost = assemble_cost(problem, &program)?;
    solve_equality_qp_with(&cost, &program, feasibility_tol)
}
