//! Independent checks of the synthesis numerics: a projected-gradient solver
//! for the equality-constrained program and quadrature of the H2 integral.

use clparam::examples::{car_following, random_stable};
use clparam::lti::{unit_point, Mat, StateSpaceModel};
use clparam::param::{build_constraints, CostWeight, ParameterizationKind};
use clparam::synth::{assemble_cost, solve_equality_qp, synthesize, H2Problem, QuadraticForm};
use nalgebra::{dmatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Accelerated projected gradient on `{x : E x = f}`, started from the
/// minimum-norm feasible point.
fn projected_gradient(cost: &QuadraticForm, e: &Mat, f: &DVector<f64>) -> DVector<f64> {
    let pinv = e.clone().pseudo_inverse(1e-12).unwrap();
    let project = |x: &DVector<f64>| x - &pinv * (e * x - f);
    let lipschitz = cost.hessian.clone().symmetric_eigenvalues().max().max(1e-12);
    let step = 1.0 / lipschitz;
    let mut x = project(&DVector::zeros(e.ncols()));
    let mut y = x.clone();
    let mut t = 1.0f64;
    for _ in 0..200_000 {
        let next = project(&(&y - cost.gradient(&y) * step));
        let t_next = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
        y = &next + (&next - &x) * ((t - 1.0) / t_next);
        let moved = (&next - &x).norm();
        x = next;
        t = t_next;
        if moved < 1e-15 {
            break;
        }
    }
    x
}

fn scalar_plant(rng: &mut ChaCha8Rng) -> StateSpaceModel {
    let mut draw = |lo: f64, hi: f64| dmatrix![rng.gen_range(lo..hi)];
    StateSpaceModel::strictly_proper(draw(-0.9, 0.9), draw(0.5, 2.0), draw(0.5, 2.0)).unwrap()
}

#[test]
fn nullspace_solution_matches_projected_gradient() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut checked = 0;
    while checked < 20 {
        let plant = scalar_plant(&mut rng);
        let kind = ParameterizationKind::PRIMARY[checked % 4];
        let horizon = 2 + checked % 2;
        let problem = H2Problem::new(plant.clone(), kind, horizon);
        let program = build_constraints(kind, &plant, horizon).unwrap();
        assert!(program.num_vars() <= 20, "{kind} at T={horizon}: {} variables", program.num_vars());
        let cost = assemble_cost(&problem, &program).unwrap();
        let exact = solve_equality_qp(&cost, &program).unwrap();
        let oracle = projected_gradient(&cost, &program.e, &program.f);
        let (c_exact, c_oracle) = (cost.value(&exact.solution), cost.value(&oracle));
        assert!((c_exact - c_oracle).abs() <= 1e-7 * c_oracle.abs().max(1.0), "{kind}: {c_exact} vs {c_oracle}");
        let gap = (&exact.solution - &oracle).norm();
        assert!(gap < 1e-6, "{kind}: solutions differ by {gap:e}");
        checked += 1;
    }
}

/// `(1/N) Σ ‖W^{1/2} H(e^{jω})‖_F²` over `N` points of the full circle.
fn quadrature(problem: &H2Problem, solution: &DVector<f64>, points: usize, roots: (&Mat, &Mat)) -> f64 {
    let program = build_constraints(problem.kind, &problem.plant, problem.horizon).unwrap();
    let step = std::f64::consts::TAU / points as f64;
    let mut total = 0.0;
    for term in &program.cost_terms {
        let root = match term.weight {
            CostWeight::Output => roots.0,
            CostWeight::Input => roots.1,
        };
        let h = term.value(solution).premul(root).unwrap();
        total += (0..points).map(|i| h.eval(unit_point(step * i as f64)).norm_squared()).sum::<f64>();
    }
    total / points as f64
}

#[test]
fn coefficient_norm_matches_frequency_integral() {
    let plant = car_following();
    for kind in ParameterizationKind::PRIMARY {
        let problem = H2Problem::new(plant.clone(), kind, 20);
        let sol = synthesize(&problem).unwrap();
        let eye = Mat::identity(2, 2);
        let integral = quadrature(&problem, &sol.solution, 4096, (&eye, &eye)).sqrt();
        assert!((integral - sol.h2_norm).abs() < 1e-6 * sol.h2_norm, "{kind}: {integral} vs {}", sol.h2_norm);
    }
    let plant = random_stable(8, 3, 1, 2);
    let (q, r) = (Mat::from_diagonal(&DVector::from_vec(vec![4.0, 0.25])), dmatrix![9.0]);
    let (q_root, r_root) = (q.map(f64::sqrt), r.map(f64::sqrt));
    let problem = H2Problem::new(plant, ParameterizationKind::Iop, 6).with_weights(q, r).unwrap();
    let sol = synthesize(&problem).unwrap();
    let integral = quadrature(&problem, &sol.solution, 4096, (&q_root, &r_root)).sqrt();
    assert!((integral - sol.h2_norm).abs() < 1e-6 * sol.h2_norm);
}
