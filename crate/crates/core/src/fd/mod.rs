//! Finite differences on uniform tensor grids over `[0, L]^M`.

mod assemble;
mod field;
mod grid;
mod parabolic;
mod sparse;

pub use assemble::{
    assemble, stamp_boundary, stamp_interior, Coupling, FaceRule, LevelSpec, LinearSystem,
    StateRules, MEMORY_BUDGET,
};
pub use field::TensorField;
pub use grid::{Grid, SlotKind};
pub use parabolic::{step_length, step_parabolic, substeps, time_points, Stepper};
pub use sparse::{backward_error, Csr, Factorization, SOLVE_TOL};

use crate::error::{Error, Result};

/// Sparse direct solve for levels up to 2, ILU(0)/BiCGSTAB for level 3.
/// Returns the field after checking the backward error.
pub fn solve_steady(system: &LinearSystem) -> Result<TensorField> {
    let a = system.matrix();
    let iterative = system.grid().dim() >= 3;
    let x = Factorization::new(a.clone(), iterative)?.solve(&system.rhs)?;
    let r: Vec<f64> = a.mul(&x).iter().zip(&system.rhs).map(|(ax, b)| b - ax).collect();
    let err = backward_error(a.norm_inf(), &x, &system.rhs, &r);
    if err > SOLVE_TOL {
        return Err(Error::NoConvergence {
            iterations: 0,
            residual: err,
        });
    }
    TensorField::new(system.grid().clone(), system.n_states(), x)
}

/// Outward normal derivative of a one-dimensional grid function at a face,
/// second-order one-sided.
pub fn outward_derivative_1d(values: &[f64], h: f64, face: crate::problem::Face) -> f64 {
    let n = values.len();
    match face {
        crate::problem::Face::Left => (3.0 * values[0] - 4.0 * values[1] + values[2]) / (2.0 * h),
        crate::problem::Face::Right => {
            (3.0 * values[n - 1] - 4.0 * values[n - 2] + values[n - 3]) / (2.0 * h)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mjp::GeneratorMatrix;
    use crate::problem::OperatorSpec;
    use std::f64::consts::PI;

    fn single(d: f64, left: FaceRule, right: FaceRule) -> LevelSpec {
        LevelSpec {
            generator: GeneratorMatrix::single_state(),
            states: vec![StateRules {
                operator: OperatorSpec::pure_diffusion(d),
                left,
                right,
                interface: None,
            }],
            coupling: Coupling::Transpose,
            forcing: 0.0,
        }
    }

    fn one(grid: &Grid) -> TensorField {
        TensorField::scalars(grid, &[1.0])
    }

    #[test]
    fn linear_solution_exact() {
        let g = Grid::new(50, 1.0, 1).unwrap();
        let spec = single(1.0, FaceRule::Value { scale: 0.0 }, FaceRule::Value { scale: 1.0 });
        let sys = assemble(&spec, &g, Some(&one(&g))).unwrap();
        let u = solve_steady(&sys).unwrap();
        for (s, x) in g.axis().iter().enumerate() {
            assert!((u.state(0)[s] - x).abs() < 1e-13);
        }
    }

    #[test]
    fn all_neumann_is_singular() {
        let g = Grid::new(40, 1.0, 1).unwrap();
        let f = FaceRule::Flux { scale: 0.0 };
        let sys = assemble(&single(1.0, f, f), &g, None).unwrap();
        assert!(matches!(solve_steady(&sys), Err(Error::SingularSystem)));
    }

    #[test]
    fn heat_eigenfunction_decays() {
        let n = 99;
        let g = Grid::new(n, PI, 1).unwrap();
        let v = FaceRule::Value { scale: 0.0 };
        let sys = assemble(&single(1.0, v, v), &g, None).unwrap();
        let mut stepper = Stepper::new(sys);
        let mut u: Vec<f64> = g.axis().iter().map(|x| x.sin()).collect();
        let dt = g.h();
        let steps = (1.0 / dt).round() as usize;
        for _ in 0..steps {
            u = stepper.step(&u, dt, 0.5, None).unwrap();
        }
        let t = steps as f64 * dt;
        let err = g
            .axis()
            .iter()
            .zip(&u)
            .map(|(x, ui)| (ui - (-t).exp() * x.sin()).abs())
            .fold(0.0, f64::max);
        assert!(err < 2e-4, "err {err}");
    }

    #[test]
    fn tiny_step_leaves_field_unchanged() {
        let g = Grid::new(30, 1.0, 1).unwrap();
        let v = FaceRule::Value { scale: 0.0 };
        let sys = assemble(&single(1.0, v, v), &g, None).unwrap();
        let u0 = TensorField::product(g.clone(), &[1.0], |x| x * (1.0 - x));
        let u1 = step_parabolic(&sys, &u0, 1e-14).unwrap();
        assert!(u0.max_abs_diff(&u1) < 1e-10);
    }

    #[test]
    fn maximum_principle() {
        let g = Grid::new(40, 1.0, 1).unwrap();
        let mut spec = single(0.5, FaceRule::Value { scale: -0.3 }, FaceRule::Value { scale: 0.8 });
        spec.states[0].operator.drift = crate::problem::Coefficient::Constant(2.0);
        let sys = assemble(&spec, &g, Some(&one(&g))).unwrap();
        let u = solve_steady(&sys).unwrap();
        assert!(u.data().iter().all(|&v| (-0.3 - 1e-12..=0.8 + 1e-12).contains(&v)));
    }

    #[test]
    fn transpose_and_plain_differ_only_in_coupling() {
        let g = Grid::new(11, 1.0, 2).unwrap();
        let gen = GeneratorMatrix::two_state(2.0, 5.0).unwrap();
        let rules = |left| StateRules {
            operator: OperatorSpec::pure_diffusion(1.0),
            left,
            right: FaceRule::Flux { scale: 0.5 },
            interface: None,
        };
        let mk = |coupling| LevelSpec {
            generator: gen.clone(),
            states: vec![rules(FaceRule::Value { scale: 1.0 }), rules(FaceRule::Flux { scale: 0.0 })],
            coupling,
            forcing: 0.0,
        };
        let lower = TensorField::product(g.with_dim(1), &[0.3, 0.7], |x| 1.0 + x);
        let a = assemble(&mk(Coupling::Transpose), &g, Some(&lower)).unwrap();
        let b = assemble(&mk(Coupling::Plain), &g, Some(&lower)).unwrap();
        assert_eq!(a.operator, b.operator);
        assert_eq!(a.constraints, b.constraints);
        assert_ne!(a.coupling, b.coupling);
        let nodes = g.nodes();
        for (r, c, v) in a.coupling.triplets() {
            let (i, k) = (r / nodes, r % nodes);
            let j = c / nodes;
            assert_eq!(c % nodes, k);
            assert_eq!(b.coupling.get(j * nodes + k, i * nodes + k), v);
        }
    }
}
