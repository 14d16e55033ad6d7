//! Moment hierarchy of a switching PDE.
//!
//! `v_i^M(x_1..x_M, t) = E[1{J(t) = i} u(x_1, t) ... u(x_M, t)]` solves the
//! operator `sum_m L_i^m` plus the transposed generator. On a boundary face
//! along axis `m` it satisfies the state's boundary relation with the data
//! multiplied by `v_i^{M-1}` of the remaining coordinates. Level 0 is the law
//! of `J(t)`.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::fd::{
    assemble, solve_steady, step_length, substeps, time_points, Coupling, FaceRule, Grid,
    LevelSpec, StateRules, Stepper, TensorField,
};
use crate::problem::{
    builtin_problem, BoundaryCondition, BuiltinParams, Example, Face, SwitchingPdeProblem,
};

/// Highest moment level solved.
pub const MAX_MOMENT_LEVEL: usize = 2;

/// One solved level `v_i^M` for every state.
#[derive(Clone, Debug, PartialEq)]
pub struct MomentLevel {
    pub level: usize,
    pub field: TensorField,
}

impl MomentLevel {
    pub fn grid(&self) -> &Grid {
        self.field.grid()
    }
}

fn face_rule(bc: &BoundaryCondition) -> Result<FaceRule> {
    Ok(match *bc {
        BoundaryCondition::Dirichlet { value } => FaceRule::Value { scale: value },
        BoundaryCondition::Neumann { value } => FaceRule::Flux { scale: value },
        BoundaryCondition::Robin { value, h, nonlocal } => FaceRule::Robin { g: value, h, nonlocal },
        BoundaryCondition::Absorbing | BoundaryCondition::Reflecting => {
            return Err(Error::validation("boundary", "particle boundary in a PDE problem"))
        }
    })
}

/// Stamping rules shared by every moment level.
pub fn moment_spec(problem: &SwitchingPdeProblem) -> Result<LevelSpec> {
    let states = problem
        .states
        .iter()
        .enumerate()
        .map(|(i, s)| {
            Ok(StateRules {
                operator: s.operator.clone(),
                left: face_rule(&s.boundary.left)?,
                right: face_rule(&s.boundary.right)?,
                interface: problem.interface.as_ref().map(|f| f.kinds[i]),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(LevelSpec {
        generator: problem.generator.clone(),
        states,
        coupling: Coupling::Transpose,
        forcing: 0.0,
    })
}

/// Grid of level `dim` for `problem` with `n` interior nodes per axis.
pub fn moment_grid(problem: &SwitchingPdeProblem, n: usize, dim: usize) -> Result<Grid> {
    match &problem.interface {
        Some(f) => Grid::with_interface(n, problem.length, dim, f.location),
        None => Grid::new(n, problem.length, dim),
    }
}

fn check_level(m_max: usize) -> Result<()> {
    if m_max > MAX_MOMENT_LEVEL {
        return Err(Error::Unsupported(format!(
            "moment level {m_max} (at most {MAX_MOMENT_LEVEL})"
        )));
    }
    Ok(())
}

/// Steady hierarchy, levels `0..=m_max`.
pub fn solve_moment_hierarchy_steady(
    problem: &SwitchingPdeProblem,
    m_max: usize,
    n: usize,
) -> Result<Vec<MomentLevel>> {
    check_level(m_max)?;
    let spec = moment_spec(problem)?;
    let grid = moment_grid(problem, n, 1)?;
    let rho = problem.generator.invariant_distribution()?;
    let mut levels = vec![MomentLevel {
        level: 0,
        field: TensorField::scalars(&grid, rho.probs()),
    }];
    for m in 1..=m_max {
        let system = assemble(&spec, &grid.with_dim(m), Some(&levels[m - 1].field))?;
        levels.push(MomentLevel {
            level: m,
            field: solve_steady(&system)?,
        });
    }
    Ok(levels)
}

/// Hierarchy snapshots of a transient solve.
#[derive(Clone, Debug, PartialEq)]
pub struct TransientMoments {
    pub times: Vec<f64>,
    /// `levels[k]` holds levels `0..=m_max` at `times[k]`.
    pub levels: Vec<Vec<MomentLevel>>,
}

/// Marches levels `0..=m_max` from the tensor-product initial data to
/// `horizon`, recording the hierarchy at each of `snapshots` (and at the
/// horizon). The first step is damped.
pub fn solve_moment_hierarchy_transient(
    problem: &SwitchingPdeProblem,
    m_max: usize,
    n: usize,
    horizon: f64,
    dt: f64,
    snapshots: &[f64],
) -> Result<TransientMoments> {
    check_level(m_max)?;
    if !(horizon > 0.0 && dt > 0.0) {
        return Err(Error::Settings("horizon and dt must be positive".into()));
    }
    let spec = moment_spec(problem)?;
    let grid = moment_grid(problem, n, 1)?;
    let rho0 = problem.initial_distribution()?;
    let law = |t: f64| TensorField::scalars(&grid, &rho0.evolve(&problem.generator, t));
    let u0 = &problem.initial.field;

    let mut steppers = Vec::with_capacity(m_max);
    let mut fields: Vec<TensorField> = vec![law(0.0)];
    for m in 1..=m_max {
        let g = grid.with_dim(m);
        let mut stepper = Stepper::new(assemble(&spec, &g, Some(&fields[m - 1]))?);
        let init = TensorField::product(g.clone(), rho0.probs(), |x| u0.eval(x));
        let projected = stepper.project(init.data(), Some(&fields[m - 1]))?;
        fields.push(TensorField::new(g, problem.n_states(), projected)?);
        steppers.push(stepper);
    }

    let mut want: Vec<f64> = snapshots.iter().copied().filter(|&s| s < horizon).collect();
    want.push(horizon);
    want.sort_by(f64::total_cmp);
    want.dedup();
    let mut out = TransientMoments {
        times: Vec::new(),
        levels: Vec::new(),
    };
    let record = |out: &mut TransientMoments, t: f64, fields: &[TensorField]| {
        out.times.push(t);
        out.levels.push(
            fields
                .iter()
                .enumerate()
                .map(|(level, f)| MomentLevel {
                    level,
                    field: f.clone(),
                })
                .collect(),
        );
    };
    if want.first() == Some(&0.0) {
        record(&mut out, 0.0, &fields);
    }
    let mut t = 0.0;
    for (k, next) in time_points(horizon, dt, &want).into_iter().enumerate() {
        let step = step_length(t, next, dt);
        let mut ts = t;
        for (sub, theta) in substeps(step, k == 0) {
            ts += sub;
            fields[0] = law(ts);
            for m in 1..=m_max {
                let u = steppers[m - 1].step(fields[m].data(), sub, theta, Some(&fields[m - 1]))?;
                fields[m] = TensorField::new(fields[m].grid().clone(), problem.n_states(), u)?;
            }
        }
        t = next;
        if want.iter().any(|&w| (w - t).abs() <= 1e-9 * dt) {
            record(&mut out, t, &fields);
        }
    }
    Ok(out)
}

/// Pointwise statistics of `u` derived from a solved hierarchy.
#[derive(Clone, Debug, PartialEq)]
pub struct MomentSummary {
    pub x: Vec<f64>,
    pub mean: Vec<f64>,
    pub second_moment: Option<Vec<f64>>,
    pub variance: Option<Vec<f64>>,
    /// Outward diffusive flux `-D du/dn` of the mean at the left and right
    /// faces.
    pub flux: [f64; 2],
    /// `-D d(mean)/dx` just left of the interface, if there is one.
    pub interface_flux: Option<f64>,
}

impl MomentSummary {
    pub fn flux_at(&self, face: Face) -> f64 {
        self.flux[face.index()]
    }

    pub fn std_dev(&self) -> Option<Vec<f64>> {
        self.variance
            .as_ref()
            .map(|v| v.iter().map(|&s| s.max(0.0).sqrt()).collect())
    }
}

/// Mean (level 1) and, if present, second moment and variance (level 2).
pub fn summarize(problem: &SwitchingPdeProblem, levels: &[MomentLevel]) -> Result<MomentSummary> {
    let first = levels
        .iter()
        .find(|l| l.level == 1)
        .ok_or(Error::MissingLowerLevel { level: 2 })?;
    let grid = first.grid();
    let h = grid.h();
    let x = grid.axis();
    let mean = first.field.state_sum();
    let second_moment = levels.iter().find(|l| l.level == 2).map(|l| {
        let diag: Vec<Vec<f64>> = (0..l.field.n_states()).map(|i| l.field.diagonal(i)).collect();
        (0..x.len()).map(|k| diag.iter().map(|d| d[k]).sum()).collect::<Vec<f64>>()
    });
    let variance = second_moment
        .as_ref()
        .map(|s| s.iter().zip(&mean).map(|(s, m)| s - m * m).collect());
    let d = |x: f64| problem.states[0].operator.diffusivity.eval(x);
    let flux = [
        -d(0.0) * crate::fd::outward_derivative_1d(&mean, h, Face::Left),
        -d(problem.length) * crate::fd::outward_derivative_1d(&mean, h, Face::Right),
    ];
    let interface_flux = grid.interface_node().map(|k| {
        let xk = x[k];
        let slope = (3.0 * mean[k] - 4.0 * mean[k - 1] + mean[k - 2]) / (2.0 * h);
        -d(xk) * slope
    });
    Ok(MomentSummary {
        x,
        mean,
        second_moment,
        variance,
        flux,
        interface_flux,
    })
}

/// Largest real part of the spectrum of the mean dynamics with the boundary
/// unknowns eliminated. Positive means the mean blows up.
pub fn dominant_growth_rate(problem: &SwitchingPdeProblem, n: usize) -> Result<f64> {
    let spec = moment_spec(problem)?;
    let grid = moment_grid(problem, n, 1)?;
    let zero = TensorField::scalars(&grid, &vec![0.0; problem.n_states()]);
    let system = assemble(&spec, &grid, Some(&zero))?;
    let size = system.size();
    let interior: Vec<usize> = (0..size).filter(|&r| !system.is_constraint(r)).collect();
    let boundary: Vec<usize> = (0..size).filter(|&r| system.is_constraint(r)).collect();
    let mut pos = vec![usize::MAX; size];
    for (k, &r) in interior.iter().enumerate() {
        pos[r] = k;
    }
    for (k, &r) in boundary.iter().enumerate() {
        pos[r] = k;
    }
    let (ni, nb) = (interior.len(), boundary.len());
    let dynamics = system.dynamics();
    let mut a_ii = DMatrix::<f64>::zeros(ni, ni);
    let mut a_ib = DMatrix::<f64>::zeros(ni, nb);
    for (k, &r) in interior.iter().enumerate() {
        for (c, v) in dynamics.row(r) {
            if system.is_constraint(c) {
                a_ib[(k, pos[c])] += v;
            } else {
                a_ii[(k, pos[c])] += v;
            }
        }
    }
    let mut c_bb = DMatrix::<f64>::zeros(nb, nb);
    let mut c_bi = DMatrix::<f64>::zeros(nb, ni);
    for (k, &r) in boundary.iter().enumerate() {
        for (c, v) in system.constraints.row(r) {
            if system.is_constraint(c) {
                c_bb[(k, pos[c])] += v;
            } else {
                c_bi[(k, pos[c])] += v;
            }
        }
    }
    let elim = c_bb.lu().solve(&c_bi).ok_or(Error::SingularSystem)?;
    let reduced = a_ii - a_ib * elim;
    let schur = nalgebra::linalg::Schur::try_new(reduced, 1e-14, 100_000)
        .ok_or(Error::EigsNoConvergence)?;
    schur
        .complex_eigenvalues()
        .iter()
        .map(|z| z.re)
        .fold(None, |m: Option<f64>, v| Some(m.map_or(v, |m| m.max(v))))
        .ok_or(Error::EigsNoConvergence)
}

/// `int_0^L |f|` by the trapezoidal rule over the (ordered) nodes.
pub fn l1_norm(x: &[f64], f: &[f64]) -> f64 {
    x.windows(2)
        .zip(f.windows(2))
        .map(|(xs, fs)| 0.5 * (xs[1] - xs[0]) * (fs[0].abs() + fs[1].abs()))
        .sum()
}

/// Steady mean of the randomly gated interface example.
pub fn solve_interface_example(params: &BuiltinParams, n: usize) -> Result<MomentSummary> {
    if n.is_multiple_of(2) {
        return Err(Error::Settings(format!("interface example needs odd n, got {n}")));
    }
    let problem = builtin_problem(Example::Interface, params)?.into_pde()?;
    let levels = solve_moment_hierarchy_steady(&problem, 1, n)?;
    summarize(&problem, &levels)
}
