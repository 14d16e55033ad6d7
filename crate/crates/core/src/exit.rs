//! Joint exit statistics of `M` particles following a switching SDE.
//!
//! All three hierarchies use the generator itself (not its transpose) and
//! differ only in their face rules and level-zero data:
//!
//! | statistic | absorbing face | reflecting face | level 0 | interior rhs |
//! |-----------|----------------|-----------------|---------|--------------|
//! | survival, some alive | `p^{M-1}` | `dp/dn = 0` | 0 | 0 |
//! | survival, all alive | 0 | `dp/dn = 0` | - | 0 |
//! | hitting `G` | `pi^{M-1}` on `G`, else 0 | `dpi/dn = 0` | 1 | 0 |
//! | last exit time | `w^{M-1}` | `dw/dn = 0` | 0 | -1 |
//!
//! Every field is indexed by the environment state at time zero.

use crate::error::{Error, Result};
use crate::fd::{
    assemble, solve_steady, step_length, substeps, time_points, Coupling, FaceRule, Grid,
    LevelSpec, StateRules, Stepper, TensorField,
};
use crate::problem::{BoundaryCondition, Face, SwitchingSdeProblem};

/// Interior nodes per axis used for three-particle levels.
pub const MAX_N_LEVEL3: usize = 48;
pub const MAX_PARTICLES: usize = 3;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SurvivalVariant {
    /// At least one particle still inside.
    AnyAlive,
    /// Every particle still inside.
    AllAlive,
}

#[derive(Clone, Debug, PartialEq)]
enum Statistic {
    Survival(SurvivalVariant),
    Hitting(Vec<Face>),
    Mfpt,
}

/// A solved steady level (hitting probability or last exit time).
#[derive(Clone, Debug, PartialEq)]
pub struct ExitLevel {
    pub level: usize,
    pub field: TensorField,
}

pub type HittingLevel = ExitLevel;
pub type MfptLevel = ExitLevel;

impl ExitLevel {
    /// Value for initial environment state `state` and starts `x`.
    pub fn at(&self, state: usize, x: &[f64]) -> f64 {
        self.field.eval(state, x)
    }
}

/// Survival probabilities of one level at the requested times.
#[derive(Clone, Debug, PartialEq)]
pub struct SurvivalLevel {
    pub level: usize,
    pub dt: f64,
    pub horizon: f64,
    pub times: Vec<f64>,
    pub fields: Vec<TensorField>,
}

impl SurvivalLevel {
    pub fn at(&self, time_index: usize, state: usize, x: &[f64]) -> f64 {
        self.fields[time_index].eval(state, x)
    }

    pub fn time_index(&self, t: f64) -> Option<usize> {
        self.times
            .iter()
            .position(|&s| (s - t).abs() <= 1e-9 * self.dt.max(1e-300))
    }
}

fn exit_spec(problem: &SwitchingSdeProblem, stat: &Statistic) -> LevelSpec {
    let rule = |bc: &BoundaryCondition, face: Face| match bc {
        BoundaryCondition::Absorbing => FaceRule::Value {
            scale: match stat {
                Statistic::Survival(SurvivalVariant::AnyAlive) | Statistic::Mfpt => 1.0,
                Statistic::Survival(SurvivalVariant::AllAlive) => 0.0,
                Statistic::Hitting(target) => {
                    if target.contains(&face) {
                        1.0
                    } else {
                        0.0
                    }
                }
            },
        },
        _ => FaceRule::Flux { scale: 0.0 },
    };
    LevelSpec {
        generator: problem.generator.clone(),
        states: problem
            .states
            .iter()
            .map(|s| StateRules {
                operator: s.operator.clone(),
                left: rule(&s.boundary.left, Face::Left),
                right: rule(&s.boundary.right, Face::Right),
                interface: None,
            })
            .collect(),
        coupling: Coupling::Plain,
        forcing: if *stat == Statistic::Mfpt { -1.0 } else { 0.0 },
    }
}

/// Stamping rules of the survival hierarchy. The rules match
/// [`crate::moments::moment_spec`] of a PDE with value 1 on absorbing faces
/// and zero flux on reflecting ones, except that the generator is not
/// transposed.
pub fn survival_spec(problem: &SwitchingSdeProblem, variant: SurvivalVariant) -> LevelSpec {
    exit_spec(problem, &Statistic::Survival(variant))
}

fn level_zero(problem: &SwitchingSdeProblem, grid: &Grid, stat: &Statistic) -> TensorField {
    let v = match stat {
        Statistic::Hitting(_) => 1.0,
        _ => 0.0,
    };
    TensorField::scalars(grid, &vec![v; problem.n_states()])
}

fn check_m(m: usize) -> Result<()> {
    if m == 0 || m > MAX_PARTICLES {
        return Err(Error::Unsupported(format!(
            "{m} particles (exit hierarchies support 1 to {MAX_PARTICLES})"
        )));
    }
    Ok(())
}

/// Grid of level `m`; three-particle levels are capped at
/// [`MAX_N_LEVEL3`] interior nodes per axis.
pub fn exit_grid(problem: &SwitchingSdeProblem, n: usize, m: usize) -> Result<Grid> {
    let n = if m >= 3 { n.min(MAX_N_LEVEL3) } else { n };
    Grid::new(n, problem.length, m)
}

fn solve_elliptic(problem: &SwitchingSdeProblem, m: usize, n: usize, stat: Statistic) -> Result<Vec<ExitLevel>> {
    check_m(m)?;
    let spec = exit_spec(problem, &stat);
    let mut lower = level_zero(problem, &exit_grid(problem, n, 1)?, &stat);
    let mut levels = Vec::with_capacity(m);
    for level in 1..=m {
        let system = assemble(&spec, &exit_grid(problem, n, level)?, Some(&lower))?;
        let field = solve_steady(&system)?;
        lower = field.clone();
        levels.push(ExitLevel { level, field });
    }
    Ok(levels)
}

/// `pi_i^M`: probability that every particle leaves through `target`.
pub fn solve_hitting(
    problem: &SwitchingSdeProblem,
    m: usize,
    n: usize,
    target: &[Face],
) -> Result<Vec<HittingLevel>> {
    solve_elliptic(problem, m, n, Statistic::Hitting(target.to_vec()))
}

/// `w_i^M`: mean exit time of the last of `M` particles.
pub fn solve_mfpt(problem: &SwitchingSdeProblem, m: usize, n: usize) -> Result<Vec<MfptLevel>> {
    solve_elliptic(problem, m, n, Statistic::Mfpt)
}

/// `p_i^M(x, t)` for levels `1..=m`, recorded at `probe_times` and the
/// horizon. Initial data are 1 in the interior.
pub fn solve_survival(
    problem: &SwitchingSdeProblem,
    m: usize,
    n: usize,
    horizon: f64,
    dt: f64,
    probe_times: &[f64],
    variant: SurvivalVariant,
) -> Result<Vec<SurvivalLevel>> {
    check_m(m)?;
    if !(horizon > 0.0 && dt > 0.0) {
        return Err(Error::Settings("horizon and dt must be positive".into()));
    }
    let stat = Statistic::Survival(variant);
    let spec = exit_spec(problem, &stat);
    let zero = level_zero(problem, &exit_grid(problem, n, 1)?, &stat);
    let mut steppers = Vec::with_capacity(m);
    let mut fields = Vec::with_capacity(m);
    for level in 1..=m {
        let g = exit_grid(problem, n, level)?;
        let lower = if level == 1 { &zero } else { &fields[level - 2] };
        let mut stepper = Stepper::new(assemble(&spec, &g, Some(lower))?);
        let ones = vec![1.0; problem.n_states() * g.nodes()];
        let init = stepper.project(&ones, Some(lower))?;
        fields.push(TensorField::new(g, problem.n_states(), init)?);
        steppers.push(stepper);
    }
    let mut want: Vec<f64> = probe_times.iter().copied().filter(|&s| s < horizon).collect();
    want.push(horizon);
    want.sort_by(f64::total_cmp);
    want.dedup();
    let mut out: Vec<SurvivalLevel> = (1..=m)
        .map(|level| SurvivalLevel {
            level,
            dt,
            horizon,
            times: Vec::new(),
            fields: Vec::new(),
        })
        .collect();
    let record = |out: &mut Vec<SurvivalLevel>, t: f64, fields: &[TensorField]| {
        for (o, f) in out.iter_mut().zip(fields) {
            o.times.push(t);
            o.fields.push(f.clone());
        }
    };
    if want.first() == Some(&0.0) {
        record(&mut out, 0.0, &fields);
    }
    let mut t = 0.0;
    for (k, next) in time_points(horizon, dt, &want).into_iter().enumerate() {
        let step = step_length(t, next, dt);
        for (sub, theta) in substeps(step, k == 0) {
            for level in 0..m {
                let u = {
                    let lower = if level == 0 { &zero } else { &fields[level - 1] };
                    steppers[level].step(fields[level].data(), sub, theta, Some(lower))?
                };
                fields[level] = TensorField::new(fields[level].grid().clone(), problem.n_states(), u)?;
            }
        }
        t = next;
        if want.iter().any(|&w| (w - t).abs() <= 1e-9 * dt) {
            record(&mut out, t, &fields);
        }
    }
    Ok(out)
}
