//! Declarative switching PDE and switching SDE problems on `[0, L]`.
//!
//! Problems are read from a JSON tree ([`ProblemConfig`]) and checked by
//! [`validate_problem`]. A config with a `particles` block describes particles
//! following a switching SDE (faces are `absorbing`/`reflecting`); otherwise it
//! describes a switching PDE (faces are `dirichlet`/`neumann`/`robin`).
//!
//! Normal derivatives use the outward normal: `-d/dx` on the left face and
//! `d/dx` on the right face.

mod builtin;
mod coefficient;

use serde::{Deserialize, Serialize};

pub use builtin::{builtin_problem, BuiltinParams, Example};
pub use coefficient::{Coefficient, PolyPiece};

use crate::error::{Error, Result};
use crate::mjp::{GeneratorMatrix, StateDistribution};

const LIPSCHITZ_LIMIT: f64 = 1e6;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Face {
    Left,
    Right,
}

impl Face {
    pub const BOTH: [Face; 2] = [Face::Left, Face::Right];

    pub fn opposite(self) -> Face {
        match self {
            Face::Left => Face::Right,
            Face::Right => Face::Left,
        }
    }

    pub fn index(self) -> usize {
        match self {
            Face::Left => 0,
            Face::Right => 1,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Face::Left => "left",
            Face::Right => "right",
        }
    }
}

/// Boundary behaviour on one face for one environment state.
///
/// `Robin` imposes `u(target) + h * du/dn(face) = value`, where `target` is the
/// face itself or, when `nonlocal`, the opposite face.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum BoundaryCondition {
    Dirichlet {
        value: f64,
    },
    Neumann {
        value: f64,
    },
    Robin {
        value: f64,
        h: f64,
        #[serde(default)]
        nonlocal: bool,
    },
    Absorbing,
    Reflecting,
}

impl BoundaryCondition {
    pub fn is_particle_kind(&self) -> bool {
        matches!(self, BoundaryCondition::Absorbing | BoundaryCondition::Reflecting)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoundaryPair {
    pub left: BoundaryCondition,
    pub right: BoundaryCondition,
}

impl BoundaryPair {
    pub fn new(left: BoundaryCondition, right: BoundaryCondition) -> Self {
        Self { left, right }
    }

    pub fn face(&self, face: Face) -> &BoundaryCondition {
        match face {
            Face::Left => &self.left,
            Face::Right => &self.right,
        }
    }
}

/// `L u = b u' + D u'' + s u` with `D = sigma^2 / 2`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OperatorSpec {
    #[serde(default)]
    pub drift: Coefficient,
    pub diffusivity: Coefficient,
    #[serde(default)]
    pub source: Coefficient,
}

impl OperatorSpec {
    pub fn pure_diffusion(d: f64) -> Self {
        Self {
            drift: Coefficient::Constant(0.0),
            diffusivity: Coefficient::Constant(d),
            source: Coefficient::Constant(0.0),
        }
    }

    /// `sigma(x) = sqrt(2 D(x))`.
    pub fn sigma(&self, x: f64) -> f64 {
        (2.0 * self.diffusivity.eval(x)).sqrt()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InterfaceKind {
    /// Value and first derivative continuous across the interface.
    Transparent,
    /// Zero derivative on each side; the value may jump.
    ZeroFlux,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Interface {
    pub location: f64,
    pub kinds: Vec<InterfaceKind>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PdeState {
    pub operator: OperatorSpec,
    pub boundary: BoundaryPair,
}

/// Initial data of a switching PDE: `u(x, 0)` and the law of `J(0)`.
#[derive(Clone, Debug, PartialEq)]
pub struct InitialCondition {
    pub field: Coefficient,
    /// `None` means the invariant distribution of the generator.
    pub distribution: Option<StateDistribution>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SwitchingPdeProblem {
    pub length: f64,
    pub generator: GeneratorMatrix,
    pub states: Vec<PdeState>,
    pub interface: Option<Interface>,
    pub initial: InitialCondition,
}

impl SwitchingPdeProblem {
    pub fn n_states(&self) -> usize {
        self.states.len()
    }

    /// Law of `J(0)`.
    pub fn initial_distribution(&self) -> Result<StateDistribution> {
        match &self.initial.distribution {
            Some(d) => Ok(d.clone()),
            None => self.generator.invariant_distribution(),
        }
    }

    /// The non-switching problem that stays in `state` forever.
    pub fn frozen(&self, state: usize) -> SwitchingPdeProblem {
        SwitchingPdeProblem {
            length: self.length,
            generator: GeneratorMatrix::single_state(),
            states: vec![self.states[state].clone()],
            interface: self.interface.as_ref().map(|i| Interface {
                location: i.location,
                kinds: vec![i.kinds[state]],
            }),
            initial: InitialCondition {
                field: self.initial.field.clone(),
                distribution: Some(StateDistribution::point(1, 0)),
            },
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SdeState {
    pub operator: OperatorSpec,
    pub boundary: BoundaryPair,
}

impl SdeState {
    pub fn is_absorbing(&self, face: Face) -> bool {
        matches!(self.boundary.face(face), BoundaryCondition::Absorbing)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParticleSpec {
    pub starts: Vec<f64>,
    /// Target set for hitting probabilities.
    #[serde(default)]
    pub target: Vec<Face>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SwitchingSdeProblem {
    pub length: f64,
    pub generator: GeneratorMatrix,
    pub states: Vec<SdeState>,
    pub particles: ParticleSpec,
    /// `J(0)`.
    pub initial_state: usize,
}

impl SwitchingSdeProblem {
    pub fn n_states(&self) -> usize {
        self.states.len()
    }

    pub fn n_particles(&self) -> usize {
        self.particles.starts.len()
    }

    pub fn with_starts(&self, starts: Vec<f64>) -> Result<SwitchingSdeProblem> {
        let mut p = self.clone();
        p.particles.starts = starts;
        check_sde(&p)?;
        Ok(p)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Problem {
    Pde(SwitchingPdeProblem),
    Sde(SwitchingSdeProblem),
}

impl Problem {
    pub fn into_pde(self) -> Result<SwitchingPdeProblem> {
        match self {
            Problem::Pde(p) => Ok(p),
            Problem::Sde(_) => Err(Error::validation("problem", "expected a switching PDE")),
        }
    }

    pub fn into_sde(self) -> Result<SwitchingSdeProblem> {
        match self {
            Problem::Sde(p) => Ok(p),
            Problem::Pde(_) => Err(Error::validation("problem", "expected a switching SDE")),
        }
    }

    pub fn to_config(&self) -> ProblemConfig {
        match self {
            Problem::Pde(p) => ProblemConfig {
                domain: DomainConfig { length: p.length },
                generator: p.generator.rows(),
                states: p
                    .states
                    .iter()
                    .map(|s| StateConfig {
                        operator: s.operator.clone(),
                        boundary: s.boundary.clone(),
                    })
                    .collect(),
                interface: p.interface.clone(),
                initial: InitialConfig {
                    field: p.initial.field.clone(),
                    distribution: p.initial.distribution.as_ref().map(|d| d.probs().to_vec()),
                    state: None,
                },
                particles: None,
            },
            Problem::Sde(p) => ProblemConfig {
                domain: DomainConfig { length: p.length },
                generator: p.generator.rows(),
                states: p
                    .states
                    .iter()
                    .map(|s| StateConfig {
                        operator: s.operator.clone(),
                        boundary: s.boundary.clone(),
                    })
                    .collect(),
                interface: None,
                initial: InitialConfig {
                    field: Coefficient::Constant(0.0),
                    distribution: None,
                    state: Some(p.initial_state),
                },
                particles: Some(p.particles.clone()),
            },
        }
    }
}

// ---------------------------------------------------------------------------
// Config schema

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DomainConfig {
    pub length: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StateConfig {
    pub operator: OperatorSpec,
    pub boundary: BoundaryPair,
}

#[derive(Clone, Debug, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitialConfig {
    #[serde(default)]
    pub field: Coefficient,
    /// Law of `J(0)` for PDE problems; omitted means invariant.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub distribution: Option<Vec<f64>>,
    /// `J(0)` for particle problems.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub state: Option<usize>,
}

/// On-disk problem description.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemConfig {
    pub domain: DomainConfig,
    pub generator: Vec<Vec<f64>>,
    pub states: Vec<StateConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub interface: Option<Interface>,
    #[serde(default)]
    pub initial: InitialConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub particles: Option<ParticleSpec>,
}

impl ProblemConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }
}

pub fn parse_problem(text: &str) -> Result<Problem> {
    validate_problem(&ProblemConfig::from_json(text)?)
}

fn state_ctx(state: usize) -> String {
    format!("state {state}")
}

fn face_ctx(state: usize, face: Face) -> String {
    format!("state {state}, {} face", face.name())
}

fn check_operator(op: &OperatorSpec, length: f64, state: usize) -> Result<()> {
    for (name, c) in [
        ("drift", &op.drift),
        ("diffusivity", &op.diffusivity),
        ("source", &op.source),
    ] {
        c.check(length)
            .map_err(|m| Error::validation(state_ctx(state), format!("{name}: {m}")))?;
        if c.max_abs_on(length).is_nan() {
            return Err(Error::validation(state_ctx(state), format!("{name} is not finite")));
        }
    }
    let d_min = op.diffusivity.min_on(length);
    if !(d_min > 0.0) {
        return Err(Error::validation(
            state_ctx(state),
            format!("diffusivity must be positive on [0, L], minimum is {d_min}"),
        ));
    }
    Ok(())
}

fn check_common(length: f64, generator: &GeneratorMatrix, n_states: usize) -> Result<()> {
    if !(length > 0.0 && length.is_finite()) {
        return Err(Error::validation("domain", "length must be positive and finite"));
    }
    if n_states != generator.n_states() {
        return Err(Error::validation(
            "states",
            format!(
                "{n_states} states listed but the generator has {}",
                generator.n_states()
            ),
        ));
    }
    Ok(())
}

fn check_pde(p: &SwitchingPdeProblem) -> Result<()> {
    check_common(p.length, &p.generator, p.states.len())?;
    for (i, s) in p.states.iter().enumerate() {
        check_operator(&s.operator, p.length, i)?;
        for face in Face::BOTH {
            match s.boundary.face(face) {
                BoundaryCondition::Absorbing | BoundaryCondition::Reflecting => {
                    return Err(Error::validation(
                        face_ctx(i, face),
                        "absorbing/reflecting faces belong to particle problems",
                    ))
                }
                BoundaryCondition::Dirichlet { value } | BoundaryCondition::Neumann { value } => {
                    if !value.is_finite() {
                        return Err(Error::validation(face_ctx(i, face), "value is not finite"));
                    }
                }
                BoundaryCondition::Robin { value, h, nonlocal } => {
                    if !value.is_finite() || !h.is_finite() {
                        return Err(Error::validation(face_ctx(i, face), "Robin data not finite"));
                    }
                    if *h == 0.0 && !nonlocal {
                        return Err(Error::validation(
                            face_ctx(i, face),
                            "local Robin condition with h = 0 is a Dirichlet condition; declare it as such",
                        ));
                    }
                }
            }
        }
    }
    if let Some(iface) = &p.interface {
        if !(iface.location > 0.0 && iface.location < p.length) {
            return Err(Error::validation("interface", "location must lie strictly inside (0, L)"));
        }
        if iface.kinds.len() != p.states.len() {
            return Err(Error::validation("interface", "one interface kind per state required"));
        }
    }
    p.initial
        .field
        .check(p.length)
        .map_err(|m| Error::validation("initial", format!("field: {m}")))?;
    if let Some(d) = &p.initial.distribution {
        if d.len() != p.states.len() {
            return Err(Error::validation("initial", "distribution length must match the state count"));
        }
    }
    Ok(())
}

fn check_sde(p: &SwitchingSdeProblem) -> Result<()> {
    check_common(p.length, &p.generator, p.states.len())?;
    for (i, s) in p.states.iter().enumerate() {
        check_operator(&s.operator, p.length, i)?;
        if !s.operator.source.is_zero() {
            return Err(Error::validation(state_ctx(i), "particle problems take no source term"));
        }
        for (name, c) in [("drift", &s.operator.drift), ("diffusivity", &s.operator.diffusivity)] {
            let lip = c.lipschitz_estimate(p.length);
            if !(lip <= LIPSCHITZ_LIMIT) {
                return Err(Error::validation(
                    state_ctx(i),
                    format!("{name} is not Lipschitz (difference quotient {lip:e})"),
                ));
            }
        }
        for face in Face::BOTH {
            if !s.boundary.face(face).is_particle_kind() {
                return Err(Error::validation(
                    face_ctx(i, face),
                    "particle problems take absorbing/reflecting faces only",
                ));
            }
        }
    }
    let any_absorbing = p
        .states
        .iter()
        .any(|s| Face::BOTH.iter().any(|&f| s.is_absorbing(f)));
    if !any_absorbing {
        return Err(Error::NoAbsorbingFace);
    }
    if p.particles.starts.is_empty() {
        return Err(Error::validation("particles", "at least one particle required"));
    }
    if let Some(x) = p
        .particles
        .starts
        .iter()
        .find(|x| !(**x >= 0.0 && **x <= p.length))
    {
        return Err(Error::validation("particles", format!("start {x} outside [0, L]")));
    }
    if p.initial_state >= p.states.len() {
        return Err(Error::validation("initial", "initial state out of range"));
    }
    Ok(())
}

/// Checks every invariant of a parsed config and builds the typed problem.
pub fn validate_problem(cfg: &ProblemConfig) -> Result<Problem> {
    let generator = GeneratorMatrix::new(&cfg.generator)?;
    if let Some(particles) = &cfg.particles {
        if cfg.interface.is_some() {
            return Err(Error::validation("interface", "interfaces are not supported for particles"));
        }
        let p = SwitchingSdeProblem {
            length: cfg.domain.length,
            generator,
            states: cfg
                .states
                .iter()
                .map(|s| SdeState {
                    operator: s.operator.clone(),
                    boundary: s.boundary.clone(),
                })
                .collect(),
            particles: particles.clone(),
            initial_state: cfg.initial.state.unwrap_or(0),
        };
        check_sde(&p)?;
        Ok(Problem::Sde(p))
    } else {
        if cfg.initial.state.is_some() {
            return Err(Error::validation(
                "initial",
                "`state` applies to particle problems; use `distribution`",
            ));
        }
        let distribution = cfg
            .initial
            .distribution
            .clone()
            .map(StateDistribution::new)
            .transpose()?;
        let p = SwitchingPdeProblem {
            length: cfg.domain.length,
            generator,
            states: cfg
                .states
                .iter()
                .map(|s| PdeState {
                    operator: s.operator.clone(),
                    boundary: s.boundary.clone(),
                })
                .collect(),
            interface: cfg.interface.clone(),
            initial: InitialCondition {
                field: cfg.initial.field.clone(),
                distribution,
            },
        };
        check_pde(&p)?;
        Ok(Problem::Pde(p))
    }
}
