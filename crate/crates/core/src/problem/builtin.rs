use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::{
    BoundaryCondition as Bc, BoundaryPair, Coefficient, Face, InitialCondition, Interface,
    InterfaceKind, OperatorSpec, ParticleSpec, PdeState, Problem, SdeState, SwitchingPdeProblem,
    SwitchingSdeProblem,
};
use crate::error::{Error, Result};
use crate::mjp::{GeneratorMatrix, StateDistribution};

/// The worked examples shipped with the toolkit.
///
/// In every two-state example, `alpha` is the rate of leaving state 1 and
/// `beta` the rate of leaving state 0, so state 0 has invariant weight
/// `alpha / (alpha + beta)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Example {
    /// Nerve terminal at `x = L` switching between absorbing and releasing.
    Neural,
    /// Spiracle at `x = L` switching between open and closed.
    Insect,
    /// Heat equation on `[0, pi]` with swapped nonlocal feedback conditions.
    Thermostat,
    /// Fixed end values with a randomly imposed no-flux gate at `L/2`.
    Interface,
    /// Ligands absorbed at `x = 0` and at a gated target at `x = L`.
    Gated,
}

impl Example {
    pub const ALL: [Example; 5] = [
        Example::Neural,
        Example::Insect,
        Example::Thermostat,
        Example::Interface,
        Example::Gated,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Example::Neural => "neural",
            Example::Insect => "insect",
            Example::Thermostat => "thermostat",
            Example::Interface => "interface",
            Example::Gated => "gated",
        }
    }
}

impl fmt::Display for Example {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Example {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Example::ALL
            .into_iter()
            .find(|e| e.name() == s)
            .ok_or_else(|| Error::UnknownExample(s.to_string()))
    }
}

/// Parameter overrides; anything left `None` takes the example's default.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BuiltinParams {
    pub length: Option<f64>,
    pub diffusivity: Option<f64>,
    pub c: Option<f64>,
    pub alpha: Option<f64>,
    pub beta: Option<f64>,
    pub k: Option<f64>,
    /// Particle starts (gated only).
    pub starts: Option<Vec<f64>>,
}

impl BuiltinParams {
    /// Resolved `(L, D, c, alpha, beta, k)` for `example`.
    pub fn resolve(&self, example: Example) -> (f64, f64, f64, f64, f64, f64) {
        let (l, d, c, a, b, k) = match example {
            Example::Neural => (1.0, 1.0, 10.0, 10.0, 1.0, 0.0),
            Example::Insect => (1.0, 1.0, 1.0, 25.0, 75.0, 0.0),
            Example::Thermostat => (PI, 1.0, 0.0, 100.0, 100.0, 3.0),
            Example::Interface => (1.0, 1.0, 1.0, 1.0, 1.0, 0.0),
            Example::Gated => (1.0, 1.0, 0.0, 1.0, 1.0, 0.0),
        };
        let alpha = self.alpha.unwrap_or(a);
        // The thermostat switches symmetrically at a single rate.
        let beta = if example == Example::Thermostat {
            alpha
        } else {
            self.beta.unwrap_or(b)
        };
        (
            self.length.unwrap_or(l),
            self.diffusivity.unwrap_or(d),
            self.c.unwrap_or(c),
            alpha,
            beta,
            self.k.unwrap_or(k),
        )
    }
}

fn dirichlet(value: f64) -> Bc {
    Bc::Dirichlet { value }
}

fn neumann(value: f64) -> Bc {
    Bc::Neumann { value }
}

fn pde_state(d: f64, left: Bc, right: Bc) -> PdeState {
    PdeState {
        operator: OperatorSpec::pure_diffusion(d),
        boundary: BoundaryPair::new(left, right),
    }
}

/// Builds the named example. Boundary data are those of the random PDE that a
/// single realization obeys; the moment solvers derive the weighted data of
/// the mean equations themselves.
pub fn builtin_problem(example: Example, params: &BuiltinParams) -> Result<Problem> {
    let (length, d, c, alpha, beta, k) = params.resolve(example);
    let generator = GeneratorMatrix::two_state(beta, alpha)?;
    let problem = match example {
        Example::Neural => Problem::Pde(SwitchingPdeProblem {
            length,
            generator,
            states: vec![
                pde_state(d, neumann(0.0), dirichlet(0.0)),
                pde_state(d, neumann(0.0), neumann(c)),
            ],
            interface: None,
            initial: InitialCondition {
                field: Coefficient::Constant(0.0),
                distribution: None,
            },
        }),
        Example::Insect => Problem::Pde(SwitchingPdeProblem {
            length,
            generator,
            states: vec![
                pde_state(d, dirichlet(0.0), dirichlet(c)),
                pde_state(d, dirichlet(0.0), neumann(0.0)),
            ],
            interface: None,
            initial: InitialCondition {
                field: Coefficient::Constant(0.0),
                distribution: None,
            },
        }),
        Example::Thermostat => {
            if !(k > 0.0) {
                return Err(Error::validation("thermostat", "k must be positive"));
            }
            let feedback = Bc::Robin {
                value: 0.0,
                h: 1.0 / k,
                nonlocal: true,
            };
            let distribution = if alpha > 0.0 {
                None
            } else {
                Some(StateDistribution::point(2, 0))
            };
            Problem::Pde(SwitchingPdeProblem {
                length,
                generator,
                states: vec![
                    pde_state(d, feedback.clone(), neumann(0.0)),
                    pde_state(d, neumann(0.0), feedback),
                ],
                interface: None,
                initial: InitialCondition {
                    field: Coefficient::polynomial(length, vec![-length / 2.0, 1.0]),
                    distribution,
                },
            })
        }
        Example::Interface => Problem::Pde(SwitchingPdeProblem {
            length,
            generator,
            states: vec![
                pde_state(d, dirichlet(0.0), dirichlet(c)),
                pde_state(d, dirichlet(0.0), dirichlet(c)),
            ],
            interface: Some(Interface {
                location: length / 2.0,
                kinds: vec![InterfaceKind::Transparent, InterfaceKind::ZeroFlux],
            }),
            initial: InitialCondition {
                field: Coefficient::Constant(0.0),
                distribution: None,
            },
        }),
        Example::Gated => {
            let sde_state = |right: Bc| SdeState {
                operator: OperatorSpec::pure_diffusion(d),
                boundary: BoundaryPair::new(Bc::Absorbing, right),
            };
            Problem::Sde(SwitchingSdeProblem {
                length,
                generator,
                states: vec![sde_state(Bc::Absorbing), sde_state(Bc::Reflecting)],
                particles: ParticleSpec {
                    starts: params.starts.clone().unwrap_or_else(|| vec![length / 2.0]),
                    target: vec![Face::Left],
                },
                initial_state: 0,
            })
        }
    };
    match &problem {
        Problem::Pde(p) => super::check_pde(p)?,
        Problem::Sde(p) => super::check_sde(p)?,
    }
    Ok(problem)
}
