#![allow(dead_code)]

use std::f64::consts::PI;

use hysim_core::problem::{BoundaryPair, ParticleSpec, SdeState};
use hysim_core::{BoundaryCondition, Face, GeneratorMatrix, OperatorSpec, SwitchingSdeProblem};

#[allow(unused_imports)]
pub use hysim_core::BoundaryCondition::{Absorbing, Reflecting};

/// Particles with unit length and diffusivity that never switch.
pub fn still(left: BoundaryCondition, right: BoundaryCondition, starts: &[f64]) -> SwitchingSdeProblem {
    SwitchingSdeProblem {
        length: 1.0,
        generator: GeneratorMatrix::single_state(),
        states: vec![SdeState {
            operator: OperatorSpec::pure_diffusion(1.0),
            boundary: BoundaryPair::new(left, right),
        }],
        particles: ParticleSpec {
            starts: starts.to_vec(),
            target: vec![Face::Left],
        },
        initial_state: 0,
    }
}

/// Survival probability of Brownian motion with generator `D d^2/dx^2` on
/// `[0, L]` with both ends absorbing, from its sine series.
pub fn survival_series(x: f64, t: f64, d: f64, l: f64) -> f64 {
    (0..400)
        .map(|j| {
            let k = (2 * j + 1) as f64;
            4.0 / (k * PI) * (k * PI * x / l).sin() * (-(k * PI / l).powi(2) * d * t).exp()
        })
        .sum()
}

/// `(c beta / (alpha mu)) coth(mu L)`, `mu = sqrt((alpha + beta) / D)`.
pub fn neural_mean(l: f64, d: f64, c: f64, alpha: f64, beta: f64) -> f64 {
    let mu = ((alpha + beta) / d).sqrt();
    c * beta / (alpha * mu) / (mu * l).tanh()
}

/// `c alpha / (alpha L + (beta / mu) tanh(mu L))`.
pub fn insect_flux(l: f64, d: f64, c: f64, alpha: f64, beta: f64) -> f64 {
    let mu = ((alpha + beta) / d).sqrt();
    c * alpha / (alpha * l + beta / mu * (mu * l).tanh())
}

pub fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs()
}
