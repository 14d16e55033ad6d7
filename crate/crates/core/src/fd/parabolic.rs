//! Theta-scheme time stepping of `du/dt = A u - f` on interior rows with the
//! constraint rows enforced at the new time level.

use super::assemble::LinearSystem;
use super::field::TensorField;
use super::sparse::{Csr, Factorization};
use crate::error::Result;

const CACHE_SIZE: usize = 6;

/// Sub-steps covering one step of length `dt`: a Crank-Nicolson step, or two
/// backward-Euler half steps to damp the high-frequency error of rough data.
pub fn substeps(dt: f64, damped: bool) -> Vec<(f64, f64)> {
    if damped {
        vec![(0.5 * dt, 1.0), (0.5 * dt, 1.0)]
    } else {
        vec![(dt, 0.5)]
    }
}

/// Time stepper for one assembled level, caching factorizations per
/// `(dt, theta)`.
pub struct Stepper {
    system: LinearSystem,
    dynamics: Csr,
    mass: Csr,
    iterative: bool,
    cache: Vec<((u64, u64), Factorization)>,
    scratch: Vec<f64>,
}

impl Stepper {
    pub fn new(system: LinearSystem) -> Self {
        let dynamics = system.dynamics();
        let n = system.size();
        let mass = Csr::identity_on(n, |r| !system.is_constraint(r));
        let iterative = system.grid().dim() >= 3;
        Self {
            system,
            dynamics,
            mass,
            iterative,
            cache: Vec::new(),
            scratch: vec![0.0; n],
        }
    }

    pub fn system(&self) -> &LinearSystem {
        &self.system
    }

    fn factor(&mut self, dt: f64, theta: f64) -> Result<usize> {
        let key = (dt.to_bits(), theta.to_bits());
        if let Some(pos) = self.cache.iter().position(|(k, _)| *k == key) {
            return Ok(pos);
        }
        let k = self
            .mass
            .combine(1.0, &self.dynamics, -theta * dt)
            .combine(1.0, &self.system.constraints, 1.0);
        let f = Factorization::new(k, self.iterative)?;
        if self.cache.len() == CACHE_SIZE {
            // The first two entries are the damped and regular steps.
            self.cache.remove(2);
        }
        self.cache.push((key, f));
        Ok(self.cache.len() - 1)
    }

    /// One theta step from `u`; `lower` is the level below at the new time.
    pub fn step(&mut self, u: &[f64], dt: f64, theta: f64, lower: Option<&TensorField>) -> Result<Vec<f64>> {
        self.system.refresh_boundary(lower)?;
        self.dynamics.matvec(u, &mut self.scratch);
        let mut rhs = vec![0.0; u.len()];
        for (r, out) in rhs.iter_mut().enumerate() {
            *out = if self.system.is_constraint(r) {
                self.system.rhs[r]
            } else {
                u[r] + (1.0 - theta) * dt * self.scratch[r] - dt * self.system.rhs[r]
            };
        }
        let pos = self.factor(dt, theta)?;
        self.cache[pos].1.solve(&rhs)
    }

    /// Replaces the constraint-row values of `u` so that every constraint
    /// holds with the interior values kept.
    pub fn project(&mut self, u: &[f64], lower: Option<&TensorField>) -> Result<Vec<f64>> {
        self.system.refresh_boundary(lower)?;
        let k = self.mass.combine(1.0, &self.system.constraints, 1.0);
        let rhs: Vec<f64> = (0..u.len())
            .map(|r| {
                if self.system.is_constraint(r) {
                    self.system.rhs[r]
                } else {
                    u[r]
                }
            })
            .collect();
        Factorization::new(k, self.iterative)?.solve(&rhs)
    }
}

/// Single Crank-Nicolson step of `field` with the system's current boundary
/// data.
pub fn step_parabolic(system: &LinearSystem, field: &TensorField, dt: f64) -> Result<TensorField> {
    let mut stepper = Stepper::new(system.clone());
    let theta = 0.5;
    let k = stepper
        .mass
        .combine(1.0, &stepper.dynamics, -theta * dt)
        .combine(1.0, &system.constraints, 1.0);
    let u = field.data();
    stepper.dynamics.matvec(u, &mut stepper.scratch);
    let rhs: Vec<f64> = (0..u.len())
        .map(|r| {
            if system.is_constraint(r) {
                system.rhs[r]
            } else {
                u[r] + (1.0 - theta) * dt * stepper.scratch[r] - dt * system.rhs[r]
            }
        })
        .collect();
    let x = Factorization::new(k, stepper.iterative)?.solve(&rhs)?;
    TensorField::new(system.grid().clone(), system.n_states(), x)
}

/// `next - t`, snapped to `dt` when they agree to rounding so that cached
/// factorizations are reused.
pub fn step_length(t: f64, next: f64, dt: f64) -> f64 {
    let s = next - t;
    if (s - dt).abs() <= 1e-9 * dt {
        dt
    } else {
        s
    }
}

/// Step end points on `(0, horizon]`: multiples of `dt` with every break time
/// inserted. Regular points closer than `1e-9 dt` to a break are dropped.
pub fn time_points(horizon: f64, dt: f64, breaks: &[f64]) -> Vec<f64> {
    let steps = (horizon / dt - 1e-9).ceil().max(1.0) as usize;
    let mut pts: Vec<f64> = (1..steps).map(|k| k as f64 * dt).collect();
    pts.push(horizon);
    let tol = 1e-9 * dt;
    for &b in breaks {
        if b > tol && b < horizon - tol {
            pts.retain(|p| (p - b).abs() > tol);
            pts.push(b);
        }
    }
    pts.sort_by(f64::total_cmp);
    pts
}
