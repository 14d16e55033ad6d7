//! Numerical toolkit for diffusion in randomly switching environments.
//!
//! Two complementary views are supported. A *density* of particles under
//! switching boundary conditions is a random PDE whose moments solve a
//! hierarchy of coupled boundary value problems ([`moments`]). Finitely many
//! particles following a switching SDE have joint exit statistics (survival,
//! hitting, last-exit time) that solve a closely related hierarchy
//! ([`exit`]). Both hierarchies are discretized on tensor-product grids by
//! [`fd`], and both are cross-checked by the Monte Carlo engines in [`mc`].
//!
//! The environment itself is a finite-state continuous-time Markov chain,
//! see [`mjp`].

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod error;
pub mod exit;
pub mod fd;
pub mod mc;
pub mod mjp;
pub mod moments;
pub mod problem;
pub mod random;

pub use error::{Error, Result};
pub use mjp::{GeneratorMatrix, JumpPath, StateDistribution};
pub use problem::{
    builtin_problem, validate_problem, BoundaryCondition, BuiltinParams, Coefficient, Example,
    Face, InterfaceKind, OperatorSpec, Problem, ProblemConfig, SwitchingPdeProblem,
    SwitchingSdeProblem,
};
pub use random::RandomStreams;
