//! Assembly of one hierarchy level: the operator `sum_m L_i^m` on interior
//! rows, the generator coupling, and one constraint row per boundary or
//! interface node.

use super::field::TensorField;
use super::grid::{Grid, SlotKind};
use super::sparse::Csr;
use crate::error::{Error, Result};
use crate::mjp::GeneratorMatrix;
use crate::problem::{Face, InterfaceKind, OperatorSpec};

/// Largest system (states x nodes) any level may assemble.
pub const MEMORY_BUDGET: usize = 2_000_000;

/// How the generator enters the interior rows.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Coupling {
    /// `sum_j q_ji u_j` (moments of a switching PDE).
    Transpose,
    /// `sum_j q_ij u_j` (exit statistics of a switching SDE).
    Plain,
}

/// Boundary row of state `i` on one face along axis `m`. `lower` is the
/// level below evaluated at the remaining coordinates, same state.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum FaceRule {
    /// `u = scale * lower`.
    Value { scale: f64 },
    /// `du/dn = scale * lower`.
    Flux { scale: f64 },
    /// `u(target) + h du/dn = g * lower`, target the opposite face if
    /// `nonlocal`.
    Robin { g: f64, h: f64, nonlocal: bool },
}

#[derive(Clone, Debug, PartialEq)]
pub struct StateRules {
    pub operator: OperatorSpec,
    pub left: FaceRule,
    pub right: FaceRule,
    pub interface: Option<InterfaceKind>,
}

impl StateRules {
    pub fn face(&self, face: Face) -> FaceRule {
        match face {
            Face::Left => self.left,
            Face::Right => self.right,
        }
    }
}

/// Everything stamping needs besides the grid.
#[derive(Clone, Debug, PartialEq)]
pub struct LevelSpec {
    pub generator: GeneratorMatrix,
    pub states: Vec<StateRules>,
    pub coupling: Coupling,
    /// Constant right-hand side of the interior rows.
    pub forcing: f64,
}

#[derive(Clone, Debug, PartialEq)]
struct ConstraintRhs {
    row: usize,
    /// `(scale, axis)`: adds `scale * lower(coordinates without axis)`.
    terms: Vec<(f64, usize)>,
}

/// Assembled level: `(operator + coupling + constraints) u = rhs`.
///
/// `operator` and `coupling` are zero on constraint rows; `constraints` is
/// zero on interior rows.
#[derive(Clone, Debug, PartialEq)]
pub struct LinearSystem {
    grid: Grid,
    n_states: usize,
    pub operator: Csr,
    pub coupling: Csr,
    pub constraints: Csr,
    pub rhs: Vec<f64>,
    is_constraint: Vec<bool>,
    constraint_rhs: Vec<ConstraintRhs>,
}

impl LinearSystem {
    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn size(&self) -> usize {
        self.rhs.len()
    }

    pub fn is_constraint(&self, row: usize) -> bool {
        self.is_constraint[row]
    }

    pub fn constraint_mask(&self) -> &[bool] {
        &self.is_constraint
    }

    /// Interior dynamics `operator + coupling`.
    pub fn dynamics(&self) -> Csr {
        self.operator.combine(1.0, &self.coupling, 1.0)
    }

    /// Full steady matrix.
    pub fn matrix(&self) -> Csr {
        self.dynamics().combine(1.0, &self.constraints, 1.0)
    }

    pub fn has_constraint_rows(&self) -> bool {
        !self.constraint_rhs.is_empty()
    }

    /// Whether any constraint reads the level below with a nonzero weight.
    pub fn needs_lower(&self) -> bool {
        self.constraint_rhs
            .iter()
            .any(|c| c.terms.iter().any(|&(s, _)| s != 0.0))
    }

    /// Recomputes constraint right-hand sides from the level below.
    pub fn refresh_boundary(&mut self, lower: Option<&TensorField>) -> Result<()> {
        let dim = self.grid.dim();
        if self.needs_lower() {
            let lower = lower.ok_or(Error::MissingLowerLevel { level: dim })?;
            if lower.grid().dim() + 1 != dim || lower.n_states() != self.n_states {
                return Err(Error::Shape(format!(
                    "level {dim} needs a level {} field with {} states",
                    dim - 1,
                    self.n_states
                )));
            }
        }
        let nodes = self.grid.nodes();
        let axis = self.grid.axis();
        let mut slots = vec![0; dim];
        let mut rest_slots = Vec::with_capacity(dim);
        let mut rest_x = Vec::with_capacity(dim);
        for c in &self.constraint_rhs {
            let state = c.row / nodes;
            self.grid.unravel(c.row % nodes, &mut slots);
            let mut value = 0.0;
            for &(scale, m) in &c.terms {
                if scale == 0.0 {
                    continue;
                }
                let lower = lower.expect("checked above");
                rest_slots.clear();
                rest_x.clear();
                for (k, &s) in slots.iter().enumerate() {
                    if k != m {
                        rest_slots.push(s);
                        rest_x.push(axis[s]);
                    }
                }
                let v = if lower.grid().same_axis(&self.grid) {
                    lower.at(state, &rest_slots)
                } else {
                    lower.eval(state, &rest_x)
                };
                value += scale * v;
            }
            self.rhs[c.row] = value;
        }
        Ok(())
    }
}

fn check_budget(grid: &Grid, n_states: usize) -> Result<()> {
    let unknowns = grid.nodes().saturating_mul(n_states);
    if unknowns > MEMORY_BUDGET {
        return Err(Error::MemoryBudgetExceeded {
            unknowns,
            budget: MEMORY_BUDGET,
        });
    }
    Ok(())
}

fn interior_node(grid: &Grid, slots: &[usize]) -> bool {
    slots
        .iter()
        .all(|&s| grid.slot_kind(s) == SlotKind::Interior)
}

/// Interior rows: central differences of `b D1 + D D2 + s` along every axis,
/// plus the generator block. Constraint rows are left empty.
pub fn stamp_interior(spec: &LevelSpec, grid: &Grid) -> Result<LinearSystem> {
    let n_states = spec.states.len();
    if spec.generator.n_states() != n_states {
        return Err(Error::Shape("one rule set per generator state required".into()));
    }
    check_budget(grid, n_states)?;
    let nodes = grid.nodes();
    let size = n_states * nodes;
    let dim = grid.dim();
    let h = grid.h();
    let axis = grid.axis();
    let mut op = Vec::new();
    let mut cp = Vec::new();
    let mut rhs = vec![0.0; size];
    let mut is_constraint = vec![false; size];
    let mut slots = vec![0; dim];
    for (i, rules) in spec.states.iter().enumerate() {
        let coeffs: Vec<(f64, f64, f64)> = axis
            .iter()
            .map(|&x| {
                (
                    rules.operator.drift.eval(x),
                    rules.operator.diffusivity.eval(x),
                    rules.operator.source.eval(x),
                )
            })
            .collect();
        for k in 0..nodes {
            let row = i * nodes + k;
            grid.unravel(k, &mut slots);
            if !interior_node(grid, &slots) {
                is_constraint[row] = true;
                continue;
            }
            rhs[row] = spec.forcing;
            let stride_of = |m: usize| grid.slots().pow((dim - 1 - m) as u32);
            for m in 0..dim {
                let (b, d, s) = coeffs[slots[m]];
                let stride = stride_of(m);
                op.push((row, row, -2.0 * d / (h * h) + s));
                op.push((row, row - stride, d / (h * h) - b / (2.0 * h)));
                op.push((row, row + stride, d / (h * h) + b / (2.0 * h)));
            }
            for j in 0..n_states {
                let q = match spec.coupling {
                    Coupling::Transpose => spec.generator.rate(j, i),
                    Coupling::Plain => spec.generator.rate(i, j),
                };
                cp.push((row, j * nodes + k, q));
            }
        }
    }
    Ok(LinearSystem {
        grid: grid.clone(),
        n_states,
        operator: Csr::from_triplets(size, size, op),
        coupling: Csr::from_triplets(size, size, cp),
        constraints: Csr::zeros(size, size),
        rhs,
        is_constraint,
        constraint_rhs: Vec::new(),
    })
}

/// Outward one-sided second-order derivative along axis `m` at `row`.
fn outward_derivative(
    trips: &mut Vec<(usize, usize, f64)>,
    row: usize,
    at: usize,
    face: Face,
    stride: usize,
    h: f64,
    weight: f64,
) {
    let c = weight / (2.0 * h);
    match face {
        Face::Left => {
            trips.push((row, at, 3.0 * c));
            trips.push((row, at + stride, -4.0 * c));
            trips.push((row, at + 2 * stride, c));
        }
        Face::Right => {
            trips.push((row, at, 3.0 * c));
            trips.push((row, at - stride, -4.0 * c));
            trips.push((row, at - 2 * stride, c));
        }
    }
}

/// Adds one constraint row per non-interior node and fills its right-hand
/// side from `lower`.
pub fn stamp_boundary(
    system: &mut LinearSystem,
    spec: &LevelSpec,
    lower: Option<&TensorField>,
) -> Result<()> {
    let grid = system.grid.clone();
    let dim = grid.dim();
    let nodes = grid.nodes();
    let size = system.size();
    let h = grid.h();
    let last = grid.slots() - 1;
    let mut trips = Vec::new();
    let mut rhs_terms = Vec::new();
    let mut slots = vec![0; dim];
    let stride_of = |m: usize| grid.slots().pow((dim - 1 - m) as u32);
    for (i, rules) in spec.states.iter().enumerate() {
        for k in 0..nodes {
            let row = i * nodes + k;
            if !system.is_constraint[row] {
                continue;
            }
            grid.unravel(k, &mut slots);
            let kinds: Vec<SlotKind> = slots.iter().map(|&s| grid.slot_kind(s)).collect();
            let faces: Vec<(usize, Face)> = kinds
                .iter()
                .enumerate()
                .filter_map(|(m, kind)| match kind {
                    SlotKind::Left => Some((m, Face::Left)),
                    SlotKind::Right => Some((m, Face::Right)),
                    _ => None,
                })
                .collect();
            let value_face = faces
                .iter()
                .find(|&&(_, f)| matches!(rules.face(f), FaceRule::Value { .. }));
            let all_flux = !faces.is_empty()
                && faces.len() == kinds.iter().filter(|&&k| k != SlotKind::Interior).count()
                && faces
                    .iter()
                    .all(|&(_, f)| matches!(rules.face(f), FaceRule::Flux { .. }));
            let mut terms = Vec::new();
            if let Some(&(m, f)) = value_face {
                let FaceRule::Value { scale } = rules.face(f) else { unreachable!() };
                trips.push((row, row, 1.0));
                terms.push((scale, m));
            } else if all_flux {
                for &(m, f) in &faces {
                    let FaceRule::Flux { scale } = rules.face(f) else { unreachable!() };
                    outward_derivative(&mut trips, row, row, f, stride_of(m), h, 1.0);
                    terms.push((scale, m));
                }
            } else if let Some(&(m, f)) = faces.first() {
                let stride = stride_of(m);
                match rules.face(f) {
                    FaceRule::Flux { scale } => {
                        outward_derivative(&mut trips, row, row, f, stride, h, 1.0);
                        terms.push((scale, m));
                    }
                    FaceRule::Robin { g, h: hr, nonlocal } => {
                        let target = if nonlocal {
                            match f {
                                Face::Left => row + last * stride,
                                Face::Right => row - last * stride,
                            }
                        } else {
                            row
                        };
                        trips.push((row, target, 1.0));
                        outward_derivative(&mut trips, row, row, f, stride, h, hr);
                        terms.push((g, m));
                    }
                    FaceRule::Value { .. } => unreachable!(),
                }
            } else {
                let m = kinds
                    .iter()
                    .position(|k| matches!(k, SlotKind::InterfaceMinus | SlotKind::InterfacePlus))
                    .expect("non-interior node");
                let stride = stride_of(m);
                let kind = rules.interface.ok_or_else(|| {
                    Error::validation(format!("state {i}"), "grid has an interface but the state declares no interface kind")
                })?;
                // Left-limit derivative at the minus copy, right-limit at the plus copy.
                let (minus, plus) = match kinds[m] {
                    SlotKind::InterfaceMinus => (row, row + stride),
                    _ => (row - stride, row),
                };
                let c = 1.0 / (2.0 * h);
                let left_limit = [(minus, 3.0 * c), (minus - stride, -4.0 * c), (minus - 2 * stride, c)];
                let right_limit = [(plus, -3.0 * c), (plus + stride, 4.0 * c), (plus + 2 * stride, -c)];
                match (kind, kinds[m]) {
                    (InterfaceKind::Transparent, SlotKind::InterfaceMinus) => {
                        trips.push((row, minus, 1.0));
                        trips.push((row, plus, -1.0));
                    }
                    (InterfaceKind::Transparent, _) => {
                        trips.extend(left_limit.iter().map(|&(c, v)| (row, c, v)));
                        trips.extend(right_limit.iter().map(|&(c, v)| (row, c, -v)));
                    }
                    (InterfaceKind::ZeroFlux, SlotKind::InterfaceMinus) => {
                        trips.extend(left_limit.iter().map(|&(c, v)| (row, c, v)));
                    }
                    (InterfaceKind::ZeroFlux, _) => {
                        trips.extend(right_limit.iter().map(|&(c, v)| (row, c, v)));
                    }
                }
            }
            rhs_terms.push(ConstraintRhs { row, terms });
        }
    }
    system.constraints = Csr::from_triplets(size, size, trips);
    system.constraint_rhs = rhs_terms;
    system.refresh_boundary(lower)
}

/// Interior plus boundary stamping in one call.
pub fn assemble(spec: &LevelSpec, grid: &Grid, lower: Option<&TensorField>) -> Result<LinearSystem> {
    let mut system = stamp_interior(spec, grid)?;
    stamp_boundary(&mut system, spec, lower)?;
    Ok(system)
}
