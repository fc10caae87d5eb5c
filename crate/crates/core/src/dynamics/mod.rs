//! Controlled sweeping-process simulation.
//!
//! Two steppers are provided. The fixed-set stepper is the catching-up
//! scheme `x_{i+1} = Π(x_i + h g(x_i, u_i); C)`. The linearized stepper
//! projects the desired velocity onto the set of velocities that keep the
//! first-order expansion of every constraint satisfied over one step.

mod io;
mod signal;

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

use crate::geometry::{nnls, project_linear_system, GeometryError, Polyhedron, ACTIVE_TOL, FEASIBILITY_TOL};

pub use io::{read_csv, write_csv};
pub use signal::{integrate_squared_difference, localization_distance, PiecewiseConstant};

/// Largest acceptable residual when decomposing `g - V` in the normal cone.
pub const DECOMPOSITION_TOL: f64 = 1e-6;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DynamicsError {
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("invalid grid: {0}")]
    Grid(String),
    #[error("initial state violates the constraints by {0:e}")]
    InfeasibleInitialState(f64),
    #[error("normal-cone decomposition residual {0:e} exceeds tolerance")]
    Decomposition(f64),
    #[error("centers of disks {0} and {1} coincide")]
    CoincidentCenters(usize, usize),
    #[error("step {index}: {source}")]
    Step {
        index: usize,
        #[source]
        source: Box<DynamicsError>,
    },
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error("csv: {0}")]
    Csv(String),
}

/// Time grid `0 = t_0 < t_1 < ... < t_k = T`.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    steps: Vec<f64>,
    nodes: Vec<f64>,
}

impl Grid {
    pub fn uniform(final_time: f64, k: usize) -> Result<Self, DynamicsError> {
        if k == 0 {
            return Err(DynamicsError::Grid("step count must be positive".into()));
        }
        if !(final_time > 0.0 && final_time.is_finite()) {
            return Err(DynamicsError::Grid(format!("final time {final_time} must be positive")));
        }
        let h = final_time / k as f64;
        let nodes = (0..=k)
            .map(|i| if i == k { final_time } else { i as f64 * h })
            .collect();
        Ok(Self { steps: vec![h; k], nodes })
    }

    pub fn from_steps(steps: Vec<f64>) -> Result<Self, DynamicsError> {
        if steps.is_empty() {
            return Err(DynamicsError::Grid("step count must be positive".into()));
        }
        if let Some(h) = steps.iter().find(|h| !(**h > 0.0 && h.is_finite())) {
            return Err(DynamicsError::Grid(format!("step {h} must be positive")));
        }
        let mut nodes = Vec::with_capacity(steps.len() + 1);
        let mut t = 0.0;
        nodes.push(t);
        for h in &steps {
            t += h;
            nodes.push(t);
        }
        Ok(Self { steps, nodes })
    }

    pub fn k(&self) -> usize {
        self.steps.len()
    }

    pub fn steps(&self) -> &[f64] {
        &self.steps
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn final_time(&self) -> f64 {
        self.nodes[self.steps.len()]
    }
}

/// Controls `u_0..u_{k-1}`, constant on `[t_i, t_{i+1})`.
#[derive(Debug, Clone, PartialEq)]
pub struct ControlSignal {
    values: Vec<DVector<f64>>,
}

impl ControlSignal {
    pub fn new(values: Vec<DVector<f64>>) -> Result<Self, DynamicsError> {
        let Some(first) = values.first() else {
            return Err(DynamicsError::Dimension("control signal is empty".into()));
        };
        let d = first.len();
        if values.iter().any(|v| v.len() != d) {
            return Err(DynamicsError::Dimension("controls have mixed dimensions".into()));
        }
        Ok(Self { values })
    }

    pub fn constant(u: DVector<f64>, k: usize) -> Self {
        Self { values: vec![u; k] }
    }

    pub fn values(&self) -> &[DVector<f64>] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.values[0].len()
    }
}

/// Smooth perturbation `g(x, u)` with its partial Jacobians.
pub trait PerturbationMap: Send + Sync + std::fmt::Debug {
    fn state_dim(&self) -> usize;
    fn control_dim(&self) -> usize;
    fn value(&self, x: &DVector<f64>, u: &DVector<f64>) -> DVector<f64>;
    /// `∇_x g`, shape `n × n`.
    fn jacobian_x(&self, x: &DVector<f64>, u: &DVector<f64>) -> DMatrix<f64>;
    /// `∇_u g`, shape `n × d`.
    fn jacobian_u(&self, x: &DVector<f64>, u: &DVector<f64>) -> DMatrix<f64>;
    /// `β` with `|g(x, u)| <= β (1 + |x|)` whenever `|u|_∞ <= control_bound`.
    fn growth_constant(&self, control_bound: f64) -> f64;
}

/// `g(x, u) = A x + B u + c`.
#[derive(Debug, Clone)]
pub struct AffinePerturbation {
    pub a: DMatrix<f64>,
    pub b: DMatrix<f64>,
    pub c: DVector<f64>,
}

impl AffinePerturbation {
    pub fn new(a: DMatrix<f64>, b: DMatrix<f64>, c: DVector<f64>) -> Result<Self, DynamicsError> {
        let n = c.len();
        if a.shape() != (n, n) || b.nrows() != n {
            return Err(DynamicsError::Dimension(format!(
                "affine perturbation needs A {n}x{n}, B {n}xd; got {:?}, {:?}",
                a.shape(),
                b.shape()
            )));
        }
        Ok(Self { a, b, c })
    }
}

impl PerturbationMap for AffinePerturbation {
    fn state_dim(&self) -> usize {
        self.c.len()
    }

    fn control_dim(&self) -> usize {
        self.b.ncols()
    }

    fn value(&self, x: &DVector<f64>, u: &DVector<f64>) -> DVector<f64> {
        &self.a * x + &self.b * u + &self.c
    }

    fn jacobian_x(&self, _: &DVector<f64>, _: &DVector<f64>) -> DMatrix<f64> {
        self.a.clone()
    }

    fn jacobian_u(&self, _: &DVector<f64>, _: &DVector<f64>) -> DMatrix<f64> {
        self.b.clone()
    }

    fn growth_constant(&self, control_bound: f64) -> f64 {
        let d = self.b.ncols() as f64;
        self.a.norm() + self.b.norm() * control_bound * d.sqrt() + self.c.norm()
    }
}

/// Constraints that can be linearized into a velocity system `A V <= b`
/// for one step of length `h`.
pub trait VelocityConstraint: Send + Sync {
    fn state_dim(&self) -> usize;
    fn constraint_count(&self) -> usize;
    fn velocity_system(&self, x: &DVector<f64>, h: f64) -> Result<(DMatrix<f64>, DVector<f64>), DynamicsError>;
    /// Largest constraint violation at `x` (nonpositive when feasible).
    fn violation(&self, x: &DVector<f64>) -> Result<f64, DynamicsError>;
}

impl VelocityConstraint for Polyhedron {
    fn state_dim(&self) -> usize {
        self.dim()
    }

    fn constraint_count(&self) -> usize {
        self.face_count()
    }

    fn velocity_system(&self, x: &DVector<f64>, h: f64) -> Result<(DMatrix<f64>, DVector<f64>), DynamicsError> {
        let (a, c) = self.system();
        let b = c - &a * x;
        Ok((a * h, b))
    }

    fn violation(&self, x: &DVector<f64>) -> Result<f64, DynamicsError> {
        Ok(self.max_violation(x))
    }
}

/// A piecewise-linear arc with its step velocities and contact multipliers.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub grid: Grid,
    /// `x_0..x_k`.
    pub states: Vec<DVector<f64>>,
    /// `V_1..V_k`; entry `i` is the velocity on `[t_i, t_{i+1}]`.
    pub velocities: Vec<DVector<f64>>,
    /// `η_0..η_{k-1}`, one entry per constraint.
    pub cone_multipliers: Vec<DVector<f64>>,
}

impl Trajectory {
    /// Builds a trajectory from an initial state and step velocities; states
    /// are reconstructed as `x_{i+1} = x_i + h_i V_{i+1}`.
    pub fn from_velocities(
        grid: Grid,
        x0: DVector<f64>,
        velocities: Vec<DVector<f64>>,
        cone_multipliers: Vec<DVector<f64>>,
    ) -> Result<Self, DynamicsError> {
        let k = grid.k();
        if velocities.len() != k || cone_multipliers.len() != k {
            return Err(DynamicsError::Dimension(format!(
                "{k} steps but {} velocities and {} multipliers",
                velocities.len(),
                cone_multipliers.len()
            )));
        }
        let mut states = Vec::with_capacity(k + 1);
        states.push(x0);
        for (v, h) in velocities.iter().zip(grid.steps()) {
            let next = states.last().unwrap() + v * *h;
            states.push(next);
        }
        Ok(Self {
            grid,
            states,
            velocities,
            cone_multipliers,
        })
    }

    pub fn k(&self) -> usize {
        self.grid.k()
    }

    pub fn final_time(&self) -> f64 {
        self.grid.final_time()
    }

    pub fn terminal_state(&self) -> &DVector<f64> {
        &self.states[self.k()]
    }

    /// Piecewise-linear interpolation, constant `x_k` after `T` and `x_0`
    /// before `0`.
    pub fn sample(&self, t: f64) -> DVector<f64> {
        let nodes = self.grid.nodes();
        if t <= 0.0 {
            return self.states[0].clone();
        }
        if t >= self.final_time() {
            return self.terminal_state().clone();
        }
        let i = nodes.partition_point(|&s| s <= t) - 1;
        if t == nodes[i] {
            return self.states[i].clone();
        }
        &self.states[i] + &self.velocities[i] * (t - nodes[i])
    }

    /// Velocity of the extended arc as a right-continuous step function;
    /// zero after `T`.
    pub fn velocity_signal(&self) -> PiecewiseConstant {
        PiecewiseConstant::new(
            self.grid.nodes().to_vec(),
            self.velocities.clone(),
            DVector::zeros(self.states[0].len()),
        )
    }
}

/// Samples a trajectory (free-function form of [`Trajectory::sample`]).
pub fn sample(traj: &Trajectory, t: f64) -> DVector<f64> {
    traj.sample(t)
}

/// Result of one stepper call.
#[derive(Debug, Clone)]
pub struct Step {
    pub next: DVector<f64>,
    pub eta: DVector<f64>,
    pub velocity: DVector<f64>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub enum StepMode {
    #[default]
    FixedSet,
    LinearizedMovingSet,
}

fn decompose(
    normals: &[DVector<f64>],
    active: &[usize],
    target: &DVector<f64>,
    count: usize,
) -> Result<DVector<f64>, DynamicsError> {
    let mut eta = DVector::zeros(count);
    if target.iter().all(|&v| v == 0.0) {
        return Ok(eta);
    }
    let scale = 1.0 + target.norm();
    if active.is_empty() {
        let r = target.norm();
        if r > DECOMPOSITION_TOL * scale {
            return Err(DynamicsError::Decomposition(r));
        }
        return Ok(eta);
    }
    let a = DMatrix::from_fn(target.len(), active.len(), |r, c| normals[active[c]][r]);
    let sol = nnls(&a, target);
    if sol.residual > DECOMPOSITION_TOL * scale {
        return Err(DynamicsError::Decomposition(sol.residual));
    }
    for (c, &j) in active.iter().enumerate() {
        eta[j] = sol.x[c];
    }
    Ok(eta)
}

/// One catching-up step `x_{i+1} = Π(x + h g(x, u); C)` with the
/// multipliers of `g - V` on the faces active at `x_{i+1}`.
pub fn step_catching_up(
    p: &Polyhedron,
    g: &dyn PerturbationMap,
    x: &DVector<f64>,
    u: &DVector<f64>,
    h: f64,
) -> Result<Step, DynamicsError> {
    if x.len() != p.dim() || g.state_dim() != p.dim() {
        return Err(DynamicsError::Dimension(format!(
            "state {} / perturbation {} / polyhedron {}",
            x.len(),
            g.state_dim(),
            p.dim()
        )));
    }
    let gv = g.value(x, u);
    let predictor = x + &gv * h;
    if p.faces().iter().all(|f| f.slack(&predictor) <= 0.0) {
        return Ok(Step {
            next: predictor,
            eta: DVector::zeros(p.face_count()),
            velocity: gv,
        });
    }
    let z = p.project(&predictor)?.point;
    let velocity = (&z - x) / h;
    let next = x + &velocity * h;
    let active = p.near_faces(&next, ACTIVE_TOL);
    let normals: Vec<_> = p.faces().iter().map(|f| f.normal().clone()).collect();
    let eta = decompose(&normals, active.indices(), &(&gv - &velocity), p.face_count())?;
    Ok(Step { next, eta, velocity })
}

/// Velocity projected onto the linearized admissible set, `V = Π(g; C_h(x))`.
pub fn step_linearized(
    constraint: &dyn VelocityConstraint,
    x: &DVector<f64>,
    g_value: &DVector<f64>,
    h: f64,
) -> Result<Step, DynamicsError> {
    if x.len() != constraint.state_dim() || g_value.len() != x.len() {
        return Err(DynamicsError::Dimension(format!(
            "state {} / velocity {} / constraint {}",
            x.len(),
            g_value.len(),
            constraint.state_dim()
        )));
    }
    let (a, b) = constraint.velocity_system(x, h)?;
    let count = a.nrows();
    let residuals = &a * g_value - &b;
    if residuals.iter().all(|&r| r <= 0.0) {
        return Ok(Step {
            next: x + g_value * h,
            eta: DVector::zeros(count),
            velocity: g_value.clone(),
        });
    }
    let velocity = project_linear_system(&a, &b, g_value)?;
    // normals of the step constraints in state coordinates
    let normals: Vec<DVector<f64>> = (0..count).map(|r| a.row(r).transpose() / h).collect();
    let slack = &a * &velocity - &b;
    let active: Vec<usize> = (0..count)
        .filter(|&r| slack[r].abs() <= ACTIVE_TOL * (1.0 + b[r].abs()))
        .collect();
    let eta = decompose(&normals, &active, &(g_value - &velocity), count)?;
    Ok(Step {
        next: x + &velocity * h,
        eta,
        velocity,
    })
}

/// Collision-avoidance velocity rows `D_ij(x) + h ∇D_ij(x) V >= 0` for
/// planar disks, written as `-h ∇D_ij V <= D_ij`. Pairs are ordered
/// `(0,1), (0,2), ..., (1,2), ...`.
pub fn admissible_velocity_system(
    positions: &[[f64; 2]],
    radii: &[f64],
    h: f64,
) -> Result<(DMatrix<f64>, DVector<f64>), DynamicsError> {
    let n = positions.len();
    if radii.len() != n {
        return Err(DynamicsError::Dimension(format!("{n} positions but {} radii", radii.len())));
    }
    let pairs = n * n.saturating_sub(1) / 2;
    let mut a = DMatrix::zeros(pairs, 2 * n);
    let mut b = DVector::zeros(pairs);
    let mut row = 0;
    for i in 0..n {
        for j in i + 1..n {
            let dx = positions[i][0] - positions[j][0];
            let dy = positions[i][1] - positions[j][1];
            let dist = dx.hypot(dy);
            if dist == 0.0 {
                return Err(DynamicsError::CoincidentCenters(i, j));
            }
            let (ex, ey) = (dx / dist, dy / dist);
            a[(row, 2 * i)] = -h * ex;
            a[(row, 2 * i + 1)] = -h * ey;
            a[(row, 2 * j)] = h * ex;
            a[(row, 2 * j + 1)] = h * ey;
            b[row] = dist - (radii[i] + radii[j]);
            row += 1;
        }
    }
    Ok((a, b))
}

/// Planar disks with the state laid out as `(x^1, y^1, x^2, y^2, ...)`.
#[derive(Debug, Clone)]
pub struct DiskConstraint {
    pub radii: Vec<f64>,
}

impl DiskConstraint {
    fn positions(&self, x: &DVector<f64>) -> Vec<[f64; 2]> {
        x.as_slice().chunks(2).map(|c| [c[0], c[1]]).collect()
    }
}

impl VelocityConstraint for DiskConstraint {
    fn state_dim(&self) -> usize {
        2 * self.radii.len()
    }

    fn constraint_count(&self) -> usize {
        let n = self.radii.len();
        n * n.saturating_sub(1) / 2
    }

    fn velocity_system(&self, x: &DVector<f64>, h: f64) -> Result<(DMatrix<f64>, DVector<f64>), DynamicsError> {
        admissible_velocity_system(&self.positions(x), &self.radii, h)
    }

    fn violation(&self, x: &DVector<f64>) -> Result<f64, DynamicsError> {
        let (_, b) = admissible_velocity_system(&self.positions(x), &self.radii, 1.0)?;
        Ok(b.iter().map(|d| -d).fold(f64::NEG_INFINITY, f64::max))
    }
}

fn check_inputs(
    n: usize,
    g: &dyn PerturbationMap,
    x0: &DVector<f64>,
    ctrl: &ControlSignal,
    grid: &Grid,
) -> Result<(), DynamicsError> {
    if x0.len() != n || g.state_dim() != n {
        return Err(DynamicsError::Dimension(format!(
            "initial state {} / perturbation {} / constraint {n}",
            x0.len(),
            g.state_dim()
        )));
    }
    if ctrl.len() != grid.k() {
        return Err(DynamicsError::Dimension(format!(
            "{} controls for {} steps",
            ctrl.len(),
            grid.k()
        )));
    }
    if ctrl.dim() != g.control_dim() {
        return Err(DynamicsError::Dimension(format!(
            "control dimension {} but perturbation expects {}",
            ctrl.dim(),
            g.control_dim()
        )));
    }
    Ok(())
}

fn assemble(
    grid: &Grid,
    x0: &DVector<f64>,
    mut step: impl FnMut(usize, &DVector<f64>, f64) -> Result<Step, DynamicsError>,
) -> Result<Trajectory, DynamicsError> {
    let k = grid.k();
    let mut states = Vec::with_capacity(k + 1);
    let mut velocities = Vec::with_capacity(k);
    let mut etas = Vec::with_capacity(k);
    states.push(x0.clone());
    for (i, &h) in grid.steps().iter().enumerate() {
        let s = step(i, &states[i], h).map_err(|e| DynamicsError::Step {
            index: i,
            source: Box::new(e),
        })?;
        // reconstruction identity holds bit-for-bit
        let next = &states[i] + &s.velocity * h;
        debug_assert!((&next - &s.next).amax() <= 1e-12 * (1.0 + next.amax()));
        states.push(next);
        velocities.push(s.velocity);
        etas.push(s.eta);
    }
    Ok(Trajectory {
        grid: grid.clone(),
        states,
        velocities,
        cone_multipliers: etas,
    })
}

/// Chains the chosen stepper over the grid.
pub fn simulate(
    p: &Polyhedron,
    g: &dyn PerturbationMap,
    x0: &DVector<f64>,
    ctrl: &ControlSignal,
    grid: &Grid,
    mode: StepMode,
) -> Result<Trajectory, DynamicsError> {
    match mode {
        StepMode::LinearizedMovingSet => simulate_linearized(p, g, x0, ctrl, grid),
        StepMode::FixedSet => {
            check_inputs(p.dim(), g, x0, ctrl, grid)?;
            let v = p.max_violation(x0);
            if v > FEASIBILITY_TOL {
                return Err(DynamicsError::InfeasibleInitialState(v));
            }
            assemble(grid, x0, |i, x, h| step_catching_up(p, g, x, &ctrl.values()[i], h))
        }
    }
}

/// Linearized moving-set simulation for any [`VelocityConstraint`].
pub fn simulate_linearized(
    constraint: &dyn VelocityConstraint,
    g: &dyn PerturbationMap,
    x0: &DVector<f64>,
    ctrl: &ControlSignal,
    grid: &Grid,
) -> Result<Trajectory, DynamicsError> {
    check_inputs(constraint.state_dim(), g, x0, ctrl, grid)?;
    let v = constraint.violation(x0)?;
    if v > FEASIBILITY_TOL {
        return Err(DynamicsError::InfeasibleInitialState(v));
    }
    assemble(grid, x0, |i, x, h| {
        let gv = g.value(x, &ctrl.values()[i]);
        step_linearized(constraint, x, &gv, h)
    })
}

/// Shared handle used by problem definitions.
pub type SharedPerturbation = Arc<dyn PerturbationMap>;

/// First time the arc reaches the boundary, estimated inside the first
/// step carrying a contact multiplier by intersecting the free predictor
/// segment with the face holding the largest multiplier.
pub fn first_contact_time(traj: &Trajectory, p: &Polyhedron) -> Option<f64> {
    let nodes = traj.grid.nodes();
    for (i, eta) in traj.cone_multipliers.iter().enumerate() {
        if eta.amax() <= 0.0 {
            continue;
        }
        let j = eta.imax();
        let face = &p.faces()[j];
        let h = traj.grid.steps()[i];
        let x = &traj.states[i];
        let mut predictor = traj.states[i + 1].clone();
        for (l, f) in p.faces().iter().enumerate() {
            predictor += f.normal() * (h * eta[l]);
        }
        let start = face.slack(x);
        let rise = face.normal().dot(&(predictor - x));
        if rise <= 0.0 {
            return Some(nodes[i]);
        }
        let theta = (-start / rise).clamp(0.0, 1.0);
        return Some(nodes[i] + theta * h);
    }
    None
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::HalfSpace;
    use approx::assert_relative_eq;

    fn dv(v: &[f64]) -> DVector<f64> {
        DVector::from_row_slice(v)
    }

    fn marine_face() -> Polyhedron {
        Polyhedron::new(vec![HalfSpace::new(dv(&[1.0, 1.0, -1.0, -1.0]), -7.0).unwrap()]).unwrap()
    }

    fn constant_velocity(g: &[f64]) -> AffinePerturbation {
        let n = g.len();
        AffinePerturbation::new(DMatrix::zeros(n, n), DMatrix::zeros(n, 1), dv(g)).unwrap()
    }

    #[test]
    fn grid_construction() {
        let g = Grid::uniform(26.003, 2600).unwrap();
        assert_eq!(g.k(), 2600);
        assert_eq!(g.final_time(), 26.003);
        assert_relative_eq!(g.steps().iter().sum::<f64>(), 26.003, epsilon = 1e-12);
        assert!(Grid::uniform(0.0, 3).is_err());
        assert!(Grid::from_steps(vec![0.1, -0.1]).is_err());
        let g = Grid::from_steps(vec![0.5, 0.25]).unwrap();
        assert_eq!(g.nodes(), &[0.0, 0.5, 0.75]);
    }

    #[test]
    fn interior_step_is_free_motion() {
        let p = marine_face();
        let g = constant_velocity(&[1.0, 0.0, 0.0, 0.0]);
        let x = dv(&[-25.0, -25.0, -15.0, -15.0]);
        let s = step_catching_up(&p, &g, &x, &dv(&[0.0]), 0.01).unwrap();
        assert_eq!(s.velocity, dv(&[1.0, 0.0, 0.0, 0.0]));
        assert_eq!(s.eta[0], 0.0);
        assert_eq!(s.next, &x + dv(&[0.01, 0.0, 0.0, 0.0]));
    }

    #[test]
    fn sliding_step_on_marine_face() {
        let p = marine_face();
        let g = constant_velocity(&[1.18474, 1.18474, 0.35355, 0.35355]);
        let x = dv(&[-5.0, -5.0, -1.5, -1.5]);
        assert_eq!(p.active_set(&x, 1e-12).unwrap().indices(), &[0]);
        let s = step_catching_up(&p, &g, &x, &dv(&[0.0]), 0.01).unwrap();
        // V = g - (<x*, g>/4) x*
        let shift = (2.0 * 1.18474 - 2.0 * 0.35355) / 4.0;
        for c in 0..4 {
            assert_relative_eq!(s.velocity[c], 0.769145, epsilon = 1e-5);
        }
        assert_relative_eq!(s.eta[0], shift, epsilon = 1e-12);
        assert_relative_eq!(s.eta[0], 0.41560, epsilon = 1e-4);
    }

    #[test]
    fn zero_perturbation_is_stationary() {
        let p = marine_face();
        let g = constant_velocity(&[0.0; 4]);
        let x0 = dv(&[-1.75, -1.75, 1.75, 1.75]);
        let grid = Grid::uniform(2.0, 10).unwrap();
        let traj = simulate(&p, &g, &x0, &ControlSignal::constant(dv(&[0.0]), 10), &grid, StepMode::FixedSet).unwrap();
        assert!(traj.states.iter().all(|s| *s == x0));
        assert!(traj.cone_multipliers.iter().all(|e| e[0] == 0.0));
    }

    #[test]
    fn infeasible_start_rejected() {
        let p = marine_face();
        let g = constant_velocity(&[0.0; 4]);
        let grid = Grid::uniform(1.0, 2).unwrap();
        let err = simulate(&p, &g, &DVector::zeros(4), &ControlSignal::constant(dv(&[0.0]), 2), &grid, StepMode::FixedSet)
            .unwrap_err();
        assert!(matches!(err, DynamicsError::InfeasibleInitialState(_)));
    }

    #[test]
    fn velocity_system_examples() {
        let (a, b) = admissible_velocity_system(&[[0.0, 0.0]], &[1.0], 0.1).unwrap();
        assert_eq!(a.nrows(), 0);
        assert_eq!(b.len(), 0);

        let (a, b) = admissible_velocity_system(&[[-25.0, -25.0], [-15.0, -15.0]], &[3.5, 3.5], 0.1).unwrap();
        assert_eq!(a.shape(), (1, 4));
        assert_relative_eq!(b[0], 200f64.sqrt() - 7.0, epsilon = 1e-12);
        assert_relative_eq!(b[0], 7.14214, epsilon = 1e-5);

        let (_, b) = admissible_velocity_system(&[[0.0, 0.0], [2.0, 0.0]], &[1.0, 1.0], 0.1).unwrap();
        assert_eq!(b[0], 0.0);

        assert_eq!(
            admissible_velocity_system(&[[1.0, 1.0], [1.0, 1.0]], &[1.0, 1.0], 0.1).unwrap_err(),
            DynamicsError::CoincidentCenters(0, 1)
        );
    }

    #[test]
    fn linearized_step_equalizes_normal_velocity_at_contact() {
        let disks = DiskConstraint { radii: vec![1.0, 1.0] };
        let x = dv(&[0.0, 0.0, 2.0, 0.0]);
        let g = dv(&[1.0, 0.0, 0.0, 0.0]);
        let s = step_linearized(&disks, &x, &g, 0.1).unwrap();
        // closing speed removed: both move at 1/2 along the center line
        assert_relative_eq!(s.velocity[0], 0.5, epsilon = 1e-12);
        assert_relative_eq!(s.velocity[2], 0.5, epsilon = 1e-12);
        assert!(s.eta[0] > 0.0);

        let far = dv(&[0.0, 0.0, 20.0, 0.0]);
        assert_eq!(step_linearized(&disks, &far, &g, 0.1).unwrap().velocity, g);
    }

    #[test]
    fn sample_and_extension() {
        let p = marine_face();
        let g = constant_velocity(&[1.0, 0.0, 0.0, 0.0]);
        let x0 = dv(&[-25.0, -25.0, -15.0, -15.0]);
        let grid = Grid::uniform(1.0, 4).unwrap();
        let traj = simulate(&p, &g, &x0, &ControlSignal::constant(dv(&[0.0]), 4), &grid, StepMode::FixedSet).unwrap();
        assert_eq!(sample(&traj, 0.0), x0);
        assert_eq!(sample(&traj, 0.5), traj.states[2]);
        assert_eq!(sample(&traj, 6.0), traj.states[4]);
        assert_relative_eq!(sample(&traj, 0.1)[0], -24.9, epsilon = 1e-12);
    }
}
