//! The free-time discrete approximation problem: data, cost, constraint
//! residuals, the ξ/ϱ/H̄ quantities entering the optimality system, and
//! derivative-free solvers.

mod cost;
mod solver;

use std::sync::Arc;

use nalgebra::DVector;
use serde::Serialize;
use thiserror::Error;

use crate::dynamics::{
    integrate_squared_difference, simulate, ControlSignal, DynamicsError, Grid, PerturbationMap,
    PiecewiseConstant, StepMode, Trajectory,
};
use crate::geometry::{Polyhedron, ACTIVE_TOL};

pub use cost::{CostFunction, HalfSquaredDistance, L1Distance};
pub use solver::{
    solve, solve_constant_control, ConstantSearchOptions, Parametrization, SolveOptions, SolveOutcome, SolveStatus,
};

/// Default tolerance for every feasibility residual.
pub const FEASIBILITY_REPORT_TOL: f64 = 1e-8;
/// Default localization radius when no reference is supplied.
pub const DEFAULT_EPSILON: f64 = 1e3;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OcpError {
    #[error("invalid problem: {0}")]
    Invalid(String),
    #[error("this quantity needs a reference process")]
    NoReference,
    #[error("no feasible point: {0}")]
    NoFeasiblePoint(String),
    #[error(transparent)]
    Dynamics(#[from] DynamicsError),
}

/// Coordinatewise interval bounds for the controls.
#[derive(Debug, Clone, PartialEq)]
pub struct ControlBox {
    lower: DVector<f64>,
    upper: DVector<f64>,
}

impl ControlBox {
    pub fn new(lower: DVector<f64>, upper: DVector<f64>) -> Result<Self, OcpError> {
        if lower.len() != upper.len() || lower.is_empty() {
            return Err(OcpError::Invalid("control box bounds must have equal positive length".into()));
        }
        for (l, u) in lower.iter().zip(upper.iter()) {
            if !(l.is_finite() && u.is_finite() && l <= u) {
                return Err(OcpError::Invalid(format!("control interval [{l}, {u}] is empty or unbounded")));
            }
        }
        Ok(Self { lower, upper })
    }

    /// `[lo, hi]^d`.
    pub fn uniform(d: usize, lo: f64, hi: f64) -> Result<Self, OcpError> {
        Self::new(DVector::from_element(d, lo), DVector::from_element(d, hi))
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn lower(&self) -> &DVector<f64> {
        &self.lower
    }

    pub fn upper(&self) -> &DVector<f64> {
        &self.upper
    }

    /// Largest amount by which `u` leaves the box (zero inside).
    pub fn violation(&self, u: &DVector<f64>) -> f64 {
        u.iter()
            .zip(self.lower.iter().zip(self.upper.iter()))
            .map(|(v, (l, h))| (l - v).max(v - h).max(0.0))
            .fold(0.0, f64::max)
    }

    pub fn clamp(&self, u: &DVector<f64>) -> DVector<f64> {
        DVector::from_iterator(
            u.len(),
            u.iter()
                .zip(self.lower.iter().zip(self.upper.iter()))
                .map(|(v, (l, h))| v.clamp(*l, *h)),
        )
    }

    pub fn max_abs(&self) -> f64 {
        self.lower.amax().max(self.upper.amax())
    }
}

/// The process `(x̄, ū, T̄)` around which the discrete problem is localized.
#[derive(Debug, Clone)]
pub struct Reference {
    pub trajectory: Trajectory,
    pub controls: ControlSignal,
}

impl Reference {
    pub fn new(trajectory: Trajectory, controls: ControlSignal) -> Result<Self, OcpError> {
        if controls.len() != trajectory.k() {
            return Err(OcpError::Invalid(format!(
                "reference has {} steps but {} controls",
                trajectory.k(),
                controls.len()
            )));
        }
        Ok(Self { trajectory, controls })
    }

    pub fn final_time(&self) -> f64 {
        self.trajectory.final_time()
    }

    /// `ẋ̄` extended by zero after `T̄`.
    pub fn velocity_signal(&self) -> PiecewiseConstant {
        self.trajectory.velocity_signal()
    }

    /// `ū` extended by its last value after `T̄`.
    pub fn control_signal(&self) -> PiecewiseConstant {
        PiecewiseConstant::from_controls(&self.trajectory.grid, &self.controls)
    }

    pub fn initial_control(&self) -> &DVector<f64> {
        &self.controls.values()[0]
    }
}

#[derive(Debug, Clone)]
pub struct DiscreteProblem {
    pub polyhedron: Polyhedron,
    pub perturbation: Arc<dyn PerturbationMap>,
    pub control_box: ControlBox,
    pub cost: Arc<dyn CostFunction>,
    pub initial_state: DVector<f64>,
    pub reference: Option<Reference>,
    pub epsilon: f64,
    pub k: usize,
    pub mode: StepMode,
}

impl DiscreteProblem {
    pub fn new(
        polyhedron: Polyhedron,
        perturbation: Arc<dyn PerturbationMap>,
        control_box: ControlBox,
        cost: Arc<dyn CostFunction>,
        initial_state: DVector<f64>,
        k: usize,
    ) -> Result<Self, OcpError> {
        let n = polyhedron.dim();
        if perturbation.state_dim() != n || initial_state.len() != n {
            return Err(OcpError::Invalid(format!(
                "state dimensions disagree: polyhedron {n}, perturbation {}, initial state {}",
                perturbation.state_dim(),
                initial_state.len()
            )));
        }
        if perturbation.control_dim() != control_box.dim() {
            return Err(OcpError::Invalid(format!(
                "control dimensions disagree: perturbation {}, box {}",
                perturbation.control_dim(),
                control_box.dim()
            )));
        }
        if k == 0 {
            return Err(OcpError::Invalid("k must be positive".into()));
        }
        Ok(Self {
            polyhedron,
            perturbation,
            control_box,
            cost,
            initial_state,
            reference: None,
            epsilon: DEFAULT_EPSILON,
            k,
            mode: StepMode::FixedSet,
        })
    }

    /// Localizes the problem around `reference` with radius `epsilon`.
    pub fn with_reference(mut self, reference: Reference, epsilon: f64) -> Result<Self, OcpError> {
        if !(epsilon > 0.0) {
            return Err(OcpError::Invalid("epsilon must be positive".into()));
        }
        if reference.trajectory.states[0].len() != self.polyhedron.dim()
            || reference.controls.dim() != self.control_box.dim()
        {
            return Err(OcpError::Invalid("reference dimensions disagree with the problem".into()));
        }
        self.reference = Some(reference);
        self.epsilon = epsilon;
        Ok(self)
    }

    pub fn t_bar(&self) -> Option<f64> {
        self.reference.as_ref().map(Reference::final_time)
    }

    /// Simulates constant-per-step controls on a uniform grid over `[0, T]`.
    pub fn evaluate(&self, controls: ControlSignal, final_time: f64) -> Result<DiscreteSolution, OcpError> {
        let grid = Grid::uniform(final_time, self.k)?;
        let trajectory = simulate(
            &self.polyhedron,
            self.perturbation.as_ref(),
            &self.initial_state,
            &controls,
            &grid,
            self.mode,
        )?;
        let cost_value = cost_jk(&trajectory, &controls, self).total;
        Ok(DiscreteSolution {
            trajectory,
            controls,
            cost_value,
        })
    }
}

/// A candidate `(x^k, u^k, T_k)` of the discrete problem.
#[derive(Debug, Clone)]
pub struct DiscreteSolution {
    pub trajectory: Trajectory,
    pub controls: ControlSignal,
    pub cost_value: f64,
}

impl DiscreteSolution {
    pub fn final_time(&self) -> f64 {
        self.trajectory.final_time()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CostBreakdown {
    pub terminal: f64,
    pub time_penalty: f64,
    pub tracking: f64,
    pub total: f64,
    /// False when no reference is present and only `φ` was evaluated.
    pub tracking_included: bool,
}

/// `J_k = φ(x_k, T_k) + (T_k - T̄)^2 + Σ ∫ (|V_i - ẋ̄|^2 + |u_i - ū|^2) dt`.
pub fn cost_jk(traj: &Trajectory, controls: &ControlSignal, prob: &DiscreteProblem) -> CostBreakdown {
    let t_k = traj.final_time();
    let terminal = prob.cost.value(traj.terminal_state(), t_k);
    let Some(reference) = &prob.reference else {
        return CostBreakdown {
            terminal,
            time_penalty: 0.0,
            tracking: 0.0,
            total: terminal,
            tracking_included: false,
        };
    };
    let time_penalty = (t_k - reference.final_time()).powi(2);
    let tracking = tracking_integral(traj, controls, reference);
    CostBreakdown {
        terminal,
        time_penalty,
        tracking,
        total: terminal + time_penalty + tracking,
        tracking_included: true,
    }
}

fn tracking_integral(traj: &Trajectory, controls: &ControlSignal, reference: &Reference) -> f64 {
    let t_k = traj.final_time();
    integrate_squared_difference(&traj.velocity_signal(), &reference.velocity_signal(), 0.0, t_k)
        + integrate_squared_difference(
            &PiecewiseConstant::from_controls(&traj.grid, controls),
            &reference.control_signal(),
            0.0,
            t_k,
        )
}

/// Which endpoint's active set was used for a step's normal-cone sum.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Endpoint {
    Left,
    Right,
}

/// Multipliers `η_i` representing `g(x_i, u_i) - V_i` over the active faces
/// at one endpoint of step `i`. Both endpoints are tried and the smaller
/// residual wins; ties go to the left endpoint.
#[derive(Debug, Clone)]
pub struct StepRepresentation {
    pub eta: DVector<f64>,
    pub residual: f64,
    pub endpoint: Endpoint,
}

pub fn step_representation(
    prob: &DiscreteProblem,
    traj: &Trajectory,
    controls: &ControlSignal,
    i: usize,
) -> StepRepresentation {
    let p = &prob.polyhedron;
    let x = &traj.states[i];
    let target = prob.perturbation.value(x, &controls.values()[i]) - &traj.velocities[i];
    let mut best: Option<StepRepresentation> = None;
    for (endpoint, point) in [(Endpoint::Left, x), (Endpoint::Right, &traj.states[i + 1])] {
        let active = p.near_faces(point, ACTIVE_TOL);
        let dec = p.normal_cone_decompose(&active, &target);
        if best.as_ref().map_or(true, |b| dec.residual < b.residual) {
            best = Some(StepRepresentation {
                eta: dec.coefficients,
                residual: dec.residual,
                endpoint,
            });
        }
    }
    best.unwrap()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ResidualEntry {
    pub name: String,
    pub residual: f64,
    pub tolerance: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FeasibilityReport {
    pub entries: Vec<ResidualEntry>,
    pub pass: bool,
}

impl FeasibilityReport {
    pub fn get(&self, name: &str) -> Option<&ResidualEntry> {
        self.entries.iter().find(|e| e.name == name)
    }

    pub fn worst(&self) -> f64 {
        self.entries.iter().map(|e| e.residual).fold(0.0, f64::max)
    }
}

/// Residuals for every constraint of the discrete problem.
pub fn feasibility_report(
    traj: &Trajectory,
    controls: &ControlSignal,
    prob: &DiscreteProblem,
    tol: f64,
) -> FeasibilityReport {
    let k = traj.k();
    let mut raw: Vec<(&str, f64)> = Vec::new();

    let mut inclusion: f64 = 0.0;
    let mut state_violation: f64 = 0.0;
    for (i, h) in traj.grid.steps().iter().enumerate() {
        let rep = step_representation(prob, traj, controls, i);
        inclusion = inclusion.max(rep.residual);
        let recon = (&traj.states[i + 1] - &traj.states[i] - &traj.velocities[i] * *h).amax();
        inclusion = inclusion.max(recon);
    }
    for x in &traj.states[..k] {
        state_violation = state_violation.max(prob.polyhedron.max_violation(x).max(0.0));
    }
    raw.push(("dynamic_inclusion", inclusion.max(state_violation)));
    raw.push(("initial_state", (&traj.states[0] - &prob.initial_state).amax()));
    raw.push((
        "control_box",
        controls.values().iter().map(|u| prob.control_box.violation(u)).fold(0.0, f64::max),
    ));
    raw.push((
        "terminal_constraint",
        prob.polyhedron.max_violation(traj.terminal_state()).max(0.0),
    ));

    if let Some(reference) = &prob.reference {
        let eps = prob.epsilon;
        raw.push((
            "initial_control",
            (&controls.values()[0] - reference.initial_control()).amax(),
        ));
        raw.push((
            "epsilon_tube",
            (tracking_integral(traj, controls, reference) - eps).max(0.0),
        ));
        raw.push((
            "time_window",
            ((traj.final_time() - reference.final_time()).abs() - eps).max(0.0),
        ));
        let ref_u = reference.control_signal();
        let mut prox: f64 = 0.0;
        for (i, &t) in traj.grid.nodes().iter().enumerate() {
            let dx = (&traj.states[i] - reference.trajectory.sample(t)).norm_squared();
            let du = if i < k {
                (&controls.values()[i] - ref_u.value_at(t)).norm_squared()
            } else {
                0.0
            };
            prox = prox.max((dx + du).sqrt() - eps);
        }
        raw.push(("proximity", prox.max(0.0)));
    }

    let entries: Vec<ResidualEntry> = raw
        .into_iter()
        .map(|(name, residual)| ResidualEntry {
            name: name.to_string(),
            residual,
            tolerance: tol,
            pass: residual <= tol,
        })
        .collect();
    let pass = entries.iter().all(|e| e.pass);
    FeasibilityReport { entries, pass }
}

/// `ξ_iu = ∫ (u_i - ū(t)) dt` and `ξ_iy = ∫ (V_i - ẋ̄(t)) dt` over step `i`.
#[derive(Debug, Clone, PartialEq)]
pub struct Xi {
    pub u: DVector<f64>,
    pub y: DVector<f64>,
}

impl Xi {
    pub fn zero(d: usize, n: usize) -> Self {
        Self {
            u: DVector::zeros(d),
            y: DVector::zeros(n),
        }
    }
}

pub fn xi_terms(traj: &Trajectory, controls: &ControlSignal, prob: &DiscreteProblem) -> Result<Vec<Xi>, OcpError> {
    let reference = prob.reference.as_ref().ok_or(OcpError::NoReference)?;
    let xv = reference.velocity_signal();
    let xu = reference.control_signal();
    let nodes = traj.grid.nodes();
    Ok(traj
        .grid
        .steps()
        .iter()
        .enumerate()
        .map(|(i, &h)| {
            let (a, b) = (nodes[i], nodes[i + 1]);
            Xi {
                u: &controls.values()[i] * h - xu.integral(a, b),
                y: &traj.velocities[i] * h - xv.integral(a, b),
            }
        })
        .collect())
}

/// The telescoping term `ϱ_k`. Reference data at `t_i` is the right limit
/// and at `t_{i+1}` the left limit, both taken inside step `i`.
pub fn rho_term(traj: &Trajectory, controls: &ControlSignal, prob: &DiscreteProblem) -> Result<f64, OcpError> {
    let reference = prob.reference.as_ref().ok_or(OcpError::NoReference)?;
    let xv = reference.velocity_signal();
    let xu = reference.control_signal();
    let nodes = traj.grid.nodes();
    let k = traj.k() as f64;
    let mut rho = 0.0;
    for i in 0..traj.k() {
        let (a, b) = (nodes[i], nodes[i + 1]);
        let v = &traj.velocities[i];
        let u = &controls.values()[i];
        let left = (v - xv.value_at(a)).norm_squared() + (u - xu.value_at(a)).norm_squared();
        let right = (v - xv.left_limit(b)).norm_squared() + (u - xu.left_limit(b)).norm_squared();
        rho += (i as f64 / k) * left - ((i + 1) as f64 / k) * right;
    }
    Ok(rho)
}

/// `H̄ = (1/k) Σ <p_{i+1}, (x_{i+1} - x_i)/h_i>`.
pub fn hbar(traj: &Trajectory, p: &[DVector<f64>]) -> f64 {
    let k = traj.k();
    assert_eq!(p.len(), k + 1, "p needs k+1 entries");
    traj.velocities
        .iter()
        .enumerate()
        .map(|(i, v)| p[i + 1].dot(v))
        .sum::<f64>()
        / k as f64
}

#[cfg(test)]
mod tests;
