//! Planar vehicles modeled as disks moving along fixed headings with
//! speed controls, and the polyhedral sweeping problem they induce.
//!
//! The state stacks planar positions as `(x^1, y^1, x^2, y^2, ...)`; the
//! control holds one signed speed command per vehicle.

use std::f64::consts::FRAC_PI_4;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use thiserror::Error;

use crate::dynamics::{ControlSignal, DynamicsError, Grid, PerturbationMap, Trajectory};
use crate::geometry::{GeometryError, HalfSpace, Polyhedron};
use crate::ocp::{ControlBox, CostFunction, DiscreteProblem, DiscreteSolution, HalfSquaredDistance, OcpError, Reference};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MarineError {
    #[error("invalid vehicle configuration: {0}")]
    Config(String),
    #[error("points {0} and {1} coincide")]
    Coincident(usize, usize),
    #[error("the closed form needs exactly two vehicles")]
    NotTwoVehicles,
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Dynamics(#[from] DynamicsError),
    #[error(transparent)]
    Ocp(#[from] OcpError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct VehicleConfig {
    radii: Vec<f64>,
    speeds: Vec<f64>,
    /// Headings in radians.
    directions: Vec<f64>,
    initial_positions: Vec<[f64; 2]>,
}

impl VehicleConfig {
    pub fn new(
        radii: Vec<f64>,
        speeds: Vec<f64>,
        directions: Vec<f64>,
        initial_positions: Vec<[f64; 2]>,
    ) -> Result<Self, MarineError> {
        let n = radii.len();
        if n == 0 {
            return Err(MarineError::Config("at least one vehicle is required".into()));
        }
        if speeds.len() != n || directions.len() != n || initial_positions.len() != n {
            return Err(MarineError::Config(format!(
                "{n} radii but {} speeds, {} directions, {} positions",
                speeds.len(),
                directions.len(),
                initial_positions.len()
            )));
        }
        if radii.iter().any(|r| !(r.is_finite() && *r >= 0.0)) {
            return Err(MarineError::Config("radii must be finite and nonnegative".into()));
        }
        let finite = speeds.iter().chain(&directions).chain(initial_positions.iter().flatten());
        if finite.into_iter().any(|v| !v.is_finite()) {
            return Err(MarineError::Config("speeds, directions and positions must be finite".into()));
        }
        Ok(Self {
            radii,
            speeds,
            directions,
            initial_positions,
        })
    }

    pub fn n(&self) -> usize {
        self.radii.len()
    }

    pub fn radii(&self) -> &[f64] {
        &self.radii
    }

    pub fn speeds(&self) -> &[f64] {
        &self.speeds
    }

    pub fn directions(&self) -> &[f64] {
        &self.directions
    }

    pub fn initial_positions(&self) -> &[[f64; 2]] {
        &self.initial_positions
    }

    pub fn initial_state(&self) -> DVector<f64> {
        DVector::from_iterator(2 * self.n(), self.initial_positions.iter().flatten().copied())
    }
}

/// `D_ij(x) = |x^i - x^j| - (R_i + R_j)` with its gradient in `R^{2n}`.
pub fn pair_distance(
    x: &DVector<f64>,
    i: usize,
    j: usize,
    radii: &[f64],
) -> Result<(f64, DVector<f64>), MarineError> {
    let n = radii.len();
    if x.len() != 2 * n || i >= n || j >= n || i == j {
        return Err(MarineError::Config(format!("bad pair ({i}, {j}) for {n} vehicles")));
    }
    let dx = x[2 * i] - x[2 * j];
    let dy = x[2 * i + 1] - x[2 * j + 1];
    let dist = dx.hypot(dy);
    if dist == 0.0 {
        return Err(MarineError::Coincident(i, j));
    }
    let mut grad = DVector::zeros(2 * n);
    grad[2 * i] = dx / dist;
    grad[2 * i + 1] = dy / dist;
    grad[2 * j] = -dx / dist;
    grad[2 * j + 1] = -dy / dist;
    Ok((dist - (radii[i] + radii[j]), grad))
}

/// True when no two disks overlap by more than `tol`.
pub fn is_admissible(x: &DVector<f64>, radii: &[f64], tol: f64) -> bool {
    let n = radii.len();
    for i in 0..n {
        for j in i + 1..n {
            let d = (x[2 * i] - x[2 * j]).hypot(x[2 * i + 1] - x[2 * j + 1]);
            if d - (radii[i] + radii[j]) < -tol {
                return false;
            }
        }
    }
    true
}

/// Faces `x*_j = e_{j,1} + e_{j,2} - e_{j+1,1} - e_{j+1,2}` with offsets
/// `c_j = -(R_j + R_{j+1})`, one per consecutive pair.
pub fn build_polyhedron(config: &VehicleConfig) -> Result<Polyhedron, MarineError> {
    let n = config.n();
    if n < 2 {
        return Err(MarineError::Config("the polyhedron needs at least two vehicles".into()));
    }
    let faces = (0..n - 1)
        .map(|j| {
            let mut normal = DVector::zeros(2 * n);
            normal[2 * j] = 1.0;
            normal[2 * j + 1] = 1.0;
            normal[2 * j + 2] = -1.0;
            normal[2 * j + 3] = -1.0;
            HalfSpace::new(normal, -(config.radii[j] + config.radii[j + 1]))
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(Polyhedron::new(faces)?)
}

/// `g_i(x, u) = s_i u_i (cos θ_i, sin θ_i)`; the control is a signed speed.
#[derive(Debug, Clone, PartialEq)]
pub struct DirectionalVelocities {
    speeds: Vec<f64>,
    directions: Vec<f64>,
}

impl DirectionalVelocities {
    pub fn new(config: &VehicleConfig) -> Self {
        Self {
            speeds: config.speeds.clone(),
            directions: config.directions.clone(),
        }
    }

    fn columns(&self) -> DMatrix<f64> {
        let n = self.speeds.len();
        let mut b = DMatrix::zeros(2 * n, n);
        for i in 0..n {
            b[(2 * i, i)] = self.speeds[i] * self.directions[i].cos();
            b[(2 * i + 1, i)] = self.speeds[i] * self.directions[i].sin();
        }
        b
    }
}

impl PerturbationMap for DirectionalVelocities {
    fn state_dim(&self) -> usize {
        2 * self.speeds.len()
    }

    fn control_dim(&self) -> usize {
        self.speeds.len()
    }

    fn value(&self, _: &DVector<f64>, u: &DVector<f64>) -> DVector<f64> {
        let n = self.speeds.len();
        let mut g = DVector::zeros(2 * n);
        for i in 0..n {
            let (s, c) = self.directions[i].sin_cos();
            g[2 * i] = self.speeds[i] * u[i] * c;
            g[2 * i + 1] = self.speeds[i] * u[i] * s;
        }
        g
    }

    fn jacobian_x(&self, _: &DVector<f64>, _: &DVector<f64>) -> DMatrix<f64> {
        let n = 2 * self.speeds.len();
        DMatrix::zeros(n, n)
    }

    fn jacobian_u(&self, _: &DVector<f64>, _: &DVector<f64>) -> DMatrix<f64> {
        self.columns()
    }

    fn growth_constant(&self, control_bound: f64) -> f64 {
        let s2: f64 = self.speeds.iter().map(|s| s * s).sum();
        s2.sqrt() * control_bound
    }
}

pub fn perturbation(config: &VehicleConfig) -> DirectionalVelocities {
    DirectionalVelocities::new(config)
}

/// Via-point posture `(x_ref, y_ref, ψ_ref)` with the heading from the
/// two-argument arctangent, in `(-π, π]`.
pub fn reference_posture(now: [f64; 2], target: [f64; 2]) -> Result<(f64, f64, f64), MarineError> {
    let (dx, dy) = (target[0] - now[0], target[1] - now[1]);
    if dx == 0.0 && dy == 0.0 {
        return Err(MarineError::Coincident(0, 1));
    }
    Ok((target[0], target[1], dy.atan2(dx)))
}

#[derive(Debug, Clone)]
pub struct MarineScenario {
    pub config: VehicleConfig,
    pub control_box: ControlBox,
    /// Planar point every vehicle is steered toward.
    pub target: [f64; 2],
    pub cost: Arc<dyn CostFunction>,
}

impl MarineScenario {
    /// Scenario with `φ(x, T) = |x - (target, ..., target)|^2 / 2`.
    pub fn new(config: VehicleConfig, control_box: ControlBox, target: [f64; 2]) -> Result<Self, MarineError> {
        if control_box.dim() != config.n() {
            return Err(MarineError::Config(format!(
                "control box has {} coordinates for {} vehicles",
                control_box.dim(),
                config.n()
            )));
        }
        if !is_admissible(&config.initial_state(), &config.radii, 0.0) {
            return Err(MarineError::Config("initial disks overlap".into()));
        }
        let cost = Arc::new(HalfSquaredDistance {
            target: stacked_target(target, config.n()),
        });
        Ok(Self {
            config,
            control_box,
            target,
            cost,
        })
    }

    pub fn stacked_target(&self) -> DVector<f64> {
        stacked_target(self.target, self.config.n())
    }

    pub fn polyhedron(&self) -> Result<Polyhedron, MarineError> {
        build_polyhedron(&self.config)
    }

    pub fn perturbation(&self) -> DirectionalVelocities {
        DirectionalVelocities::new(&self.config)
    }

    /// The discrete problem with `k` steps and no reference.
    pub fn problem(&self, k: usize) -> Result<DiscreteProblem, MarineError> {
        Ok(DiscreteProblem::new(
            self.polyhedron()?,
            Arc::new(self.perturbation()),
            self.control_box.clone(),
            self.cost.clone(),
            self.config.initial_state(),
            k,
        )?)
    }

    /// The `k`-step process under the constant control `u` on `[0, t_bar]`,
    /// together with the problem that uses it as reference.
    pub fn discretized(
        &self,
        u: &DVector<f64>,
        t_bar: f64,
        k: usize,
        epsilon: f64,
    ) -> Result<(DiscreteProblem, DiscreteSolution), MarineError> {
        let prob = self.problem(k)?;
        let sol = prob.evaluate(ControlSignal::constant(u.clone(), k), t_bar)?;
        let reference = Reference::new(sol.trajectory.clone(), sol.controls.clone())?;
        let prob = prob.with_reference(reference, epsilon)?;
        let sol = prob.evaluate(sol.controls, t_bar)?;
        Ok((prob, sol))
    }
}

fn stacked_target(target: [f64; 2], n: usize) -> DVector<f64> {
    DVector::from_iterator(2 * n, (0..n).flat_map(|_| target))
}

/// Two vehicles of radius 3.5 at `(-25, -25)` and `(-15, -15)`, both
/// heading at 45° with unit speed gain, speed commands in `[-2, 2]`, and
/// the cost `|x(T)|^2 / 2`.
pub fn two_vehicle_scenario() -> MarineScenario {
    let config = VehicleConfig::new(
        vec![3.5, 3.5],
        vec![1.0, 1.0],
        vec![FRAC_PI_4, FRAC_PI_4],
        vec![[-25.0, -25.0], [-15.0, -15.0]],
    )
    .expect("valid configuration");
    let control_box = ControlBox::uniform(2, -2.0, 2.0).expect("valid box");
    MarineScenario::new(config, control_box, [0.0, 0.0]).expect("valid scenario")
}

/// Closed-form motion under constant controls for two vehicles: free
/// motion until the face is reached, then sliding along it.
#[derive(Debug, Clone, PartialEq)]
pub struct TwoPhase {
    pub initial_state: DVector<f64>,
    /// `None` when the vehicles never close on each other.
    pub contact_time: Option<f64>,
    pub pre_velocity: DVector<f64>,
    pub post_velocity: DVector<f64>,
    /// Contact multiplier during sliding.
    pub sliding_multiplier: f64,
    /// First time at which the cost along the path is minimal.
    pub terminal_time: f64,
    pub terminal_state: DVector<f64>,
    pub terminal_cost: f64,
}

impl TwoPhase {
    pub fn state_at(&self, t: f64) -> DVector<f64> {
        match self.contact_time {
            Some(tc) if t > tc => &self.initial_state + &self.pre_velocity * tc + &self.post_velocity * (t - tc),
            _ => &self.initial_state + &self.pre_velocity * t,
        }
    }

    /// The process on `[0, T̄]` as a reference with one grid node at the
    /// contact time (when it falls inside the horizon).
    pub fn as_reference(&self, t_bar: f64, u: &DVector<f64>) -> Result<Reference, MarineError> {
        let (steps, vel, eta) = match self.contact_time {
            Some(tc) if tc > 0.0 && tc < t_bar => (
                vec![tc, t_bar - tc],
                vec![self.pre_velocity.clone(), self.post_velocity.clone()],
                vec![DVector::zeros(1), DVector::from_element(1, self.sliding_multiplier)],
            ),
            Some(tc) if tc <= 0.0 => (
                vec![t_bar],
                vec![self.post_velocity.clone()],
                vec![DVector::from_element(1, self.sliding_multiplier)],
            ),
            _ => (vec![t_bar], vec![self.pre_velocity.clone()], vec![DVector::zeros(1)]),
        };
        let k = steps.len();
        let traj = Trajectory::from_velocities(Grid::from_steps(steps)?, self.initial_state.clone(), vel, eta)?;
        Ok(Reference::new(traj, ControlSignal::constant(u.clone(), k))?)
    }
}

/// Minimizer over `s >= 0` of `|a + s v - target|^2 / 2`.
fn ray_minimum(a: &DVector<f64>, v: &DVector<f64>, target: &DVector<f64>) -> (f64, f64) {
    let vv = v.norm_squared();
    let s = if vv > 0.0 { ((target - a).dot(v) / vv).max(0.0) } else { 0.0 };
    (s, 0.5 * (a + v * s - target).norm_squared())
}

pub fn analytic_two_phase(scenario: &MarineScenario, u: &DVector<f64>) -> Result<TwoPhase, MarineError> {
    if scenario.config.n() != 2 {
        return Err(MarineError::NotTwoVehicles);
    }
    let p = scenario.polyhedron()?;
    let face = &p.faces()[0];
    let x0 = scenario.config.initial_state();
    let g = scenario.perturbation().value(&x0, u);
    let target = scenario.stacked_target();
    let rate = face.normal().dot(&g);
    let gap = -face.slack(&x0);

    if rate <= 0.0 {
        let (s, cost) = ray_minimum(&x0, &g, &target);
        return Ok(TwoPhase {
            terminal_state: &x0 + &g * s,
            initial_state: x0,
            contact_time: None,
            pre_velocity: g.clone(),
            post_velocity: g,
            sliding_multiplier: 0.0,
            terminal_time: s,
            terminal_cost: cost,
        });
    }
    let tc = gap / rate;
    let multiplier = rate / face.normal().norm_squared();
    let post = &g - face.normal() * multiplier;
    let xc = &x0 + &g * tc;

    // best point on the free segment, then on the sliding ray
    let (s1, c1) = ray_minimum(&x0, &g, &target);
    let (s1, c1) = if s1 <= tc {
        (s1, c1)
    } else {
        (tc, 0.5 * (&xc - &target).norm_squared())
    };
    let (s2, c2) = ray_minimum(&xc, &post, &target);
    let (t, state, cost) = if c1 <= c2 {
        (s1, &x0 + &g * s1, c1)
    } else {
        (tc + s2, &xc + &post * s2, c2)
    };
    Ok(TwoPhase {
        initial_state: x0,
        contact_time: Some(tc),
        pre_velocity: g,
        post_velocity: post,
        sliding_multiplier: multiplier,
        terminal_time: t,
        terminal_state: state,
        terminal_cost: cost,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct OracleResult {
    pub controls: DVector<f64>,
    pub final_time: f64,
    pub terminal_cost: f64,
    pub terminal_state: DVector<f64>,
    pub candidates: usize,
}

/// Exhaustive grid over constant controls with the closed-form best
/// reachable cost of each. Returns the lexicographically first grid point
/// whose cost is within `1e-12` of the minimum.
pub fn brute_force_oracle(scenario: &MarineScenario, resolution: f64) -> Result<OracleResult, MarineError> {
    if scenario.config.n() != 2 {
        return Err(MarineError::NotTwoVehicles);
    }
    if !(resolution > 0.0) {
        return Err(MarineError::Config("resolution must be positive".into()));
    }
    let lo = scenario.control_box.lower();
    let hi = scenario.control_box.upper();
    let axis = |c: usize| -> Vec<f64> {
        let span = hi[c] - lo[c];
        let m = (span / resolution).round().max(0.0) as usize;
        if m == 0 {
            return vec![lo[c]];
        }
        (0..=m).map(|j| lo[c] + span * j as f64 / m as f64).collect()
    };
    let (a0, a1) = (axis(0), axis(1));
    let rows: Vec<Vec<f64>> = a0
        .par_iter()
        .map(|&u0| {
            a1.iter()
                .map(|&u1| {
                    analytic_two_phase(scenario, &DVector::from_row_slice(&[u0, u1]))
                        .map(|tp| tp.terminal_cost)
                        .unwrap_or(f64::INFINITY)
                })
                .collect()
        })
        .collect();
    let best = rows.iter().flatten().copied().fold(f64::INFINITY, f64::min);
    let (i, j) = rows
        .iter()
        .enumerate()
        .find_map(|(i, r)| r.iter().position(|&c| c <= best + 1e-12).map(|j| (i, j)))
        .expect("nonempty grid");
    let u = DVector::from_row_slice(&[a0[i], a1[j]]);
    let tp = analytic_two_phase(scenario, &u)?;
    Ok(OracleResult {
        controls: u,
        final_time: tp.terminal_time,
        terminal_cost: tp.terminal_cost,
        terminal_state: tp.terminal_state,
        candidates: a0.len() * a1.len(),
    })
}
