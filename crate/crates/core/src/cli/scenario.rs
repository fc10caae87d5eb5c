//! Scenario files.
//!
//! ```json
//! {
//!   "system": { "marine": { "n": 2, "radii": [3.5, 3.5], "speeds": [1, 1],
//!                           "directions_deg": [45, 45],
//!                           "initial_positions": [[-25, -25], [-15, -15]],
//!                           "target": [0, 0] } },
//!   "control_box": { "lower": [-2, -2], "upper": [2, 2] },
//!   "cost": { "kind": "half_squared_norm" },
//!   "horizon": { "k": 2600, "initial_time": 26.003 }
//! }
//! ```
//!
//! A general system replaces `marine` with
//! `"polyhedron": { "normals": [[..]], "offsets": [..], "initial_state": [..],
//! "drift": { "a": [[..]], "b": [[..]], "c": [..] } }` describing
//! `x* · x <= c` and `g(x, u) = A x + B u + c`. Headings are in degrees.
//! Optional sections: `reference`, `solver`, `constant_search`,
//! `tolerances`, `modes`. Unknown keys are rejected.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::dynamics::{AffinePerturbation, ControlSignal, PerturbationMap, StepMode};
use crate::geometry::{DualIndexRule, HalfSpace, Polyhedron};
use crate::marine::{MarineScenario, VehicleConfig};
use crate::ocp::{
    ConstantSearchOptions, ControlBox, CostFunction, DiscreteProblem, HalfSquaredDistance, Parametrization, Reference,
    SolveOptions, FEASIBILITY_REPORT_TOL,
};
use crate::optimality::XiMode;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFile {
    pub system: SystemSpec,
    pub control_box: BoxSpec,
    pub cost: CostSpec,
    pub horizon: HorizonSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reference: Option<ReferenceSpec>,
    #[serde(default)]
    pub solver: SolverSpec,
    #[serde(default)]
    pub constant_search: ConstantSearchSpec,
    #[serde(default)]
    pub tolerances: ToleranceSpec,
    #[serde(default)]
    pub modes: ModeSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum SystemSpec {
    Polyhedron(PolyhedronSpec),
    Marine(MarineSpec),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PolyhedronSpec {
    pub normals: Vec<Vec<f64>>,
    pub offsets: Vec<f64>,
    pub initial_state: Vec<f64>,
    pub drift: DriftSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DriftSpec {
    pub a: Vec<Vec<f64>>,
    pub b: Vec<Vec<f64>>,
    pub c: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MarineSpec {
    pub n: usize,
    pub radii: Vec<f64>,
    pub speeds: Vec<f64>,
    pub directions_deg: Vec<f64>,
    pub initial_positions: Vec<[f64; 2]>,
    #[serde(default)]
    pub target: [f64; 2],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoxSpec {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum CostSpec {
    /// `|x - target|^2 / 2`; the target defaults to the origin, or to the
    /// stacked marine target.
    HalfSquaredNorm {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        target: Option<Vec<f64>>,
    },
    /// Reserved for costs supplied through the library.
    Custom {
        #[serde(default)]
        name: String,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HorizonSpec {
    pub k: usize,
    pub initial_time: f64,
}

/// Reference process: the `k`-step process under a constant control.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReferenceSpec {
    pub control: Vec<f64>,
    pub final_time: f64,
    #[serde(default = "default_epsilon")]
    pub epsilon: f64,
}

fn default_epsilon() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverSpec {
    pub piecewise: bool,
    pub max_evaluations: usize,
    pub control_step: f64,
    pub time_step: f64,
    pub min_step: f64,
}

impl Default for SolverSpec {
    fn default() -> Self {
        let d = SolveOptions::default();
        Self {
            piecewise: true,
            max_evaluations: d.max_evaluations,
            control_step: d.control_step,
            time_step: d.time_step,
            min_step: d.min_step,
        }
    }
}

impl SolverSpec {
    pub fn options(&self) -> SolveOptions {
        SolveOptions {
            parametrization: if self.piecewise {
                Parametrization::PiecewiseConstant
            } else {
                Parametrization::Constant
            },
            max_evaluations: self.max_evaluations,
            control_step: self.control_step,
            time_step: self.time_step,
            min_step: self.min_step,
            ..SolveOptions::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ConstantSearchSpec {
    pub resolution: f64,
    pub time_bounds: (f64, f64),
}

impl Default for ConstantSearchSpec {
    fn default() -> Self {
        let d = ConstantSearchOptions::default();
        Self {
            resolution: d.resolution,
            time_bounds: d.time_bounds,
        }
    }
}

impl ConstantSearchSpec {
    pub fn options(&self) -> ConstantSearchOptions {
        ConstantSearchOptions {
            resolution: self.resolution,
            time_bounds: self.time_bounds,
            ..ConstantSearchOptions::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ToleranceSpec {
    pub verify: f64,
    pub feasibility: f64,
}

impl Default for ToleranceSpec {
    fn default() -> Self {
        Self {
            verify: 1e-6,
            feasibility: FEASIBILITY_REPORT_TOL,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum XiModeSpec {
    Zero,
    Exact,
}

impl From<XiModeSpec> for XiMode {
    fn from(m: XiModeSpec) -> Self {
        match m {
            XiModeSpec::Zero => XiMode::Convergence,
            XiModeSpec::Exact => XiMode::Exact,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StepModeSpec {
    FixedSet,
    Linearized,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModeSpec {
    pub dual_index_rule: DualIndexRule,
    pub xi_mode: XiModeSpec,
    pub step_mode: StepModeSpec,
}

impl Default for ModeSpec {
    fn default() -> Self {
        Self {
            dual_index_rule: DualIndexRule::OffsetThreshold,
            xi_mode: XiModeSpec::Zero,
            step_mode: StepModeSpec::FixedSet,
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ScenarioError {
    #[error("cannot parse scenario: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("invalid scenario: {0}")]
    Invalid(String),
}

fn invalid(e: impl std::fmt::Display) -> ScenarioError {
    ScenarioError::Invalid(e.to_string())
}

fn finite(name: &str, values: &[f64]) -> Result<(), ScenarioError> {
    if values.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(invalid(format!("{name} contains a non-finite number")))
    }
}

fn matrix(name: &str, rows: &[Vec<f64>], cols: usize) -> Result<DMatrix<f64>, ScenarioError> {
    if rows.iter().any(|r| r.len() != cols) {
        return Err(invalid(format!("{name} rows must have {cols} entries")));
    }
    let flat: Vec<f64> = rows.iter().flatten().copied().collect();
    finite(name, &flat)?;
    Ok(DMatrix::from_row_slice(rows.len(), cols, &flat))
}

/// A validated scenario ready for computation.
#[derive(Debug, Clone)]
pub struct Built {
    pub problem: DiscreteProblem,
    pub marine: Option<MarineScenario>,
}

impl ScenarioFile {
    pub fn parse(text: &str) -> Result<Self, ScenarioError> {
        let s: Self = serde_json::from_str(text)?;
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<(), ScenarioError> {
        if self.horizon.k == 0 {
            return Err(invalid("horizon.k must be positive"));
        }
        if !(self.horizon.initial_time > 0.0 && self.horizon.initial_time.is_finite()) {
            return Err(invalid("horizon.initial_time must be positive"));
        }
        finite("control_box.lower", &self.control_box.lower)?;
        finite("control_box.upper", &self.control_box.upper)?;
        if let Some(r) = &self.reference {
            finite("reference.control", &r.control)?;
            if !(r.final_time > 0.0 && r.final_time.is_finite()) || !(r.epsilon > 0.0 && r.epsilon.is_finite()) {
                return Err(invalid("reference.final_time and reference.epsilon must be positive"));
            }
        }
        if !(self.tolerances.verify > 0.0) || !(self.tolerances.feasibility > 0.0) {
            return Err(invalid("tolerances must be positive"));
        }
        if let SystemSpec::Marine(m) = &self.system {
            if m.radii.len() != m.n {
                return Err(invalid(format!("marine.n is {} but {} radii are given", m.n, m.radii.len())));
            }
        }
        if let CostSpec::Custom { name } = &self.cost {
            return Err(invalid(format!(
                "custom cost '{name}' is only available through the library"
            )));
        }
        Ok(())
    }

    pub fn step_mode(&self) -> StepMode {
        match self.modes.step_mode {
            StepModeSpec::FixedSet => StepMode::FixedSet,
            StepModeSpec::Linearized => StepMode::LinearizedMovingSet,
        }
    }

    /// Builds the problem with `k` steps (the horizon's `k` when `None`).
    pub fn build(&self, k: Option<usize>) -> Result<Built, ScenarioError> {
        self.validate()?;
        let k = k.unwrap_or(self.horizon.k);
        let control_box = ControlBox::new(
            DVector::from_vec(self.control_box.lower.clone()),
            DVector::from_vec(self.control_box.upper.clone()),
        )
        .map_err(invalid)?;
        let target = match &self.cost {
            CostSpec::HalfSquaredNorm { target } => target.clone(),
            CostSpec::Custom { .. } => unreachable!("rejected by validate"),
        };
        let (mut problem, marine) = match &self.system {
            SystemSpec::Marine(m) => {
                finite("marine", &[m.radii.clone(), m.speeds.clone(), m.directions_deg.clone()].concat())?;
                let config = VehicleConfig::new(
                    m.radii.clone(),
                    m.speeds.clone(),
                    m.directions_deg.iter().map(|d| d.to_radians()).collect(),
                    m.initial_positions.clone(),
                )
                .map_err(invalid)?;
                let mut scenario = MarineScenario::new(config, control_box, m.target).map_err(invalid)?;
                if let Some(t) = target {
                    if t.len() != 2 * m.n {
                        return Err(invalid(format!("cost target needs {} entries", 2 * m.n)));
                    }
                    scenario.cost = Arc::new(HalfSquaredDistance {
                        target: DVector::from_vec(t),
                    });
                }
                (scenario.problem(k).map_err(invalid)?, Some(scenario))
            }
            SystemSpec::Polyhedron(p) => {
                let n = p.initial_state.len();
                finite("initial_state", &p.initial_state)?;
                finite("offsets", &p.offsets)?;
                let normals = matrix("normals", &p.normals, n)?;
                if p.offsets.len() != normals.nrows() {
                    return Err(invalid("offsets must match the number of normals"));
                }
                let faces = (0..normals.nrows())
                    .map(|r| HalfSpace::new(normals.row(r).transpose(), p.offsets[r]))
                    .collect::<Result<Vec<_>, _>>()
                    .map_err(invalid)?;
                let poly = Polyhedron::new(faces).map_err(invalid)?;
                let d = control_box.dim();
                let a = matrix("drift.a", &p.drift.a, n)?;
                let b = matrix("drift.b", &p.drift.b, d)?;
                finite("drift.c", &p.drift.c)?;
                let g = AffinePerturbation::new(a, b, DVector::from_vec(p.drift.c.clone())).map_err(invalid)?;
                let cost: Arc<dyn CostFunction> = Arc::new(HalfSquaredDistance {
                    target: match target {
                        Some(t) if t.len() == n => DVector::from_vec(t),
                        Some(_) => return Err(invalid(format!("cost target needs {n} entries"))),
                        None => DVector::zeros(n),
                    },
                });
                let pert: Arc<dyn PerturbationMap> = Arc::new(g);
                let prob = DiscreteProblem::new(poly, pert, control_box, cost, DVector::from_vec(p.initial_state.clone()), k)
                    .map_err(invalid)?;
                (prob, None)
            }
        };
        problem.mode = self.step_mode();
        if let Some(r) = &self.reference {
            if r.control.len() != problem.control_box.dim() {
                return Err(invalid("reference.control has the wrong length"));
            }
            let sol = problem
                .evaluate(ControlSignal::constant(DVector::from_vec(r.control.clone()), k), r.final_time)
                .map_err(|e| invalid(format!("reference process: {e}")))?;
            let reference = Reference::new(sol.trajectory, sol.controls).map_err(invalid)?;
            problem = problem.with_reference(reference, r.epsilon).map_err(invalid)?;
        }
        Ok(Built { problem, marine })
    }

    /// The built-in two-vehicle scenario.
    pub fn two_vehicles() -> Self {
        Self {
            system: SystemSpec::Marine(MarineSpec {
                n: 2,
                radii: vec![3.5, 3.5],
                speeds: vec![1.0, 1.0],
                directions_deg: vec![45.0, 45.0],
                initial_positions: vec![[-25.0, -25.0], [-15.0, -15.0]],
                target: [0.0, 0.0],
            }),
            control_box: BoxSpec {
                lower: vec![-2.0, -2.0],
                upper: vec![2.0, 2.0],
            },
            cost: CostSpec::HalfSquaredNorm { target: None },
            horizon: HorizonSpec {
                k: 2600,
                initial_time: 26.003,
            },
            reference: None,
            solver: SolverSpec::default(),
            constant_search: ConstantSearchSpec::default(),
            tolerances: ToleranceSpec::default(),
            modes: ModeSpec::default(),
        }
    }
}
