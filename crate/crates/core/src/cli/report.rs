use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use super::scenario::ScenarioFile;
use crate::dynamics::{ControlSignal, Trajectory};
use crate::marine::{pair_distance, MarineScenario};
use crate::ocp::{CostBreakdown, FeasibilityReport, SolveOutcome, SolveStatus};
use crate::optimality::{Multipliers, VerificationReport};

pub const REPORT_VERSION: u32 = 1;

/// Process exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Exit {
    Success = 0,
    Usage = 1,
    InvalidScenario = 2,
    Simulation = 3,
    NoFeasiblePoint = 4,
    BudgetExhausted = 5,
    NoCertificate = 6,
    Failed = 7,
}

impl Exit {
    pub fn code(self) -> i32 {
        self as i32
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct RunReport {
    pub spec_version: u32,
    pub command: &'static str,
    pub inputs: Inputs,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub solution: Option<SolutionSummary>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub feasibility: Option<FeasibilityReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub solver: Option<SolverSummary>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub verification: Option<VerificationReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub oracle: Option<OracleSummary>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub comparison: Vec<ComparisonRow>,
    pub outcome: Outcome,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub timing: Option<Timing>,
}

impl RunReport {
    pub fn new(command: &'static str, inputs: Inputs) -> Self {
        Self {
            spec_version: REPORT_VERSION,
            command,
            inputs,
            solution: None,
            feasibility: None,
            solver: None,
            verification: None,
            oracle: None,
            comparison: Vec::new(),
            outcome: Outcome {
                exit: Exit::Success,
                exit_code: 0,
                message: String::new(),
            },
            timing: None,
        }
    }

    pub fn finish(&mut self, exit: Exit, message: impl Into<String>) {
        self.outcome = Outcome {
            exit,
            exit_code: exit.code(),
            message: message.into(),
        };
    }

    /// Pretty JSON; non-finite numbers are written as `null`.
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Inputs {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub scenario: Option<ScenarioFile>,
    pub k: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub controls: Option<Controls>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub final_time: Option<f64>,
    pub options: serde_json::Value,
}

/// Controls as given on the command line or in a file: one vector, or one
/// per step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Controls {
    Constant(Vec<f64>),
    PerStep(Vec<Vec<f64>>),
}

impl Controls {
    pub fn from_signal(c: &ControlSignal) -> Self {
        let v = c.values();
        if v.iter().all(|u| u == &v[0]) {
            Controls::Constant(v[0].iter().copied().collect())
        } else {
            Controls::PerStep(v.iter().map(|u| u.iter().copied().collect()).collect())
        }
    }

    pub fn to_signal(&self, k: usize, d: usize) -> Result<ControlSignal, String> {
        match self {
            Controls::Constant(u) if u.len() == d => Ok(ControlSignal::constant(DVector::from_vec(u.clone()), k)),
            Controls::Constant(u) => Err(format!("control has {} entries, expected {d}", u.len())),
            Controls::PerStep(list) => {
                if list.len() != k {
                    return Err(format!("{} controls given for {k} steps", list.len()));
                }
                if list.iter().any(|u| u.len() != d) {
                    return Err(format!("every control needs {d} entries"));
                }
                ControlSignal::new(list.iter().map(|u| DVector::from_vec(u.clone())).collect()).map_err(|e| e.to_string())
            }
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SolutionSummary {
    pub final_time: f64,
    pub k: usize,
    pub controls: Controls,
    pub terminal_state: Vec<f64>,
    pub cost: CostBreakdown,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub contact_time: Option<f64>,
    /// Smallest Euclidean gap between vehicle disks along the arc.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub min_euclidean_clearance: Option<f64>,
}

impl SolutionSummary {
    pub fn new(
        traj: &Trajectory,
        controls: &ControlSignal,
        cost: CostBreakdown,
        contact_time: Option<f64>,
        marine: Option<&MarineScenario>,
    ) -> Self {
        Self {
            final_time: traj.final_time(),
            k: traj.k(),
            controls: Controls::from_signal(controls),
            terminal_state: traj.terminal_state().iter().copied().collect(),
            cost,
            contact_time,
            min_euclidean_clearance: marine.and_then(|m| clearance(traj, m)),
        }
    }
}

fn clearance(traj: &Trajectory, m: &MarineScenario) -> Option<f64> {
    let radii = m.config.radii();
    let n = radii.len();
    let mut best = f64::INFINITY;
    for x in &traj.states {
        for i in 0..n {
            for j in i + 1..n {
                best = best.min(pair_distance(x, i, j, radii).ok()?.0);
            }
        }
    }
    best.is_finite().then_some(best)
}

#[derive(Debug, Clone, Serialize)]
pub struct SolverSummary {
    pub method: &'static str,
    pub status: SolveStatus,
    pub evaluations: usize,
    pub initial_cost: f64,
    pub final_cost: f64,
    pub improvements: usize,
}

impl SolverSummary {
    pub fn new(method: &'static str, out: &SolveOutcome) -> Self {
        Self {
            method,
            status: out.status,
            evaluations: out.evaluations,
            initial_cost: out.cost_trace.first().copied().unwrap_or(f64::NAN),
            final_cost: out.solution.cost_value,
            improvements: out.cost_trace.len().saturating_sub(1),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct OracleSummary {
    pub resolution: f64,
    pub controls: Vec<f64>,
    pub final_time: f64,
    pub terminal_cost: f64,
    pub candidates: usize,
    /// Cost of the compared solver result minus the oracle cost.
    pub solver_gap: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct ComparisonRow {
    pub quantity: String,
    pub computed: f64,
    pub expected: f64,
    pub tolerance: f64,
    pub pass: bool,
}

impl ComparisonRow {
    pub fn new(quantity: impl Into<String>, computed: f64, expected: f64, tolerance: f64) -> Self {
        Self {
            quantity: quantity.into(),
            computed,
            expected,
            tolerance,
            pass: (computed - expected).abs() <= tolerance,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Outcome {
    pub exit: Exit,
    pub exit_code: i32,
    pub message: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct Timing {
    pub seconds: f64,
}

/// Multiplier bundle on disk.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MultipliersFile {
    pub mu0: f64,
    pub p: Vec<Vec<f64>>,
    pub q: Vec<Vec<f64>>,
    pub eta: Vec<Vec<f64>>,
    pub gamma: Vec<Vec<f64>>,
}

fn rows(v: &[DVector<f64>]) -> Vec<Vec<f64>> {
    v.iter().map(|x| x.iter().copied().collect()).collect()
}

fn vectors(v: &[Vec<f64>]) -> Vec<DVector<f64>> {
    v.iter().map(|x| DVector::from_vec(x.clone())).collect()
}

impl From<&Multipliers> for MultipliersFile {
    fn from(m: &Multipliers) -> Self {
        Self {
            mu0: m.mu0,
            p: rows(&m.p),
            q: rows(&m.q),
            eta: rows(&m.eta),
            gamma: rows(&m.gamma),
        }
    }
}

impl From<&MultipliersFile> for Multipliers {
    fn from(m: &MultipliersFile) -> Self {
        Self {
            mu0: m.mu0,
            p: vectors(&m.p),
            q: vectors(&m.q),
            eta: vectors(&m.eta),
            gamma: vectors(&m.gamma),
        }
    }
}
