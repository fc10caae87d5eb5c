//! End-to-end run of the built-in two-vehicle scenario.

use nalgebra::DVector;

use super::report::{ComparisonRow, Exit, Inputs, OracleSummary, RunReport, SolutionSummary, SolverSummary};
use super::scenario::ScenarioFile;
use crate::dynamics::first_contact_time;
use crate::marine::{analytic_two_phase, brute_force_oracle, two_vehicle_scenario, MarineError};
use crate::ocp::{cost_jk, feasibility_report, solve_constant_control, ConstantSearchOptions, FEASIBILITY_REPORT_TOL};
use crate::optimality::{recover_multipliers, OptimalityError, RecoveryOptions};

pub const CONTROL: [f64; 2] = [1.67547, 0.49999];
pub const FINAL_TIME: f64 = 26.003;
pub const CONTACT_TIME: f64 = 7.8201;
pub const PRE_CONTACT_VELOCITY: [f64; 4] = [1.18474, 1.18474, 0.35355, 0.35355];
pub const POST_CONTACT_VELOCITY: f64 = 0.76914;
pub const SLIDING_MULTIPLIER: f64 = 0.41560;
pub const TERMINAL_STATE: [f64; 4] = [-1.75, -1.75, 1.75, 1.75];
pub const TERMINAL_COST: f64 = 6.125;

#[derive(Debug, Clone, Copy)]
pub struct ReproduceOptions {
    pub k: usize,
    /// Radius of the localization around the reported process.
    pub epsilon: f64,
    pub oracle_resolution: f64,
    pub recovery: RecoveryOptions,
}

impl Default for ReproduceOptions {
    fn default() -> Self {
        Self {
            k: 2600,
            epsilon: 1.0,
            oracle_resolution: 0.01,
            recovery: RecoveryOptions::default(),
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ReproduceError {
    #[error(transparent)]
    Marine(#[from] MarineError),
    #[error(transparent)]
    Ocp(#[from] crate::ocp::OcpError),
}

/// Runs the closed form, the simulation, the localized solve, the oracle
/// and the certificate search, and tabulates them against the reported
/// numbers.
pub fn reproduce(opts: &ReproduceOptions) -> Result<RunReport, ReproduceError> {
    let scenario = two_vehicle_scenario();
    let u = DVector::from_row_slice(&CONTROL);
    let k = opts.k;
    let mut report = RunReport::new(
        "reproduce",
        Inputs {
            scenario: Some(ScenarioFile::two_vehicles()),
            k,
            controls: None,
            final_time: None,
            options: serde_json::json!({
                "epsilon": opts.epsilon,
                "oracle_resolution": opts.oracle_resolution,
                "verify": opts.recovery.verify,
            }),
        },
    );
    let mut rows = Vec::new();

    let closed = analytic_two_phase(&scenario, &u)?;
    rows.push(ComparisonRow::new(
        "contact time (closed form)",
        closed.contact_time.unwrap_or(f64::NAN),
        CONTACT_TIME,
        1e-3,
    ));
    rows.push(ComparisonRow::new("sliding multiplier", closed.sliding_multiplier, SLIDING_MULTIPLIER, 1e-4));

    // the reported process on its closed-form horizon
    let (prob_d, sol_d) = scenario.discretized(&u, closed.terminal_time, k, opts.epsilon)?;
    let traj = &sol_d.trajectory;
    rows.push(ComparisonRow::new(
        "contact time (simulated)",
        first_contact_time(traj, &prob_d.polyhedron).unwrap_or(f64::NAN),
        CONTACT_TIME,
        1e-3,
    ));
    for (c, e) in PRE_CONTACT_VELOCITY.iter().enumerate() {
        rows.push(ComparisonRow::new(format!("pre-contact velocity {}", c + 1), traj.velocities[0][c], *e, 1e-4));
    }
    for c in 0..4 {
        rows.push(ComparisonRow::new(
            format!("post-contact velocity {}", c + 1),
            traj.velocities[k - 1][c],
            POST_CONTACT_VELOCITY,
            1e-4,
        ));
    }

    // free-time problem localized around the reported process
    let reference = closed.as_reference(FINAL_TIME, &u)?;
    let prob_l = scenario.problem(k)?.with_reference(reference, opts.epsilon)?;
    let out = solve_constant_control(&prob_l, &ConstantSearchOptions::default())?;
    let sol = &out.solution;
    let breakdown = cost_jk(&sol.trajectory, &sol.controls, &prob_l);
    rows.push(ComparisonRow::new("final time", sol.final_time(), FINAL_TIME, 5e-2));
    for (c, e) in CONTROL.iter().enumerate() {
        rows.push(ComparisonRow::new(format!("control {}", c + 1), sol.controls.values()[0][c], *e, 1e-4));
    }
    for (c, e) in TERMINAL_STATE.iter().enumerate() {
        rows.push(ComparisonRow::new(
            format!("terminal state {}", c + 1),
            sol.trajectory.terminal_state()[c],
            *e,
            1e-2,
        ));
    }
    rows.push(ComparisonRow::new("terminal cost", breakdown.terminal, TERMINAL_COST, 1e-2));

    let oracle = brute_force_oracle(&scenario, opts.oracle_resolution)?;
    rows.push(ComparisonRow::new("oracle terminal cost", oracle.terminal_cost, TERMINAL_COST, 1e-6));
    report.oracle = Some(OracleSummary {
        resolution: opts.oracle_resolution,
        controls: oracle.controls.iter().copied().collect(),
        final_time: oracle.final_time,
        terminal_cost: oracle.terminal_cost,
        candidates: oracle.candidates,
        solver_gap: breakdown.terminal - oracle.terminal_cost,
    });

    let (mu0, verdict, verification) = match recover_multipliers(traj, &sol_d.controls, &prob_d, &opts.recovery) {
        Ok(r) => (r.multipliers.mu0, true, Some(r.report)),
        Err(OptimalityError::NoCertificate { best, .. }) => match *best {
            Some((m, rep)) => (m.mu0, false, Some(rep)),
            None => (f64::NAN, false, None),
        },
        Err(_) => (f64::NAN, false, None),
    };
    rows.push(ComparisonRow::new("certificate found", if verdict { 1.0 } else { 0.0 }, 1.0, 0.0));
    rows.push(ComparisonRow::new("certificate mu0", mu0, 1.0, 0.0));

    report.solution = Some(SolutionSummary::new(
        &sol.trajectory,
        &sol.controls,
        breakdown,
        first_contact_time(&sol.trajectory, &prob_l.polyhedron),
        Some(&scenario),
    ));
    report.feasibility = Some(feasibility_report(&sol.trajectory, &sol.controls, &prob_l, FEASIBILITY_REPORT_TOL));
    report.solver = Some(SolverSummary::new("constant_control", &out));
    report.verification = verification;

    let failing: Vec<&str> = rows.iter().filter(|r| !r.pass).map(|r| r.quantity.as_str()).collect();
    if failing.is_empty() {
        report.finish(Exit::Success, "all quantities within tolerance");
    } else {
        let msg = format!("out of tolerance: {}", failing.join(", "));
        report.finish(Exit::Failed, msg);
    }
    report.comparison = rows;
    Ok(report)
}

/// Fixed-width table of the comparison rows.
pub fn table(rows: &[ComparisonRow]) -> String {
    let mut out = format!(
        "{:<28} {:>14} {:>14} {:>10}  {}\n",
        "quantity", "computed", "expected", "tolerance", "status"
    );
    for r in rows {
        out.push_str(&format!(
            "{:<28} {:>14.6} {:>14.6} {:>10.1e}  {}\n",
            r.quantity,
            r.computed,
            r.expected,
            r.tolerance,
            if r.pass { "ok" } else { "FAIL" }
        ));
    }
    out
}
